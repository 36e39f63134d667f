#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gem/dataset.h"
#include "gem/io.h"
#include "gem/matcher.h"

using namespace gem;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
  std::vector<Json> lines() const {
    std::vector<Json> v;
    std::istringstream in(out);
    std::string l;
    while (std::getline(in, l)) {
      if (!l.empty()) v.push_back(Json::parse(l));
    }
    return v;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& work() {
  static const fs::path d = [] {
    auto p = fs::temp_directory_path() / "gem_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

Run run_gem(const std::string& args, const std::string& env = "") {
  const auto o = work() / "stdout.txt", e = work() / "stderr.txt";
  const std::string cmd = env + " '" GEM_BINARY "' " + args + " >'" + o.string() + "' 2>'" + e.string() + "'";
  const int st = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void check_single_error_line(const Run& r, const std::string& kind) {
  std::istringstream in(r.err);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 1);
  const auto j = Json::parse(lines[0]);
  CHECK(j["error"] == kind);
  CHECK(j["message"].is_string());
}

const std::string kTiny = "--d-model 8 --layers 1 --heads 2 --max-len 64 --batch-size 8 --seed 3";

}  // namespace

TEST_CASE("exit codes and error lines") {
  auto r = run_gem("");
  CHECK(r.code == 1);
  check_single_error_line(r, "usage");

  r = run_gem("frobnicate");
  CHECK(r.code == 1);

  r = run_gem("synth " + q(work() / "s") + " --task nothing");
  CHECK(r.code == 1);
  check_single_error_line(r, "usage");

  r = run_gem("eval " + q(work() / "missing.json") + " " + q(work() / "missing_manifest.json"));
  CHECK(r.code == 2);
  check_single_error_line(r, "data");

  write_text_file((work() / "broken.jsonl").string(), "{\"id\": \"a\", \"title\": \"x\"}\n{nope\n");
  r = run_gem("process " + q(work() / "broken.jsonl") + " " + q(work() / "out.jsonl"));
  CHECK(r.code == 2);
  check_single_error_line(r, "data");
  CHECK(r.out.empty());
}

TEST_CASE("synth, block, split, train, eval, explain") {
  const auto d = work() / "pipeline";
  auto r = run_gem("synth " + q(d) + " --task jobjob -n 60 --seed 4");
  REQUIRE(r.code == 0);
  CHECK(r.lines().back()["pairs"] == 60);

  r = run_gem("block " + q(d / "left.jsonl") + " " + q(d / "right.jsonl") + " '" GEM_CONFIG_DIR "/blocking_jobjob.json' " +
          q(d / "cands.jsonl") + " --gold " + q(d / "gold.jsonl") + " --report-recall");
  REQUIRE(r.code == 0);
  const auto block = r.lines().back();
  CHECK(block["candidates"].get<std::size_t>() == read_json_lines((d / "cands.jsonl").string()).size());
  CHECK(block["recall"] == 1.0);

  r = run_gem("split " + q(d / "gold.jsonl") + " " + q(d / "gold.jsonl") + " " + q(d / "manifest.json") + " --left " +
          q(d / "left.jsonl") + " --right " + q(d / "right.jsonl") + " --seed 2");
  REQUIRE(r.code == 0);
  const auto split = r.lines().back();
  const auto m = load_manifest((d / "manifest.json").string());
  CHECK(split["train"] == m.train.size());
  CHECK(split["test"] == m.test.size());
  REQUIRE_FALSE(m.test.empty());

  r = run_gem("train " + q(d / "manifest.json") + " " + q(d / "model.json") + " --epochs 2 " + kTiny);
  REQUIRE(r.code == 0);
  const auto train_lines = r.lines();
  CHECK(train_lines.size() == 3);
  CHECK(train_lines[0]["epoch"] == 1);

  r = run_gem("eval " + q(d / "model.json") + " " + q(d / "manifest.json"));
  REQUIRE(r.code == 0);
  const auto ev = r.lines().back();
  // Same numbers as scoring the checkpoint in-process.
  const auto direct = evaluate(load_model((d / "model.json").string()), m.test).to_json();
  CHECK(ev == direct);
  CHECK(ev == train_lines.back()["test"]);
  CHECK(ev["tp"].get<std::size_t>() + ev["fp"].get<std::size_t>() + ev["fn"].get<std::size_t>() +
            ev["tn"].get<std::size_t>() ==
        m.test.size());

  CHECK(run_gem("eval " + q(d / "model.json") + " " + q(d / "manifest.json") + " --split nope").code == 1);

  r = run_gem("explain " + q(d / "model.json") + " " + q(d / "cands.jsonl") + " " + q(d / "expl") + " --format html --left " +
          q(d / "left.jsonl") + " --right " + q(d / "right.jsonl"));
  REQUIRE(r.code == 0);
  const auto written = r.lines().back()["written"];
  CHECK(written.size() == block["candidates"].get<std::size_t>());
  CHECK(slurp(written[0].get<std::string>()).find("<html") != std::string::npos);
  CHECK(run_gem("explain " + q(d / "model.json") + " " + q(d / "cands.jsonl") + " " + q(d / "expl")).code == 1);
}

TEST_CASE("environment overrides") {
  const auto d = work() / "env";
  REQUIRE(run_gem("synth " + q(d) + " --task jobresume -n 30 --seed 5").code == 0);
  REQUIRE(run_gem("split " + q(d / "gold.jsonl") + " " + q(d / "gold.jsonl") + " " + q(d / "manifest.json") + " --left " +
              q(d / "left.jsonl") + " --right " + q(d / "right.jsonl"))
              .code == 0);
  const auto r = run_gem("train " + q(d / "manifest.json") + " " + q(d / "model.json") + " " + kTiny, "GEM_EPOCHS=1");
  REQUIRE(r.code == 0);
  CHECK(r.lines().size() == 2);
  // The flag wins over the environment.
  const auto r2 = run_gem("train " + q(d / "manifest.json") + " " + q(d / "model.json") + " --epochs 2 " + kTiny, "GEM_EPOCHS=1");
  CHECK(r2.lines().size() == 3);
  CHECK(run_gem("train " + q(d / "manifest.json") + " " + q(d / "model.json") + " " + kTiny, "GEM_LR=fast").code == 1);
}
