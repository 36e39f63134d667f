#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <thread>

#include "gem/error.h"
#include "gem/io.h"
#include "gem/labeler.h"
#include "gem/matcher.h"
// After Eigen: resolv.h defines _res as a macro.
#include "httplib.h"

using namespace gem;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("gem_labeler_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

struct Corpus {
  EntityCollection left, right;
  std::vector<CandidatePair> pairs;
};

EntityEntry job(const std::string& id, const std::string& content) {
  EntityEntry e;
  e.id = id;
  e.attributes.push_back({"title", "registered nurse"});
  e.attributes.push_back({"content", content});
  return e;
}

Corpus corpus() {
  Corpus c;
  std::vector<EntityEntry> l, r;
  for (int i = 0; i < 5; ++i) {
    l.push_back(job("a" + std::to_string(i), "We offer a good salary. Send us a note."));
    r.push_back(job("b" + std::to_string(i), "The role needs a nursing license."));
  }
  c.left = make_collection("a", l);
  c.right = make_collection("b", r);
  CandidateSet s;
  for (int i = 0; i < 5; ++i) s.add("a" + std::to_string(i), "b" + std::to_string(i), {i % 2 ? "qgram" : "exact"});
  s.add("a0", "b1", {"exact", "qgram"});
  c.pairs = s.pairs();
  return c;
}

KeywordRuleSet rules() {
  return KeywordRuleSet::from_keywords({{"benefit", {"salary"}}, {"qualification", {"license"}}});
}

LabelerService service(const fs::path& dir, std::optional<std::vector<LabelRecord>> gold = std::nullopt) {
  auto c = corpus();
  return LabelerService(c.left, c.right, c.pairs, (dir / "labels.jsonl").string(), std::nullopt, rules(), "content",
                        std::move(gold));
}

std::vector<std::string> walk(const LabelerService& s, const std::string& status, std::size_t limit, int* pages = nullptr) {
  std::vector<std::string> ids;
  std::string cursor;
  int n = 0;
  while (true) {
    const auto r = s.list_pairs(status, limit, cursor);
    REQUIRE(r.status == 200);
    ++n;
    for (const auto& p : r.body["pairs"]) ids.push_back(p["pair_id"]);
    if (r.body["next_cursor"].is_null()) break;
    cursor = r.body["next_cursor"];
  }
  if (pages) *pages = n;
  return ids;
}

}  // namespace

TEST_CASE("pagination walks every pair once") {
  const auto dir = fresh_dir("pages");
  const auto s = service(dir);
  int pages = 0;
  const auto all = walk(s, "unlabeled", 2, &pages);
  CHECK(all == std::vector<std::string>{"a0::b0", "a0::b1", "a1::b1", "a2::b2", "a3::b3", "a4::b4"});
  CHECK(pages == 3);
  CHECK(walk(s, "all", 4).size() == 6);
  CHECK(walk(s, "labeled", 3).empty());
  CHECK(s.list_pairs("unlabeled", 2, "zz").status == 400);
  CHECK(s.list_pairs("maybe", 2, "").status == 400);
  CHECK(s.list_pairs("all", 0, "").status == 400);
}

TEST_CASE("labels are reflected and filtered") {
  const auto dir = fresh_dir("labels");
  auto s = service(dir);
  CHECK(s.post_label("a1::b1", {{"label", "match"}, {"annotator", "kim"}}).status == 200);
  const auto got = s.get_pair("a1::b1");
  CHECK(got.body["label"]["label"] == "match");
  CHECK(got.body["label"]["annotator"] == "kim");
  CHECK(got.body["label"]["timestamp"].get<double>() > 1e9);
  CHECK(walk(s, "unlabeled", 10).size() == 5);
  CHECK(walk(s, "labeled", 10) == std::vector<std::string>{"a1::b1"});

  s.post_label("a1::b1", {{"label", "nomatch"}});
  CHECK(s.get_pair("a1::b1").body["label"]["label"] == "nomatch");

  s.post_label("a2::b2", {{"label", "skip"}});
  CHECK(s.get_pair("a2::b2").body["label"].is_null());
  CHECK(walk(s, "unlabeled", 10).size() == 5);

  CHECK(s.post_label("zz::yy", {{"label", "match"}}).status == 404);
  CHECK(s.post_label("a0::b0", {{"label", "perhaps"}}).status == 400);
  CHECK(s.post_label("a0::b0", Json::array()).status == 400);
  CHECK(s.post_label("a0::b0", {{"label", "match"}, {"annotator", 3}}).status == 400);
  CHECK(s.get_pair("nope").status == 404);
}

TEST_CASE("entry views carry topic sections") {
  const auto dir = fresh_dir("views");
  const auto s = service(dir);
  const auto v = s.get_pair("a0::b1").body;
  CHECK(v["left"]["topics"] == Json::array({"benefit"}));
  CHECK(v["left"]["entry"]["benefit"] == "We offer a good salary.");
  CHECK_FALSE(v["left"]["entry"].contains("content"));
  CHECK(v["right"]["entry"]["qualification"] == "The role needs a nursing license.");
  CHECK(v["provenance"] == Json::array({"exact", "qgram"}));
}

TEST_CASE("stats") {
  const auto dir = fresh_dir("stats");
  std::vector<LabelRecord> gold = {{"a0::b0", kMatch, "", 0, "human"},
                                   {"a1::b1", kMatch, "", 0, "human"},
                                   {"a9::b9", kMatch, "", 0, "human"},
                                   {"a0::b1", kNoMatch, "", 0, "human"}};
  auto s = service(dir, gold);
  auto st = s.stats().body;
  CHECK(st["labeled"] == 0);
  CHECK(st["match"] == 0);
  CHECK(st["balance"] == 0.0);
  CHECK(st["unlabeled"] == 6);
  CHECK(st["provenance"]["exact"] == 4);
  CHECK(st["provenance"]["qgram"] == 3);

  CandidateSet cs;
  for (const auto& p : corpus().pairs) cs.add(p);
  CHECK(st["recall"].get<double>() == doctest::Approx(estimate_recall(cs, {{"a0", "b0"}, {"a1", "b1"}, {"a9", "b9"}})));

  for (const auto* id : {"a0::b0", "a1::b1", "a2::b2"}) s.post_label(id, {{"label", "match"}});
  s.post_label("a3::b3", {{"label", "nomatch"}});
  s.post_label("a4::b4", {{"label", "skip"}});
  st = s.stats().body;
  CHECK(st["labeled"] == 4);
  CHECK(st["balance"] == 0.75);
  CHECK(st["skip_events"] == 1);
  CHECK(st["events"] == 5);

  // Offline scan of the label file.
  const auto cur = current_labels(read_labels((dir / "labels.jsonl").string()));
  std::size_t m = 0;
  for (const auto& [id, r] : cur) m += r.is_match();
  CHECK(st["match"] == m);
  CHECK(st["labeled"] == cur.size());

  CHECK(service(fresh_dir("nogold")).stats().body["recall"].is_null());
}

TEST_CASE("labels survive a restart") {
  const auto dir = fresh_dir("restart");
  {
    auto s = service(dir);
    s.post_label("a3::b3", {{"label", "match"}});
    s.post_label("a4::b4", {{"label", "nomatch"}});
  }
  const auto again = service(dir);
  CHECK(again.get_pair("a3::b3").body["label"]["label"] == "match");
  CHECK(again.get_pair("a4::b4").body["label"]["label"] == "nomatch");
  CHECK(again.stats().body["labeled"] == 2);
}

TEST_CASE("explain without a model") {
  const auto dir = fresh_dir("explain");
  const auto s = service(dir);
  CHECK(s.explain("a0::b0").status == 409);
  CHECK(s.explain("zz").status == 404);
}

TEST_CASE("explain with a model") {
  const auto dir = fresh_dir("explain_model");
  auto c = corpus();
  std::vector<LabeledPair> train_set;
  for (const auto& p : c.pairs) {
    train_set.push_back({p.pair_id, c.left.entries[c.left.index_of(p.left_id)], c.right.entries[c.right.index_of(p.right_id)],
                         p.left_id.back() == p.right_id.back()});
  }
  ModelConfig cfg;
  cfg.knowledge = KnowledgeMode::On;
  cfg.encoder.d_model = 8;
  cfg.encoder.n_layers = 1;
  cfg.encoder.n_heads = 2;
  cfg.encoder.max_len = 64;
  const auto model = build_model(cfg, train_set, rules());
  const LabelerService s(c.left, c.right, c.pairs, (dir / "labels.jsonl").string(), model, rules(), "content");
  const auto r = s.explain("a1::b1");
  REQUIRE(r.status == 200);
  const auto probs = r.body["probabilities"].get<std::vector<double>>();
  REQUIRE(probs.size() == 2);
  CHECK(probs[0] + probs[1] == doctest::Approx(1.0));
  CHECK(r.body["pair_id"] == "a1::b1");
  CHECK_FALSE(r.body["highlights"].empty());
}

TEST_CASE("bad candidate files are rejected") {
  const auto dir = fresh_dir("bad");
  auto c = corpus();
  c.pairs.push_back(CandidatePair{"a0::zz", "a0", "zz", {"exact"}});
  CHECK_THROWS_AS(LabelerService(c.left, c.right, c.pairs, (dir / "l.jsonl").string()), DataError);
}

TEST_CASE("concurrent writers and readers see consistent snapshots") {
  const auto dir = fresh_dir("threads");
  auto s = service(dir);
  const std::vector<std::string> ids = {"a0::b0", "a0::b1", "a1::b1", "a2::b2", "a3::b3", "a4::b4"};
  std::vector<std::thread> ts;
  for (int w = 0; w < 3; ++w) {
    ts.emplace_back([&, w] {
      for (int i = 0; i < 20; ++i) s.post_label(ids[static_cast<std::size_t>((w + i) % 6)], {{"label", i % 3 ? "match" : "nomatch"}});
    });
  }
  bool consistent = true;
  ts.emplace_back([&] {
    for (int i = 0; i < 200; ++i) {
      const auto st = s.stats().body;
      if (st["labeled"].get<int>() + st["unlabeled"].get<int>() != 6) consistent = false;
      if (st["match"].get<int>() + st["nomatch"].get<int>() != st["labeled"].get<int>()) consistent = false;
    }
  });
  for (auto& t : ts) t.join();
  CHECK(consistent);
  CHECK(s.stats().body["events"] == 60);
  CHECK(LabelStore((dir / "labels.jsonl").string()).history().size() == 60);
}

TEST_CASE("serve config") {
  const auto dir = fresh_dir("config");
  write_text_file((dir / "serve.json").string(),
                  R"({"left": "l.jsonl", "right": "/abs/r.jsonl", "pairs": "p.jsonl", "labels": "labels.jsonl",
                      "port": 9000, "cors_origin": "http://localhost:5173"})");
  const auto c = ServeConfig::load((dir / "serve.json").string());
  CHECK(c.left_path == (dir / "l.jsonl").string());
  CHECK(c.right_path == "/abs/r.jsonl");
  CHECK(c.port == 9000);
  CHECK(c.gold_path.empty());
  CHECK(c.cors_origin == "http://localhost:5173");
  CHECK_THROWS_AS(ServeConfig::from_json(Json::parse(R"({"left": "l"})")), UsageError);
  CHECK_THROWS_AS(ServeConfig::from_json(Json::parse(R"({"left": "l", "right": "r", "pairs": "p", "labels": "x", "port": 70000})")),
                  UsageError);
}

TEST_CASE("http endpoints") {
  const auto dir = fresh_dir("http");
  auto s = service(dir);
  HttpServer server(s, "http://localhost:5173");
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread t([&] { server.run(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(5);

  // Wait for the listener.
  httplib::Result res;
  for (int i = 0; i < 100 && !(res = cli.Get("/stats")); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(Json::parse(res->body)["pairs"] == 6);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");

  res = cli.Get("/pairs?limit=2");
  REQUIRE(res);
  auto page = Json::parse(res->body);
  CHECK(page["pairs"].size() == 2);
  CHECK(page["next_cursor"] == "a0::b1");
  res = cli.Get("/pairs?limit=2&cursor=a0::b1");
  CHECK(Json::parse(res->body)["pairs"][0]["pair_id"] == "a1::b1");
  CHECK(cli.Get("/pairs?limit=abc")->status == 400);
  CHECK(cli.Get("/pairs?cursor=nope")->status == 400);

  res = cli.Post("/pairs/a2::b2/label", R"({"label": "match", "annotator": "lee"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(Json::parse(res->body)["label"] == "match");
  CHECK(Json::parse(cli.Get("/pairs/a2::b2")->body)["label"]["label"] == "match");
  CHECK(Json::parse(cli.Get("/pairs?status=labeled")->body)["pairs"].size() == 1);

  CHECK(cli.Post("/pairs/a2::b2/label", "{not json", "application/json")->status == 400);
  CHECK(cli.Post("/pairs/zz/label", R"({"label": "match"})", "application/json")->status == 404);
  CHECK(cli.Get("/pairs/zz")->status == 404);
  CHECK(cli.Get("/pairs/a0::b0/explain")->status == 409);

  res = cli.Options("/pairs");
  REQUIRE(res);
  CHECK(res->status == 204);
  CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  server.stop();
  t.join();
}
