#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "gem/blocker.h"
#include "gem/dataset.h"
#include "gem/error.h"
#include "gem/explain.h"
#include "gem/io.h"
#include "gem/knowledge.h"
#include "gem/labeler.h"
#include "gem/matcher.h"
#include "gem/parallel.h"
#include "gem/processor.h"

namespace fs = std::filesystem;
using namespace gem;

namespace {

void report(const Json& j) { std::cout << j.dump() << std::endl; }

std::vector<double> parse_doubles(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string("bad number '") + item + "' in " + what);
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + " is empty");
  return out;
}

std::vector<std::string> parse_names(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Json read_json_file(const std::string& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const Json::parse_error& ex) {
    throw DataError("'" + path + "' is not valid JSON: " + ex.what());
  }
}

std::set<std::pair<std::string, std::string>> gold_matches(const std::string& path) {
  std::set<std::pair<std::string, std::string>> gold;
  for (const auto& [id, r] : current_labels(read_labels(path))) {
    if (r.is_match()) gold.insert(split_pair_id(id));
  }
  return gold;
}

std::string relative_to(const std::string& target, const std::string& from_file) {
  const auto base = fs::absolute(fs::path(from_file)).parent_path();
  return fs::relative(fs::absolute(target), base).string();
}

// Every long option of every subcommand can also come from GEM_<NAME>.
void bind_env(CLI::App& app) {
  for (auto* sub : app.get_subcommands({})) {
    for (auto* opt : sub->get_options()) {
      const auto& names = opt->get_lnames();
      if (names.empty() || names[0] == "help") continue;
      std::string env = "GEM_";
      for (char c : names[0]) env += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      opt->envname(env);
    }
  }
}

struct ProcessArgs {
  std::string in, out, report_path;
  int dedup_q = 3;
  double dedup_threshold = 0.9;
  std::size_t spam_min_chars = 40;
};

void cmd_process(const ProcessArgs& a) {
  auto c = parse_collection(a.in, fs::path(a.in).stem().string());
  const std::size_t n_in = c.entries.size();
  std::vector<SpamRule> rules = {MinCharsRule{a.spam_min_chars}, SingleUrlRule{}};
  auto [clean, spam] = spam_filter(c, rules);
  auto [deduped, dedup] = dedup_collection(clean, {a.dedup_q, a.dedup_threshold});
  write_collection(deduped, a.out);
  Json r = dedup.to_json();
  r["removed_spam"] = spam;
  r["input"] = n_in;
  r["output"] = deduped.entries.size();
  if (!a.report_path.empty()) write_text_file(a.report_path, r.dump(2) + "\n");
  report(r);
}

struct BlockArgs {
  std::string a, b, config, out, gold;
  bool report_recall = false;
  unsigned threads = default_threads();
};

void cmd_block(const BlockArgs& args) {
  if (args.report_recall && args.gold.empty()) throw UsageError("--report-recall needs --gold");
  const auto cfg = blocking_config_from_json(read_json_file(args.config));
  const auto a = parse_collection(args.a, "A");
  const auto b = parse_collection(args.b, "B");
  const auto pairs = compose_blockers(cfg.rules, cfg.mode, args.threads)(a, b);
  std::vector<Json> rows;
  for (const auto& p : pairs.pairs()) rows.push_back(p.to_json());
  write_json_lines(args.out, rows);
  const double cross = static_cast<double>(a.entries.size()) * static_cast<double>(b.entries.size());
  Json r = {{"candidates", pairs.size()}, {"cross_product", cross},
            {"fraction", cross > 0 ? static_cast<double>(pairs.size()) / cross : 0.0}};
  if (!args.gold.empty()) r["recall"] = estimate_recall(pairs, gold_matches(args.gold));
  report(r);
}

struct InjectArgs {
  std::string in, out, text_field = "content", rules, classifier;
};

void cmd_inject(const InjectArgs& a) {
  const auto rules = KeywordRuleSet::load_dir(a.rules);
  std::unique_ptr<SentenceClassifier> clf;
  if (a.classifier.empty()) {
    clf = std::make_unique<RuleBasedClassifier>(rules);
  } else {
    const std::string prefix = "external:";
    if (a.classifier.rfind(prefix, 0) != 0) throw UsageError("--classifier must look like external:<address>");
    clf = std::make_unique<ExternalClassifier>(a.classifier.substr(prefix.size()), rules.topic_names());
  }
  const auto c = parse_collection(a.in, fs::path(a.in).stem().string());
  const auto out = inject_collection(c, a.text_field, *clf);
  write_collection(out, a.out);
  std::size_t touched = 0;
  for (const auto& e : c.entries) touched += e.find(a.text_field) != nullptr;
  report({{"entries", out.entries.size()}, {"restructured", touched}});
}

struct SampleArgs {
  std::string a, b, title_path = "title", out;
  std::size_t k = 0;
  std::uint64_t seed = 0;
};

void cmd_sample(const SampleArgs& s) {
  const auto a = parse_collection(s.a, "A");
  const auto b = parse_collection(s.b, "B");
  const auto records = sample_negatives(a, b, s.title_path, s.k, s.seed);
  std::vector<Json> rows;
  for (const auto& r : records) rows.push_back(r.to_json());
  write_json_lines(s.out, rows);
  report({{"sampled", records.size()}});
}

struct SplitArgs {
  std::string labels, pairs, out, left, right, ratios = "0.6,0.2,0.2";
  std::vector<std::string> extra;
  std::uint64_t seed = 0;
  bool no_balance = false;
};

void cmd_split(const SplitArgs& s) {
  const auto ratios = parse_doubles(s.ratios, "--ratios");
  if (ratios.size() != 3) throw UsageError("--ratios needs three values");
  SplitSpec spec;
  spec.ratios = {ratios[0], ratios[1], ratios[2]};
  spec.seed = s.seed;
  spec.balance = !s.no_balance;

  std::set<std::string> wanted;
  for (const auto& row : read_json_lines(s.pairs)) {
    if (!row.contains("pair_id")) throw DataError("'" + s.pairs + "' has a line without pair_id");
    wanted.insert(row.at("pair_id").get<std::string>());
  }
  std::vector<LabelRecord> records;
  for (const auto& [id, r] : current_labels(read_labels(s.labels))) {
    if (wanted.count(id)) records.push_back(r);
  }
  for (const auto& path : s.extra) {
    for (const auto& [id, r] : current_labels(read_labels(path))) records.push_back(r);
  }
  // Entries can disappear in processing; their labels go with them.
  const auto left = parse_collection(s.left, "left");
  const auto right = parse_collection(s.right, "right");
  std::set<std::string> seen;
  std::vector<LabelRecord> kept;
  std::size_t dropped = 0;
  for (const auto& r : records) {
    const auto [l, rr] = split_pair_id(r.pair_id);
    if (left.index_of(l) == std::string::npos || right.index_of(rr) == std::string::npos) {
      ++dropped;
      continue;
    }
    if (seen.insert(r.pair_id).second) kept.push_back(r);
  }
  const auto splits = split_dataset(kept, spec);
  const auto manifest = splits_manifest(splits, spec, relative_to(s.left, s.out), relative_to(s.right, s.out));
  write_text_file(s.out, manifest.dump(2) + "\n");
  report({{"train", splits.train.size()}, {"val", splits.val.size()}, {"test", splits.test.size()},
          {"dropped", dropped}});
}

struct TrainArgs {
  std::string manifest, checkpoint, arch = "sequenced", schema = "heter", alignment, knowledge = "off", rules;
  std::string classifier, text_field = "content";
  std::vector<std::string> grid;
  bool no_pooling = false, no_anchor_tags = false;
  int d_model = 64, layers = 2, heads = 4, max_len = 256, epochs = 30, batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  unsigned threads = default_threads();
};

GridConfig parse_grid(const TrainArgs& a) {
  GridConfig g;
  g.learning_rates = {a.lr};
  g.max_lens = {a.max_len};
  g.epochs = {a.epochs};
  for (const auto& item : a.grid) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("grid entries look like key=v1,v2 (got '" + item + "')");
    const auto key = item.substr(0, eq);
    const auto values = parse_doubles(item.substr(eq + 1), "--grid");
    if (key == "lr") {
      g.learning_rates = values;
    } else if (key == "max_len" || key == "epochs") {
      std::vector<int> ints;
      for (double v : values) {
        if (v != static_cast<int>(v)) throw UsageError("grid " + key + " needs integers");
        ints.push_back(static_cast<int>(v));
      }
      (key == "max_len" ? g.max_lens : g.epochs) = ints;
    } else {
      throw UsageError("unknown grid key '" + key + "' (expected lr, max_len or epochs)");
    }
  }
  return g;
}

void cmd_train(const TrainArgs& a) {
  ModelConfig cfg;
  cfg.architecture = architecture_from_string(a.arch);
  cfg.schema_mode = schema_mode_from_string(a.schema);
  cfg.structure_pooling = !a.no_pooling;
  cfg.knowledge = knowledge_mode_from_string(a.knowledge == "rule-only" ? "rule_only" : a.knowledge);
  cfg.classifier_address = a.classifier;
  cfg.text_field = a.text_field;
  cfg.use_anchor_tags = !a.no_anchor_tags;
  cfg.alignment = parse_names(a.alignment);
  cfg.encoder.d_model = a.d_model;
  cfg.encoder.n_layers = a.layers;
  cfg.encoder.n_heads = a.heads;
  cfg.encoder.seed = a.seed;
  KeywordRuleSet rules;
  if (!a.rules.empty()) rules = KeywordRuleSet::load_dir(a.rules);
  if (cfg.knowledge != KnowledgeMode::Off && rules.topics().empty()) throw UsageError("--knowledge needs --rules");

  auto data = load_manifest(a.manifest);
  GridConfig grid = parse_grid(a);
  grid.train.batch_size = a.batch_size;
  grid.train.seed = a.seed;
  grid.train.threads = a.threads;
  grid.train.on_epoch = [](const EpochLog& l) { report(l.to_json()); };
  const auto result = grid_search(cfg, rules, data.train, data.val, grid);

  Json log_json = Json::array();
  for (const auto& l : result.best.log) log_json.push_back(l.to_json());
  Json cells = Json::array();
  for (const auto& c : result.report) cells.push_back(c.to_json());
  const Json meta = {{"best_cell", result.best_cell.to_json()}, {"grid", cells}, {"log", log_json},
                     {"manifest", a.manifest}};
  save_model(result.best.model, a.checkpoint, meta);
  Json r = {{"checkpoint", a.checkpoint}, {"best", result.best_cell.to_json()}, {"grid", cells}};
  if (!data.test.empty()) r["test"] = evaluate(result.best.model, data.test, a.threads).to_json();
  report(r);
}

struct EvalArgs {
  std::string checkpoint, manifest, split = "test";
  unsigned threads = default_threads();
};

void cmd_eval(const EvalArgs& a) {
  const auto model = load_model(a.checkpoint);
  const auto data = load_manifest(a.manifest);
  const std::vector<LabeledPair>* set = a.split == "train" ? &data.train : a.split == "val" ? &data.val : &data.test;
  if (a.split != "train" && a.split != "val" && a.split != "test") throw UsageError("--split must be train, val or test");
  report(evaluate(model, *set, a.threads).to_json());
}

struct ExplainArgs {
  std::string checkpoint, pairs, out_dir, format = "json", left, right;
  int layers = 0;
};

std::string file_stem(const std::string& pair_id) {
  std::string s;
  for (char c : pair_id) s += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return s;
}

void cmd_explain(const ExplainArgs& a) {
  if (a.format != "json" && a.format != "html") throw UsageError("--format must be json or html");
  const auto model = load_model(a.checkpoint);
  std::optional<EntityCollection> left, right;
  if (!a.left.empty()) left = parse_collection(a.left, "left");
  if (!a.right.empty()) right = parse_collection(a.right, "right");
  fs::create_directories(a.out_dir);
  Json written = Json::array();
  for (const auto& row : read_json_lines(a.pairs)) {
    EntityEntry l, r;
    std::string pair_id;
    if (row.contains("left") && row.at("left").is_object()) {
      l = entry_from_json(row.at("left"));
      r = entry_from_json(row.at("right"));
      pair_id = row.value("pair_id", make_pair_id(l.id, r.id));
    } else {
      if (!left || !right) throw UsageError("pairs given by id need --left and --right collections");
      pair_id = row.at("pair_id").get<std::string>();
      const auto [lid, rid] = split_pair_id(pair_id);
      const auto i = left->index_of(lid), j = right->index_of(rid);
      if (i == std::string::npos || j == std::string::npos) throw DataError("pair '" + pair_id + "' not found");
      l = left->entries[i];
      r = right->entries[j];
    }
    const auto e = explain_pair(model, pair_id, l, r, a.layers);
    const auto path = (fs::path(a.out_dir) / (file_stem(pair_id) + "." + a.format)).string();
    write_text_file(path, render_explanation(e, a.format));
    written.push_back(path);
  }
  report({{"written", written}});
}

struct ServeArgs {
  std::string config, host;
  int port = -1;
};

void cmd_serve(const ServeArgs& a) {
  auto cfg = ServeConfig::load(a.config);
  if (!a.host.empty()) cfg.host = a.host;
  if (a.port >= 0) cfg.port = a.port;
  LabelerService service(cfg);
  HttpServer server(service, cfg.cors_origin);
  const int port = server.bind(cfg.host, cfg.port);
  report({{"listening", cfg.host + ":" + std::to_string(port)}, {"pairs", service.pair_count()},
          {"model", service.has_model()}});
  server.run();
}

struct SynthArgs {
  std::string task = "jobjob", out_dir;
  std::size_t n = 200;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

void cmd_synth(const SynthArgs& a) {
  const auto data = generate_synthetic(synthetic_task_from_string(a.task), a.n, a.noise, a.seed);
  fs::create_directories(a.out_dir);
  const auto dir = fs::path(a.out_dir);
  write_collection(data.left, (dir / "left.jsonl").string());
  write_collection(data.right, (dir / "right.jsonl").string());
  std::vector<Json> rows;
  for (const auto& r : data.gold) rows.push_back(r.to_json());
  write_json_lines((dir / "gold.jsonl").string(), rows);
  report({{"left", (dir / "left.jsonl").string()}, {"right", (dir / "right.jsonl").string()},
          {"gold", (dir / "gold.jsonl").string()}, {"pairs", data.gold.size()}});
}

int fail(int code, const char* kind, const std::string& msg) {
  std::cerr << Json{{"error", kind}, {"message", msg}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gem: generalized entity matching pipeline"};
  app.require_subcommand(1);

  ProcessArgs pa;
  auto* process = app.add_subcommand("process", "spam filter and near-duplicate removal");
  process->add_option("in", pa.in)->required();
  process->add_option("out", pa.out)->required();
  process->add_option("--dedup-q", pa.dedup_q, "q-gram size for dedup");
  process->add_option("--dedup-threshold", pa.dedup_threshold, "Jaccard threshold for dedup");
  process->add_option("--spam-min-chars", pa.spam_min_chars, "entries with less text are spam");
  process->add_option("--report", pa.report_path, "also write the report here");

  BlockArgs ba;
  auto* block = app.add_subcommand("block", "candidate generation");
  block->add_option("A", ba.a)->required();
  block->add_option("B", ba.b)->required();
  block->add_option("rules-config", ba.config)->required();
  block->add_option("out", ba.out)->required();
  block->add_option("--gold", ba.gold, "gold labels for a recall estimate");
  block->add_flag("--report-recall", ba.report_recall);
  block->add_option("--threads", ba.threads);

  InjectArgs ia;
  auto* inject = app.add_subcommand("inject", "split text into topic attributes");
  inject->add_option("in", ia.in)->required();
  inject->add_option("out", ia.out)->required();
  inject->add_option("--text-field", ia.text_field);
  inject->add_option("--rules", ia.rules, "keyword rule directory")->required();
  inject->add_option("--classifier", ia.classifier, "external:<address>");

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample-negatives", "draw easy negatives");
  sample->add_option("A", sa.a)->required();
  sample->add_option("B", sa.b)->required();
  sample->add_option("out", sa.out)->required();
  sample->add_option("--title-path", sa.title_path);
  sample->add_option("-k", sa.k)->required();
  sample->add_option("--seed", sa.seed);

  SplitArgs spa;
  auto* split = app.add_subcommand("split", "train/val/test manifest");
  split->add_option("labels", spa.labels)->required();
  split->add_option("pairs", spa.pairs, "pairs whose labels are used")->required();
  split->add_option("out-manifest", spa.out)->required();
  split->add_option("--left", spa.left)->required();
  split->add_option("--right", spa.right)->required();
  split->add_option("--extra", spa.extra, "more label files used as is (e.g. sampled negatives)");
  split->add_option("--ratios", spa.ratios);
  split->add_option("--seed", spa.seed);
  split->add_flag("--no-balance", spa.no_balance);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a matcher");
  train_cmd->add_option("manifest", ta.manifest)->required();
  train_cmd->add_option("checkpoint", ta.checkpoint)->required();
  train_cmd->add_option("--arch", ta.arch);
  train_cmd->add_option("--schema", ta.schema);
  train_cmd->add_option("--alignment", ta.alignment, "comma separated attribute names");
  train_cmd->add_option("--grid", ta.grid, "lr=a,b max_len=a,b epochs=a,b");
  train_cmd->add_option("--knowledge", ta.knowledge, "off | on | rule-only");
  train_cmd->add_option("--rules", ta.rules);
  train_cmd->add_option("--classifier", ta.classifier);
  train_cmd->add_option("--text-field", ta.text_field);
  train_cmd->add_flag("--no-pooling", ta.no_pooling);
  train_cmd->add_flag("--no-anchor-tags", ta.no_anchor_tags);
  train_cmd->add_option("--d-model", ta.d_model);
  train_cmd->add_option("--layers", ta.layers);
  train_cmd->add_option("--heads", ta.heads);
  train_cmd->add_option("--max-len", ta.max_len);
  train_cmd->add_option("--epochs", ta.epochs);
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--batch-size", ta.batch_size);
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--threads", ta.threads);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "score a checkpoint");
  eval->add_option("checkpoint", ea.checkpoint)->required();
  eval->add_option("manifest", ea.manifest)->required();
  eval->add_option("--split", ea.split);
  eval->add_option("--threads", ea.threads);

  ExplainArgs xa;
  auto* explain = app.add_subcommand("explain", "attribute and word level explanations");
  explain->add_option("checkpoint", xa.checkpoint)->required();
  explain->add_option("pair-file", xa.pairs)->required();
  explain->add_option("out-dir", xa.out_dir)->required();
  explain->add_option("--format", xa.format);
  explain->add_option("--left", xa.left);
  explain->add_option("--right", xa.right);
  explain->add_option("--layers", xa.layers, "inspected layers, 0 for the default");

  ServeArgs va;
  auto* serve = app.add_subcommand("serve", "labeling service");
  serve->add_option("--config", va.config)->required();
  serve->add_option("--host", va.host);
  serve->add_option("--port", va.port);

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "synthetic data");
  synth->add_option("out-dir", ya.out_dir)->required();
  synth->add_option("--task", ya.task, "jobjob | jobresume");
  synth->add_option("-n", ya.n);
  synth->add_option("--noise", ya.noise);
  synth->add_option("--seed", ya.seed);

  bind_env(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(1, "usage", e.what());
  }

  try {
    if (*process) cmd_process(pa);
    else if (*block) cmd_block(ba);
    else if (*inject) cmd_inject(ia);
    else if (*sample) cmd_sample(sa);
    else if (*split) cmd_split(spa);
    else if (*train_cmd) cmd_train(ta);
    else if (*eval) cmd_eval(ea);
    else if (*explain) cmd_explain(xa);
    else if (*serve) cmd_serve(va);
    else if (*synth) cmd_synth(ya);
  } catch (const UsageError& e) {
    return fail(1, "usage", e.what());
  } catch (const DataError& e) {
    return fail(2, "data", e.what());
  } catch (const std::exception& e) {
    return fail(3, "internal", e.what());
  }
  return 0;
}
