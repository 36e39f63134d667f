#include "gem/labeler.h"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <mutex>

#include "gem/error.h"
#include "gem/io.h"
#include "httplib.h"

namespace gem {
namespace {

std::string resolve(const Json& j, const char* key, const std::string& base, bool required) {
  if (!j.contains(key) || j.at(key).is_null()) {
    if (required) throw UsageError(std::string("serve config is missing '") + key + "'");
    return "";
  }
  const std::filesystem::path p(j.at(key).get<std::string>());
  if (p.is_absolute() || base.empty()) return p.string();
  return (std::filesystem::path(base) / p).string();
}

std::vector<CandidatePair> read_pairs(const std::string& path) {
  std::vector<CandidatePair> out;
  for (const auto& row : read_json_lines(path)) out.push_back(CandidatePair::from_json(row));
  return out;
}

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

ServiceResponse error_response(int status, const std::string& msg) { return {status, Json{{"error", msg}}}; }

}  // namespace

ServeConfig ServeConfig::from_json(const Json& j, const std::string& base_dir) {
  if (!j.is_object()) throw UsageError("serve config must be a JSON object");
  ServeConfig c;
  try {
    c.left_path = resolve(j, "left", base_dir, true);
    c.right_path = resolve(j, "right", base_dir, true);
    c.pairs_path = resolve(j, "pairs", base_dir, true);
    c.labels_path = resolve(j, "labels", base_dir, true);
    c.gold_path = resolve(j, "gold", base_dir, false);
    c.model_path = resolve(j, "model", base_dir, false);
    c.rules_dir = resolve(j, "rules", base_dir, false);
    c.text_field = j.value("text_field", c.text_field);
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.cors_origin = j.value("cors_origin", c.cors_origin);
  } catch (const Json::exception& ex) {
    throw UsageError(std::string("bad serve config: ") + ex.what());
  }
  if (c.port < 0 || c.port > 65535) throw UsageError("port must be in [0, 65535]");
  return c;
}

ServeConfig ServeConfig::load(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& ex) {
    throw UsageError(std::string("bad serve config: ") + ex.what());
  }
  return from_json(j, std::filesystem::path(path).parent_path().string());
}

LabelerService::LabelerService(const ServeConfig& cfg)
    : LabelerService(parse_collection(cfg.left_path, "left"), parse_collection(cfg.right_path, "right"),
                     read_pairs(cfg.pairs_path), cfg.labels_path,
                     cfg.model_path.empty() ? std::nullopt : std::optional<MatchModel>(load_model(cfg.model_path)),
                     cfg.rules_dir.empty() ? KeywordRuleSet{} : KeywordRuleSet::load_dir(cfg.rules_dir),
                     cfg.text_field,
                     cfg.gold_path.empty() ? std::nullopt
                                           : std::optional<std::vector<LabelRecord>>(read_labels(cfg.gold_path))) {}

LabelerService::LabelerService(EntityCollection left, EntityCollection right, std::vector<CandidatePair> pairs,
                               std::string labels_path, std::optional<MatchModel> model, KeywordRuleSet rules,
                               std::string text_field, std::optional<std::vector<LabelRecord>> gold)
    : left_(std::move(left)),
      right_(std::move(right)),
      pairs_(std::move(pairs)),
      model_(std::move(model)),
      text_field_(std::move(text_field)),
      store_(std::move(labels_path)) {
  std::sort(pairs_.begin(), pairs_.end(),
            [](const CandidatePair& a, const CandidatePair& b) { return a.pair_id < b.pair_id; });
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const auto& p = pairs_[i];
    if (!pair_index_.emplace(p.pair_id, i).second) throw DataError("duplicate candidate pair '" + p.pair_id + "'");
    if (left_.index_of(p.left_id) == std::string::npos) throw DataError("pair '" + p.pair_id + "' has unknown left id");
    if (right_.index_of(p.right_id) == std::string::npos) {
      throw DataError("pair '" + p.pair_id + "' has unknown right id");
    }
  }
  if (rules.topics().empty() && model_ && !model_->rules.topics().empty()) rules = model_->rules;
  if (!rules.topics().empty()) classifier_ = std::make_unique<RuleBasedClassifier>(std::move(rules));
  if (gold) {
    gold_.emplace();
    for (const auto& r : current_labels(*gold)) {
      if (r.second.is_match()) gold_->insert(split_pair_id(r.first));
    }
  }
}

const CandidatePair* LabelerService::find_pair(const std::string& pair_id) const {
  const auto it = pair_index_.find(pair_id);
  return it == pair_index_.end() ? nullptr : &pairs_[it->second];
}

Json LabelerService::entry_view(const EntityEntry& e) const {
  Json topics = Json::array();
  EntityEntry shown = e;
  if (classifier_) {
    const auto* text = e.find(text_field_);
    if (text && text->is_text()) {
      shown = restructure_document(e, text_field_, *classifier_);
      for (const auto& a : shown.attributes) {
        if (classifier_->rules().has_topic(a.name)) topics.push_back(a.name);
      }
    }
  }
  return {{"id", e.id}, {"entry", entry_to_json(shown)}, {"topics", topics}};
}

Json LabelerService::view(const CandidatePair& p) const {
  const auto& l = left_.entries[left_.index_of(p.left_id)];
  const auto& r = right_.entries[right_.index_of(p.right_id)];
  const auto label = store_.current(p.pair_id);
  return {{"pair_id", p.pair_id},
          {"left", entry_view(l)},
          {"right", entry_view(r)},
          {"label", label ? label->to_json() : Json()},
          {"provenance", p.provenance}};
}

ServiceResponse LabelerService::list_pairs(const std::string& status, std::size_t limit,
                                           const std::string& cursor) const {
  if (status != "unlabeled" && status != "labeled" && status != "all") {
    return error_response(400, "status must be unlabeled, labeled or all");
  }
  if (limit == 0) return error_response(400, "limit must be >= 1");
  std::shared_lock lock(mu_);
  std::size_t start = 0;
  if (!cursor.empty()) {
    const auto it = pair_index_.find(cursor);
    if (it == pair_index_.end()) return error_response(400, "unknown cursor '" + cursor + "'");
    start = it->second + 1;
  }
  auto wanted = [&](const CandidatePair& p) {
    if (status == "all") return true;
    const bool labeled = store_.current().count(p.pair_id) > 0;
    return status == "labeled" ? labeled : !labeled;
  };
  Json page = Json::array();
  std::string last;
  bool more = false;
  for (std::size_t i = start; i < pairs_.size(); ++i) {
    if (!wanted(pairs_[i])) continue;
    if (page.size() == limit) {
      more = true;
      break;
    }
    page.push_back(view(pairs_[i]));
    last = pairs_[i].pair_id;
  }
  return {200, {{"pairs", page}, {"next_cursor", more ? Json(last) : Json()}}};
}

ServiceResponse LabelerService::get_pair(const std::string& pair_id) const {
  std::shared_lock lock(mu_);
  const auto* p = find_pair(pair_id);
  if (!p) return error_response(404, "unknown pair '" + pair_id + "'");
  return {200, view(*p)};
}

ServiceResponse LabelerService::post_label(const std::string& pair_id, const Json& body) {
  if (!find_pair(pair_id)) return error_response(404, "unknown pair '" + pair_id + "'");
  if (!body.is_object() || !body.contains("label") || !body.at("label").is_string()) {
    return error_response(400, "body needs a string 'label'");
  }
  LabelRecord r;
  r.pair_id = pair_id;
  r.label = body.at("label").get<std::string>();
  if (r.label != kMatch && r.label != kNoMatch && r.label != kSkip) {
    return error_response(400, "label must be match, nomatch or skip");
  }
  if (body.contains("annotator")) {
    if (!body.at("annotator").is_string()) return error_response(400, "annotator must be a string");
    r.annotator = body.at("annotator").get<std::string>();
  }
  std::unique_lock lock(mu_);
  r.timestamp = now_seconds();
  return {200, store_.append(std::move(r)).to_json()};
}

ServiceResponse LabelerService::stats() const {
  std::shared_lock lock(mu_);
  std::size_t match = 0, nomatch = 0, skips = 0, unlabeled = 0;
  for (const auto& [id, r] : store_.current()) (r.is_match() ? match : nomatch) += 1;
  for (const auto& r : store_.history()) {
    if (r.label == kSkip) ++skips;
  }
  std::map<std::string, std::size_t> provenance;
  CandidateSet candidates;
  for (const auto& p : pairs_) {
    if (!store_.current().count(p.pair_id)) ++unlabeled;
    for (const auto& rule : p.provenance) ++provenance[rule];
    if (gold_) candidates.add(p);
  }
  Json prov = Json::object();
  for (const auto& [rule, n] : provenance) prov[rule] = n;
  Json recall;
  if (gold_ && !gold_->empty()) recall = estimate_recall(candidates, *gold_);
  const std::size_t labeled = match + nomatch;
  return {200,
          {{"pairs", pairs_.size()},
           {"labeled", labeled},
           {"unlabeled", unlabeled},
           {"match", match},
           {"nomatch", nomatch},
           {"skip_events", skips},
           {"events", store_.history().size()},
           {"balance", labeled ? static_cast<double>(match) / static_cast<double>(labeled) : 0.0},
           {"provenance", prov},
           {"recall", recall}}};
}

ServiceResponse LabelerService::explain(const std::string& pair_id) const {
  const auto* p = find_pair(pair_id);
  if (!p) return error_response(404, "unknown pair '" + pair_id + "'");
  if (!model_) return error_response(409, "no model loaded");
  const auto& l = left_.entries[left_.index_of(p->left_id)];
  const auto& r = right_.entries[right_.index_of(p->right_id)];
  try {
    return {200, explain_pair(*model_, pair_id, l, r).to_json()};
  } catch (const UsageError& ex) {
    return error_response(422, ex.what());
  }
}

struct HttpServer::Impl {
  LabelerService& service;
  std::string cors_origin;
  httplib::Server server;

  Impl(LabelerService& s, std::string origin) : service(s), cors_origin(std::move(origin)) {}

  void reply(httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  void routes() {
    if (!cors_origin.empty()) {
      server.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                                  {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                  {"Access-Control-Allow-Headers", "Content-Type"}});
      server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    }
    server.Get("/pairs", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string status = req.has_param("status") ? req.get_param_value("status") : "unlabeled";
      std::size_t limit = 50;
      if (req.has_param("limit")) {
        try {
          const long v = std::stol(req.get_param_value("limit"));
          if (v < 1) throw std::invalid_argument("limit");
          limit = static_cast<std::size_t>(std::min(v, 1000L));
        } catch (const std::exception&) {
          reply(res, error_response(400, "limit must be a positive integer"));
          return;
        }
      }
      const std::string cursor = req.has_param("cursor") ? req.get_param_value("cursor") : "";
      reply(res, service.list_pairs(status, limit, cursor));
    });
    server.Get(R"(/pairs/([^/]+)/explain)", [this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.explain(req.matches[1]));
    });
    server.Get(R"(/pairs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.get_pair(req.matches[1]));
    });
    server.Post(R"(/pairs/([^/]+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
      Json body;
      try {
        body = Json::parse(req.body);
      } catch (const Json::parse_error&) {
        reply(res, error_response(400, "body is not JSON"));
        return;
      }
      reply(res, service.post_label(req.matches[1], body));
    });
    server.Get("/stats", [this](const httplib::Request&, httplib::Response& res) { reply(res, service.stats()); });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string msg = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& ex) {
        msg = ex.what();
      }
      res.status = 500;
      res.set_content(Json{{"error", msg}}.dump(), "application/json");
    });
  }
};

HttpServer::HttpServer(LabelerService& service, std::string cors_origin)
    : impl_(std::make_unique<Impl>(service, std::move(cors_origin))) {
  impl_->routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw Error("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace gem
