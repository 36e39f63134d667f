#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "gem/blocker.h"
#include "gem/dataset.h"
#include "gem/explain.h"
#include "gem/knowledge.h"
#include "gem/matcher.h"

namespace gem {

struct ServeConfig {
  std::string left_path;
  std::string right_path;
  std::string pairs_path;   // candidate pairs, one JSON object per line
  std::string labels_path;  // label history, created when missing
  std::string gold_path;    // optional label records; match records form the gold set
  std::string model_path;   // optional checkpoint
  std::string rules_dir;    // optional keyword rules for topic sections
  std::string text_field = "content";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin;  // empty: no CORS headers

  // Relative paths resolve against base_dir. Throws UsageError on missing
  // required keys.
  static ServeConfig from_json(const Json& j, const std::string& base_dir = "");
  static ServeConfig load(const std::string& path);
};

struct ServiceResponse {
  int status = 200;
  Json body;
};

// Everything the HTTP layer does, minus the sockets. Reads take a shared
// lock, label writes an exclusive one, so a reader sees either all or none
// of a write.
class LabelerService {
 public:
  explicit LabelerService(const ServeConfig& cfg);
  // Test seam: model may be null.
  LabelerService(EntityCollection left, EntityCollection right, std::vector<CandidatePair> pairs,
                 std::string labels_path, std::optional<MatchModel> model = std::nullopt,
                 KeywordRuleSet rules = {}, std::string text_field = "content",
                 std::optional<std::vector<LabelRecord>> gold = std::nullopt);

  // status: unlabeled | labeled | all. cursor: the last pair id of the
  // previous page, empty for the first page.
  ServiceResponse list_pairs(const std::string& status, std::size_t limit, const std::string& cursor) const;
  ServiceResponse get_pair(const std::string& pair_id) const;
  ServiceResponse post_label(const std::string& pair_id, const Json& body);
  ServiceResponse stats() const;
  ServiceResponse explain(const std::string& pair_id) const;

  bool has_model() const { return model_.has_value(); }
  std::size_t pair_count() const { return pairs_.size(); }

 private:
  Json view(const CandidatePair& p) const;
  Json entry_view(const EntityEntry& e) const;
  const CandidatePair* find_pair(const std::string& pair_id) const;

  EntityCollection left_, right_;
  std::vector<CandidatePair> pairs_;  // sorted by pair_id
  std::map<std::string, std::size_t> pair_index_;
  std::optional<MatchModel> model_;
  std::unique_ptr<RuleBasedClassifier> classifier_;
  std::string text_field_;
  std::optional<std::set<std::pair<std::string, std::string>>> gold_;
  mutable std::shared_mutex mu_;
  LabelStore store_;
};

class HttpServer {
 public:
  HttpServer(LabelerService& service, std::string cors_origin = "");
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // port 0 picks a free port. Returns the bound port; throws Error when
  // binding fails.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gem
