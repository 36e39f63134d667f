#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gem/entity.h"

namespace gem {

struct DedupCluster {
  std::string kept;
  std::vector<std::string> removed;
};

struct DedupReport {
  std::vector<DedupCluster> clusters;  // only clusters that removed something
  std::vector<std::string> removed_spam;

  Json to_json() const;
};

struct DedupOptions {
  int q = 3;
  double threshold = 0.9;
};

// Clusters entries whose normalized text has q-gram Jaccard >= threshold,
// transitively, keeping the lexicographically smallest id of each cluster.
// Survivors stay in input order.
std::pair<EntityCollection, DedupReport> dedup_collection(
    const EntityCollection& c, const DedupOptions& options = {});

struct MinCharsRule {
  std::size_t min_chars = 40;
};
struct SingleUrlRule {};
using SpamRule = std::variant<MinCharsRule, SingleUrlRule>;

std::vector<SpamRule> default_spam_rules();

bool is_spam(const EntityEntry& e, const std::vector<SpamRule>& rules);

std::pair<EntityCollection, std::vector<std::string>> spam_filter(
    const EntityCollection& c, const std::vector<SpamRule>& rules);

}  // namespace gem
