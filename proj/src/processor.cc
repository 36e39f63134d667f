#include "gem/processor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "gem/error.h"
#include "gem/text.h"

namespace gem {
namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

// Gram sets as sorted vectors of ids, where ids are ranked by ascending
// document frequency so that prefixes hold the rarest grams.
std::vector<std::vector<std::uint32_t>> ranked_gram_sets(
    const std::vector<std::vector<std::string>>& grams) {
  std::unordered_map<std::string, std::uint32_t> df;
  for (const auto& g : grams) {
    for (const auto& s : g) ++df[s];
  }
  std::vector<std::pair<std::string, std::uint32_t>> order(df.begin(), df.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  std::unordered_map<std::string, std::uint32_t> rank;
  for (std::uint32_t i = 0; i < order.size(); ++i) rank[order[i].first] = i;
  std::vector<std::vector<std::uint32_t>> sets(grams.size());
  for (std::size_t i = 0; i < grams.size(); ++i) {
    for (const auto& s : grams[i]) sets[i].push_back(rank[s]);
    std::sort(sets[i].begin(), sets[i].end());
  }
  return sets;
}

}  // namespace

Json DedupReport::to_json() const {
  Json j;
  j["clusters"] = Json::array();
  for (const auto& c : clusters) {
    j["clusters"].push_back({{"kept", c.kept}, {"removed", c.removed}});
  }
  j["removed_spam"] = removed_spam;
  return j;
}

std::pair<EntityCollection, DedupReport> dedup_collection(const EntityCollection& c,
                                                          const DedupOptions& options) {
  if (options.q < 2) throw UsageError("dedup q must be >= 2");
  if (!(options.threshold > 0.0 && options.threshold <= 1.0)) {
    throw UsageError("dedup threshold must be in (0, 1]");
  }
  const std::size_t n = c.entries.size();
  std::vector<std::vector<std::string>> grams(n);
  for (std::size_t i = 0; i < n; ++i) {
    grams[i] = char_qgrams(normalize_text(entry_text(c.entries[i])), options.q);
  }
  const auto sets = ranked_gram_sets(grams);
  const double t = options.threshold;

  // Prefix filter: sets with Jaccard >= t share a gram within their first
  // |x| - ceil(t|x|) + 1 ranked grams.
  UnionFind uf(n);
  std::unordered_map<std::uint32_t, std::vector<std::size_t>> prefix_index;
  std::size_t first_empty = n;
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& x = sets[i];
    if (x.empty()) {
      if (first_empty == n) first_empty = i;
      else uf.unite(first_empty, i);
      continue;
    }
    const auto size = static_cast<double>(x.size());
    const auto prefix =
        x.size() - static_cast<std::size_t>(std::ceil(t * size - 1e-9)) + 1;
    candidates.clear();
    for (std::size_t p = 0; p < prefix && p < x.size(); ++p) {
      auto it = prefix_index.find(x[p]);
      if (it == prefix_index.end()) continue;
      candidates.insert(candidates.end(), it->second.begin(), it->second.end());
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    for (const auto j : candidates) {
      const auto& y = sets[j];
      const auto lo = std::min(x.size(), y.size());
      const auto hi = std::max(x.size(), y.size());
      if (static_cast<double>(lo) < t * static_cast<double>(hi) - 1e-9) continue;
      if (sorted_jaccard(x, y) >= t - 1e-12) uf.unite(i, j);
    }
    for (std::size_t p = 0; p < prefix && p < x.size(); ++p) {
      prefix_index[x[p]].push_back(i);
    }
  }

  std::unordered_map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[uf.find(i)].push_back(i);

  std::vector<bool> keep(n, false);
  DedupReport report;
  std::vector<std::size_t> roots;
  for (const auto& [root, _] : members) roots.push_back(root);
  std::sort(roots.begin(), roots.end());
  for (const auto root : roots) {
    const auto& group = members[root];
    std::size_t best = group.front();
    for (const auto m : group) {
      if (c.entries[m].id < c.entries[best].id) best = m;
    }
    keep[best] = true;
    if (group.size() == 1) continue;
    DedupCluster cluster{c.entries[best].id, {}};
    for (const auto m : group) {
      if (m != best) cluster.removed.push_back(c.entries[m].id);
    }
    std::sort(cluster.removed.begin(), cluster.removed.end());
    report.clusters.push_back(std::move(cluster));
  }
  std::sort(report.clusters.begin(), report.clusters.end(),
            [](const auto& a, const auto& b) { return a.kept < b.kept; });

  std::vector<EntityEntry> survivors;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) survivors.push_back(c.entries[i]);
  }
  return {make_collection(c.name, std::move(survivors)), std::move(report)};
}

std::vector<SpamRule> default_spam_rules() { return {MinCharsRule{}, SingleUrlRule{}}; }

namespace {

bool looks_like_url(std::string_view token) {
  return token.starts_with("http://") || token.starts_with("https://") ||
         token.starts_with("www.");
}

struct SpamMatcher {
  const std::string& text;
  bool operator()(const MinCharsRule& r) const { return utf8_length(text) < r.min_chars; }
  bool operator()(const SingleUrlRule&) const {
    const auto tokens = split_whitespace(text);
    return tokens.size() == 1 && looks_like_url(tokens[0]);
  }
};

}  // namespace

bool is_spam(const EntityEntry& e, const std::vector<SpamRule>& rules) {
  const std::string text = normalize_text(entry_text(e));
  const SpamMatcher matcher{text};
  return std::any_of(rules.begin(), rules.end(),
                     [&](const SpamRule& r) { return std::visit(matcher, r); });
}

std::pair<EntityCollection, std::vector<std::string>> spam_filter(
    const EntityCollection& c, const std::vector<SpamRule>& rules) {
  if (rules.empty()) throw UsageError("spam_filter needs at least one rule");
  std::vector<EntityEntry> kept;
  std::vector<std::string> removed;
  for (const auto& e : c.entries) {
    if (is_spam(e, rules)) removed.push_back(e.id);
    else kept.push_back(e);
  }
  return {make_collection(c.name, std::move(kept)), std::move(removed)};
}

}  // namespace gem
