#pragma once

#include <functional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "gem/entity.h"

namespace gem {

struct CandidatePair {
  std::string pair_id;  // "<left_id>::<right_id>"
  std::string left_id;
  std::string right_id;
  std::vector<std::string> provenance;  // sorted rule names, nonempty

  Json to_json() const;
  static CandidatePair from_json(const Json& j);
};

std::string make_pair_id(std::string_view left_id, std::string_view right_id);

// Splits a pair id on the first "::"; throws DataError when absent.
std::pair<std::string, std::string> split_pair_id(std::string_view pair_id);

// Pairs keyed and ordered by (left_id, right_id); inserting an existing key
// merges provenance.
class CandidateSet {
 public:
  void add(std::string left_id, std::string right_id, std::vector<std::string> provenance);
  void add(CandidatePair pair);

  bool contains(std::string_view left_id, std::string_view right_id) const;
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }

  // Sorted by (left_id, right_id).
  std::vector<CandidatePair> pairs() const;

  static CandidateSet set_union(const CandidateSet& a, const CandidateSet& b);
  static CandidateSet set_intersection(const CandidateSet& a, const CandidateSet& b);

 private:
  struct Less {
    bool operator()(const CandidatePair& a, const CandidatePair& b) const {
      return std::tie(a.left_id, a.right_id) < std::tie(b.left_id, b.right_id);
    }
  };
  std::set<CandidatePair, Less> pairs_;
};

struct ExactMatchRule {
  std::string field;
};

struct KeywordOverlapRule {
  std::string left_path;
  std::string right_path;
  int min_shared = 1;
  std::unordered_set<std::string> stopwords;
};

struct QGramRule {
  std::string field;
  int q = 3;
  int min_shared_grams = 2;
  double jaccard_refine = 0.3;
  // Grams held by more than max(1, floor(max_gram_freq * |B|)) right-side
  // entries are not indexed.
  double max_gram_freq = 0.05;
};

struct BlockingRule {
  std::string name;
  std::variant<ExactMatchRule, KeywordOverlapRule, QGramRule> kind;
};

// Throws UsageError when parameters are out of range.
void validate(const BlockingRule& rule);

CandidateSet exact_match_block(const EntityCollection& a, const EntityCollection& b,
                               const std::string& field,
                               const std::string& rule_name = "exact_match",
                               unsigned threads = 1);

CandidateSet qgram_block(const EntityCollection& a, const EntityCollection& b,
                         const QGramRule& rule, const std::string& rule_name = "qgram",
                         unsigned threads = 1);

CandidateSet keyword_overlap_block(const EntityCollection& a, const EntityCollection& b,
                                   const KeywordOverlapRule& rule,
                                   const std::string& rule_name = "keyword_overlap",
                                   unsigned threads = 1);

CandidateSet apply_rule(const BlockingRule& rule, const EntityCollection& a,
                        const EntityCollection& b, unsigned threads = 1);

enum class ComposeMode { Union, Intersection };

using BlockingFunction =
    std::function<CandidateSet(const EntityCollection&, const EntityCollection&)>;

BlockingFunction compose_blockers(std::vector<BlockingRule> rules, ComposeMode mode,
                                  unsigned threads = 1);

// |gold ∩ pairs| / |gold|; throws UsageError on empty gold.
double estimate_recall(const CandidateSet& pairs,
                       const std::set<std::pair<std::string, std::string>>& gold);

struct BlockingConfig {
  ComposeMode mode = ComposeMode::Intersection;
  std::vector<BlockingRule> rules;
};

// {"mode": "union"|"intersection", "rules": [{"name", "kind", ...}]}.
BlockingConfig blocking_config_from_json(const Json& j);

// The job-job default: exact title match refined by content q-grams.
BlockingConfig default_jobjob_blocking();

}  // namespace gem
