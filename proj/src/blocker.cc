#include "gem/blocker.h"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <unordered_map>

#include "gem/error.h"
#include "gem/parallel.h"
#include "gem/text.h"

namespace gem {

std::string make_pair_id(std::string_view left_id, std::string_view right_id) {
  std::string id;
  id.reserve(left_id.size() + right_id.size() + 2);
  id.append(left_id).append("::").append(right_id);
  return id;
}

std::pair<std::string, std::string> split_pair_id(std::string_view pair_id) {
  const auto sep = pair_id.find("::");
  if (sep == std::string_view::npos) {
    throw DataError("pair id '" + std::string(pair_id) + "' lacks '::'");
  }
  return {std::string(pair_id.substr(0, sep)), std::string(pair_id.substr(sep + 2))};
}

Json CandidatePair::to_json() const {
  Json j;
  j["pair_id"] = pair_id;
  j["left_id"] = left_id;
  j["right_id"] = right_id;
  j["provenance"] = provenance;
  return j;
}

CandidatePair CandidatePair::from_json(const Json& j) {
  try {
    CandidatePair p;
    p.left_id = j.at("left_id").get<std::string>();
    p.right_id = j.at("right_id").get<std::string>();
    p.pair_id = j.contains("pair_id") ? j["pair_id"].get<std::string>()
                                      : make_pair_id(p.left_id, p.right_id);
    if (j.contains("provenance")) {
      p.provenance = j["provenance"].get<std::vector<std::string>>();
    }
    return p;
  } catch (const Json::exception& ex) {
    throw DataError(std::string("bad candidate pair: ") + ex.what());
  }
}

namespace {

std::vector<std::string> merged(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

}  // namespace

void CandidateSet::add(std::string left_id, std::string right_id,
                       std::vector<std::string> provenance) {
  CandidatePair p;
  p.pair_id = make_pair_id(left_id, right_id);
  p.left_id = std::move(left_id);
  p.right_id = std::move(right_id);
  p.provenance = std::move(provenance);
  add(std::move(p));
}

void CandidateSet::add(CandidatePair pair) {
  pair.provenance = merged(std::move(pair.provenance), {});
  if (pair.provenance.empty()) throw DataError("candidate pair without provenance");
  auto it = pairs_.find(pair);
  if (it == pairs_.end()) {
    pairs_.insert(std::move(pair));
    return;
  }
  auto node = pairs_.extract(it);
  node.value().provenance = merged(std::move(node.value().provenance), pair.provenance);
  pairs_.insert(std::move(node));
}

bool CandidateSet::contains(std::string_view left_id, std::string_view right_id) const {
  CandidatePair probe;
  probe.left_id = left_id;
  probe.right_id = right_id;
  return pairs_.contains(probe);
}

std::vector<CandidatePair> CandidateSet::pairs() const {
  return {pairs_.begin(), pairs_.end()};
}

CandidateSet CandidateSet::set_union(const CandidateSet& a, const CandidateSet& b) {
  CandidateSet out = a;
  for (const auto& p : b.pairs_) out.add(p);
  return out;
}

CandidateSet CandidateSet::set_intersection(const CandidateSet& a, const CandidateSet& b) {
  CandidateSet out;
  for (const auto& p : a.pairs_) {
    auto it = b.pairs_.find(p);
    if (it == b.pairs_.end()) continue;
    CandidatePair q = p;
    q.provenance = merged(q.provenance, it->provenance);
    out.pairs_.insert(std::move(q));
  }
  return out;
}

void validate(const BlockingRule& rule) {
  if (rule.name.empty()) throw UsageError("blocking rule needs a name");
  if (const auto* q = std::get_if<QGramRule>(&rule.kind)) {
    if (q->q < 2) throw UsageError("rule '" + rule.name + "': q must be >= 2");
    if (q->min_shared_grams < 1) {
      throw UsageError("rule '" + rule.name + "': min_shared_grams must be >= 1");
    }
    if (q->jaccard_refine < 0.0 || q->jaccard_refine > 1.0) {
      throw UsageError("rule '" + rule.name + "': jaccard_refine must be in [0, 1]");
    }
    if (!(q->max_gram_freq > 0.0 && q->max_gram_freq <= 1.0)) {
      throw UsageError("rule '" + rule.name + "': max_gram_freq must be in (0, 1]");
    }
  }
  if (const auto* k = std::get_if<KeywordOverlapRule>(&rule.kind)) {
    if (k->min_shared < 1) throw UsageError("rule '" + rule.name + "': min_shared must be >= 1");
  }
}

namespace {

// Normalized text of a field that must be Text when present.
std::optional<std::string> exact_key(const EntityEntry& e, const std::string& field) {
  const AttributeValue* v = e.find(field);
  if (v == nullptr) return std::nullopt;
  if (!v->is_text()) {
    throw DataError("field '" + field + "' of entry '" + e.id + "' is not text");
  }
  return normalize_text(v->as_text());
}

}  // namespace

CandidateSet exact_match_block(const EntityCollection& a, const EntityCollection& b,
                               const std::string& field, const std::string& rule_name,
                               unsigned threads) {
  std::unordered_map<std::string, std::vector<std::size_t>> index;
  for (std::size_t j = 0; j < b.entries.size(); ++j) {
    if (auto key = exact_key(b.entries[j], field)) index[*key].push_back(j);
  }
  std::vector<std::optional<std::string>> keys(a.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) keys[i] = exact_key(a.entries[i], field);

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> found(std::max(1u, threads));
  parallel_chunks(a.entries.size(), threads, [&](unsigned w, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (!keys[i]) continue;
      auto it = index.find(*keys[i]);
      if (it == index.end()) continue;
      for (const auto j : it->second) found[w].emplace_back(i, j);
    }
  });
  CandidateSet out;
  for (const auto& chunk : found) {
    for (const auto& [i, j] : chunk) out.add(a.entries[i].id, b.entries[j].id, {rule_name});
  }
  return out;
}

CandidateSet qgram_block(const EntityCollection& a, const EntityCollection& b,
                         const QGramRule& rule, const std::string& rule_name,
                         unsigned threads) {
  validate(BlockingRule{rule_name, rule});
  std::unordered_map<std::string, std::uint32_t> gram_ids;
  const auto to_ids = [&](const std::vector<std::string>& grams, bool grow) {
    std::vector<std::uint32_t> ids;
    ids.reserve(grams.size());
    for (const auto& g : grams) {
      auto it = gram_ids.find(g);
      if (it == gram_ids.end()) {
        if (!grow) continue;
        it = gram_ids.emplace(g, static_cast<std::uint32_t>(gram_ids.size())).first;
      }
      ids.push_back(it->second);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  const auto grams_of = [&](const EntityEntry& e) -> std::optional<std::vector<std::string>> {
    auto text = resolve_text(e, rule.field);
    if (!text) return std::nullopt;
    return char_qgrams(normalize_text(*text), rule.q);
  };

  std::vector<std::optional<std::vector<std::uint32_t>>> b_sets(b.entries.size());
  for (std::size_t j = 0; j < b.entries.size(); ++j) {
    if (auto g = grams_of(b.entries[j])) b_sets[j] = to_ids(*g, true);
  }
  const std::size_t vocab = gram_ids.size();
  std::vector<std::vector<std::uint32_t>> postings(vocab);
  for (std::size_t j = 0; j < b_sets.size(); ++j) {
    if (!b_sets[j]) continue;
    for (const auto g : *b_sets[j]) postings[g].push_back(static_cast<std::uint32_t>(j));
  }
  const auto cap = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(rule.max_gram_freq * static_cast<double>(b.entries.size()))));
  for (auto& p : postings) {
    if (p.size() > cap) p.clear();
  }

  // A-side gram sets hold the full set (for the Jaccard refinement); grams
  // unseen in B cannot contribute to counts and are kept only for size.
  struct Probe {
    std::vector<std::uint32_t> known;
    std::size_t unseen = 0;
  };
  std::vector<std::optional<Probe>> a_sets(a.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    auto g = grams_of(a.entries[i]);
    if (!g) continue;
    Probe p;
    p.known = to_ids(*g, false);
    p.unseen = g->size() - p.known.size();
    a_sets[i] = std::move(p);
  }

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> found(std::max(1u, threads));
  parallel_chunks(a.entries.size(), threads, [&](unsigned w, std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> counts(b.entries.size(), 0);
    std::vector<std::uint32_t> touched;
    for (std::size_t i = begin; i < end; ++i) {
      if (!a_sets[i]) continue;
      const auto& probe = *a_sets[i];
      touched.clear();
      for (const auto g : probe.known) {
        for (const auto j : postings[g]) {
          if (counts[j]++ == 0) touched.push_back(j);
        }
      }
      std::sort(touched.begin(), touched.end());
      for (const auto j : touched) {
        const bool enough = counts[j] >= static_cast<std::uint32_t>(rule.min_shared_grams);
        counts[j] = 0;
        if (!enough) continue;
        const auto& other = *b_sets[j];
        const std::size_t shared = [&] {
          std::size_t s = 0, x = 0, y = 0;
          while (x < probe.known.size() && y < other.size()) {
            if (probe.known[x] < other[y]) ++x;
            else if (other[y] < probe.known[x]) ++y;
            else { ++s; ++x; ++y; }
          }
          return s;
        }();
        const std::size_t total = probe.known.size() + probe.unseen + other.size() - shared;
        const double jaccard = total == 0 ? 1.0 : static_cast<double>(shared) / static_cast<double>(total);
        if (jaccard >= rule.jaccard_refine) found[w].emplace_back(i, j);
      }
    }
  });
  CandidateSet out;
  for (const auto& chunk : found) {
    for (const auto& [i, j] : chunk) out.add(a.entries[i].id, b.entries[j].id, {rule_name});
  }
  return out;
}

CandidateSet keyword_overlap_block(const EntityCollection& a, const EntityCollection& b,
                                   const KeywordOverlapRule& rule, const std::string& rule_name,
                                   unsigned threads) {
  validate(BlockingRule{rule_name, rule});
  std::unordered_map<std::string, std::vector<std::size_t>> index;
  for (std::size_t j = 0; j < b.entries.size(); ++j) {
    const auto text = resolve_text(b.entries[j], rule.right_path);
    if (!text) continue;
    for (const auto& t : keyword_set(*text, rule.stopwords)) index[t].push_back(j);
  }
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> found(std::max(1u, threads));
  parallel_chunks(a.entries.size(), threads, [&](unsigned w, std::size_t begin, std::size_t end) {
    std::unordered_map<std::size_t, int> counts;
    for (std::size_t i = begin; i < end; ++i) {
      const auto text = resolve_text(a.entries[i], rule.left_path);
      if (!text) continue;
      counts.clear();
      for (const auto& t : keyword_set(*text, rule.stopwords)) {
        auto it = index.find(t);
        if (it == index.end()) continue;
        for (const auto j : it->second) ++counts[j];
      }
      for (const auto& [j, c] : counts) {
        if (c >= rule.min_shared) found[w].emplace_back(i, j);
      }
    }
  });
  CandidateSet out;
  for (const auto& chunk : found) {
    for (const auto& [i, j] : chunk) out.add(a.entries[i].id, b.entries[j].id, {rule_name});
  }
  return out;
}

CandidateSet apply_rule(const BlockingRule& rule, const EntityCollection& a,
                        const EntityCollection& b, unsigned threads) {
  validate(rule);
  return std::visit(
      [&](const auto& kind) -> CandidateSet {
        using T = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<T, ExactMatchRule>) {
          return exact_match_block(a, b, kind.field, rule.name, threads);
        } else if constexpr (std::is_same_v<T, QGramRule>) {
          return qgram_block(a, b, kind, rule.name, threads);
        } else {
          return keyword_overlap_block(a, b, kind, rule.name, threads);
        }
      },
      rule.kind);
}

BlockingFunction compose_blockers(std::vector<BlockingRule> rules, ComposeMode mode,
                                  unsigned threads) {
  if (rules.empty()) throw UsageError("compose_blockers needs at least one rule");
  for (const auto& r : rules) validate(r);
  return [rules = std::move(rules), mode, threads](const EntityCollection& a,
                                                   const EntityCollection& b) {
    CandidateSet acc = apply_rule(rules.front(), a, b, threads);
    for (std::size_t i = 1; i < rules.size(); ++i) {
      if (mode == ComposeMode::Intersection && acc.empty()) break;
      const CandidateSet next = apply_rule(rules[i], a, b, threads);
      acc = mode == ComposeMode::Union ? CandidateSet::set_union(acc, next)
                                       : CandidateSet::set_intersection(acc, next);
    }
    return acc;
  };
}

double estimate_recall(const CandidateSet& pairs,
                       const std::set<std::pair<std::string, std::string>>& gold) {
  if (gold.empty()) throw UsageError("recall needs a nonempty gold set");
  std::size_t hit = 0;
  for (const auto& [l, r] : gold) {
    if (pairs.contains(l, r)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

BlockingConfig blocking_config_from_json(const Json& j) {
  try {
    BlockingConfig cfg;
    const auto mode = j.value("mode", std::string("intersection"));
    if (mode == "union") cfg.mode = ComposeMode::Union;
    else if (mode == "intersection") cfg.mode = ComposeMode::Intersection;
    else throw UsageError("unknown blocking mode '" + mode + "'");
    for (const auto& r : j.at("rules")) {
      BlockingRule rule;
      rule.name = r.at("name").get<std::string>();
      const auto kind = r.at("kind").get<std::string>();
      if (kind == "exact") {
        rule.kind = ExactMatchRule{r.at("field").get<std::string>()};
      } else if (kind == "qgram") {
        QGramRule q;
        q.field = r.at("field").get<std::string>();
        q.q = r.value("q", q.q);
        q.min_shared_grams = r.value("min_shared_grams", q.min_shared_grams);
        q.jaccard_refine = r.value("jaccard_refine", q.jaccard_refine);
        q.max_gram_freq = r.value("max_gram_freq", q.max_gram_freq);
        rule.kind = q;
      } else if (kind == "keyword") {
        KeywordOverlapRule k;
        k.left_path = r.at("left_path").get<std::string>();
        k.right_path = r.at("right_path").get<std::string>();
        k.min_shared = r.value("min_shared", k.min_shared);
        if (r.contains("stopwords")) {
          for (const auto& w : r["stopwords"]) k.stopwords.insert(normalize_text(w.get<std::string>()));
        } else {
          k.stopwords = english_stopwords();
        }
        rule.kind = k;
      } else {
        throw UsageError("unknown blocking rule kind '" + kind + "'");
      }
      validate(rule);
      cfg.rules.push_back(std::move(rule));
    }
    if (cfg.rules.empty()) throw UsageError("blocking config has no rules");
    return cfg;
  } catch (const Json::exception& ex) {
    throw UsageError(std::string("bad blocking config: ") + ex.what());
  }
}

BlockingConfig default_jobjob_blocking() {
  BlockingConfig cfg;
  cfg.mode = ComposeMode::Intersection;
  cfg.rules.push_back({"title_exact", ExactMatchRule{"title"}});
  QGramRule q;
  q.field = "content";
  // Templated postings share many grams; prune only the very common ones.
  q.jaccard_refine = 0.2;
  q.max_gram_freq = 0.5;
  cfg.rules.push_back({"content_qgram", q});
  return cfg;
}

}  // namespace gem
