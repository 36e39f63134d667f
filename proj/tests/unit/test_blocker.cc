#include "doctest.h"

#include <cmath>
#include <map>

#include "gem/blocker.h"
#include "gem/dataset.h"
#include "gem/error.h"
#include "gem/random.h"
#include "gem/text.h"

using namespace gem;

namespace {

EntityCollection titles(const std::string& prefix, const std::vector<std::string>& ts) {
  std::vector<EntityEntry> es;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EntityEntry e;
    e.id = prefix + std::to_string(i);
    e.attributes.push_back({"title", ts[i]});
    es.push_back(e);
  }
  return make_collection(prefix, es);
}

std::set<std::pair<std::string, std::string>> keys(const CandidateSet& s) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& p : s.pairs()) out.insert({p.left_id, p.right_id});
  return out;
}

std::set<std::pair<std::string, std::string>> qgram_oracle(const EntityCollection& a, const EntityCollection& b,
                                                           const QGramRule& r) {
  auto grams_of = [&](const EntityEntry& e) { return char_qgrams(normalize_text(resolve_text(e, r.field).value_or("")), r.q); };
  std::map<std::string, int> df;
  for (const auto& e : b.entries) {
    for (const auto& g : grams_of(e)) ++df[g];
  }
  const double limit = std::max(1.0, std::floor(r.max_gram_freq * static_cast<double>(b.entries.size())));
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& x : a.entries) {
    const auto gx = grams_of(x);
    for (const auto& y : b.entries) {
      const auto gy = grams_of(y);
      int shared = 0;
      for (const auto& g : gx) {
        if (std::binary_search(gy.begin(), gy.end(), g) && df[g] <= limit) ++shared;
      }
      if (shared >= r.min_shared_grams && sorted_jaccard(gx, gy) >= r.jaccard_refine) out.insert({x.id, y.id});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("pair ids") {
  CHECK(make_pair_id("a", "b") == "a::b");
  CHECK(split_pair_id("a::b::c") == std::pair<std::string, std::string>{"a", "b::c"});
  CHECK_THROWS_AS(split_pair_id("ab"), DataError);
}

TEST_CASE("exact match examples") {
  const auto a = titles("a", {"Nurse"});
  CHECK(exact_match_block(a, titles("b", {"nurse", "chef"}), "title").size() == 1);
  CHECK(exact_match_block(a, titles("b", {"chef", "cook"}), "title").empty());
  const auto three = titles("a", {"nurse", "nurse", "nurse"});
  CHECK(exact_match_block(three, titles("b", {"nurse", "nurse"}), "title").size() == 6);
}

TEST_CASE("exact match skips missing fields and rejects non-text") {
  auto a = titles("a", {"nurse"});
  EntityEntry extra;
  extra.id = "a9";
  extra.attributes.push_back({"other", "nurse"});
  a.entries.push_back(extra);
  CHECK(exact_match_block(a, titles("b", {"nurse"}), "title").size() == 1);

  EntityEntry num;
  num.id = "n";
  num.attributes.push_back({"title", 3.0});
  const auto bad = make_collection("n", {num});
  CHECK_THROWS_AS(exact_match_block(bad, titles("b", {"nurse"}), "title"), DataError);
}

TEST_CASE("qgram examples") {
  QGramRule r;
  r.field = "title";
  r.max_gram_freq = 1.0;
  r.jaccard_refine = 0.5;
  CHECK(qgram_block(titles("a", {"registered nurse"}), titles("b", {"registered nurse"}), r).size() == 1);

  // nurse: nur urs rse; nursing: nur urs rsi sin ing. Two shared grams.
  r.jaccard_refine = 0.0;
  r.min_shared_grams = 2;
  CHECK(qgram_block(titles("a", {"nurse"}), titles("b", {"nursing"}), r).size() == 1);
  r.min_shared_grams = 3;
  CHECK(qgram_block(titles("a", {"nurse"}), titles("b", {"nursing"}), r).empty());
}

TEST_CASE("qgram frequency pruning") {
  QGramRule r;
  r.field = "title";
  r.min_shared_grams = 1;
  r.jaccard_refine = 0.0;
  r.max_gram_freq = 0.5;
  // "xyz" is in every right entry, so it is never indexed.
  const auto b = titles("b", {"xyz a", "xyz b", "xyz c", "xyz d"});
  CHECK(qgram_block(titles("a", {"xyz"}), b, r).empty());
}

TEST_CASE("qgram agrees with a brute-force oracle and is monotone") {
  Rng rng(5);
  const std::vector<std::string> words = {"nurse", "nursing", "cook", "chef", "driver", "drive", "night", "shift"};
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<std::string> at, bt;
    for (int i = 0; i < 6; ++i) at.push_back(rng.pick(words) + " " + rng.pick(words));
    for (int i = 0; i < 8; ++i) bt.push_back(rng.pick(words) + " " + rng.pick(words));
    const auto a = titles("a", at), b = titles("b", bt);
    QGramRule r;
    r.field = "title";
    r.q = 2 + static_cast<int>(rng.below(3));
    r.min_shared_grams = 1 + static_cast<int>(rng.below(3));
    r.jaccard_refine = rng.uniform(0.0, 0.6);
    r.max_gram_freq = rng.uniform(0.1, 1.0);
    const auto got = qgram_block(a, b, r, "q", 1 + static_cast<unsigned>(rng.below(3)));
    CHECK(keys(got) == qgram_oracle(a, b, r));

    QGramRule loose = r;
    loose.min_shared_grams = 1;
    loose.jaccard_refine = 0.0;
    const auto wide = keys(qgram_block(a, b, loose));
    for (const auto& k : keys(got)) CHECK(wide.count(k) == 1);
  }
}

TEST_CASE("keyword overlap examples") {
  KeywordOverlapRule r;
  r.left_path = "title";
  r.right_path = "title";
  r.min_shared = 2;
  r.stopwords = english_stopwords();
  CHECK(keyword_overlap_block(titles("a", {"senior nurse practitioner"}), titles("b", {"nurse practitioner"}), r).size() == 1);
  r.min_shared = 1;
  CHECK(keyword_overlap_block(titles("a", {"nurse"}), titles("b", {"chef"}), r).empty());
  r.stopwords = {"the"};
  CHECK(keyword_overlap_block(titles("a", {"the manager"}), titles("b", {"the chef"}), r).empty());
}

TEST_CASE("composition") {
  const auto a = titles("a", {"nurse", "chef"});
  const auto b = titles("b", {"nurse", "chef", "cook"});
  BlockingRule exact{"exact", ExactMatchRule{"title"}};
  KeywordOverlapRule kw;
  kw.left_path = "title";
  kw.right_path = "title";
  kw.stopwords = {};
  BlockingRule never{"never", KeywordOverlapRule{"title", "title", 5, {}}};
  QGramRule q;
  q.field = "title";
  q.max_gram_freq = 1.0;
  q.min_shared_grams = 1;
  q.jaccard_refine = 0.0;
  BlockingRule qr{"qgram", q};

  const auto inter = compose_blockers({exact, qr}, ComposeMode::Intersection)(a, b);
  CHECK(keys(inter) == keys(exact_match_block(a, b, "title")));
  for (const auto& p : inter.pairs()) CHECK(p.provenance == std::vector<std::string>{"exact", "qgram"});

  CHECK(compose_blockers({exact, never}, ComposeMode::Intersection)(a, b).empty());

  const auto x = titles("a", {"nurse"});
  const auto y = titles("b", {"nurse", "nursing"});
  BlockingRule only_nursing{"prefix", QGramRule{"title", 3, 4, 0.0, 1.0}};
  const auto u = compose_blockers({exact, only_nursing}, ComposeMode::Union)(x, y);
  CHECK(u.size() == exact_match_block(x, y, "title").size() + qgram_block(x, y, QGramRule{"title", 3, 4, 0.0, 1.0}).size());
}

TEST_CASE("merging provenance keeps pairs unique") {
  CandidateSet s;
  s.add("a", "b", {"r2"});
  s.add("a", "b", {"r1"});
  s.add("a", "c", {"r1"});
  REQUIRE(s.size() == 2);
  CHECK(s.pairs()[0].provenance == std::vector<std::string>{"r1", "r2"});
  CHECK(s.pairs()[0].pair_id == "a::b");
  CHECK(CandidatePair::from_json(s.pairs()[1].to_json()).pair_id == "a::c");
}

TEST_CASE("recall estimate") {
  CandidateSet s;
  s.add("a", "x", {"r"});
  s.add("b", "y", {"r"});
  s.add("c", "z", {"r"});
  CHECK(estimate_recall(s, {{"a", "x"}, {"b", "y"}}) == 1.0);
  CHECK(estimate_recall(s, {{"q", "x"}}) == 0.0);
  CHECK(estimate_recall(s, {{"a", "x"}, {"b", "y"}, {"c", "z"}, {"d", "w"}}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(estimate_recall(s, {}), UsageError);
}

TEST_CASE("rule validation and config parsing") {
  CHECK_THROWS_AS(validate({"q", QGramRule{"t", 1}}), UsageError);
  CHECK_THROWS_AS(validate({"k", KeywordOverlapRule{"t", "t", 0, {}}}), UsageError);
  QGramRule bad;
  bad.field = "t";
  bad.jaccard_refine = 1.5;
  CHECK_THROWS_AS(validate({"q", bad}), UsageError);

  const auto cfg = blocking_config_from_json(Json::parse(
      R"({"mode": "union", "rules": [{"name": "t", "kind": "exact", "field": "title"},
          {"name": "k", "kind": "keyword", "left_path": "title", "right_path": "position", "min_shared": 2}]})"));
  CHECK(cfg.mode == ComposeMode::Union);
  REQUIRE(cfg.rules.size() == 2);
  CHECK(std::get<KeywordOverlapRule>(cfg.rules[1].kind).min_shared == 2);
  CHECK_THROWS_AS(blocking_config_from_json(Json::parse(R"({"rules": []})")), UsageError);
  CHECK_THROWS_AS(blocking_config_from_json(Json::parse(R"({"rules": [{"name": "x", "kind": "lsh"}]})")), UsageError);
}

TEST_CASE("exact title blocking keeps every synthetic job-job match") {
  const auto data = generate_synthetic(SyntheticTask::JobJob, 120, 0.1, 3);
  std::set<std::pair<std::string, std::string>> gold;
  for (const auto& r : data.gold) {
    if (r.is_match()) gold.insert(split_pair_id(r.pair_id));
  }
  CHECK(estimate_recall(exact_match_block(data.left, data.right, "title"), gold) == 1.0);
}
