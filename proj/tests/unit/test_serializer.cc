#include "doctest.h"

#include <algorithm>

#include "gem/error.h"
#include "gem/io.h"
#include "gem/random.h"
#include "gem/serializer.h"

using namespace gem;

namespace {

EntityEntry flat(std::vector<Attribute> attrs) {
  EntityEntry e;
  e.id = "e";
  e.attributes = std::move(attrs);
  return e;
}

EntityEntry resume() {
  return entry_from_json(Json::parse(read_text_file(std::string(GEM_FIXTURES) + "/resume_example.json")));
}

std::size_t count(const std::vector<int>& ids, int id) { return static_cast<std::size_t>(std::count(ids.begin(), ids.end(), id)); }

EntityEntry random_entry(Rng& rng, const std::vector<std::string>& names) {
  static const std::vector<std::string> words = {"nurse", "austin", "night", "pay", "care", "records", "team", "sql"};
  EntityEntry e;
  e.id = "r";
  auto shuffled = names;
  rng.shuffle(shuffled);
  const auto n = rng.below(shuffled.size() + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    const auto len = 1 + rng.below(12);
    for (std::size_t w = 0; w < len; ++w) text += (w ? " " : "") + rng.pick(words);
    e.attributes.push_back({shuffled[i], text});
  }
  return e;
}

}  // namespace

TEST_CASE("flat template") {
  const auto e = flat({{"title", "nurse"}, {"city", "austin"}});
  CHECK(serialize_entry(e, false) == "[COL] title [VAL] nurse [COL] city [VAL] austin");
  CHECK(serialize_entry(e, true) == "[TITLE] title [VAL] nurse [CITY] city [VAL] austin");
  CHECK(serialize_entry(flat({}), false).empty());
}

TEST_CASE("nested resume template") {
  CHECK(serialize_entry(resume(), false) ==
        "[COL] Name [VAL] Jordan Lee [COL] Contact [VAL] jordan.lee@example.com "
        "[COL] Education [VAL] [COL] School [VAL] Denver State University [COL] Date [VAL] 2012 - 2016 "
        "[COL] Experience [VAL] [COL] Company [VAL] Summit Bank [COL] Date [VAL] 2016 - 2020 "
        "[COL] Work [VAL] reviewing loan files training new staff "
        "[COL] Company [VAL] Acme Logistics [COL] Date [VAL] 2020 - 2023 [COL] Work [VAL] tracking inventory "
        "[COL] Skills [VAL] excel sql customer service");
  // Only the top level gets anchor tags.
  const auto anchored = serialize_entry(resume(), true);
  CHECK(anchored.find("[EDUCATION] Education [VAL] [COL] School") != std::string::npos);
  CHECK(anchored.find("[SCHOOL]") == std::string::npos);
}

TEST_CASE("anchor tags") {
  CHECK(anchor_tag("Work History") == "[WORK_HISTORY]");
  CHECK(anchor_tag("duty") == "[DUTY]");
  CHECK(is_reserved_tag("[SEP]"));
  CHECK_FALSE(is_reserved_tag("[DUTY]"));
  Vocabulary v;
  CHECK_THROWS_AS(v.add_anchor("sep"), UsageError);
  const int id = v.add_anchor("duty");
  CHECK(v.add_anchor("duty") == id);
  CHECK(v.token(id) == "[DUTY]");
}

TEST_CASE("tokenize") {
  Vocabulary v;
  const int title = v.add("title");
  const int nurse = v.add("nurse");
  CHECK(tokenize("[COL] title [VAL] nurse", v) == std::vector<int>{4, title, 5, nurse});
  CHECK(tokenize("surgeon", v) == std::vector<int>{Vocabulary::kUnk});
  CHECK(tokenize("Nurse,", v) == std::vector<int>{nurse, v.id_or_unk(",")});
  CHECK(word_tokens("(Hello), World!") == std::vector<std::string>{"(", "hello", ")", ",", "world", "!"});
}

TEST_CASE("vocabulary growth is append-only and deterministic") {
  const std::vector<EntityEntry> corpus = {resume(), flat({{"title", "nurse"}, {"city", "austin"}})};
  Vocabulary v1, v2;
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& e : corpus) grow_vocabulary(e, v1, true);
  }
  for (const auto& e : corpus) grow_vocabulary(e, v2, true);
  CHECK(v1.to_json() == v2.to_json());
  for (const auto& e : corpus) {
    const auto s = serialize_entry(e, true);
    std::vector<int> a = tokenize(s, v1), b = tokenize(s, v1, true);
    CHECK(a == b);
    CHECK(count(a, Vocabulary::kUnk) == 0);
  }
}

TEST_CASE("vocabulary save and load") {
  Vocabulary v;
  grow_vocabulary(resume(), v, true);
  const auto back = Vocabulary::from_json(v.to_json());
  CHECK(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(back.token(static_cast<int>(i)) == v.token(static_cast<int>(i)));

  Json broken = v.to_json();
  broken["[CLS]"] = 3;
  broken["[SEP]"] = 2;
  CHECK_THROWS_AS(Vocabulary::from_json(broken), DataError);
  Json gap = v.to_json();
  gap["title"] = 999;
  CHECK_THROWS_AS(Vocabulary::from_json(gap), DataError);
}

TEST_CASE("pair template with ample room") {
  const auto a = flat({{"title", "nurse"}});
  const auto b = flat({{"position", "nurse"}});
  Vocabulary v;
  grow_vocabulary(a, v, true);
  grow_vocabulary(b, v, true);
  const auto seq = serialize_pair(a, b, v, 64);
  CHECK(seq.token_ids.front() == Vocabulary::kCls);
  CHECK(count(seq.token_ids, Vocabulary::kSep) == 1);
  REQUIRE(seq.side_boundary.has_value());
  CHECK(seq.token_ids[*seq.side_boundary] == Vocabulary::kSep);
  CHECK(seq.anchors == std::vector<Anchor>{{"title", 1}, {"position", 6}});
  CHECK_THROWS_AS(serialize_pair(a, b, v, 7), UsageError);
}

TEST_CASE("anchors point at the topic tags on both sides") {
  const auto a = flat({{"duty", "manage the ward"}, {"benefit", "fair pay"}});
  const auto b = flat({{"benefit", "good pay"}, {"duty", "run records"}});
  Vocabulary v;
  grow_vocabulary(a, v, true);
  grow_vocabulary(b, v, true);
  const auto seq = serialize_pair(a, b, v, 128);
  std::vector<Anchor> scan;
  for (std::size_t i = 0; i < seq.token_ids.size(); ++i) {
    const auto& tok = v.token(seq.token_ids[i]);
    if (tok == "[DUTY]") scan.push_back({"duty", i});
    if (tok == "[BENEFIT]") scan.push_back({"benefit", i});
  }
  CHECK(seq.anchors == scan);
  CHECK(seq.anchors.size() == 4);
}

TEST_CASE("truncation keeps one CLS and one SEP and follows the budget rule") {
  const std::vector<std::string> names = {"title", "duty", "benefit", "city", "time"};
  Rng rng(17);
  Vocabulary v;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_entry(rng, names);
    const auto b = random_entry(rng, names);
    grow_vocabulary(a, v, true);
    grow_vocabulary(b, v, true);
    const bool anchors = rng.bernoulli(0.5);
    const std::size_t max_len = 8 + rng.below(60);
    const auto seq = serialize_pair(a, b, v, max_len, anchors);

    CHECK(seq.token_ids.size() <= max_len);
    CHECK(count(seq.token_ids, Vocabulary::kCls) == 1);
    CHECK(count(seq.token_ids, Vocabulary::kSep) == 1);
    CHECK(seq.token_ids[0] == Vocabulary::kCls);

    const auto la = tokenize(serialize_entry(a, anchors), v);
    const auto lb = tokenize(serialize_entry(b, anchors), v);
    const std::size_t total = max_len - 2, half = total / 2;
    std::size_t ka, kb;
    if (la.size() <= half) {
      ka = la.size();
      kb = std::min(lb.size(), total - ka);
    } else if (lb.size() <= half) {
      kb = lb.size();
      ka = std::min(la.size(), total - kb);
    } else {
      ka = kb = half;
    }
    REQUIRE(*seq.side_boundary == 1 + ka);
    CHECK(seq.token_ids.size() == 2 + ka + kb);
    CHECK(std::equal(la.begin(), la.begin() + static_cast<std::ptrdiff_t>(ka), seq.token_ids.begin() + 1));
    CHECK(std::equal(lb.begin(), lb.begin() + static_cast<std::ptrdiff_t>(kb), seq.token_ids.begin() + 2 + static_cast<std::ptrdiff_t>(ka)));

    // Anchors are exactly the surviving anchor tokens.
    std::size_t tags = 0;
    for (std::size_t i = 0; i < seq.token_ids.size(); ++i) {
      if (seq.token_ids[i] > Vocabulary::kVal && v.token(seq.token_ids[i]).front() == '[') ++tags;
    }
    CHECK(seq.anchors.size() == (anchors ? tags : 0));
    CHECK(std::is_sorted(seq.anchors.begin(), seq.anchors.end(),
                         [](const Anchor& x, const Anchor& y) { return x.position < y.position; }));
    for (const auto& an : seq.anchors) CHECK(v.token(seq.token_ids[an.position]) == anchor_tag(an.attribute));
  }
}

TEST_CASE("single entity sequences") {
  const auto e = flat({{"title", "nurse practitioner"}, {"city", "austin"}});
  Vocabulary v;
  grow_vocabulary(e, v, true);
  const auto seq = serialize_single(e, v, 5);
  CHECK(seq.token_ids.size() == 5);
  CHECK(seq.token_ids[0] == Vocabulary::kCls);
  CHECK_FALSE(seq.side_boundary.has_value());
  CHECK(seq.anchors == std::vector<Anchor>{{"title", 1}});
  CHECK(serialize_single(e, v, 64).anchors.size() == 2);
}
