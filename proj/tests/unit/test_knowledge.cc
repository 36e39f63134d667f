#include "doctest.h"

#include <algorithm>
#include <cctype>
#include <map>

#include "gem/error.h"
#include "gem/knowledge.h"
#include "gem/random.h"

using namespace gem;

namespace {

KeywordRuleSet job_rules() { return KeywordRuleSet::load_dir(GEM_CONFIG_DIR "/job_topics"); }

EntityEntry posting(const std::string& content) {
  EntityEntry e;
  e.id = "p";
  e.attributes.push_back({"title", "nurse"});
  e.attributes.push_back({"content", content});
  e.attributes.push_back({"city", "austin"});
  return e;
}

// Whole-word substring search on a padded lowercase copy. ASCII only.
std::string oracle_label(const std::string& sentence,
                         const std::vector<std::pair<std::string, std::vector<std::string>>>& topics) {
  std::string s = " ";
  for (char c : sentence) s += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : ' ';
  s += " ";
  std::string squeezed;
  for (char c : s) {
    if (c == ' ' && !squeezed.empty() && squeezed.back() == ' ') continue;
    squeezed += c;
  }
  for (const auto& [name, words] : topics) {
    for (const auto& w : words) {
      if (squeezed.find(" " + w + " ") != std::string::npos) return name;
    }
  }
  return "none";
}

}  // namespace

TEST_CASE("sentence splitting") {
  CHECK(split_sentences("We offer 401k. Apply now!") == std::vector<std::string>{"We offer 401k.", "Apply now!"});
  CHECK(split_sentences("- RN license\n- BLS certification") == std::vector<std::string>{"RN license", "BLS certification"});
  CHECK(split_sentences("").empty());
  CHECK(split_sentences("\n\n  \n").empty());
  CHECK(split_sentences("* one\n• two\nThree is here. four stays.") ==
        std::vector<std::string>{"one", "two", "Three is here. four stays."});
  CHECK(split_sentences("Pay is 3.5 per unit. Really?") == std::vector<std::string>{"Pay is 3.5 per unit.", "Really?"});
  CHECK(split_sentences("Apply now. 401k match offered.") == std::vector<std::string>{"Apply now.", "401k match offered."});
}

TEST_CASE("bullet lines are always their own sentence") {
  Rng rng(2);
  const std::vector<std::string> items = {"RN license", "BLS card", "two years of work", "night shifts", "Spanish"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> expect;
    std::string doc;
    const auto n = 1 + rng.below(6);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& item = rng.pick(items);
      doc += std::string(rng.bernoulli(0.5) ? "- " : "* ") + item + "\n";
      expect.push_back(item);
      if (rng.bernoulli(0.3)) doc += "\n";
    }
    CHECK(split_sentences(doc) == expect);
  }
}

TEST_CASE("classification") {
  const auto rules = job_rules();
  CHECK(classify_sentence("Health insurance and competitive salary.", rules) == "benefit");
  CHECK(classify_sentence("Please email your resume.", KeywordRuleSet::from_keywords({{"benefit", {"insurance", "salary", "wage"}}})) ==
        "none");
  CHECK(classify_sentence("The hourly WAGE is fair.", rules) == "benefit");
  // Whole words only.
  CHECK(classify_sentence("Wages are fair.", KeywordRuleSet::from_keywords({{"benefit", {"wage"}}})) == "none");
  // Phrases must appear contiguously.
  const auto pto = KeywordRuleSet::from_keywords({{"benefit", {"paid time off"}}});
  CHECK(classify_sentence("Generous paid time off.", pto) == "benefit");
  CHECK(classify_sentence("Time is paid off.", pto) == "none");
}

TEST_CASE("priority order breaks ties") {
  const std::string s = "Duties include explaining insurance claims.";
  const auto bd = KeywordRuleSet::from_keywords({{"benefit", {"insurance"}}, {"duty", {"duties"}}});
  const auto db = KeywordRuleSet::from_keywords({{"duty", {"duties"}}, {"benefit", {"insurance"}}});
  CHECK(classify_sentence(s, bd) == "benefit");
  CHECK(classify_sentence(s, db) == "duty");
}

TEST_CASE("rule sets are validated") {
  CHECK_THROWS_AS(KeywordRuleSet::from_keywords({{"none", {"x"}}}), UsageError);
  CHECK_THROWS_AS(KeywordRuleSet::from_keywords({{"a", {"x"}}, {"a", {"y"}}}), UsageError);
  CHECK_THROWS_AS(KeywordRuleSet::from_keywords({{"a", {}}}), UsageError);
  CHECK_THROWS_AS(KeywordRuleSet::from_keywords({{"a", {"--"}}}), UsageError);
  CHECK_THROWS_AS(KeywordRuleSet::load_dir("/nonexistent/topics"), UsageError);
  const auto rules = job_rules();
  CHECK(rules.topic_names() == std::vector<std::string>{"qualification", "benefit", "duty", "time", "location", "company"});
  CHECK(KeywordRuleSet::from_json(rules.to_json()).to_json() == rules.to_json());
}

TEST_CASE("restructure examples") {
  const RuleBasedClassifier clf(job_rules());
  SUBCASE("benefit kept, none dropped") {
    const auto out = restructure_document(posting("We offer health insurance. Send us a note."), "content", clf);
    REQUIRE(out.attributes.size() == 3);
    CHECK(out.attributes[0].name == "title");
    CHECK(out.attributes[1].name == "benefit");
    CHECK(out.attributes[1].value.as_text() == "We offer health insurance.");
    CHECK(out.attributes[2].name == "city");
    CHECK(out.find("content") == nullptr);
  }
  SUBCASE("nothing classifiable") {
    const auto out = restructure_document(posting("Send us a note. Thanks!"), "content", clf);
    REQUIRE(out.attributes.size() == 2);
    CHECK(out.find("content") == nullptr);
  }
  SUBCASE("interleaved topics keep relative order") {
    const auto rules = KeywordRuleSet::from_keywords({{"qualification", {"degree", "license"}}, {"duty", {"manage"}}});
    const RuleBasedClassifier c2(rules);
    const auto out = restructure_document(
        posting("A degree is needed. You manage staff. A license helps. You manage budgets."), "content", c2);
    CHECK(out.find("qualification")->as_text() == "A degree is needed. A license helps.");
    CHECK(out.find("duty")->as_text() == "You manage staff. You manage budgets.");
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(restructure_document(posting("x"), "body", clf), DataError);
    CHECK_THROWS_AS(restructure_document(posting("x"), "title.sub", clf), DataError);
    auto clash = posting("Great salary.");
    clash.attributes.push_back({"benefit", "already here"});
    CHECK_THROWS_AS(restructure_document(clash, "content", clf), DataError);
  }
}

TEST_CASE("nested text fields") {
  EntityEntry e;
  e.id = "n";
  e.attributes.push_back({"job", AttributeValue::nested({{"body", "Strong salary. Ask us."}, {"level", "2"}})});
  e.attributes.push_back({"city", "austin"});
  const auto out = restructure_document(e, "job.body", RuleBasedClassifier(job_rules()));
  REQUIRE(out.attributes.size() == 3);
  CHECK(out.attributes[0].value.as_nested().size() == 1);
  CHECK(out.attributes[2].name == "benefit");
}

TEST_CASE("restructuring partitions sentences by an independent keyword oracle") {
  const std::vector<std::pair<std::string, std::vector<std::string>>> topics = {
      {"qualification", {"degree", "license", "years of experience"}},
      {"benefit", {"insurance", "salary", "wage"}},
      {"duty", {"manage", "maintain"}},
      {"location", {"austin", "on site"}}};
  const RuleBasedClassifier clf(KeywordRuleSet::from_keywords(topics));
  const std::vector<std::string> pool = {
      "A degree in nursing is required.", "We pay a fair wage.", "You will manage the ward.",
      "The office is in Austin.", "Send us a note.", "Work on site with a license.",
      "Insurance for you and your family.", "Maintain clean records.", "Three years of experience preferred.",
      "Apply today!", "Is the salary fair?", "We are a friendly team."};
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> sentences;
    const auto n = rng.below(9);
    for (std::size_t i = 0; i < n; ++i) sentences.push_back(rng.pick(pool));
    std::string doc;
    for (const auto& s : sentences) doc += (doc.empty() ? "" : (rng.bernoulli(0.2) ? "\n" : " ")) + s;

    const auto out = restructure_document(posting(doc), "content", clf);
    std::map<std::string, std::vector<std::string>> expect;
    for (const auto& s : sentences) {
      const auto label = oracle_label(s, topics);
      if (label != "none") expect[label].push_back(s);
    }
    std::size_t topic_attrs = 0;
    for (const auto& [name, words] : topics) {
      const auto* v = out.find(name);
      if (!expect.count(name)) {
        CHECK(v == nullptr);
        continue;
      }
      ++topic_attrs;
      REQUIRE(v != nullptr);
      std::string joined;
      for (const auto& s : expect[name]) joined += (joined.empty() ? "" : " ") + s;
      CHECK(v->as_text() == joined);
      // No fabricated characters.
      for (char c : v->as_text()) CHECK(doc.find(c) != std::string::npos);
    }
    CHECK(out.attributes.size() == 2 + topic_attrs);

    // Re-running over the restructured output changes nothing.
    const auto c = make_collection("c", {out});
    CHECK(inject_collection(c, "content", clf).entries == c.entries);
  }
}

TEST_CASE("external classifier over stdio") {
  const ExternalClassifier clf(
      "stdio:while read -r line; do case \"$line\" in *salary*) echo '{\"label\": \"Benefit\"}';; "
      "*boom*) echo 'not json';; *odd*) echo '{\"label\": \"weather\"}';; *) echo '{\"label\": \"none\"}';; esac; done",
      {"benefit", "duty"});
  CHECK(clf.classify("A good salary.") == "benefit");
  CHECK(clf.classify("Hello.") == "none");
  CHECK_THROWS_AS(clf.classify("odd one"), DataError);
  CHECK_THROWS_AS(clf.classify("boom"), DataError);
  const auto out = restructure_document(posting("A good salary. Hello there."), "content", clf);
  CHECK(out.find("benefit")->as_text() == "A good salary.");
  CHECK_THROWS_AS(ExternalClassifier("ftp://x", {"a"}), UsageError);
}

TEST_CASE("external classifier that exits") {
  const ExternalClassifier clf("stdio:true", {"benefit"});
  CHECK_THROWS_AS(clf.classify("anything"), DataError);
}
