#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "gem/entity.h"

namespace gem {

// Label assigned to sentences that match no topic; such text is dropped.
inline constexpr std::string_view kNoneTopic = "none";

struct Topic {
  std::string name;                              // lowercase, e.g. "benefit"
  std::vector<std::vector<std::string>> phrases;  // normalized word sequences
};

// Topics in priority order. The first topic whose keyword set matches a
// sentence wins.
class KeywordRuleSet {
 public:
  KeywordRuleSet() = default;
  // Throws UsageError on a topic named "none", duplicate topics or empty
  // keyword lists.
  explicit KeywordRuleSet(std::vector<Topic> topics);

  // Directory holding topics.json ({"topics": [...]}, priority order) and one
  // <topic>.txt per topic: a keyword or phrase per line, '#' comments.
  static KeywordRuleSet load_dir(const std::string& dir);
  static KeywordRuleSet from_keywords(
      const std::vector<std::pair<std::string, std::vector<std::string>>>& topics);

  const std::vector<Topic>& topics() const { return topics_; }
  std::vector<std::string> topic_names() const;
  bool has_topic(std::string_view name) const;

  Json to_json() const;
  static KeywordRuleSet from_json(const Json& j);

 private:
  std::vector<Topic> topics_;
};

std::vector<std::string> split_sentences(std::string_view doc);

std::string classify_sentence(std::string_view sentence, const KeywordRuleSet& rules);

class SentenceClassifier {
 public:
  virtual ~SentenceClassifier() = default;
  // Returns a topic name or kNoneTopic.
  virtual std::string classify(std::string_view sentence) const = 0;
  // Topic attributes are emitted in this order.
  virtual std::vector<std::string> topic_order() const = 0;
};

class RuleBasedClassifier final : public SentenceClassifier {
 public:
  explicit RuleBasedClassifier(KeywordRuleSet rules) : rules_(std::move(rules)) {}
  std::string classify(std::string_view sentence) const override;
  std::vector<std::string> topic_order() const override { return rules_.topic_names(); }
  const KeywordRuleSet& rules() const { return rules_; }

 private:
  KeywordRuleSet rules_;
};

// Out-of-process scorer. One JSON object per request, {"sentence": "..."},
// answered by {"label": "<topic>|none"}. Addresses are "http://host:port"
// (POST /classify) or "stdio:<command line>" (newline-delimited JSON over
// the child's stdin/stdout). Calls are serialized per connection.
class ExternalClassifier final : public SentenceClassifier {
 public:
  ExternalClassifier(std::string address, std::vector<std::string> topics);
  ~ExternalClassifier() override;

  std::string classify(std::string_view sentence) const override;
  std::vector<std::string> topic_order() const override { return topics_; }

  struct Transport;

 private:
  std::vector<std::string> topics_;
  std::unique_ptr<Transport> transport_;
  mutable std::mutex mu_;
};

// Replaces text_field with one Text attribute per non-None topic holding
// that topic's sentences in document order. Topic attributes take the
// field's position when it is top-level (appended otherwise), in the
// classifier's topic order. Throws DataError when the path is missing or
// not text, or a topic name collides with an existing attribute.
EntityEntry restructure_document(const EntityEntry& e, const std::string& text_field,
                                 const SentenceClassifier& classifier);

// restructure_document over every entry that has text_field; others pass
// through unchanged.
EntityCollection inject_collection(const EntityCollection& c, const std::string& text_field,
                                   const SentenceClassifier& classifier);

}  // namespace gem
