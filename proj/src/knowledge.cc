#include "gem/knowledge.h"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "httplib.h"
#include "gem/error.h"
#include "gem/io.h"
#include "gem/text.h"

namespace gem {

KeywordRuleSet::KeywordRuleSet(std::vector<Topic> topics) : topics_(std::move(topics)) {
  std::set<std::string> seen;
  for (const auto& t : topics_) {
    if (t.name.empty()) throw UsageError("topic name must be nonempty");
    if (t.name == kNoneTopic) throw UsageError("'none' is the fallback topic and takes no keywords");
    if (!seen.insert(t.name).second) throw UsageError("duplicate topic '" + t.name + "'");
    if (t.phrases.empty()) throw UsageError("topic '" + t.name + "' has no keywords");
    for (const auto& p : t.phrases) {
      if (p.empty()) throw UsageError("topic '" + t.name + "' has an empty keyword");
    }
  }
}

KeywordRuleSet KeywordRuleSet::from_keywords(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& topics) {
  std::vector<Topic> out;
  for (const auto& [name, words] : topics) {
    Topic t{normalize_text(name), {}};
    for (const auto& w : words) {
      auto tokens = alnum_tokens(normalize_text(w));
      if (tokens.empty()) throw UsageError("keyword '" + w + "' has no word characters");
      t.phrases.push_back(std::move(tokens));
    }
    out.push_back(std::move(t));
  }
  return KeywordRuleSet(std::move(out));
}

KeywordRuleSet KeywordRuleSet::load_dir(const std::string& dir) {
  const std::filesystem::path root(dir);
  Json order;
  try {
    order = Json::parse(read_text_file((root / "topics.json").string()));
  } catch (const Json::exception& ex) {
    throw UsageError("bad topics.json in '" + dir + "': " + ex.what());
  } catch (const DataError& ex) {
    throw UsageError(ex.what());
  }
  if (!order.contains("topics") || !order["topics"].is_array()) {
    throw UsageError("topics.json must hold a \"topics\" array");
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> topics;
  for (const auto& name : order["topics"]) {
    const auto topic = name.get<std::string>();
    std::ifstream in(root / (topic + ".txt"));
    if (!in) throw UsageError("missing keyword file for topic '" + topic + "'");
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      const auto w = trim(line);
      if (w.empty() || w[0] == '#') continue;
      words.push_back(w);
    }
    topics.emplace_back(topic, std::move(words));
  }
  return from_keywords(topics);
}

std::vector<std::string> KeywordRuleSet::topic_names() const {
  std::vector<std::string> names;
  for (const auto& t : topics_) names.push_back(t.name);
  return names;
}

bool KeywordRuleSet::has_topic(std::string_view name) const {
  for (const auto& t : topics_) {
    if (t.name == name) return true;
  }
  return false;
}

Json KeywordRuleSet::to_json() const {
  Json j = Json::array();
  for (const auto& t : topics_) {
    Json phrases = Json::array();
    for (const auto& p : t.phrases) phrases.push_back(join(p, " "));
    j.push_back({{"topic", t.name}, {"keywords", phrases}});
  }
  return j;
}

KeywordRuleSet KeywordRuleSet::from_json(const Json& j) {
  std::vector<std::pair<std::string, std::vector<std::string>>> topics;
  for (const auto& t : j) {
    topics.emplace_back(t.at("topic").get<std::string>(),
                        t.at("keywords").get<std::vector<std::string>>());
  }
  return from_keywords(topics);
}

namespace {

struct CodePoint {
  UChar32 c;
  std::size_t begin;
  std::size_t end;
};

std::vector<CodePoint> decode(std::string_view s) {
  std::vector<CodePoint> out;
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const auto length = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < length) {
    const int32_t b = i;
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    out.push_back({c < 0 ? 0xFFFD : c, static_cast<std::size_t>(b), static_cast<std::size_t>(i)});
  }
  return out;
}

bool is_terminal(UChar32 c) { return c == '.' || c == '!' || c == '?'; }

// Splits one non-bullet line at terminal punctuation followed by either the
// end of the line or whitespace and an uppercase letter.
void split_line(std::string_view line, std::vector<std::string>& out) {
  const auto cps = decode(line);
  std::size_t start = 0;
  std::size_t k = 0;
  while (k < cps.size()) {
    if (!is_terminal(cps[k].c)) {
      ++k;
      continue;
    }
    std::size_t run_end = k;
    while (run_end < cps.size() && is_terminal(cps[run_end].c)) ++run_end;
    std::size_t next = run_end;
    while (next < cps.size() && u_isUWhiteSpace(cps[next].c)) ++next;
    const bool at_end = next == cps.size();
    // A sentence may also open with a number ("401k match offered.").
    const bool boundary = at_end || (next > run_end && (u_isupper(cps[next].c) || u_isdigit(cps[next].c)));
    if (boundary) {
      const std::size_t cut = run_end == cps.size() ? line.size() : cps[run_end].begin;
      auto s = trim(line.substr(start, cut - start));
      if (!s.empty()) out.push_back(std::move(s));
      start = cut;
    }
    k = run_end;
  }
  auto rest = trim(line.substr(start));
  if (!rest.empty()) out.push_back(std::move(rest));
}

// Returns the text after a bullet marker, or nullopt when the line is not a
// bullet item.
std::optional<std::string_view> bullet_body(std::string_view line) {
  if (line.starts_with("\xE2\x80\xA2")) return line.substr(3);  // U+2022
  if ((line.starts_with("- ") || line.starts_with("* ") || line.starts_with("-\t") ||
       line.starts_with("*\t"))) {
    return line.substr(2);
  }
  return std::nullopt;
}

bool contains_phrase(const std::vector<std::string>& tokens,
                     const std::vector<std::string>& phrase) {
  if (phrase.size() > tokens.size()) return false;
  for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < phrase.size() && ok; ++k) ok = tokens[i + k] == phrase[k];
    if (ok) return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view doc) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= doc.size()) {
    auto nl = doc.find('\n', pos);
    if (nl == std::string_view::npos) nl = doc.size();
    const std::string line = trim(doc.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    if (auto body = bullet_body(line)) {
      auto s = trim(*body);
      if (!s.empty()) out.push_back(std::move(s));
      continue;
    }
    split_line(line, out);
  }
  return out;
}

std::string classify_sentence(std::string_view sentence, const KeywordRuleSet& rules) {
  const auto tokens = alnum_tokens(normalize_text(sentence));
  for (const auto& topic : rules.topics()) {
    for (const auto& phrase : topic.phrases) {
      if (contains_phrase(tokens, phrase)) return topic.name;
    }
  }
  return std::string(kNoneTopic);
}

std::string RuleBasedClassifier::classify(std::string_view sentence) const {
  return classify_sentence(sentence, rules_);
}

// ---------------------------------------------------------------------------
// External classifier transports.

struct ExternalClassifier::Transport {
  virtual ~Transport() = default;
  virtual Json roundtrip(const Json& request) = 0;
};

namespace {

class HttpTransport final : public ExternalClassifier::Transport {
 public:
  explicit HttpTransport(const std::string& base) : client_(base) {
    client_.set_connection_timeout(5);
    client_.set_read_timeout(30);
  }
  Json roundtrip(const Json& request) override {
    auto res = client_.Post("/classify", request.dump(), "application/json");
    if (!res) throw DataError("external classifier unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) {
      throw DataError("external classifier returned HTTP " + std::to_string(res->status));
    }
    return Json::parse(res->body);
  }

 private:
  httplib::Client client_;
};

class StdioTransport final : public ExternalClassifier::Transport {
 public:
  explicit StdioTransport(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw Error("pipe() failed");
    pid_ = fork();
    if (pid_ < 0) throw Error("fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_ = fdopen(to_child[1], "w");
    out_ = fdopen(from_child[0], "r");
    if (in_ == nullptr || out_ == nullptr) throw Error("fdopen() failed");
  }

  ~StdioTransport() override {
    if (in_) fclose(in_);
    if (out_) fclose(out_);
    if (pid_ > 0) {
      int status = 0;
      if (waitpid(pid_, &status, WNOHANG) == 0) {
        kill(pid_, SIGTERM);
        waitpid(pid_, &status, 0);
      }
    }
  }

  Json roundtrip(const Json& request) override {
    const std::string line = request.dump() + "\n";
    if (fputs(line.c_str(), in_) < 0 || fflush(in_) != 0) {
      throw DataError("external classifier closed its input");
    }
    std::string reply;
    int ch;
    while ((ch = fgetc(out_)) != EOF && ch != '\n') reply.push_back(static_cast<char>(ch));
    if (reply.empty() && ch == EOF) throw DataError("external classifier exited");
    return Json::parse(reply);
  }

 private:
  pid_t pid_ = -1;
  FILE* in_ = nullptr;
  FILE* out_ = nullptr;
};

}  // namespace

ExternalClassifier::ExternalClassifier(std::string address, std::vector<std::string> topics)
    : topics_(std::move(topics)) {
  signal(SIGPIPE, SIG_IGN);
  if (address.starts_with("http://") || address.starts_with("https://")) {
    transport_ = std::make_unique<HttpTransport>(address);
  } else if (address.starts_with("stdio:")) {
    transport_ = std::make_unique<StdioTransport>(address.substr(6));
  } else {
    throw UsageError("external classifier address must be http://... or stdio:<command>");
  }
}

ExternalClassifier::~ExternalClassifier() = default;

std::string ExternalClassifier::classify(std::string_view sentence) const {
  std::lock_guard lock(mu_);
  Json reply;
  try {
    reply = transport_->roundtrip(Json{{"sentence", std::string(sentence)}});
  } catch (const Json::exception& ex) {
    throw DataError(std::string("external classifier sent malformed JSON: ") + ex.what());
  }
  if (!reply.contains("label") || !reply["label"].is_string()) {
    throw DataError("external classifier reply lacks a \"label\" string");
  }
  auto label = normalize_text(reply["label"].get<std::string>());
  if (label == kNoneTopic) return label;
  for (const auto& t : topics_) {
    if (t == label) return label;
  }
  throw DataError("external classifier returned unknown label '" + label + "'");
}

// ---------------------------------------------------------------------------

namespace {

bool remove_path(std::vector<Attribute>& attrs, std::string_view path, std::size_t* top_index) {
  const auto dot = path.find('.');
  const auto head = path.substr(0, dot);
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    if (attrs[i].name != head) continue;
    if (dot == std::string_view::npos) {
      attrs.erase(attrs.begin() + static_cast<std::ptrdiff_t>(i));
      if (top_index) *top_index = i;
      return true;
    }
    if (attrs[i].value.kind() != AttributeValue::Kind::Nested) return false;
    auto nested = attrs[i].value.as_nested();
    if (!remove_path(nested, path.substr(dot + 1), nullptr)) return false;
    attrs[i].value = AttributeValue::nested(std::move(nested));
    return true;
  }
  return false;
}

}  // namespace

EntityEntry restructure_document(const EntityEntry& e, const std::string& text_field,
                                 const SentenceClassifier& classifier) {
  const AttributeValue* field = e.find(text_field);
  if (field == nullptr) {
    throw DataError("entry '" + e.id + "' has no field '" + text_field + "'");
  }
  if (!field->is_text()) {
    throw DataError("field '" + text_field + "' of entry '" + e.id + "' is not text");
  }
  std::map<std::string, std::vector<std::string>> by_topic;
  for (auto& s : split_sentences(field->as_text())) {
    auto label = classifier.classify(s);
    if (label == kNoneTopic) continue;
    by_topic[label].push_back(std::move(s));
  }

  EntityEntry out = e;
  std::size_t insert_at = 0;
  const bool top_level = text_field.find('.') == std::string::npos;
  remove_path(out.attributes, text_field, &insert_at);
  if (!top_level) insert_at = out.attributes.size();

  std::vector<Attribute> topic_attrs;
  for (const auto& topic : classifier.topic_order()) {
    auto it = by_topic.find(topic);
    if (it == by_topic.end()) continue;
    for (const auto& a : out.attributes) {
      if (a.name == topic) {
        throw DataError("entry '" + e.id + "' already has an attribute named '" + topic + "'");
      }
    }
    topic_attrs.push_back({topic, AttributeValue(join(it->second, " "))});
  }
  out.attributes.insert(out.attributes.begin() + static_cast<std::ptrdiff_t>(insert_at),
                        topic_attrs.begin(), topic_attrs.end());
  return out;
}

EntityCollection inject_collection(const EntityCollection& c, const std::string& text_field,
                                   const SentenceClassifier& classifier) {
  std::vector<EntityEntry> entries;
  entries.reserve(c.entries.size());
  for (const auto& e : c.entries) {
    if (e.find(text_field) == nullptr) entries.push_back(e);
    else entries.push_back(restructure_document(e, text_field, classifier));
  }
  return make_collection(c.name, std::move(entries));
}

}  // namespace gem
