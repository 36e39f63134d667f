#include "gem/dataset.h"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "gem/blocker.h"
#include "gem/error.h"
#include "gem/io.h"
#include "gem/random.h"
#include "gem/text.h"

namespace gem {

Json LabelRecord::to_json() const {
  return {{"pair_id", pair_id}, {"label", label}, {"annotator", annotator},
          {"timestamp", timestamp}, {"source", source}};
}

LabelRecord LabelRecord::from_json(const Json& j) {
  LabelRecord r;
  try {
    r.pair_id = j.at("pair_id").get<std::string>();
    r.label = j.at("label").get<std::string>();
    r.annotator = j.value("annotator", "");
    r.timestamp = j.value("timestamp", 0.0);
    r.source = j.value("source", "human");
  } catch (const Json::exception& e) {
    throw DataError(std::string("bad label record: ") + e.what());
  }
  if (r.pair_id.empty()) throw DataError("label record has an empty pair_id");
  if (r.label != kMatch && r.label != kNoMatch && r.label != kSkip) {
    throw DataError("unknown label '" + r.label + "'");
  }
  if (r.source != "human" && r.source != "sampler") throw DataError("unknown label source '" + r.source + "'");
  return r;
}

std::map<std::string, LabelRecord> current_labels(const std::vector<LabelRecord>& history) {
  std::map<std::string, LabelRecord> out;
  for (const auto& r : history) {
    if (r.label == kSkip) continue;
    auto it = out.find(r.pair_id);
    if (it == out.end()) out.emplace(r.pair_id, r);
    else if (r.timestamp >= it->second.timestamp) it->second = r;
  }
  return out;
}

LabelStore::LabelStore(std::string path) : path_(std::move(path)) {
  std::string contents;
  if (std::filesystem::exists(path_)) contents = read_text_file(path_);
  std::size_t keep = contents.size();
  const auto last_newline = contents.rfind('\n');
  const std::size_t tail_start = last_newline == std::string::npos ? 0 : last_newline + 1;
  bool tail_complete = false;
  if (tail_start < contents.size()) {
    // Keep a final record that merely lacks its newline; drop a torn one.
    const std::string tail = trim(std::string_view(contents).substr(tail_start));
    try {
      if (!tail.empty()) {
        LabelRecord::from_json(Json::parse(tail));
        tail_complete = true;
      }
    } catch (const std::exception&) {
    }
    if (!tail_complete) keep = tail_start;
  }

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < keep) {
    auto end = contents.find('\n', pos);
    if (end == std::string::npos || end > keep) end = keep;
    ++line_no;
    const std::string line = trim(std::string_view(contents).substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) continue;
    try {
      apply(LabelRecord::from_json(Json::parse(line)), history_.size());
    } catch (const Json::parse_error& e) {
      throw ParseError(line_no, e.what());
    } catch (const DataError& e) {
      throw ParseError(line_no, e.what());
    }
  }

  if (keep < contents.size()) {
    recovered_bytes_ = contents.size() - keep;
    if (::truncate(path_.c_str(), static_cast<off_t>(keep)) != 0) {
      throw DataError("cannot truncate '" + path_ + "': " + std::strerror(errno));
    }
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw DataError("cannot open '" + path_ + "': " + std::strerror(errno));
  if (tail_complete) {
    if (::write(fd_, "\n", 1) != 1) throw DataError("cannot write '" + path_ + "'");
  }
}

LabelStore::~LabelStore() {
  if (fd_ >= 0) ::close(fd_);
}

void LabelStore::apply(const LabelRecord& r, std::size_t arrival) {
  history_.push_back(r);
  if (r.label == kSkip) return;
  auto it = current_.find(r.pair_id);
  if (it == current_.end() || r.timestamp >= it->second.timestamp) {
    current_[r.pair_id] = r;
    current_arrival_[r.pair_id] = arrival;
  }
}

const LabelRecord& LabelStore::append(LabelRecord record) {
  if (record.pair_id.empty()) throw UsageError("label needs a pair_id");
  if (record.label != kMatch && record.label != kNoMatch && record.label != kSkip) {
    throw UsageError("label must be match, nomatch or skip");
  }
  if (record.source != "human" && record.source != "sampler") throw UsageError("source must be human or sampler");
  const std::string line = record.to_json().dump() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw DataError("cannot append to '" + path_ + "': " + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw DataError("fsync failed for '" + path_ + "'");
  apply(record, history_.size());
  return history_.back();
}

std::optional<LabelRecord> LabelStore::current(const std::string& pair_id) const {
  auto it = current_.find(pair_id);
  if (it == current_.end()) return std::nullopt;
  return it->second;
}

std::vector<LabelRecord> read_labels(const std::string& path) {
  std::vector<LabelRecord> out;
  const auto rows = read_json_lines(path);
  for (const auto& j : rows) out.push_back(LabelRecord::from_json(j));
  return out;
}

std::vector<LabelRecord> sample_negatives(const EntityCollection& a, const EntityCollection& b,
                                          const std::string& title_path, std::size_t k, std::uint64_t seed,
                                          const std::unordered_set<std::string>& stopwords) {
  if (k < 1) throw UsageError("k must be >= 1");
  if (a.entries.empty() || b.entries.empty()) throw DataError("cannot sample from an empty collection");
  const auto titles = [&](const EntityCollection& c) {
    std::vector<std::optional<std::unordered_set<std::string>>> out;
    for (const auto& e : c.entries) {
      auto t = resolve_text(e, title_path);
      if (t) out.emplace_back(keyword_set(*t, stopwords));
      else out.emplace_back(std::nullopt);
    }
    return out;
  };
  const auto ta = titles(a);
  const auto tb = titles(b);

  Rng rng(seed);
  std::set<std::pair<std::size_t, std::size_t>> chosen;
  std::vector<LabelRecord> out;
  const std::size_t cap = 100 * k;
  for (std::size_t attempt = 0; attempt < cap && out.size() < k; ++attempt) {
    const auto i = static_cast<std::size_t>(rng.below(a.entries.size()));
    const auto j = static_cast<std::size_t>(rng.below(b.entries.size()));
    if (!ta[i] || !tb[j] || chosen.count({i, j})) continue;
    const bool disjoint = std::none_of(ta[i]->begin(), ta[i]->end(), [&](const std::string& w) { return tb[j]->count(w) > 0; });
    if (!disjoint) continue;
    chosen.insert({i, j});
    LabelRecord r;
    r.pair_id = make_pair_id(a.entries[i].id, b.entries[j].id);
    r.label = kNoMatch;
    r.annotator = "sampler";
    r.timestamp = 0.0;
    r.source = "sampler";
    out.push_back(std::move(r));
  }
  if (out.size() < k) {
    throw DataError("found only " + std::to_string(out.size()) + " of " + std::to_string(k) +
                    " negative pairs within " + std::to_string(cap) + " attempts");
  }
  return out;
}

void SplitSpec::validate() const {
  double sum = 0.0;
  for (const double r : ratios) {
    if (!(r >= 0.0)) throw UsageError("split ratios must be nonnegative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw UsageError("split ratios must sum to 1");
}

DatasetSplits split_dataset(const std::vector<LabelRecord>& pairs, const SplitSpec& spec) {
  spec.validate();
  std::set<std::string> ids;
  for (const auto& p : pairs) {
    if (p.label == kSkip) throw UsageError("skip records cannot be split");
    if (!ids.insert(p.pair_id).second) throw DataError("pair '" + p.pair_id + "' appears twice");
  }
  std::vector<std::vector<LabelRecord>> groups(spec.balance ? 2 : 1);
  for (const auto& p : pairs) groups[spec.balance && !p.is_match() ? 1 : 0].push_back(p);
  if (spec.balance) {
    for (std::size_t g = 0; g < 2; ++g) {
      if (groups[g].size() < 5) {
        throw DataError(std::string("balanced split needs at least 5 ") + (g == 0 ? kMatch : kNoMatch) +
                        " pairs, found " + std::to_string(groups[g].size()));
      }
    }
  }

  Rng rng(spec.seed);
  DatasetSplits out;
  for (auto& group : groups) {
    rng.shuffle(group);
    const double n = static_cast<double>(group.size());
    const auto n_train = std::min(group.size(), static_cast<std::size_t>(std::llround(spec.ratios[0] * n)));
    const auto n_val = std::min(group.size() - n_train, static_cast<std::size_t>(std::llround(spec.ratios[1] * n)));
    out.train.insert(out.train.end(), group.begin(), group.begin() + static_cast<long>(n_train));
    out.val.insert(out.val.end(), group.begin() + static_cast<long>(n_train),
                   group.begin() + static_cast<long>(n_train + n_val));
    out.test.insert(out.test.end(), group.begin() + static_cast<long>(n_train + n_val), group.end());
  }
  rng.shuffle(out.train);
  rng.shuffle(out.val);
  rng.shuffle(out.test);
  return out;
}

Json splits_manifest(const DatasetSplits& splits, const SplitSpec& spec, const std::string& left_path,
                     const std::string& right_path) {
  Json records = Json::object();
  Json lists = Json::object();
  for (const auto& [name, part] : {std::pair{"train", &splits.train}, std::pair{"val", &splits.val},
                                   std::pair{"test", &splits.test}}) {
    Json ids = Json::array();
    for (const auto& r : *part) {
      ids.push_back(r.pair_id);
      const auto [l, rr] = split_pair_id(r.pair_id);
      records[r.pair_id] = {{"left_id", l}, {"right_id", rr}, {"label", r.label}};
    }
    lists[name] = ids;
  }
  return {{"seed", spec.seed}, {"ratios", spec.ratios}, {"balance", spec.balance}, {"left", left_path},
          {"right", right_path}, {"splits", lists}, {"records", records}};
}

std::vector<LabeledPair> resolve_pairs(const std::vector<LabelRecord>& records, const EntityCollection& left,
                                       const EntityCollection& right) {
  std::vector<LabeledPair> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto [l, rr] = split_pair_id(r.pair_id);
    const auto i = left.index_of(l);
    const auto j = right.index_of(rr);
    if (i == std::string::npos) throw DataError("left entry '" + l + "' not found for pair '" + r.pair_id + "'");
    if (j == std::string::npos) throw DataError("right entry '" + rr + "' not found for pair '" + r.pair_id + "'");
    out.push_back({r.pair_id, left.entries[i], right.entries[j], r.is_match()});
  }
  return out;
}

ManifestData load_manifest(const std::string& path) {
  Json m;
  try {
    m = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw DataError("manifest '" + path + "': " + e.what());
  }
  const auto base = std::filesystem::path(path).parent_path();
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return (fp.is_absolute() || base.empty() ? fp : base / fp).string();
  };
  ManifestData out;
  try {
    out.left_path = m.at("left").get<std::string>();
    out.right_path = m.at("right").get<std::string>();
    out.left = parse_collection(resolve(out.left_path), "left");
    out.right = parse_collection(resolve(out.right_path), "right");
    const auto& records = m.at("records");
    for (const auto& [name, part] : {std::pair{"train", &out.train}, std::pair{"val", &out.val},
                                     std::pair{"test", &out.test}}) {
      std::vector<LabelRecord> rs;
      for (const auto& id : m.at("splits").at(name)) {
        const auto& rec = records.at(id.get<std::string>());
        LabelRecord r;
        r.pair_id = id.get<std::string>();
        r.label = rec.at("label").get<std::string>();
        rs.push_back(r);
      }
      *part = resolve_pairs(rs, out.left, out.right);
    }
  } catch (const Json::exception& e) {
    throw DataError("manifest '" + path + "': " + e.what());
  }
  return out;
}

SyntheticTask synthetic_task_from_string(const std::string& s) {
  if (s == "jobjob") return SyntheticTask::JobJob;
  if (s == "jobresume") return SyntheticTask::JobResume;
  throw UsageError("unknown synthetic task '" + s + "' (expected jobjob or jobresume)");
}

namespace {

using Strings = std::vector<std::string>;

const Strings& degrees() {
  static const Strings d = {"associate", "bachelor", "master", "doctorate"};
  return d;
}

constexpr int kMaxYears = 4;

const Strings kTitles = {
    "registered nurse", "software engineer", "data analyst", "claims adjuster", "line cook",
    "forklift operator", "dental hygienist", "accountant", "electrician", "pharmacy technician",
    "graphic designer", "truck driver", "bank teller", "civil engineer", "physical therapist",
    "warehouse associate", "web developer", "payroll specialist", "medical assistant", "store manager",
    "security guard", "sales representative", "it technician", "hr coordinator", "quality inspector",
    "machinist", "paralegal", "barista", "plumber", "welder",
    "project manager", "research scientist", "teacher aide", "librarian", "chemist",
    "loan officer", "mechanical engineer", "cashier", "receptionist", "veterinary technician",
    "network administrator", "copywriter", "event planner", "logistics analyst", "dietitian",
    "carpenter", "radiology technician", "social worker", "translator", "auditor"};

const Strings kCities = {"austin", "denver", "boston"};
const Strings kTasks = {"processing customer claims", "keeping accurate records", "writing weekly reports"};
const Strings kIndustries = {"retail", "health care", "logistics"};
const Strings kCompanies = {"acme logistics", "blue river health", "summit bank"};
const Strings kMajors = {"biology", "economics", "computer science"};
const Strings kSkills = {"communication", "teamwork", "excel", "scheduling", "customer service", "python",
                         "budgeting", "inventory control", "forklift", "spanish", "writing", "sql"};

// Topic templates: base wordings, then noisy rewordings. "{d}" is a degree,
// "{y}" a year count, "{c}" a city, "{t}" a task, "{i}" an industry.
struct Templates {
  Strings base;
  Strings noisy;
};

const Templates kQualification = {
    {"applicants need a {d} degree and {y} years of experience.",
     "this job requires a {d} degree and {y} years of experience."},
    {"we are looking for someone with a {d} degree plus {y} years of experience in the field.",
     "a {d} degree along with {y} years of experience is expected for this job.",
     "the ideal candidate holds a {d} degree and brings {y} years of experience."}};
const Templates kBenefit = {
    {"we offer a competitive salary and health insurance.", "the job pays an hourly wage with dental insurance."},
    {"employees enjoy a yearly bonus and generous benefits.", "you will earn a solid salary plus a retirement plan.",
     "pay includes a fair wage and vision insurance."}};
const Templates kDuty = {
    {"you will be responsible for {t}.", "daily duties include {t}."},
    {"your main duties cover {t} every day.", "the role is responsible for {t} across the site.",
     "expect to handle {t} on a regular basis."}};
const Templates kTime = {
    {"this is a full time position on the day shift.", "the schedule runs monday to friday."},
    {"shifts are eight hours with some weekend work.", "a part time schedule is possible.",
     "you will work a rotating shift."}};
const Templates kLocation = {
    {"the office is located in {c}.", "this role is based downtown in {c}."},
    {"our location is close to central {c}.", "the job site is located near {c}.",
     "this position sits in our {c} office."}};
const Templates kCompany = {
    {"our company serves clients in the {i} industry.", "we are a leading firm in {i}."},
    {"the company has grown quickly in the {i} market.", "we are a family owned company in {i}.",
     "our firm is known across the {i} sector."}};
const Templates kNone = {
    {"apply today.", "we look forward to hearing from you."},
    {"send us your application now.", "we hope to meet you soon.", "click below to get started."}};

std::string fill(std::string s, const std::string& key, const std::string& value) {
  for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size())) {
    s.replace(pos, key.size(), value);
  }
  return s;
}

class Generator {
 public:
  Generator(double noise, std::uint64_t seed) : noise_(noise), rng_(seed) {}

  std::string sentence(const Templates& t) {
    const bool reword = rng_.bernoulli(noise_);
    std::string s = reword ? rng_.pick(t.noisy) : rng_.pick(t.base);
    s = fill(s, "{c}", rng_.pick(kCities));
    s = fill(s, "{t}", rng_.pick(kTasks));
    s = fill(s, "{i}", rng_.pick(kIndustries));
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
  }

  std::string qualification(const std::string& degree, int years) {
    return fill(fill(sentence(kQualification), "{d}", degree), "{y}", std::to_string(years));
  }

  // Qualification comes last in the raw posting, after the filler topics.
  EntityEntry posting(const std::string& id, const std::string& title, const std::string& degree, int years) {
    Strings parts = {sentence(kCompany), sentence(kDuty),     sentence(kDuty), sentence(kBenefit),
                     sentence(kTime),    sentence(kLocation), sentence(kNone), qualification(degree, years)};
    EntityEntry e;
    e.id = id;
    e.attributes.push_back({"title", title});
    e.attributes.push_back({"content", join(parts, " ")});
    return e;
  }

  EntityEntry resume(const std::string& id, const std::string& degree, int years) {
    const bool reword = rng_.bernoulli(noise_);
    const std::string degree_text = degree + (reword ? " of science" : " degree");
    AttributeValue education = AttributeValue::list({AttributeValue::nested({
        {"degree", degree_text},
        {"school", rng_.pick(kCities) + " state university"},
        {"major", rng_.pick(kMajors)},
    })});
    AttributeValue experience = AttributeValue::list({AttributeValue::nested({
        {"duration", std::to_string(years) + " years"},
        {"position", rng_.pick(kTitles)},
        {"company", rng_.pick(kCompanies)},
        {"work", AttributeValue::list({AttributeValue(rng_.pick(kTasks)), AttributeValue(rng_.pick(kTasks))})},
    })});
    AttributeValue::List skills;
    Strings pool = kSkills;
    rng_.shuffle(pool);
    for (int i = 0; i < 4; ++i) skills.emplace_back(pool[static_cast<std::size_t>(i)]);
    const std::string summary = rng_.bernoulli(noise_) ? "dependable worker who learns fast and enjoys helping people"
                                                        : "motivated professional seeking a new role with a growing team";
    EntityEntry e;
    e.id = id;
    e.attributes = {{"education", education},
                    {"experience", experience},
                    {"skills", AttributeValue::list(std::move(skills))},
                    {"summary", summary}};
    return e;
  }

  // Different in degree, years or both, about a third each.
  std::pair<std::string, int> perturb(const std::string& degree, int years) {
    const auto kind = rng_.below(3);
    std::string d = degree;
    int y = years;
    if (kind != 1) {
      while (d == degree) d = rng_.pick(degrees());
    }
    if (kind != 0) {
      while (y == years) y = 1 + static_cast<int>(rng_.below(kMaxYears));
    }
    return {d, y};
  }

  Rng& rng() { return rng_; }

 private:
  double noise_;
  Rng rng_;
};

}  // namespace

const std::vector<std::string>& synthetic_degrees() { return degrees(); }
int synthetic_max_years() { return kMaxYears; }

SyntheticData generate_synthetic(SyntheticTask task, std::size_t n_pairs, double noise, std::uint64_t seed) {
  if (n_pairs < 10) throw UsageError("n_pairs must be >= 10");
  if (!(noise >= 0.0 && noise <= 1.0)) throw UsageError("noise must be in [0, 1]");
  Generator gen(noise, seed);
  auto& rng = gen.rng();

  std::vector<bool> match(n_pairs, false);
  for (std::size_t i = 0; i < n_pairs / 2; ++i) match[i] = true;
  rng.shuffle(match);

  // Right-side ids are shuffled so ids say nothing about the pairing.
  std::vector<std::size_t> right_pos(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) right_pos[i] = i;
  rng.shuffle(right_pos);

  const bool jobjob = task == SyntheticTask::JobJob;
  std::vector<EntityEntry> left(n_pairs), right(n_pairs);
  SyntheticData out;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::string title = rng.pick(kTitles);
    const std::string degree = rng.pick(degrees());
    const int years = 1 + static_cast<int>(rng.below(kMaxYears));
    const std::string lid = (jobjob ? "a" : "j") + std::to_string(i);
    const std::string rid = (jobjob ? "b" : "r") + std::to_string(right_pos[i]);
    left[i] = gen.posting(lid, title, degree, years);

    auto [rd, ry] = match[i] ? std::pair{degree, years} : gen.perturb(degree, years);
    if (jobjob) {
      std::string rtitle = title;
      if (!match[i] && rng.bernoulli(0.5)) {
        while (rtitle == title) rtitle = rng.pick(kTitles);
      }
      right[right_pos[i]] = gen.posting(rid, rtitle, rd, ry);
    } else {
      right[right_pos[i]] = gen.resume(rid, rd, ry);
    }
    out.gold.push_back({make_pair_id(lid, rid), match[i] ? kMatch : kNoMatch, "generator", 0.0, "human"});
  }
  out.left = make_collection(jobjob ? "jobs_a" : "jobs", std::move(left));
  out.right = make_collection(jobjob ? "jobs_b" : "resumes", std::move(right));
  return out;
}

}  // namespace gem
