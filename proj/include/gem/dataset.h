#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "gem/entity.h"
#include "gem/matcher.h"
#include "gem/text.h"

namespace gem {

inline constexpr const char* kMatch = "match";
inline constexpr const char* kNoMatch = "nomatch";
inline constexpr const char* kSkip = "skip";

struct LabelRecord {
  std::string pair_id;
  std::string label;  // match | nomatch | skip
  std::string annotator;
  double timestamp = 0.0;  // UTC seconds
  std::string source = "human";  // human | sampler

  bool is_match() const { return label == kMatch; }
  Json to_json() const;
  // Throws DataError on missing fields or an unknown label/source.
  static LabelRecord from_json(const Json& j);

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

// Current label per pair: latest timestamp wins, later arrival on ties.
// Skip events never change the current label.
std::map<std::string, LabelRecord> current_labels(const std::vector<LabelRecord>& history);

// Append-only label history in a line-delimited JSON file. Opening replays
// the file; an incomplete trailing line (interrupted write) is cut off.
// Each append is flushed and fsync'ed before returning.
class LabelStore {
 public:
  explicit LabelStore(std::string path);
  ~LabelStore();
  LabelStore(const LabelStore&) = delete;
  LabelStore& operator=(const LabelStore&) = delete;

  // Throws UsageError on an invalid label or empty pair id.
  const LabelRecord& append(LabelRecord record);

  const std::vector<LabelRecord>& history() const { return history_; }
  const std::map<std::string, LabelRecord>& current() const { return current_; }
  std::optional<LabelRecord> current(const std::string& pair_id) const;
  // Bytes dropped from an incomplete trailing line at open.
  std::size_t recovered_bytes() const { return recovered_bytes_; }
  const std::string& path() const { return path_; }

 private:
  void apply(const LabelRecord& r, std::size_t arrival);

  std::string path_;
  int fd_ = -1;
  std::vector<LabelRecord> history_;
  std::map<std::string, LabelRecord> current_;
  std::map<std::string, std::size_t> current_arrival_;
  std::size_t recovered_bytes_ = 0;
};

std::vector<LabelRecord> read_labels(const std::string& path);

// Pairs whose stopword-filtered title token sets are disjoint, drawn
// uniformly with the seeded generator, labeled nomatch by the sampler.
// Throws DataError when 100*k attempts yield fewer than k pairs.
std::vector<LabelRecord> sample_negatives(const EntityCollection& a, const EntityCollection& b,
                                          const std::string& title_path, std::size_t k, std::uint64_t seed,
                                          const std::unordered_set<std::string>& stopwords = english_stopwords());

struct SplitSpec {
  std::array<double, 3> ratios = {0.6, 0.2, 0.2};
  std::uint64_t seed = 0;
  bool balance = true;

  void validate() const;
};

struct DatasetSplits {
  std::vector<LabelRecord> train, val, test;
};

// Stratified by label when spec.balance. Each class is shuffled and cut at
// round(r_train*n), round(r_val*n); the test split takes the remainder.
// Throws DataError when balancing and a class has fewer than 5 pairs.
DatasetSplits split_dataset(const std::vector<LabelRecord>& pairs, const SplitSpec& spec);

// {seed, ratios, balance, left, right, splits:{train,val,test}, records}
Json splits_manifest(const DatasetSplits& splits, const SplitSpec& spec, const std::string& left_path,
                     const std::string& right_path);

// Resolves manifest pair ids into entries. Throws DataError for ids missing
// from the collections.
std::vector<LabeledPair> resolve_pairs(const std::vector<LabelRecord>& records, const EntityCollection& left,
                                       const EntityCollection& right);

struct ManifestData {
  std::string left_path, right_path;
  EntityCollection left, right;
  std::vector<LabeledPair> train, val, test;
};

// Loads a manifest and the collections it names (relative paths resolve
// against the manifest's directory).
ManifestData load_manifest(const std::string& path);

enum class SyntheticTask { JobJob, JobResume };

SyntheticTask synthetic_task_from_string(const std::string& s);

struct SyntheticData {
  EntityCollection left;
  EntityCollection right;
  std::vector<LabelRecord> gold;  // one record per generated pair
};

// Job postings are free text built from topic sentences; the qualification
// sentence carries a degree level and years of experience. JobJob pairs
// postings (matches share title and facts); JobResume pairs postings with
// resumes (match iff the resume has the required degree and years). Half
// the pairs match. noise is the per-sentence chance of a reworded template.
// Throws UsageError when n_pairs < 10 or noise is outside [0, 1].
SyntheticData generate_synthetic(SyntheticTask task, std::size_t n_pairs, double noise, std::uint64_t seed);

// Degree levels and year counts the generator draws from.
const std::vector<std::string>& synthetic_degrees();
int synthetic_max_years();

}  // namespace gem
