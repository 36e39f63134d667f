#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gem/encoder.h"
#include "gem/knowledge.h"
#include "gem/pooling.h"
#include "gem/serializer.h"

namespace gem {

enum class Architecture { Sequenced, Siamese };
enum class KnowledgeMode { Off, On, RuleOnly };

std::string to_string(Architecture a);
std::string to_string(KnowledgeMode k);
Architecture architecture_from_string(const std::string& s);
KnowledgeMode knowledge_mode_from_string(const std::string& s);

struct ModelConfig {
  Architecture architecture = Architecture::Sequenced;
  SchemaMode schema_mode = SchemaMode::Heter;
  bool structure_pooling = true;
  KnowledgeMode knowledge = KnowledgeMode::Off;
  std::string text_field = "content";
  // KnowledgeMode::On uses this external classifier when set, the keyword
  // rules otherwise.
  std::string classifier_address;
  bool use_anchor_tags = true;
  // Empty lists are derived from training data when the model is built.
  std::vector<std::string> alignment;
  std::vector<std::string> left_slots;
  EncoderConfig encoder;

  Json to_json() const;
  static ModelConfig from_json(const Json& j);
};

struct AblationFlags {
  KnowledgeMode knowledge = KnowledgeMode::On;
  bool structure_pooling = true;
};

// The configuration of an ablated pipeline. A model has to be built and
// trained from it because the feature dimension may change.
ModelConfig ablate(ModelConfig cfg, const AblationFlags& flags);

struct LabeledPair {
  std::string pair_id;
  EntityEntry left;
  EntityEntry right;
  bool match = false;
};

struct MatchModel {
  ModelConfig config;
  Vocabulary vocab;
  KeywordRuleSet rules;
  EncoderParams encoder;
  Tensor output_weight;  // feature_dim x 2 (column 1 is "match")
  Tensor output_bias;    // 1 x 2
  std::shared_ptr<const SentenceClassifier> classifier;  // null when knowledge is off

  int feature_dim() const;
  int max_len() const { return encoder.config.max_len; }
  // Applies knowledge injection when enabled and the entry has text_field.
  EntityEntry prepare(const EntityEntry& e) const;

  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
};

// Attaches the classifier configured by model.config. Throws UsageError
// when knowledge is on but no rules are available.
void attach_classifier(MatchModel& model);

// Builds vocabulary, alignment/slots and fresh parameters from training
// pairs. A model with encoder.vocab_size set is not needed: it is derived.
MatchModel build_model(const ModelConfig& cfg, const std::vector<LabeledPair>& train_set,
                       const KeywordRuleSet& rules = {});

struct ForwardResult {
  Vec probabilities;  // (nomatch, match)
  std::vector<SerializedSequence> sequences;  // one (Sequenced) or two (Siamese)
  std::vector<EncodedEntity> encodings;
  EntityEntry left;   // prepared entries
  EntityEntry right;
  bool predicted_match() const { return probabilities(1) > probabilities(0); }
};

ForwardResult forward(const MatchModel& model, const EntityEntry& left, const EntityEntry& right);

// Same as forward on already prepared entries.
ForwardResult forward_prepared(const MatchModel& model, const EntityEntry& left, const EntityEntry& right);

// ReLU on/off pattern of every feed-forward unit plus the heter argmax, for
// prepared entries. The loss is smooth wherever this stays constant.
std::vector<int> piecewise_signature(const MatchModel& model, const EntityEntry& left, const EntityEntry& right);

struct ModelGradients {
  EncoderParams encoder;
  Tensor output_weight;
  Tensor output_bias;

  std::vector<std::pair<std::string, const Tensor*>> named() const;
};

// Cross-entropy loss of one prepared pair and, when grads is set, its
// gradient added into grads.
double loss_and_gradients(const MatchModel& model, const EntityEntry& left, const EntityEntry& right,
                          bool match, ModelGradients* grads);

ModelGradients zero_gradients(const MatchModel& model);

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  Json to_json() const;
};

EvalResult metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);
EvalResult score_predictions(const std::vector<bool>& predicted, const std::vector<bool>& gold);

// Throws UsageError on an empty set.
EvalResult evaluate(const MatchModel& model, const std::vector<LabeledPair>& test_set, unsigned threads = 1);

struct EpochLog {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  EvalResult val;

  Json to_json() const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 30;
  int batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  MatchModel model;  // best-val-F1 snapshot
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

// Index of the best epoch (max F1, earliest on ties); 0-based.
std::size_t best_epoch_index(const std::vector<double>& f1s);

// Throws UsageError on empty sets or bad settings and TrainingError when
// the loss becomes non-finite.
TrainResult train(MatchModel model, const std::vector<LabeledPair>& train_set,
                  const std::vector<LabeledPair>& val_set, const TrainConfig& cfg);

struct GridConfig {
  std::vector<double> learning_rates = {1e-3};
  std::vector<int> max_lens = {256};
  std::vector<int> epochs = {30};
  TrainConfig train;

  void validate() const;
};

struct GridCell {
  double learning_rate = 0.0;
  int max_len = 0;
  int epochs = 0;
  EvalResult val;
  int best_epoch = 0;

  Json to_json() const;
};

struct GridResult {
  TrainResult best;
  GridCell best_cell;
  std::vector<GridCell> report;
};

GridResult grid_search(const ModelConfig& cfg, const KeywordRuleSet& rules,
                       const std::vector<LabeledPair>& train_set, const std::vector<LabeledPair>& val_set,
                       const GridConfig& grid);

void save_model(const MatchModel& model, const std::string& path, const Json& metadata = Json::object());
MatchModel load_model(const std::string& path, Json* metadata = nullptr);

}  // namespace gem
