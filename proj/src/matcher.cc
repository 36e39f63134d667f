#include "gem/matcher.h"

#include <cmath>
#include <set>
#include <sstream>

#include "gem/error.h"
#include "gem/parallel.h"
#include "gem/random.h"

namespace gem {
namespace {

constexpr int kCheckpointVersion = 1;

struct Source {
  int encoding = 0;
  Eigen::Index position = -1;  // -1: zero-filled slot
};

struct Pass {
  ForwardResult result;
  std::vector<EncoderTrace> traces;
  Vec features;
  Vec logits;
  std::vector<Source> left_sources, right_sources;
  Tensor left_rows, right_rows;
  Eigen::MatrixXi argmax;
  bool pooled_empty = false;  // heter with no right anchors
};

Vec softmax(const Vec& logits) {
  const double mx = logits.maxCoeff();
  Vec e = (logits.array() - mx).exp();
  return e / e.sum();
}

double cross_entropy(const Vec& logits, int label) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits(label);
}

Tensor gather(const std::vector<EncodedEntity>& encodings, const std::vector<Source>& sources, int d) {
  Tensor rows = Tensor::Zero(static_cast<Eigen::Index>(sources.size()), d);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& s = sources[i];
    if (s.position >= 0) {
      rows.row(static_cast<Eigen::Index>(i)) = encodings[static_cast<std::size_t>(s.encoding)].token_vectors.row(s.position);
    }
  }
  return rows;
}

void scatter(const Tensor& grad_rows, const std::vector<Source>& sources, std::vector<Tensor>& token_grads) {
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& s = sources[i];
    if (s.position >= 0) {
      token_grads[static_cast<std::size_t>(s.encoding)].row(s.position) += grad_rows.row(static_cast<Eigen::Index>(i));
    }
  }
}

// Anchors of each side as (attribute, encoding, position).
struct SideAnchor {
  std::string attribute;
  Source source;
};

Source find_anchor(const std::vector<SideAnchor>& side, const std::string& name) {
  for (const auto& a : side) {
    if (a.attribute == name) return a.source;
  }
  return {};
}

Pass run(const MatchModel& model, const EntityEntry& left, const EntityEntry& right, bool keep_trace) {
  const auto& cfg = model.config;
  const int d = model.encoder.config.d_model;
  const auto max_len = static_cast<std::size_t>(model.max_len());
  Pass p;
  p.result.left = left;
  p.result.right = right;

  std::vector<SideAnchor> left_anchors, right_anchors;
  if (cfg.architecture == Architecture::Sequenced) {
    p.result.sequences.push_back(serialize_pair(left, right, model.vocab, max_len, cfg.use_anchor_tags));
    const auto& seq = p.result.sequences[0];
    for (const auto& a : seq.anchors) {
      auto& side = a.position < *seq.side_boundary ? left_anchors : right_anchors;
      side.push_back({a.attribute, {0, static_cast<Eigen::Index>(a.position)}});
    }
  } else {
    p.result.sequences.push_back(serialize_single(left, model.vocab, max_len, cfg.use_anchor_tags));
    p.result.sequences.push_back(serialize_single(right, model.vocab, max_len, cfg.use_anchor_tags));
    for (int side = 0; side < 2; ++side) {
      for (const auto& a : p.result.sequences[static_cast<std::size_t>(side)].anchors) {
        (side == 0 ? left_anchors : right_anchors).push_back({a.attribute, {side, static_cast<Eigen::Index>(a.position)}});
      }
    }
  }

  const std::size_t n_enc = p.result.sequences.size();
  if (keep_trace) p.traces.resize(n_enc);
  for (std::size_t i = 0; i < n_enc; ++i) {
    p.result.encodings.push_back(encode(model.encoder, p.result.sequences[i], keep_trace ? &p.traces[i] : nullptr));
  }

  Vec pooled;
  if (cfg.structure_pooling) {
    if (cfg.schema_mode == SchemaMode::Homo) {
      for (const auto& name : cfg.alignment) {
        p.left_sources.push_back(find_anchor(left_anchors, name));
        p.right_sources.push_back(find_anchor(right_anchors, name));
      }
      p.left_rows = gather(p.result.encodings, p.left_sources, d);
      p.right_rows = gather(p.result.encodings, p.right_sources, d);
      pooled = pool_homo(p.left_rows, p.right_rows);
    } else {
      for (const auto& name : cfg.left_slots) p.left_sources.push_back(find_anchor(left_anchors, name));
      for (const auto& a : right_anchors) p.right_sources.push_back(a.source);
      p.left_rows = gather(p.result.encodings, p.left_sources, d);
      p.right_rows = gather(p.result.encodings, p.right_sources, d);
      if (p.right_sources.empty()) {
        p.pooled_empty = true;
        pooled = Vec::Zero(static_cast<Eigen::Index>(cfg.left_slots.size()) * d);
      } else {
        pooled = pool_heter(p.left_rows, p.right_rows, &p.argmax);
      }
    }
  }

  const Vec& cls0 = p.result.encodings[0].cls_vector;
  if (cfg.architecture == Architecture::Sequenced) {
    p.features = cfg.structure_pooling ? pooled : cls0;
  } else {
    p.features = siamese_pool(cls0, p.result.encodings[1].cls_vector, pooled);
  }
  if (p.features.size() != model.output_weight.rows()) {
    throw UsageError("feature dimension does not match the output layer");
  }
  p.logits = (model.output_weight.transpose() * p.features).eval();
  p.logits += model.output_bias.row(0).transpose();
  p.result.probabilities = softmax(p.logits);
  return p;
}

void backward(const MatchModel& model, const Pass& p, int label, ModelGradients& grads) {
  const int d = model.encoder.config.d_model;
  Vec dlogits = p.result.probabilities;
  dlogits(label) -= 1.0;
  grads.output_weight.noalias() += p.features * dlogits.transpose();
  grads.output_bias.row(0) += dlogits.transpose();
  const Vec df = model.output_weight * dlogits;

  std::vector<Tensor> token_grads;
  for (const auto& e : p.result.encodings) token_grads.push_back(Tensor::Zero(e.token_vectors.rows(), d));

  Eigen::Index offset = 0;
  if (model.config.architecture == Architecture::Siamese) {
    token_grads[0].row(0) += df.segment(0, d).transpose();
    token_grads[1].row(0) += df.segment(d, d).transpose();
    offset = 2 * d;
  } else if (!model.config.structure_pooling) {
    token_grads[0].row(0) += df.transpose();
  }
  if (model.config.structure_pooling && !p.pooled_empty) {
    const Vec dpool = df.segment(offset, df.size() - offset);
    const PoolGradients g = model.config.schema_mode == SchemaMode::Homo
                                ? pool_homo_backward(p.left_rows, p.right_rows, dpool)
                                : pool_heter_backward(p.left_rows, p.right_rows, p.argmax, dpool);
    scatter(g.left, p.left_sources, token_grads);
    scatter(g.right, p.right_sources, token_grads);
  }
  for (std::size_t i = 0; i < token_grads.size(); ++i) {
    accumulate_encoder_gradients(model.encoder, p.traces[i], token_grads[i], grads.encoder);
  }
}

template <typename M, typename Out>
void collect_model(M& m, Out& out) {
  for (auto& [name, t] : m.encoder.named()) out.emplace_back("encoder." + name, t);
  out.emplace_back("output.weight", &m.output_weight);
  out.emplace_back("output.bias", &m.output_bias);
}

void xavier(Tensor& t, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  t.resize(rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-limit, limit);
}

std::vector<std::string> json_strings(const Json& j, const char* key) {
  std::vector<std::string> out;
  if (j.contains(key)) out = j.at(key).get<std::vector<std::string>>();
  return out;
}

std::string norms_report(const MatchModel& model) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [name, t] : model.named()) {
    if (!first) os << ", ";
    first = false;
    os << name << "=" << t->norm();
  }
  return os.str();
}

}  // namespace

std::string to_string(Architecture a) { return a == Architecture::Sequenced ? "sequenced" : "siamese"; }

std::string to_string(KnowledgeMode k) {
  switch (k) {
    case KnowledgeMode::Off: return "off";
    case KnowledgeMode::On: return "on";
    case KnowledgeMode::RuleOnly: return "rule_only";
  }
  return "off";
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "sequenced") return Architecture::Sequenced;
  if (s == "siamese") return Architecture::Siamese;
  throw UsageError("unknown architecture '" + s + "' (expected sequenced or siamese)");
}

KnowledgeMode knowledge_mode_from_string(const std::string& s) {
  if (s == "off") return KnowledgeMode::Off;
  if (s == "on") return KnowledgeMode::On;
  if (s == "rule_only") return KnowledgeMode::RuleOnly;
  throw UsageError("unknown knowledge mode '" + s + "' (expected off, on or rule_only)");
}

Json ModelConfig::to_json() const {
  return {{"architecture", to_string(architecture)},
          {"schema_mode", to_string(schema_mode)},
          {"structure_pooling", structure_pooling},
          {"knowledge", to_string(knowledge)},
          {"text_field", text_field},
          {"classifier_address", classifier_address},
          {"use_anchor_tags", use_anchor_tags},
          {"alignment", alignment},
          {"left_slots", left_slots},
          {"encoder", encoder.to_json()}};
}

ModelConfig ModelConfig::from_json(const Json& j) {
  ModelConfig c;
  c.architecture = architecture_from_string(j.value("architecture", to_string(c.architecture)));
  c.schema_mode = schema_mode_from_string(j.value("schema_mode", to_string(c.schema_mode)));
  c.structure_pooling = j.value("structure_pooling", c.structure_pooling);
  c.knowledge = knowledge_mode_from_string(j.value("knowledge", to_string(c.knowledge)));
  c.text_field = j.value("text_field", c.text_field);
  c.classifier_address = j.value("classifier_address", c.classifier_address);
  c.use_anchor_tags = j.value("use_anchor_tags", c.use_anchor_tags);
  c.alignment = json_strings(j, "alignment");
  c.left_slots = json_strings(j, "left_slots");
  if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j.at("encoder"));
  return c;
}

ModelConfig ablate(ModelConfig cfg, const AblationFlags& flags) {
  cfg.knowledge = flags.knowledge;
  cfg.structure_pooling = flags.structure_pooling;
  cfg.alignment.clear();
  cfg.left_slots.clear();
  return cfg;
}

int MatchModel::feature_dim() const {
  const int d = encoder.config.d_model;
  int pooled = 0;
  if (config.structure_pooling) {
    pooled = d * static_cast<int>(config.schema_mode == SchemaMode::Homo ? config.alignment.size()
                                                                          : config.left_slots.size());
  }
  if (config.architecture == Architecture::Siamese) return 2 * d + pooled;
  return config.structure_pooling ? pooled : d;
}

EntityEntry MatchModel::prepare(const EntityEntry& e) const {
  if (config.knowledge == KnowledgeMode::Off || !classifier) return e;
  const AttributeValue* field = e.find(config.text_field);
  if (field == nullptr || !field->is_text()) return e;
  return restructure_document(e, config.text_field, *classifier);
}

std::vector<std::pair<std::string, Tensor*>> MatchModel::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect_model(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> MatchModel::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  collect_model(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelGradients::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  collect_model(*this, out);
  return out;
}

void attach_classifier(MatchModel& model) {
  model.classifier.reset();
  switch (model.config.knowledge) {
    case KnowledgeMode::Off:
      return;
    case KnowledgeMode::On:
      if (!model.config.classifier_address.empty()) {
        auto topics = model.rules.topic_names();
        if (topics.empty()) throw UsageError("an external classifier needs a topic list (rules)");
        model.classifier = std::make_shared<ExternalClassifier>(model.config.classifier_address, topics);
        return;
      }
      [[fallthrough]];
    case KnowledgeMode::RuleOnly:
      if (model.rules.topics().empty()) throw UsageError("knowledge injection is on but no keyword rules are loaded");
      model.classifier = std::make_shared<RuleBasedClassifier>(model.rules);
      return;
  }
}

MatchModel build_model(const ModelConfig& cfg, const std::vector<LabeledPair>& train_set, const KeywordRuleSet& rules) {
  if (train_set.empty()) throw UsageError("cannot build a model without training pairs");
  if (cfg.structure_pooling && !cfg.use_anchor_tags) throw UsageError("structure pooling requires anchor tags");
  MatchModel m;
  m.config = cfg;
  m.rules = rules;
  attach_classifier(m);

  std::vector<std::string> left_names, right_names;
  std::set<std::string> left_seen, right_seen;
  for (const auto& pair : train_set) {
    const auto l = m.prepare(pair.left);
    const auto r = m.prepare(pair.right);
    grow_vocabulary(l, m.vocab, cfg.use_anchor_tags);
    grow_vocabulary(r, m.vocab, cfg.use_anchor_tags);
    for (const auto& a : l.attributes) {
      if (left_seen.insert(a.name).second) left_names.push_back(a.name);
    }
    for (const auto& a : r.attributes) {
      if (right_seen.insert(a.name).second) right_names.push_back(a.name);
    }
  }
  if (cfg.structure_pooling) {
    if (cfg.schema_mode == SchemaMode::Homo && m.config.alignment.empty()) {
      for (const auto& n : left_names) {
        if (right_seen.count(n)) m.config.alignment.push_back(n);
      }
      if (m.config.alignment.empty()) throw UsageError("no attribute is shared by both sides; homo pooling needs an alignment");
    }
    if (cfg.schema_mode == SchemaMode::Heter && m.config.left_slots.empty()) m.config.left_slots = left_names;
    AttributeAlignment{cfg.schema_mode == SchemaMode::Homo ? m.config.alignment : m.config.left_slots}.validate();
  }

  m.config.encoder.vocab_size = static_cast<int>(m.vocab.size());
  m.encoder = init_encoder(m.config.encoder);
  m.config.encoder = m.encoder.config;
  Rng rng(cfg.encoder.seed + 1);
  xavier(m.output_weight, m.feature_dim(), 2, rng);
  m.output_bias = Tensor::Zero(1, 2);
  return m;
}

ForwardResult forward_prepared(const MatchModel& model, const EntityEntry& left, const EntityEntry& right) {
  return run(model, left, right, false).result;
}

ForwardResult forward(const MatchModel& model, const EntityEntry& left, const EntityEntry& right) {
  return forward_prepared(model, model.prepare(left), model.prepare(right));
}

std::vector<int> piecewise_signature(const MatchModel& model, const EntityEntry& left, const EntityEntry& right) {
  const Pass p = run(model, left, right, true);
  std::vector<int> sig;
  for (const auto& t : p.traces) {
    for (const auto& l : t.layers) {
      for (Eigen::Index i = 0; i < l.ff_pre.size(); ++i) sig.push_back(l.ff_pre.data()[i] > 0.0 ? 1 : 0);
    }
  }
  for (Eigen::Index i = 0; i < p.argmax.size(); ++i) sig.push_back(p.argmax.data()[i]);
  return sig;
}

ModelGradients zero_gradients(const MatchModel& model) {
  return {model.encoder.zeros_like(), Tensor::Zero(model.output_weight.rows(), model.output_weight.cols()),
          Tensor::Zero(1, 2)};
}

double loss_and_gradients(const MatchModel& model, const EntityEntry& left, const EntityEntry& right, bool match,
                          ModelGradients* grads) {
  const Pass p = run(model, left, right, grads != nullptr);
  const int label = match ? 1 : 0;
  if (grads) backward(model, p, label, *grads);
  return cross_entropy(p.logits, label);
}

Json EvalResult::to_json() const {
  return {{"precision", precision}, {"recall", recall}, {"f1", f1},
          {"tp", tp}, {"fp", fp}, {"fn", fn}, {"tn", tn}};
}

EvalResult metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  EvalResult r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.tn = tn;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

EvalResult score_predictions(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
  if (predicted.size() != gold.size()) throw UsageError("prediction and gold sizes differ");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] && gold[i]) ++tp;
    else if (predicted[i]) ++fp;
    else if (gold[i]) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

EvalResult evaluate(const MatchModel& model, const std::vector<LabeledPair>& test_set, unsigned threads) {
  if (test_set.empty()) throw UsageError("cannot evaluate on an empty set");
  std::vector<char> predicted(test_set.size());
  parallel_chunks(test_set.size(), threads, [&](unsigned, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      predicted[i] = forward(model, test_set[i].left, test_set[i].right).predicted_match();
    }
  });
  std::vector<bool> pred(predicted.begin(), predicted.end());
  std::vector<bool> gold;
  for (const auto& p : test_set) gold.push_back(p.match);
  return score_predictions(pred, gold);
}

Json EpochLog::to_json() const {
  Json j = {{"epoch", epoch}, {"loss", loss}};
  const Json v = val.to_json();
  for (const auto& [k, x] : v.items()) j["val_" + k] = x;
  return j;
}

std::size_t best_epoch_index(const std::vector<double>& f1s) {
  if (f1s.empty()) throw UsageError("no epochs to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < f1s.size(); ++i) {
    if (f1s[i] > f1s[best]) best = i;
  }
  return best;
}

TrainResult train(MatchModel model, const std::vector<LabeledPair>& train_set,
                  const std::vector<LabeledPair>& val_set, const TrainConfig& cfg) {
  if (train_set.empty() || val_set.empty()) throw UsageError("training and validation sets must be nonempty");
  if (cfg.batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (cfg.epochs < 1) throw UsageError("epochs must be >= 1");
  if (!(cfg.learning_rate >= 0.0)) throw UsageError("learning rate must be >= 0");

  std::vector<std::pair<EntityEntry, EntityEntry>> prepared;
  prepared.reserve(train_set.size());
  for (const auto& p : train_set) prepared.emplace_back(model.prepare(p.left), model.prepare(p.right));

  auto params = model.named();
  std::vector<Tensor> m1, m2;
  for (const auto& [name, t] : params) {
    m1.push_back(Tensor::Zero(t->rows(), t->cols()));
    m2.push_back(Tensor::Zero(t->rows(), t->cols()));
  }

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<ModelGradients> buffers(std::min(batch, train_set.size()), zero_gradients(model));
  ModelGradients total = zero_gradients(model);
  std::vector<double> losses(train_set.size());
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Rng rng(cfg.seed);
  long step = 0;
  TrainResult result{model, {}, 0};
  double best_f1 = -1.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
      const std::size_t count = std::min(batch, order.size() - start);
      parallel_chunks(count, cfg.threads, [&](unsigned, std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
          auto& g = buffers[k];
          g.encoder.set_zero();
          g.output_weight.setZero();
          g.output_bias.setZero();
          const std::size_t idx = order[start + k];
          losses[idx] = loss_and_gradients(model, prepared[idx].first, prepared[idx].second,
                                           train_set[idx].match, &g);
        }
      });
      for (std::size_t k = 0; k < count; ++k) {
        const double l = losses[order[start + k]];
        if (!std::isfinite(l)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(b + 1) + "; parameter norms: " + norms_report(model));
        }
      }
      total = buffers[0];
      for (std::size_t k = 1; k < count; ++k) {
        total.encoder.add(buffers[k].encoder);
        total.output_weight += buffers[k].output_weight;
        total.output_bias += buffers[k].output_bias;
      }

      ++step;
      const double scale = 1.0 / static_cast<double>(count);
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      const auto grads = total.named();
      for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t].second;
        const Tensor& g = *grads[t].second;
        double* pd = p.data();
        const double* gd = g.data();
        double* a = m1[t].data();
        double* v = m2[t].data();
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          const double gi = gd[i] * scale;
          a[i] = cfg.beta1 * a[i] + (1 - cfg.beta1) * gi;
          v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * gi * gi;
          pd[i] -= cfg.learning_rate * (a[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
        }
      }
    }

    double sum = 0.0;
    for (const double l : losses) sum += l;
    EpochLog log;
    log.epoch = epoch;
    log.loss = sum / static_cast<double>(losses.size());
    log.val = evaluate(model, val_set, cfg.threads);
    result.log.push_back(log);
    if (cfg.on_epoch) cfg.on_epoch(log);
    if (log.val.f1 > best_f1) {
      best_f1 = log.val.f1;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

void GridConfig::validate() const {
  if (learning_rates.empty() || max_lens.empty() || epochs.empty()) throw UsageError("grids must be nonempty");
  for (const double lr : learning_rates) {
    if (!(lr >= 0.0)) throw UsageError("learning rates must be >= 0");
  }
  for (const int len : max_lens) {
    if (len < 8) throw UsageError("max_len values must be >= 8");
  }
  for (const int e : epochs) {
    if (e < 1) throw UsageError("epoch counts must be >= 1");
  }
  if (train.batch_size < 1) throw UsageError("batch_size must be >= 1");
}

Json GridCell::to_json() const {
  return {{"learning_rate", learning_rate}, {"max_len", max_len}, {"epochs", epochs},
          {"best_epoch", best_epoch}, {"val", val.to_json()}};
}

GridResult grid_search(const ModelConfig& cfg, const KeywordRuleSet& rules,
                       const std::vector<LabeledPair>& train_set, const std::vector<LabeledPair>& val_set,
                       const GridConfig& grid) {
  grid.validate();
  std::optional<GridResult> out;
  std::vector<GridCell> report;
  for (const double lr : grid.learning_rates) {
    for (const int len : grid.max_lens) {
      for (const int epochs : grid.epochs) {
        ModelConfig c = cfg;
        c.encoder.max_len = len;
        TrainConfig t = grid.train;
        t.learning_rate = lr;
        t.epochs = epochs;
        auto trained = train(build_model(c, train_set, rules), train_set, val_set, t);
        GridCell cell{lr, len, epochs, trained.log[static_cast<std::size_t>(trained.best_epoch - 1)].val,
                      trained.best_epoch};
        report.push_back(cell);
        if (!out || cell.val.f1 > out->best_cell.val.f1) out = GridResult{std::move(trained), cell, {}};
      }
    }
  }
  out->report = std::move(report);
  return std::move(*out);
}

void save_model(const MatchModel& model, const std::string& path, const Json& metadata) {
  Checkpoint c;
  c.header["kind"] = "model";
  c.header["version"] = kCheckpointVersion;
  c.header["config"] = model.config.to_json();
  c.header["vocab"] = model.vocab.to_json();
  c.header["rules"] = model.rules.to_json();
  c.header["metadata"] = metadata;
  for (const auto& [name, t] : model.named()) c.tensors.emplace_back(name, *t);
  write_checkpoint(c, path);
}

MatchModel load_model(const std::string& path, Json* metadata) {
  const Checkpoint c = read_checkpoint(path);
  if (c.header.value("kind", "") != "model") throw DataError("'" + path + "' is not a model checkpoint");
  if (c.header.value("version", 0) != kCheckpointVersion) throw DataError("unsupported model checkpoint version");
  MatchModel m;
  m.config = ModelConfig::from_json(c.header.at("config"));
  m.vocab = Vocabulary::from_json(c.header.at("vocab"));
  m.rules = KeywordRuleSet::from_json(c.header.at("rules"));
  m.encoder = encoder_from_checkpoint(c, m.config.encoder, "encoder.");
  m.output_weight = c.tensor("output.weight");
  m.output_bias = c.tensor("output.bias");
  if (m.output_weight.rows() != m.feature_dim() || m.output_weight.cols() != 2 || m.output_bias.rows() != 1 ||
      m.output_bias.cols() != 2) {
    throw DataError("output layer shape does not match the model configuration");
  }
  if (static_cast<std::size_t>(m.encoder.config.vocab_size) != m.vocab.size()) {
    throw DataError("vocabulary size does not match the embedding table");
  }
  attach_classifier(m);
  if (metadata) *metadata = c.header.value("metadata", Json::object());
  return m;
}

}  // namespace gem
