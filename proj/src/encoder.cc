#include "gem/encoder.h"

#include <cmath>
#include <limits>

#include "gem/error.h"
#include "gem/random.h"

namespace gem {
namespace {

constexpr double kLayerNormEps = 1e-5;

void xavier(Tensor& t, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  t.resize(rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-limit, limit);
}

Tensor zeros(Eigen::Index rows, Eigen::Index cols) { return Tensor::Zero(rows, cols); }
Tensor ones(Eigen::Index rows, Eigen::Index cols) { return Tensor::Ones(rows, cols); }

// Row-wise layer norm; keeps xhat and 1/std for the backward pass.
Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& offset, Tensor& xhat, Vec& rstd) {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  xhat.resize(x.rows(), x.cols());
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const auto centered = x.row(i).array() - mean;
    const double var = centered.square().sum() / d;
    rstd(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = centered * rstd(i);
  }
  Tensor y = xhat.array().rowwise() * scale.row(0).array();
  y.rowwise() += offset.row(0);
  return y;
}

Tensor layer_norm_backward(const Tensor& dy, const Tensor& xhat, const Vec& rstd, const Tensor& scale,
                           Tensor& dscale, Tensor& doffset) {
  dscale.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  doffset.row(0) += dy.colwise().sum();
  const Tensor dxhat = dy.array().rowwise() * scale.row(0).array();
  const double d = static_cast<double>(dy.cols());
  Tensor dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_dxhat = dxhat.row(i).sum() / d;
    const double mean_dot = dxhat.row(i).dot(xhat.row(i)) / d;
    dx.row(i) = rstd(i) * (dxhat.row(i).array() - mean_dxhat - xhat.row(i).array() * mean_dot).matrix();
  }
  return dx;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

void affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db, Tensor* dx) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  if (dx) dx->noalias() += dy * w.transpose();
}

template <typename Params, typename Out>
void collect(Params& p, Out& out) {
  out.emplace_back("token_embeddings", &p.token_embeddings);
  out.emplace_back("position_embeddings", &p.position_embeddings);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const std::string pre = "layers." + std::to_string(i) + ".";
    out.emplace_back(pre + "wq", &l.wq);
    out.emplace_back(pre + "bq", &l.bq);
    out.emplace_back(pre + "wk", &l.wk);
    out.emplace_back(pre + "bk", &l.bk);
    out.emplace_back(pre + "wv", &l.wv);
    out.emplace_back(pre + "bv", &l.bv);
    out.emplace_back(pre + "wo", &l.wo);
    out.emplace_back(pre + "bo", &l.bo);
    out.emplace_back(pre + "ln1_scale", &l.ln1_scale);
    out.emplace_back(pre + "ln1_offset", &l.ln1_offset);
    out.emplace_back(pre + "w1", &l.w1);
    out.emplace_back(pre + "b1", &l.b1);
    out.emplace_back(pre + "w2", &l.w2);
    out.emplace_back(pre + "b2", &l.b2);
    out.emplace_back(pre + "ln2_scale", &l.ln2_scale);
    out.emplace_back(pre + "ln2_offset", &l.ln2_offset);
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || max_len < 1 || vocab_size < 1 || ff_dim < 0) {
    throw UsageError("encoder dims must be >= 1");
  }
  if (d_model % n_heads != 0) throw UsageError("d_model must be divisible by n_heads");
  if (!(token_init_std > 0.0) || !std::isfinite(token_init_std)) throw UsageError("token_init_std must be positive");
}

Json EncoderConfig::to_json() const {
  return {{"d_model", d_model}, {"n_layers", n_layers}, {"n_heads", n_heads}, {"ff_dim", effective_ff_dim()},
          {"max_len", max_len}, {"vocab_size", vocab_size}, {"seed", seed}, {"token_init_std", token_init_std}};
}

EncoderConfig EncoderConfig::from_json(const Json& j) {
  EncoderConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.max_len = j.value("max_len", c.max_len);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.seed = j.value("seed", c.seed);
  c.token_init_std = j.value("token_init_std", c.token_init_std);
  return c;
}

std::vector<std::pair<std::string, Tensor*>> EncoderParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> EncoderParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  collect(*this, out);
  return out;
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z = *this;
  z.set_zero();
  return z;
}

void EncoderParams::set_zero() {
  for (auto& [name, t] : named()) t->setZero();
}

void EncoderParams::add(const EncoderParams& other, double scale) {
  auto mine = named();
  auto theirs = other.named();
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i].second += scale * *theirs[i].second;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += static_cast<std::size_t>(t->size());
  return n;
}

bool EncoderParams::all_finite() const {
  for (const auto& [name, t] : named()) {
    if (!t->allFinite()) return false;
  }
  return true;
}

EncoderParams init_encoder(const EncoderConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int d = cfg.d_model;
  const int ff = cfg.effective_ff_dim();
  EncoderParams p;
  p.config = cfg;
  p.config.ff_dim = ff;
  // Token embeddings get a large normal init: at Xavier scale the positional
  // signal swamps token identity and cross-side token matching is slow to emerge.
  p.token_embeddings.resize(cfg.vocab_size, d);
  for (Eigen::Index i = 0; i < p.token_embeddings.size(); ++i) p.token_embeddings.data()[i] = rng.normal() * cfg.token_init_std;
  xavier(p.position_embeddings, cfg.max_len, d, rng);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : p.layers) {
    xavier(l.wq, d, d, rng);
    xavier(l.wk, d, d, rng);
    xavier(l.wv, d, d, rng);
    xavier(l.wo, d, d, rng);
    xavier(l.w1, d, ff, rng);
    xavier(l.w2, ff, d, rng);
    l.bq = zeros(1, d);
    l.bk = zeros(1, d);
    l.bv = zeros(1, d);
    l.bo = zeros(1, d);
    l.b1 = zeros(1, ff);
    l.b2 = zeros(1, d);
    l.ln1_scale = ones(1, d);
    l.ln1_offset = zeros(1, d);
    l.ln2_scale = ones(1, d);
    l.ln2_offset = zeros(1, d);
  }
  return p;
}

EncodedEntity encode(const EncoderParams& params, const SerializedSequence& seq, EncoderTrace* trace) {
  const auto& cfg = params.config;
  const auto n = static_cast<Eigen::Index>(seq.token_ids.size());
  if (n == 0) throw UsageError("cannot encode an empty sequence");
  if (n > cfg.max_len) {
    throw UsageError("sequence length " + std::to_string(n) + " exceeds max_len " + std::to_string(cfg.max_len));
  }
  const int d = cfg.d_model;
  const int heads = cfg.n_heads;
  const int dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<bool> masked(static_cast<std::size_t>(n));
  bool any_key = false;
  Tensor x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int id = seq.token_ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= params.token_embeddings.rows()) throw UsageError("token id out of range");
    masked[static_cast<std::size_t>(i)] = id == Vocabulary::kPad;
    any_key = any_key || !masked[static_cast<std::size_t>(i)];
    x.row(i) = params.token_embeddings.row(id) + params.position_embeddings.row(i);
  }
  if (!any_key) throw UsageError("sequence consists only of padding");

  EncodedEntity out;
  if (trace) {
    trace->token_ids = seq.token_ids;
    trace->layers.assign(params.layers.size(), {});
  }
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& l = params.layers[li];
    Tensor q = affine(x, l.wq, l.bq);
    Tensor k = affine(x, l.wk, l.bk);
    Tensor v = affine(x, l.wv, l.bv);
    Tensor context(n, d);
    std::vector<Tensor> attention(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Tensor s = (q.middleCols(h * dk, dk) * k.middleCols(h * dk, dk).transpose()) * scale;
      for (Eigen::Index i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
          if (!masked[static_cast<std::size_t>(j)]) mx = std::max(mx, s(i, j));
        }
        double sum = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          const double e = masked[static_cast<std::size_t>(j)] ? 0.0 : std::exp(s(i, j) - mx);
          s(i, j) = e;
          sum += e;
        }
        s.row(i) /= sum;
      }
      context.middleCols(h * dk, dk).noalias() = s * v.middleCols(h * dk, dk);
      attention[static_cast<std::size_t>(h)] = std::move(s);
    }
    const Tensor h1 = x + affine(context, l.wo, l.bo);
    Tensor xhat1, xhat2;
    Vec rstd1, rstd2;
    Tensor y1 = layer_norm(h1, l.ln1_scale, l.ln1_offset, xhat1, rstd1);
    Tensor ff_pre = affine(y1, l.w1, l.b1);
    Tensor ff_act = ff_pre.cwiseMax(0.0);
    const Tensor h2 = y1 + affine(ff_act, l.w2, l.b2);
    Tensor y2 = layer_norm(h2, l.ln2_scale, l.ln2_offset, xhat2, rstd2);

    out.attentions.push_back(attention);
    if (trace) {
      auto& t = trace->layers[li];
      t.input = std::move(x);
      t.q = std::move(q);
      t.k = std::move(k);
      t.v = std::move(v);
      t.context = std::move(context);
      t.attention = std::move(attention);
      t.xhat1 = std::move(xhat1);
      t.rstd1 = std::move(rstd1);
      t.y1 = std::move(y1);
      t.ff_pre = std::move(ff_pre);
      t.ff_act = std::move(ff_act);
      t.xhat2 = std::move(xhat2);
      t.rstd2 = std::move(rstd2);
    }
    x = std::move(y2);
  }
  out.cls_vector = x.row(0).transpose();
  for (const auto& a : seq.anchors) {
    if (static_cast<Eigen::Index>(a.position) >= n) throw UsageError("anchor position out of range");
    out.anchor_vectors.push_back({a, x.row(static_cast<Eigen::Index>(a.position)).transpose()});
  }
  out.token_vectors = std::move(x);
  return out;
}

void accumulate_encoder_gradients(const EncoderParams& params, const EncoderTrace& trace,
                                  const Tensor& upstream, EncoderParams& grads) {
  const auto n = static_cast<Eigen::Index>(trace.token_ids.size());
  const int d = params.config.d_model;
  if (upstream.rows() != n || upstream.cols() != d || trace.layers.size() != params.layers.size()) {
    throw UsageError("upstream gradient shape does not match the encoded sequence");
  }
  const int heads = params.config.n_heads;
  const int dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor dy = upstream;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& l = params.layers[li];
    const auto& t = trace.layers[li];
    auto& g = grads.layers[li];

    const Tensor dh2 = layer_norm_backward(dy, t.xhat2, t.rstd2, l.ln2_scale, g.ln2_scale, g.ln2_offset);
    Tensor dy1 = dh2;
    Tensor dact = Tensor::Zero(n, t.ff_act.cols());
    affine_backward(t.ff_act, l.w2, dh2, g.w2, g.b2, &dact);
    const Tensor dpre = (t.ff_pre.array() > 0.0).select(dact, 0.0);
    affine_backward(t.y1, l.w1, dpre, g.w1, g.b1, &dy1);

    const Tensor dh1 = layer_norm_backward(dy1, t.xhat1, t.rstd1, l.ln1_scale, g.ln1_scale, g.ln1_offset);
    Tensor dx = dh1;
    Tensor dcontext = Tensor::Zero(n, d);
    affine_backward(t.context, l.wo, dh1, g.wo, g.bo, &dcontext);

    Tensor dq(n, d), dk_all(n, d), dv(n, d);
    for (int h = 0; h < heads; ++h) {
      const auto& a = t.attention[static_cast<std::size_t>(h)];
      const auto dctx_h = dcontext.middleCols(h * dk, dk);
      const Tensor da = dctx_h * t.v.middleCols(h * dk, dk).transpose();
      dv.middleCols(h * dk, dk).noalias() = a.transpose() * dctx_h;
      Tensor ds = a.cwiseProduct(da);
      const Vec row_dot = ds.rowwise().sum();
      ds -= (a.array().colwise() * row_dot.array()).matrix();
      ds *= scale;
      dq.middleCols(h * dk, dk).noalias() = ds * t.k.middleCols(h * dk, dk);
      dk_all.middleCols(h * dk, dk).noalias() = ds.transpose() * t.q.middleCols(h * dk, dk);
    }
    affine_backward(t.input, l.wq, dq, g.wq, g.bq, &dx);
    affine_backward(t.input, l.wk, dk_all, g.wk, g.bk, &dx);
    affine_backward(t.input, l.wv, dv, g.wv, g.bv, &dx);
    dy = std::move(dx);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    grads.token_embeddings.row(trace.token_ids[static_cast<std::size_t>(i)]) += dy.row(i);
    grads.position_embeddings.row(i) += dy.row(i);
  }
}

EncoderParams encoder_gradients(const EncoderParams& params, const EncoderTrace& trace, const Tensor& upstream) {
  EncoderParams grads = params.zeros_like();
  accumulate_encoder_gradients(params, trace, upstream, grads);
  return grads;
}

void append_encoder_tensors(const EncoderParams& params, const std::string& prefix, Checkpoint& c) {
  for (const auto& [name, t] : params.named()) c.tensors.emplace_back(prefix + name, *t);
}

EncoderParams encoder_from_checkpoint(const Checkpoint& c, const EncoderConfig& cfg, const std::string& prefix) {
  cfg.validate();
  EncoderConfig shape = cfg;
  EncoderParams p = init_encoder(shape);
  for (auto& [name, t] : p.named()) {
    const Tensor& stored = c.tensor(prefix + name);
    if (stored.rows() != t->rows() || stored.cols() != t->cols()) {
      throw DataError("checkpoint tensor '" + prefix + name + "' has the wrong shape");
    }
    *t = stored;
  }
  if (!p.all_finite()) throw DataError("checkpoint contains non-finite parameters");
  return p;
}

void save_encoder(const EncoderParams& params, const std::string& path) {
  Checkpoint c;
  c.header["kind"] = "encoder";
  c.header["config"] = params.config.to_json();
  append_encoder_tensors(params, "", c);
  write_checkpoint(c, path);
}

EncoderParams load_encoder(const std::string& path) {
  const Checkpoint c = read_checkpoint(path);
  if (c.header.value("kind", "") != "encoder") throw DataError("'" + path + "' is not an encoder checkpoint");
  return encoder_from_checkpoint(c, EncoderConfig::from_json(c.header.at("config")), "");
}

}  // namespace gem
