#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gem/checkpoint.h"
#include "gem/serializer.h"
#include "gem/tensor.h"

namespace gem {

struct EncoderConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ff_dim = 0;  // 0 means 4 * d_model
  int max_len = 256;
  int vocab_size = 0;
  std::uint64_t seed = 0;
  // Token embeddings start N(0, token_init_std^2); everything else is Xavier.
  double token_init_std = 1.5;

  int effective_ff_dim() const { return ff_dim > 0 ? ff_dim : 4 * d_model; }
  // Throws UsageError on non-positive dims or d_model % n_heads != 0.
  void validate() const;

  Json to_json() const;
  static EncoderConfig from_json(const Json& j);
};

struct EncoderLayer {
  Tensor wq, wk, wv, wo;  // d x d
  Tensor bq, bk, bv, bo;  // 1 x d
  Tensor w1, b1;          // d x ff, 1 x ff
  Tensor w2, b2;          // ff x d, 1 x d
  Tensor ln1_scale, ln1_offset, ln2_scale, ln2_offset;  // 1 x d
};

struct EncoderParams {
  EncoderConfig config;
  Tensor token_embeddings;     // vocab x d
  Tensor position_embeddings;  // max_len x d
  std::vector<EncoderLayer> layers;

  // Every tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;

  // Same shapes, all zeros.
  EncoderParams zeros_like() const;
  void set_zero();
  void add(const EncoderParams& other, double scale = 1.0);
  std::size_t parameter_count() const;
  bool all_finite() const;
};

// Normal token embeddings, Xavier-uniform elsewhere, zero biases, layer-norm
// scale 1 and offset 0.
EncoderParams init_encoder(const EncoderConfig& cfg);

struct AnchorVector {
  Anchor anchor;
  Vec vector;
};

struct EncodedEntity {
  Tensor token_vectors;  // seq_len x d
  Vec cls_vector;
  std::vector<AnchorVector> anchor_vectors;  // in anchor (position) order
  // attentions[layer][head] is seq_len x seq_len.
  std::vector<std::vector<Tensor>> attentions;
};

// Activations kept for the backward pass.
struct EncoderTrace {
  std::vector<int> token_ids;
  struct Layer {
    Tensor input, q, k, v, context;
    std::vector<Tensor> attention;
    Tensor xhat1, xhat2, y1, ff_pre, ff_act;
    Vec rstd1, rstd2;
  };
  std::vector<Layer> layers;
};

// Positions holding [PAD] are masked out as attention keys. Throws
// UsageError when the sequence is empty or longer than max_len.
EncodedEntity encode(const EncoderParams& params, const SerializedSequence& seq,
                     EncoderTrace* trace = nullptr);

// Adds d(loss)/d(params) into grads given d(loss)/d(token_vectors). Anchor and
// cls gradients are rows of `upstream`. Throws UsageError on shape mismatch.
void accumulate_encoder_gradients(const EncoderParams& params, const EncoderTrace& trace,
                                  const Tensor& upstream, EncoderParams& grads);

EncoderParams encoder_gradients(const EncoderParams& params, const EncoderTrace& trace,
                                const Tensor& upstream);

void append_encoder_tensors(const EncoderParams& params, const std::string& prefix, Checkpoint& c);
EncoderParams encoder_from_checkpoint(const Checkpoint& c, const EncoderConfig& cfg,
                                      const std::string& prefix);

void save_encoder(const EncoderParams& params, const std::string& path);
EncoderParams load_encoder(const std::string& path);

// Plug point for other encoders. Only inference is required.
class SequenceEncoder {
 public:
  virtual ~SequenceEncoder() = default;
  virtual EncodedEntity encode(const SerializedSequence& seq) const = 0;
  virtual int d_model() const = 0;
  virtual int n_layers() const = 0;
};

class TransformerEncoder : public SequenceEncoder {
 public:
  explicit TransformerEncoder(const EncoderParams& params) : params_(params) {}
  EncodedEntity encode(const SerializedSequence& seq) const override {
    return gem::encode(params_, seq);
  }
  int d_model() const override { return params_.config.d_model; }
  int n_layers() const override { return params_.config.n_layers; }

 private:
  const EncoderParams& params_;
};

}  // namespace gem
