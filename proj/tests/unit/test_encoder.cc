#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "../support/gradcheck.h"
#include "gem/encoder.h"
#include "gem/error.h"

using namespace gem;

namespace {

EncoderConfig small_config(std::uint64_t seed = 3) {
  EncoderConfig c;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.max_len = 16;
  c.vocab_size = 20;
  c.seed = seed;
  return c;
}

SerializedSequence random_sequence(std::size_t n, int vocab, Rng& rng) {
  SerializedSequence s;
  s.token_ids.push_back(Vocabulary::kCls);
  while (s.token_ids.size() < n) s.token_ids.push_back(6 + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - 6))));
  s.anchors = {{"a", 1}, {"b", 4}};
  return s;
}

// Bumps every parameter slightly so layer-norm scales and biases are not at
// their symmetric initial values.
void perturb(EncoderParams& p, Rng& rng) {
  for (auto& [name, t] : p.named()) {
    for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] += rng.uniform(-0.3, 0.3);
  }
}

}  // namespace

TEST_CASE("init is deterministic per seed") {
  const auto a = init_encoder(small_config(5));
  const auto b = init_encoder(small_config(5));
  const auto c = init_encoder(small_config(6));
  CHECK(a.token_embeddings == b.token_embeddings);
  CHECK(a.layers[1].w2 == b.layers[1].w2);
  CHECK(a.token_embeddings != c.token_embeddings);
  CHECK(a.layers[0].ln1_scale == Tensor::Ones(1, 8));
  CHECK(a.layers[0].ln2_offset == Tensor::Zero(1, 8));
}

TEST_CASE("xavier bounds hold") {
  const auto p = init_encoder(small_config());
  const double limit = std::sqrt(6.0 / 16.0);
  CHECK(p.layers[0].wq.cwiseAbs().maxCoeff() <= limit);
  CHECK(p.layers[0].bq.isZero());
}

TEST_CASE("invalid configs are rejected") {
  auto c = small_config();
  c.n_heads = 3;
  CHECK_THROWS_AS(init_encoder(c), UsageError);
  c = small_config();
  c.d_model = 0;
  CHECK_THROWS_AS(init_encoder(c), UsageError);
}

TEST_CASE("zero embeddings give finite output") {
  auto p = init_encoder(small_config());
  p.token_embeddings.setZero();
  p.position_embeddings.setZero();
  SerializedSequence s;
  s.token_ids = {2, 7, 8};
  const auto out = encode(p, s);
  CHECK(out.token_vectors.allFinite());
}

TEST_CASE("single token attends to itself") {
  const auto p = init_encoder(small_config());
  SerializedSequence s;
  s.token_ids = {2};
  const auto out = encode(p, s);
  for (const auto& layer : out.attentions) {
    for (const auto& head : layer) {
      REQUIRE(head.rows() == 1);
      CHECK(head(0, 0) == 1.0);
    }
  }
}

TEST_CASE("attention rows are distributions over unpadded keys") {
  const auto p = init_encoder(small_config());
  Rng rng(1);
  auto s = random_sequence(12, 20, rng);
  s.token_ids[10] = Vocabulary::kPad;
  s.token_ids[11] = Vocabulary::kPad;
  const auto out = encode(p, s);
  REQUIRE(out.attentions.size() == 2);
  for (const auto& layer : out.attentions) {
    REQUIRE(layer.size() == 2);
    for (const auto& head : layer) {
      for (Eigen::Index i = 0; i < head.rows(); ++i) {
        CHECK(std::abs(head.row(i).sum() - 1.0) < 1e-6);
        CHECK(head(i, 10) == 0.0);
        CHECK(head(i, 11) == 0.0);
        CHECK(head.row(i).minCoeff() >= 0.0);
      }
    }
  }
}

TEST_CASE("positions break permutation symmetry") {
  const auto p = init_encoder(small_config());
  SerializedSequence s;
  s.token_ids = {2, 7, 8, 9};
  auto swapped = s;
  std::swap(swapped.token_ids[1], swapped.token_ids[2]);
  CHECK(encode(p, s).token_vectors != encode(p, swapped).token_vectors);
}

TEST_CASE("encode is bitwise deterministic and reads anchors") {
  const auto p = init_encoder(small_config());
  Rng rng(2);
  const auto s = random_sequence(10, 20, rng);
  const auto a = encode(p, s);
  const auto b = encode(p, s);
  CHECK(a.token_vectors == b.token_vectors);
  REQUIRE(a.anchor_vectors.size() == 2);
  CHECK(a.anchor_vectors[1].anchor.attribute == "b");
  CHECK(a.anchor_vectors[1].vector == a.token_vectors.row(4).transpose());
  CHECK(a.cls_vector == a.token_vectors.row(0).transpose());
}

TEST_CASE("sequences longer than max_len are rejected") {
  const auto p = init_encoder(small_config());
  SerializedSequence s;
  s.token_ids.assign(17, 7);
  CHECK_THROWS_AS(encode(p, s), UsageError);
}

TEST_CASE("gradients are linear in the upstream gradient") {
  auto p = init_encoder(small_config());
  Rng rng(4);
  const auto s = random_sequence(10, 20, rng);
  EncoderTrace trace;
  encode(p, s, &trace);
  const auto zero = encoder_gradients(p, trace, Tensor::Zero(10, 8));
  for (const auto& [name, t] : zero.named()) CHECK_MESSAGE(t->isZero(), name);

  Tensor up = Tensor::Random(10, 8);
  const auto g1 = encoder_gradients(p, trace, up);
  const auto g2 = encoder_gradients(p, trace, 2.0 * up);
  const auto n1 = g1.named();
  const auto n2 = g2.named();
  for (std::size_t i = 0; i < n1.size(); ++i) {
    CHECK_MESSAGE((*n2[i].second - 2.0 * *n1[i].second).cwiseAbs().maxCoeff() <= 1e-12 * (1 + n1[i].second->cwiseAbs().maxCoeff()), n1[i].first);
  }
  CHECK_THROWS_AS(encoder_gradients(p, trace, Tensor::Zero(9, 8)), UsageError);
}

TEST_CASE("gradients match finite differences for every tensor") {
  auto p = init_encoder(small_config(11));
  Rng rng(12);
  perturb(p, rng);
  auto s = random_sequence(12, 20, rng);
  s.token_ids[11] = Vocabulary::kPad;
  const Tensor up = [&] {
    Tensor u(12, 8);
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = rng.uniform(-1, 1);
    return u;
  }();
  const auto loss = [&] { return (encode(p, s).token_vectors.array() * up.array()).sum(); };
  EncoderTrace trace;
  encode(p, s, &trace);
  const auto grads = encoder_gradients(p, trace, up);
  const auto r = testing::check_gradients(p.named(), grads.named(), loss, 7, rng);
  MESSAGE("checked ", r.checked, " worst ", r.worst);
  CHECK(r.checked >= 200);
  CHECK(r.max_error < 1e-4);
}

TEST_CASE("checkpoint round trip is bit exact") {
  auto p = init_encoder(small_config());
  Rng rng(9);
  perturb(p, rng);
  const auto path = (std::filesystem::temp_directory_path() / "gem_encoder_test.ckpt").string();
  save_encoder(p, path);
  const auto q = load_encoder(path);
  const auto a = p.named();
  const auto b = q.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
  CHECK(q.config.to_json() == p.config.to_json());
  std::filesystem::remove(path);
}
