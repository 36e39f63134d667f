#include "gem/pooling.h"

#include <set>

#include "gem/error.h"

namespace gem {
namespace {

Tensor stack(const AttributeVectors& vs, Eigen::Index d) {
  Tensor t(static_cast<Eigen::Index>(vs.size()), d);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (vs[i].second.size() != d) throw UsageError("attribute vector dimension mismatch at '" + vs[i].first + "'");
    t.row(static_cast<Eigen::Index>(i)) = vs[i].second.transpose();
  }
  return t;
}

const Vec* lookup(const AttributeVectors& vs, const std::string& name) {
  for (const auto& [n, v] : vs) {
    if (n == name) return &v;
  }
  return nullptr;
}

Tensor as_rows(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = v(i);
  return t;
}

}  // namespace

std::string to_string(SchemaMode m) { return m == SchemaMode::Homo ? "homo" : "heter"; }

SchemaMode schema_mode_from_string(const std::string& s) {
  if (s == "homo") return SchemaMode::Homo;
  if (s == "heter") return SchemaMode::Heter;
  throw UsageError("unknown schema mode '" + s + "' (expected homo or heter)");
}

void AttributeAlignment::validate() const {
  if (names.empty()) throw UsageError("alignment needs at least one attribute");
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw UsageError("alignment repeats attribute '" + n + "'");
  }
}

Vec pool_homo(const Tensor& left, const Tensor& right) {
  if (left.rows() != right.rows() || left.cols() != right.cols()) {
    throw UsageError("homo pooling needs aligned inputs of equal shape");
  }
  Vec out(left.size());
  for (Eigen::Index i = 0; i < left.rows(); ++i) {
    for (Eigen::Index k = 0; k < left.cols(); ++k) out(i * left.cols() + k) = left(i, k) * right(i, k);
  }
  return out;
}

Vec pool_heter(const Tensor& left, const Tensor& right, Eigen::MatrixXi* argmax) {
  if (left.rows() == 0 || right.rows() == 0) throw UsageError("heter pooling needs both sides nonempty");
  if (left.cols() != right.cols()) throw UsageError("heter pooling dimension mismatch");
  const Eigen::Index d = left.cols();
  Vec out(left.rows() * d);
  if (argmax) argmax->resize(left.rows(), d);
  for (Eigen::Index i = 0; i < left.rows(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      double best = left(i, k) * right(0, k);
      int best_j = 0;
      for (Eigen::Index j = 1; j < right.rows(); ++j) {
        const double v = left(i, k) * right(j, k);
        if (v > best) {
          best = v;
          best_j = static_cast<int>(j);
        }
      }
      out(i * d + k) = best;
      if (argmax) (*argmax)(i, k) = best_j;
    }
  }
  return out;
}

PoolGradients pool_homo_backward(const Tensor& left, const Tensor& right, const Vec& upstream) {
  if (upstream.size() != left.size() || left.rows() != right.rows() || left.cols() != right.cols()) {
    throw UsageError("homo pooling gradient shape mismatch");
  }
  const Tensor up = as_rows(upstream, left.rows(), left.cols());
  return {up.cwiseProduct(right), up.cwiseProduct(left)};
}

PoolGradients pool_heter_backward(const Tensor& left, const Tensor& right, const Eigen::MatrixXi& argmax,
                                  const Vec& upstream) {
  if (upstream.size() != left.size() || argmax.rows() != left.rows() || argmax.cols() != left.cols() ||
      right.cols() != left.cols()) {
    throw UsageError("heter pooling gradient shape mismatch");
  }
  const Eigen::Index d = left.cols();
  PoolGradients g{Tensor::Zero(left.rows(), d), Tensor::Zero(right.rows(), d)};
  for (Eigen::Index i = 0; i < left.rows(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const int j = argmax(i, k);
      const double u = upstream(i * d + k);
      g.left(i, k) += u * right(j, k);
      g.right(j, k) += u * left(i, k);
    }
  }
  return g;
}

Vec pooling_homo(const AttributeVectors& left, const AttributeVectors& right,
                 const AttributeAlignment& alignment, int d) {
  alignment.validate();
  const auto n = static_cast<Eigen::Index>(alignment.names.size());
  Tensor l = Tensor::Zero(n, d);
  Tensor r = Tensor::Zero(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& name = alignment.names[static_cast<std::size_t>(i)];
    for (auto [side, out] : {std::pair{&left, &l}, std::pair{&right, &r}}) {
      if (const Vec* v = lookup(*side, name)) {
        if (v->size() != d) throw UsageError("attribute vector dimension mismatch at '" + name + "'");
        out->row(i) = v->transpose();
      }
    }
  }
  return pool_homo(l, r);
}

Vec pooling_heter(const AttributeVectors& left, const AttributeVectors& right) {
  if (left.empty() || right.empty()) throw UsageError("heter pooling needs both sides nonempty");
  const Eigen::Index d = left.front().second.size();
  return pool_heter(stack(left, d), stack(right, d));
}

Vec siamese_pool(const Vec& cls_a, const Vec& cls_b, const Vec& attr_features) {
  if (cls_a.size() != cls_b.size()) throw UsageError("cls vectors differ in dimension");
  Vec out(cls_a.size() + cls_b.size() + attr_features.size());
  out << cls_a, cls_b, attr_features;
  return out;
}

}  // namespace gem
