#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gem/tensor.h"

namespace gem {

enum class SchemaMode { Homo, Heter };

std::string to_string(SchemaMode m);
// Accepts "homo" / "heter"; throws UsageError otherwise.
SchemaMode schema_mode_from_string(const std::string& s);

// Ordered attribute name -> vector map.
using AttributeVectors = std::vector<std::pair<std::string, Vec>>;

struct AttributeAlignment {
  std::vector<std::string> names;

  // Throws UsageError when empty or names repeat.
  void validate() const;
};

// Row-stacked forms used inside the model. Row i of `left` and `right` in
// pool_homo are the aligned pair i.
Vec pool_homo(const Tensor& left, const Tensor& right);
// For each left row i: elementwise max over right rows j of left_i * right_j.
// argmax (n x d, optional) receives the first j attaining each maximum.
Vec pool_heter(const Tensor& left, const Tensor& right, Eigen::MatrixXi* argmax = nullptr);

struct PoolGradients {
  Tensor left;
  Tensor right;
};

PoolGradients pool_homo_backward(const Tensor& left, const Tensor& right, const Vec& upstream);
PoolGradients pool_heter_backward(const Tensor& left, const Tensor& right, const Eigen::MatrixXi& argmax,
                                  const Vec& upstream);

// Map forms. Homo zero-fills aligned names missing on a side; d is the
// vector dimension. Throws UsageError on dimension mismatch.
Vec pooling_homo(const AttributeVectors& left, const AttributeVectors& right,
                 const AttributeAlignment& alignment, int d);
// Throws UsageError when either side is empty or dimensions differ.
Vec pooling_heter(const AttributeVectors& left, const AttributeVectors& right);

// cls_a + cls_b + attr_features. Throws UsageError when cls sizes differ.
Vec siamese_pool(const Vec& cls_a, const Vec& cls_b, const Vec& attr_features);

}  // namespace gem
