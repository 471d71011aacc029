// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hrt/tensor.hpp"

namespace hrt {

/// Per-row standardization (x - mean) / sqrt(var + eps), no gain or bias.
template <typename T>
Matrix<T> normalize_rows(const Matrix<T>& x, double epsilon = 1e-5);

/// Feature-wise layer normalization with learned gain (init 1) and bias
/// (init 0). Caches the last forward for `backward`.
template <typename T>
class LayerNorm {
 public:
  static constexpr double kEpsilon = 1e-5;

  LayerNorm() = default;
  LayerNorm(const std::string& name, Index dim);

  Matrix<T> forward(const Matrix<T>& x);
  /// Accumulates gain/bias gradients and returns d(input).
  Matrix<T> backward(const Matrix<T>& grad);

  Parameter<T>& gain() { return gain_; }
  Parameter<T>& bias() { return bias_; }
  std::vector<Parameter<T>*> parameters() { return {&gain_, &bias_}; }

 private:
  Parameter<T> gain_;
  Parameter<T> bias_;
  Matrix<T> normalized_;
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std_;
};

extern template class LayerNorm<float>;
extern template class LayerNorm<double>;

}  // namespace hrt
