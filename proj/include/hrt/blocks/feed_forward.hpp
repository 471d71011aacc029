// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hrt/blocks/dropout.hpp"
#include "hrt/blocks/layer_norm.hpp"
#include "hrt/tensor.hpp"

namespace hrt {

struct FeedForwardConfig {
  Index embed_dim = 512;
  Index boom_dim = 2048;
  double dropout_rate = 0.0;

  void validate() const;
};

/// The `f` block: y = LayerNorm(x + Drop(W2 Drop(ReLU(W1 x + b1)) + b2)).
template <typename T>
class FeedForward {
 public:
  FeedForward(const FeedForwardConfig& cfg, const std::string& name, RngKey init_key);

  const FeedForwardConfig& config() const { return cfg_; }

  SequenceTensor<T> forward(const SequenceTensor<T>& x, const ForwardContext& ctx);
  SequenceTensor<T> backward(const SequenceTensor<T>& grad);

  Parameter<T>& boom_weight() { return w1_; }
  Parameter<T>& boom_bias() { return b1_; }
  Parameter<T>& down_weight() { return w2_; }
  Parameter<T>& down_bias() { return b2_; }
  LayerNorm<T>& norm() { return norm_; }
  std::vector<Parameter<T>*> parameters();

 private:
  FeedForwardConfig cfg_;
  Parameter<T> w1_;  // [boom, embed]
  Parameter<T> b1_;
  Parameter<T> w2_;  // [embed, boom]
  Parameter<T> b2_;
  LayerNorm<T> norm_;

  // forward cache
  Index time_ = 0;
  Index batch_ = 0;
  bool dropout_active_ = false;
  Matrix<T> input_;
  Matrix<T> pre_activation_;
  Matrix<T> hidden_;  // after ReLU and dropout
  Matrix<T> mask1_;
  Matrix<T> mask2_;
};

extern template class FeedForward<float>;
extern template class FeedForward<double>;

}  // namespace hrt
