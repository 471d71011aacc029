// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "hrt/tensor.hpp"

namespace hrt {

/// Throws ConfigError unless 0 <= rate < 1.
void check_dropout_rate(double rate, const std::string& what);

/// Multiplicative mask with entries in {0, scale}, scale = 1 / (1 - rate).
template <typename T>
struct DropoutMask {
  Matrix<T> mask;
  T scale = T(1);
};

/// One Bernoulli(1 - rate) draw per (batch column, feature); the caller reuses
/// it for every time-step. Column b draws from key.split(column_offset + b).
template <typename T>
DropoutMask<T> rnn_dropout_mask(Index batch, Index features, double rate, RngKey key,
                                Index column_offset = 0);

/// Independent draw for every (t, b, d) entry of a [time * batch, features]
/// activation.
template <typename T>
DropoutMask<T> element_dropout_mask(Index time, Index batch, Index features, double rate,
                                    RngKey key, Index column_offset = 0);

/// DropConnect mask over the entries of a weight matrix.
template <typename T>
DropoutMask<T> weight_drop_mask(Index rows, Index cols, double rate, RngKey key);

/// Variational ("locked") dropout: zeroes fixed feature dimensions of each
/// sequence for the whole window. Identity in eval mode.
template <typename T>
SequenceTensor<T> rnn_dropout(const SequenceTensor<T>& x, double rate, bool training, RngKey key,
                              Index column_offset = 0);

/// The `|` block.
template <typename T>
class RnnDropout {
 public:
  explicit RnnDropout(double rate);

  double rate() const { return rate_; }
  SequenceTensor<T> forward(const SequenceTensor<T>& x, const ForwardContext& ctx);
  SequenceTensor<T> backward(const SequenceTensor<T>& grad) const;

 private:
  double rate_;
  bool active_ = false;
  Matrix<T> mask_;
};

extern template class RnnDropout<float>;
extern template class RnnDropout<double>;

}  // namespace hrt
