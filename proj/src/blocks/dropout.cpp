// SPDX-License-Identifier: Apache-2.0
#include "hrt/blocks/dropout.hpp"

#include <cmath>

namespace hrt {

void check_dropout_rate(double rate, const std::string& what) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError(what + " must be in [0, 1), got " + std::to_string(rate), what);
  }
}

template <typename T>
DropoutMask<T> rnn_dropout_mask(Index batch, Index features, double rate, RngKey key,
                                Index column_offset) {
  check_dropout_rate(rate, "rnn dropout rate");
  DropoutMask<T> m;
  m.scale = static_cast<T>(1.0 / (1.0 - rate));
  m.mask.resize(batch, features);
  for (Index b = 0; b < batch; ++b) {
    const RngKey col = key.split(static_cast<std::uint64_t>(column_offset + b));
    for (Index d = 0; d < features; ++d) {
      m.mask(b, d) = col.uniform(static_cast<std::uint64_t>(d)) < rate ? T(0) : m.scale;
    }
  }
  return m;
}

template <typename T>
DropoutMask<T> element_dropout_mask(Index time, Index batch, Index features, double rate,
                                    RngKey key, Index column_offset) {
  check_dropout_rate(rate, "dropout rate");
  DropoutMask<T> m;
  m.scale = static_cast<T>(1.0 / (1.0 - rate));
  m.mask.resize(time * batch, features);
  for (Index b = 0; b < batch; ++b) {
    const RngKey col = key.split(static_cast<std::uint64_t>(column_offset + b));
    for (Index t = 0; t < time; ++t) {
      T* row = m.mask.row(t * batch + b).data();
      const auto base = static_cast<std::uint64_t>(t * features);
      for (Index d = 0; d < features; ++d) {
        row[d] = col.uniform(base + static_cast<std::uint64_t>(d)) < rate ? T(0) : m.scale;
      }
    }
  }
  return m;
}

template <typename T>
DropoutMask<T> weight_drop_mask(Index rows, Index cols, double rate, RngKey key) {
  check_dropout_rate(rate, "weight drop rate");
  DropoutMask<T> m;
  m.scale = static_cast<T>(1.0 / (1.0 - rate));
  m.mask.resize(rows, cols);
  T* data = m.mask.data();
  for (Index i = 0; i < m.mask.size(); ++i) {
    data[i] = key.uniform(static_cast<std::uint64_t>(i)) < rate ? T(0) : m.scale;
  }
  return m;
}

template <typename T>
SequenceTensor<T> rnn_dropout(const SequenceTensor<T>& x, double rate, bool training, RngKey key,
                              Index column_offset) {
  check_dropout_rate(rate, "rnn dropout rate");
  if (!training || rate == 0.0) return x;
  const auto m = rnn_dropout_mask<T>(x.batch(), x.features(), rate, key, column_offset);
  SequenceTensor<T> y = x;
  for (Index t = 0; t < x.time(); ++t) y.step(t).array() *= m.mask.array();
  return y;
}

#define HRT_INSTANTIATE(T)                                                                        \
  template DropoutMask<T> rnn_dropout_mask<T>(Index, Index, double, RngKey, Index);               \
  template DropoutMask<T> element_dropout_mask<T>(Index, Index, Index, double, RngKey, Index);    \
  template DropoutMask<T> weight_drop_mask<T>(Index, Index, double, RngKey);                      \
  template SequenceTensor<T> rnn_dropout<T>(const SequenceTensor<T>&, double, bool, RngKey, Index);
HRT_INSTANTIATE(float)
HRT_INSTANTIATE(double)
#undef HRT_INSTANTIATE

template <typename T>
RnnDropout<T>::RnnDropout(double rate) : rate_(rate) {
  check_dropout_rate(rate, "rnn dropout rate");
}

template <typename T>
SequenceTensor<T> RnnDropout<T>::forward(const SequenceTensor<T>& x, const ForwardContext& ctx) {
  active_ = ctx.training && rate_ > 0.0;
  if (!active_) return x;
  mask_ = rnn_dropout_mask<T>(x.batch(), x.features(), rate_, ctx.key, ctx.column_offset).mask;
  SequenceTensor<T> y = x;
  for (Index t = 0; t < x.time(); ++t) y.step(t).array() *= mask_.array();
  return y;
}

template <typename T>
SequenceTensor<T> RnnDropout<T>::backward(const SequenceTensor<T>& grad) const {
  if (!active_) return grad;
  SequenceTensor<T> dx = grad;
  for (Index t = 0; t < grad.time(); ++t) dx.step(t).array() *= mask_.array();
  return dx;
}

template class RnnDropout<float>;
template class RnnDropout<double>;

}  // namespace hrt
