// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "hrt/errors.hpp"
#include "hrt/rng.hpp"

namespace hrt {

using Index = Eigen::Index;

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Activations of shape [time, batch, features], stored as a row-major
/// (time * batch) x features matrix with row index t * batch + b.
template <typename T>
class SequenceTensor {
 public:
  SequenceTensor() = default;

  SequenceTensor(Index time, Index batch, Index features)
      : time_(time), batch_(batch), data_(Matrix<T>::Zero(time * batch, features)) {}

  SequenceTensor(Index time, Index batch, Matrix<T> data)
      : time_(time), batch_(batch), data_(std::move(data)) {
    if (data_.rows() != time_ * batch_) {
      throw ShapeError("sequence tensor rows " + std::to_string(data_.rows()) +
                       " != time * batch " + std::to_string(time_ * batch_));
    }
  }

  Index time() const { return time_; }
  Index batch() const { return batch_; }
  Index features() const { return data_.cols(); }
  bool empty() const { return time_ == 0; }

  Matrix<T>& data() { return data_; }
  const Matrix<T>& data() const { return data_; }

  T& at(Index t, Index b, Index d) { return data_(t * batch_ + b, d); }
  T at(Index t, Index b, Index d) const { return data_(t * batch_ + b, d); }

  /// The [batch, features] slice at time-step t.
  auto step(Index t) { return data_.middleRows(t * batch_, batch_); }
  auto step(Index t) const { return data_.middleRows(t * batch_, batch_); }

  template <typename U>
  SequenceTensor<U> cast() const {
    return SequenceTensor<U>(time_, batch_, data_.template cast<U>().eval());
  }

 private:
  Index time_ = 0;
  Index batch_ = 0;
  Matrix<T> data_;
};

/// A trainable tensor and its gradient accumulator. Vectors are 1 x n.
template <typename T>
struct Parameter {
  Parameter() = default;
  Parameter(std::string name_, Index rows, Index cols, bool embedding_ = false)
      : name(std::move(name_)),
        value(Matrix<T>::Zero(rows, cols)),
        grad(Matrix<T>::Zero(rows, cols)),
        embedding(embedding_) {}

  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  /// Counted as an embedding/output-head parameter by parameter accounting.
  bool embedding = false;

  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Fills `p` with U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn from `key`.
template <typename T>
void init_fan_in_uniform(Parameter<T>& p, Index fan_in, RngKey key) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  T* data = p.value.data();
  for (Index i = 0; i < p.value.size(); ++i) {
    data[i] = static_cast<T>((2.0 * key.uniform(static_cast<std::uint64_t>(i)) - 1.0) * bound);
  }
}

/// Per-call settings shared by every layer of a forward pass.
struct ForwardContext {
  bool training = false;
  /// Key for this layer's stochastic masks; layers split it further.
  RngKey key{};
  /// Global index of batch column 0, so micro-batches reproduce the masks a
  /// full batch would draw for the same columns.
  Index column_offset = 0;

  ForwardContext with_key(RngKey k) const {
    ForwardContext c = *this;
    c.key = k;
    return c;
  }
};

}  // namespace hrt
