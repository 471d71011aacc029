// SPDX-License-Identifier: Apache-2.0
#include "hrt/blocks/layer_norm.hpp"

namespace hrt {

template <typename T>
Matrix<T> normalize_rows(const Matrix<T>& x, double epsilon) {
  Matrix<T> out(x.rows(), x.cols());
  const T n = static_cast<T>(x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).sum() / n;
    const T var = (x.row(r).array() - mean).square().sum() / n;
    const T inv = T(1) / std::sqrt(var + static_cast<T>(epsilon));
    out.row(r) = (x.row(r).array() - mean) * inv;
  }
  return out;
}

template Matrix<float> normalize_rows(const Matrix<float>&, double);
template Matrix<double> normalize_rows(const Matrix<double>&, double);

template <typename T>
LayerNorm<T>::LayerNorm(const std::string& name, Index dim)
    : gain_(name + ".gain", 1, dim), bias_(name + ".bias", 1, dim) {
  gain_.value.setOnes();
}

template <typename T>
Matrix<T> LayerNorm<T>::forward(const Matrix<T>& x) {
  if (x.cols() != gain_.value.cols()) {
    throw ShapeError("layer norm expects " + std::to_string(gain_.value.cols()) + " features, got " +
                     std::to_string(x.cols()));
  }
  const Index rows = x.rows();
  const T n = static_cast<T>(x.cols());
  normalized_.resize(rows, x.cols());
  inv_std_.resize(rows);
  for (Index r = 0; r < rows; ++r) {
    const T mean = x.row(r).sum() / n;
    const T var = (x.row(r).array() - mean).square().sum() / n;
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kEpsilon));
    inv_std_(r) = inv;
    normalized_.row(r) = (x.row(r).array() - mean) * inv;
  }
  Matrix<T> y = normalized_;
  y.array().rowwise() *= gain_.value.row(0).array();
  y.rowwise() += bias_.value.row(0);
  return y;
}

template <typename T>
Matrix<T> LayerNorm<T>::backward(const Matrix<T>& grad) {
  gain_.grad.row(0) += (grad.array() * normalized_.array()).colwise().sum().matrix();
  bias_.grad.row(0) += grad.colwise().sum();

  Matrix<T> dxhat = grad;
  dxhat.array().rowwise() *= gain_.value.row(0).array();
  const T n = static_cast<T>(grad.cols());
  Matrix<T> dx(grad.rows(), grad.cols());
  for (Index r = 0; r < grad.rows(); ++r) {
    const T mean_d = dxhat.row(r).sum() / n;
    const T mean_dx = dxhat.row(r).dot(normalized_.row(r)) / n;
    dx.row(r) = inv_std_(r) * (dxhat.row(r).array() - mean_d - normalized_.row(r).array() * mean_dx);
  }
  return dx;
}

template class LayerNorm<float>;
template class LayerNorm<double>;

}  // namespace hrt
