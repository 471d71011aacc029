// SPDX-License-Identifier: Apache-2.0
#include "hrt/blocks/qrnn.hpp"

#include <algorithm>
#include <cmath>

namespace hrt {

void QrnnConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("qrnn embed_dim must be >= 1", "embed_dim");
  if (conv_width != 1 && conv_width != 2) {
    throw ConfigError("qrnn conv_width must be 1 or 2, got " + std::to_string(conv_width), "conv_width");
  }
  check_dropout_rate(weight_drop_rate, "rnn_weight_dropout");
}

template <typename T>
void QrnnState<T>::reset_columns(const std::vector<bool>& reset) {
  for (Index b = 0; b < static_cast<Index>(reset.size()); ++b) {
    if (!reset[static_cast<std::size_t>(b)]) continue;
    if (b < cell.rows()) cell.row(b).setZero();
    if (b < prev_input.rows()) prev_input.row(b).setZero();
  }
}

template struct QrnnState<float>;
template struct QrnnState<double>;

namespace {

template <typename T>
Matrix<T> build_gate_input(const SequenceTensor<T>& x, const Matrix<T>& prev_input, int conv_width) {
  if (conv_width == 1) return x.data();
  const Index B = x.batch();
  const Index D = x.features();
  Matrix<T> input(x.time() * B, 2 * D);
  input.rightCols(D) = x.data();
  if (prev_input.size() == 0) {
    input.topLeftCorner(B, D).setZero();
  } else {
    if (prev_input.rows() != B || prev_input.cols() != D) throw ShapeError("qrnn previous input shape mismatch");
    input.topLeftCorner(B, D) = prev_input;
  }
  if (x.time() > 1) input.bottomLeftCorner((x.time() - 1) * B, D) = x.data().topRows((x.time() - 1) * B);
  return input;
}

template <typename T>
QrnnGates<T> activate(const Matrix<T>& pre, Index time, Index batch, Index dim) {
  QrnnGates<T> g;
  g.z = SequenceTensor<T>(time, batch, pre.leftCols(dim).array().tanh().matrix().eval());
  g.f = SequenceTensor<T>(time, batch, (T(1) + (-pre.middleCols(dim, dim).array()).exp()).inverse().matrix().eval());
  g.o = SequenceTensor<T>(time, batch, (T(1) + (-pre.rightCols(dim).array()).exp()).inverse().matrix().eval());
  return g;
}

}  // namespace

template <typename T>
QrnnGates<T> qrnn_gates(const SequenceTensor<T>& x, const Matrix<T>& prev_input, const Matrix<T>& weight,
                        const Matrix<T>& bias, int conv_width) {
  if (conv_width != 1 && conv_width != 2) {
    throw ConfigError("qrnn conv_width must be 1 or 2, got " + std::to_string(conv_width), "conv_width");
  }
  const Index D = x.features();
  if (weight.rows() != 3 * D || weight.cols() != conv_width * D || bias.size() != 3 * D) {
    throw ShapeError("qrnn gate weights do not match input features");
  }
  const Matrix<T> input = build_gate_input(x, prev_input, conv_width);
  Matrix<T> pre(input.rows(), 3 * D);
  pre.noalias() = input * weight.transpose();
  pre.rowwise() += bias.row(0);
  return activate(pre, x.time(), x.batch(), D);
}

template <typename T>
Matrix<T> gated_linear_scan(const Matrix<T>& a, const Matrix<T>& b, const Matrix<T>& init, Index time,
                            Index batch, bool reverse, Index block_len) {
  const Index D = a.cols();
  if (a.rows() != time * batch || b.rows() != a.rows() || b.cols() != D) {
    throw ShapeError("scan inputs must share shape [time * batch, features]");
  }
  if (init.size() != 0 && (init.rows() != batch || init.cols() != D)) {
    throw ShapeError("scan initial state must be [batch, features]");
  }
  if (block_len <= 0) block_len = std::max<Index>(1, static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(time)))));

  Matrix<T> out(time * batch, D);
  Matrix<T> prod(time * batch, D);
  auto row_of = [&](Index step) { return (reverse ? time - 1 - step : step) * batch; };
  const Index blocks = (time + block_len - 1) / block_len;

  // Local scans from a zero state.
  for (Index k = 0; k < blocks; ++k) {
    const Index begin = k * block_len;
    const Index end = std::min(time, begin + block_len);
    for (Index s = begin; s < end; ++s) {
      const Index r = row_of(s);
      if (s == begin) {
        out.middleRows(r, batch) = b.middleRows(r, batch);
        prod.middleRows(r, batch) = a.middleRows(r, batch);
      } else {
        const Index p = row_of(s - 1);
        out.middleRows(r, batch).array() =
            a.middleRows(r, batch).array() * out.middleRows(p, batch).array() + b.middleRows(r, batch).array();
        prod.middleRows(r, batch).array() = a.middleRows(r, batch).array() * prod.middleRows(p, batch).array();
      }
    }
  }

  // Carries entering each block.
  std::vector<Matrix<T>> carry_in(static_cast<std::size_t>(blocks));
  Matrix<T> carry = init.size() == 0 ? Matrix<T>::Zero(batch, D) : init;
  for (Index k = 0; k < blocks; ++k) {
    carry_in[static_cast<std::size_t>(k)] = carry;
    const Index last = row_of(std::min(time, (k + 1) * block_len) - 1);
    carry = (out.middleRows(last, batch).array() + prod.middleRows(last, batch).array() * carry.array()).matrix();
  }

  for (Index k = 0; k < blocks; ++k) {
    const auto& c = carry_in[static_cast<std::size_t>(k)];
    if (k == 0 && init.size() == 0) continue;
    const Index begin = k * block_len;
    const Index end = std::min(time, begin + block_len);
    for (Index s = begin; s < end; ++s) {
      const Index r = row_of(s);
      out.middleRows(r, batch).array() += prod.middleRows(r, batch).array() * c.array();
    }
  }
  return out;
}

template <typename T>
FoPoolResult<T> fo_pool(const SequenceTensor<T>& z, const SequenceTensor<T>& f, const SequenceTensor<T>& o,
                        const Matrix<T>& c0, Index block_len) {
  if (z.time() != f.time() || z.time() != o.time() || z.batch() != f.batch() || z.batch() != o.batch() ||
      z.features() != f.features() || z.features() != o.features()) {
    throw ShapeError("fo_pool gates must share shape");
  }
  const Index time = z.time();
  const Index batch = z.batch();
  const Matrix<T> inject = ((T(1) - f.data().array()) * z.data().array()).matrix();
  FoPoolResult<T> r;
  r.cells = SequenceTensor<T>(time, batch, gated_linear_scan(f.data(), inject, c0, time, batch, false, block_len));
  r.hidden = SequenceTensor<T>(time, batch, (o.data().array() * r.cells.data().array()).matrix().eval());
  r.final_cell = r.cells.step(time - 1);
  return r;
}

template <typename T>
FoPoolGrad<T> fo_pool_backward(const SequenceTensor<T>& z, const SequenceTensor<T>& f, const SequenceTensor<T>& o,
                               const Matrix<T>& c0, const SequenceTensor<T>& cells,
                               const SequenceTensor<T>& grad_hidden) {
  const Index time = z.time();
  const Index B = z.batch();
  const Index D = z.features();
  if (grad_hidden.time() != time || grad_hidden.batch() != B || grad_hidden.features() != D ||
      cells.time() != time) {
    throw ShapeError("fo_pool_backward shapes do not match");
  }
  const auto dh = grad_hidden.data().array();

  // dc_t = dh_t * o_t + f_{t+1} * dc_{t+1}
  Matrix<T> next_f(time * B, D);
  if (time > 1) next_f.topRows((time - 1) * B) = f.data().bottomRows((time - 1) * B);
  next_f.bottomRows(B).setZero();
  const Matrix<T> direct = (dh * o.data().array()).matrix();
  const Matrix<T> dcell = gated_linear_scan(next_f, direct, Matrix<T>(), time, B, true);

  Matrix<T> prev_cell(time * B, D);
  if (c0.size() == 0) {
    prev_cell.topRows(B).setZero();
  } else {
    prev_cell.topRows(B) = c0;
  }
  if (time > 1) prev_cell.bottomRows((time - 1) * B) = cells.data().topRows((time - 1) * B);

  FoPoolGrad<T> g;
  g.z = SequenceTensor<T>(time, B, (dcell.array() * (T(1) - f.data().array())).matrix().eval());
  g.f = SequenceTensor<T>(time, B, (dcell.array() * (prev_cell.array() - z.data().array())).matrix().eval());
  g.o = SequenceTensor<T>(time, B, (dh * cells.data().array()).matrix().eval());
  return g;
}

#define HRT_INSTANTIATE(T)                                                                               \
  template QrnnGates<T> qrnn_gates<T>(const SequenceTensor<T>&, const Matrix<T>&, const Matrix<T>&,      \
                                      const Matrix<T>&, int);                                            \
  template Matrix<T> gated_linear_scan<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, Index,   \
                                          Index, bool, Index);                                           \
  template FoPoolResult<T> fo_pool<T>(const SequenceTensor<T>&, const SequenceTensor<T>&,                \
                                      const SequenceTensor<T>&, const Matrix<T>&, Index);          \
  template FoPoolGrad<T> fo_pool_backward<T>(const SequenceTensor<T>&, const SequenceTensor<T>&,         \
                                             const SequenceTensor<T>&, const Matrix<T>&,                 \
                                             const SequenceTensor<T>&, const SequenceTensor<T>&);
HRT_INSTANTIATE(float)
HRT_INSTANTIATE(double)
#undef HRT_INSTANTIATE

template <typename T>
QrnnLayer<T>::QrnnLayer(const QrnnConfig& cfg, const std::string& name, RngKey init_key)
    : cfg_(cfg),
      weight_(name + ".gates.weight", 3 * cfg.embed_dim, cfg.conv_width * cfg.embed_dim),
      bias_(name + ".gates.bias", 1, 3 * cfg.embed_dim) {
  cfg_.validate();
  init_fan_in_uniform(weight_, cfg.conv_width * cfg.embed_dim, init_key);
}

template <typename T>
SequenceTensor<T> QrnnLayer<T>::forward(const SequenceTensor<T>& x, QrnnState<T>& state,
                                        const ForwardContext& ctx) {
  const Index D = cfg_.embed_dim;
  if (x.features() != D) {
    throw ShapeError("qrnn expects " + std::to_string(D) + " features, got " + std::to_string(x.features()));
  }
  time_ = x.time();
  batch_ = x.batch();
  const bool carried = cfg_.carry_state && !state.fresh();
  if (carried && (state.cell.rows() != batch_ || state.cell.cols() != D)) {
    throw ShapeError("qrnn state does not match batch size");
  }
  const Matrix<T> empty;
  c0_ = carried ? state.cell : Matrix<T>::Zero(batch_, D);

  masked_ = ctx.training && cfg_.weight_drop_rate > 0.0;
  gate_input_ = build_gate_input(x, carried ? state.prev_input : empty, cfg_.conv_width);
  Matrix<T> pre(gate_input_.rows(), 3 * D);
  if (masked_) {
    mask_ = weight_drop_mask<T>(weight_.value.rows(), weight_.value.cols(), cfg_.weight_drop_rate, ctx.key.split(0))
                .mask;
    const Matrix<T> effective = (weight_.value.array() * mask_.array()).matrix();
    pre.noalias() = gate_input_ * effective.transpose();
  } else {
    pre.noalias() = gate_input_ * weight_.value.transpose();
  }
  pre.rowwise() += bias_.value.row(0);
  gates_ = activate(pre, time_, batch_, D);

  auto pooled = fo_pool(gates_.z, gates_.f, gates_.o, c0_);
  cells_ = std::move(pooled.cells);
  if (cfg_.carry_state) {
    state.cell = std::move(pooled.final_cell);
    state.prev_input = x.step(time_ - 1);
  }
  return std::move(pooled.hidden);
}

template <typename T>
SequenceTensor<T> QrnnLayer<T>::backward(const SequenceTensor<T>& grad) {
  const Index D = cfg_.embed_dim;
  const Index B = batch_;
  const auto g = fo_pool_backward(gates_.z, gates_.f, gates_.o, c0_, cells_, grad);
  const auto z = gates_.z.data().array();
  const auto f = gates_.f.data().array();
  const auto o = gates_.o.data().array();

  Matrix<T> dpre(time_ * B, 3 * D);
  dpre.leftCols(D) = (g.z.data().array() * (T(1) - z.square())).matrix();
  dpre.middleCols(D, D) = (g.f.data().array() * f * (T(1) - f)).matrix();
  dpre.rightCols(D) = (g.o.data().array() * o * (T(1) - o)).matrix();

  Matrix<T> dweight = dpre.transpose() * gate_input_;
  if (masked_) {
    weight_.grad.array() += dweight.array() * mask_.array();
  } else {
    weight_.grad += dweight;
  }
  bias_.grad.row(0) += dpre.colwise().sum();

  Matrix<T> dinput(time_ * B, cfg_.conv_width * D);
  if (masked_) {
    const Matrix<T> effective = (weight_.value.array() * mask_.array()).matrix();
    dinput.noalias() = dpre * effective;
  } else {
    dinput.noalias() = dpre * weight_.value;
  }
  if (cfg_.conv_width == 1) return SequenceTensor<T>(time_, B, std::move(dinput));

  Matrix<T> dx = dinput.rightCols(D);
  // x_t also fed step t+1 as its predecessor.
  if (time_ > 1) dx.topRows((time_ - 1) * B) += dinput.bottomLeftCorner((time_ - 1) * B, D);
  return SequenceTensor<T>(time_, B, std::move(dx));
}

template class QrnnLayer<float>;
template class QrnnLayer<double>;

}  // namespace hrt
