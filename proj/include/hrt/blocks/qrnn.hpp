// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hrt/blocks/dropout.hpp"
#include "hrt/tensor.hpp"

namespace hrt {

struct QrnnConfig {
  Index embed_dim = 512;
  /// 2: gates see (x_{t-1}, x_t); 1: gates see x_t only.
  int conv_width = 1;
  double weight_drop_rate = 0.0;
  /// Carry the cell state (and previous input) across windows of a stream.
  bool carry_state = true;

  void validate() const;
};

/// Recurrent state carried between windows of one stream. Empty matrices
/// mean a fresh (all-zero) state.
template <typename T>
struct QrnnState {
  Matrix<T> cell;        // [batch, dim], c_{t-1} of fo-pooling
  Matrix<T> prev_input;  // [batch, dim], last x of the previous window

  bool fresh() const { return cell.size() == 0; }
  void clear() {
    cell.resize(0, 0);
    prev_input.resize(0, 0);
  }
  /// Zeroes the state of the flagged batch columns.
  void reset_columns(const std::vector<bool>& reset);
};

template <typename T>
struct QrnnGates {
  SequenceTensor<T> z;  // tanh candidate
  SequenceTensor<T> f;  // sigmoid forget
  SequenceTensor<T> o;  // sigmoid output
};

/// Gate activations from (masked) weights [3D, conv_width * D] and bias
/// [1, 3D]. `prev_input` is the [B, D] predecessor of x_0 (empty == zeros).
template <typename T>
QrnnGates<T> qrnn_gates(const SequenceTensor<T>& x, const Matrix<T>& prev_input, const Matrix<T>& weight,
                        const Matrix<T>& bias, int conv_width);

/// Linear recurrence c_t = a_t * c_{t-1} + b_t over rows of [T * B, D]
/// inputs, computed blockwise: independent per-block scans from zero, a
/// sequential carry pass across block boundaries, then a fix-up. With
/// `reverse`, runs c_t = a_t * c_{t+1} + b_t from t = T-1 down.
/// `block_len` 0 picks ~sqrt(T).
template <typename T>
Matrix<T> gated_linear_scan(const Matrix<T>& a, const Matrix<T>& b, const Matrix<T>& init, Index time,
                            Index batch, bool reverse = false, Index block_len = 0);

template <typename T>
struct FoPoolResult {
  SequenceTensor<T> hidden;  // h_t = o_t * c_t
  SequenceTensor<T> cells;   // c_t
  Matrix<T> final_cell;      // c_T, [B, D]
};

/// fo-pooling: c_t = f_t * c_{t-1} + (1 - f_t) * z_t, h_t = o_t * c_t.
template <typename T>
FoPoolResult<T> fo_pool(const SequenceTensor<T>& z, const SequenceTensor<T>& f, const SequenceTensor<T>& o,
                        const Matrix<T>& c0, Index block_len = 0);

template <typename T>
struct FoPoolGrad {
  SequenceTensor<T> z, f, o;
};

/// Gradients of fo_pool w.r.t. z, f, o given d(hidden). `cells` are the c_t
/// returned by the forward pass; the final cell is treated as detached.
template <typename T>
FoPoolGrad<T> fo_pool_backward(const SequenceTensor<T>& z, const SequenceTensor<T>& f, const SequenceTensor<T>& o,
                               const Matrix<T>& c0, const SequenceTensor<T>& cells,
                               const SequenceTensor<T>& grad_hidden);

/// The `q` block (AWD-QRNN layer).
template <typename T>
class QrnnLayer {
 public:
  QrnnLayer(const QrnnConfig& cfg, const std::string& name, RngKey init_key);

  const QrnnConfig& config() const { return cfg_; }

  /// Advances `state` (gradient-detached) to the end of the window.
  SequenceTensor<T> forward(const SequenceTensor<T>& x, QrnnState<T>& state, const ForwardContext& ctx);
  SequenceTensor<T> backward(const SequenceTensor<T>& grad);

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  std::vector<Parameter<T>*> parameters() { return {&weight_, &bias_}; }

 private:
  QrnnConfig cfg_;
  Parameter<T> weight_;  // [3D, conv_width * D], rows: z | f | o
  Parameter<T> bias_;    // [1, 3D]

  Index time_ = 0;
  Index batch_ = 0;
  bool masked_ = false;
  Matrix<T> mask_;
  Matrix<T> gate_input_;  // [T * B, conv_width * D]
  QrnnGates<T> gates_;
  SequenceTensor<T> cells_;
  Matrix<T> c0_;
};

extern template class QrnnLayer<float>;
extern template class QrnnLayer<double>;

}  // namespace hrt
