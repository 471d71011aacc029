// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hrt/blocks/dropout.hpp"
#include "hrt/blocks/layer_norm.hpp"
#include "hrt/tensor.hpp"

namespace hrt {

struct AttentionConfig {
  Index embed_dim = 512;
  Index num_heads = 8;
  /// Attendable positions per query, the query itself included.
  Index attn_length = 768;
  double dropout_rate = 0.0;

  Index head_dim() const { return embed_dim / num_heads; }
  void validate() const;
};

/// Gradient-detached layer inputs from previous windows, [M, B, D].
/// `valid[b]` counts the trailing rows of column b that belong to the
/// current stream; older rows are masked out.
template <typename T>
struct AttentionMemory {
  SequenceTensor<T> states;
  std::vector<Index> valid;

  bool empty() const { return states.empty(); }
  Index length() const { return states.time(); }
  void clear() {
    states = SequenceTensor<T>();
    valid.clear();
  }
  void reset_columns(const std::vector<bool>& reset);
};

/// Sinusoidal encodings of relative distances 0 .. count-1, [count, dim]:
/// sin terms in the first ceil(dim/2) columns, cos terms after.
template <typename T>
Matrix<T> sinusoid_positions(Index count, Index dim);

/// The `a` block: multi-head causal self-attention over (memory ++ x) with
/// relative-position scores
///   s(i, j) = [(q_i + u) . k_j + (q_i + v) . r_{i-j}] / sqrt(head_dim),
/// where u, v are learned per-head biases and r_d = W_r p_d projects the
/// sinusoid encoding of distance d. Query i sees keys at distances
/// 0 .. attn_length-1. Output: LayerNorm(x + Drop(W_o attn)).
template <typename T>
class RelativeAttention {
 public:
  RelativeAttention(const AttentionConfig& cfg, const std::string& name, RngKey init_key);

  const AttentionConfig& config() const { return cfg_; }
  void set_attn_length(Index length);

  /// Replaces `memory` with the detached tail of (memory ++ x): the last
  /// max(attn_length - T, 0) rows in training mode, attn_length - 1 in eval.
  SequenceTensor<T> forward(const SequenceTensor<T>& x, AttentionMemory<T>& memory, const ForwardContext& ctx);
  SequenceTensor<T> backward(const SequenceTensor<T>& grad);

  Parameter<T>& query_weight() { return wq_; }
  Parameter<T>& key_weight() { return wk_; }
  Parameter<T>& value_weight() { return wv_; }
  Parameter<T>& position_weight() { return wr_; }
  Parameter<T>& output_weight() { return wo_; }
  Parameter<T>& content_bias() { return u_; }
  Parameter<T>& position_bias() { return v_; }
  LayerNorm<T>& norm() { return norm_; }
  std::vector<Parameter<T>*> parameters();

 private:
  AttentionConfig cfg_;
  Parameter<T> wq_, wk_, wv_, wr_, wo_;  // [D, D]
  Parameter<T> u_, v_;                   // [H, head_dim]
  LayerNorm<T> norm_;
  Matrix<T> positions_;                  // sinusoids for attn_length distances

  // forward cache
  Index time_ = 0;
  Index batch_ = 0;
  Index mem_len_ = 0;
  bool dropout_active_ = false;
  std::vector<Index> valid_;
  Matrix<T> input_;
  Matrix<T> context_;  // (memory ++ x), [(M + T) * B, D]
  Matrix<T> q_, k_, v_proj_, r_;
  Matrix<T> attn_;     // concatenated head outputs, [T * B, D]
  std::vector<Matrix<T>> probs_;  // per (b, h): [T, M + T]
  Matrix<T> mask_;
};

extern template class RelativeAttention<float>;
extern template class RelativeAttention<double>;

}  // namespace hrt
