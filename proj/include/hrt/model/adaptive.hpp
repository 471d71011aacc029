// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hrt/model/model_config.hpp"
#include "hrt/tensor.hpp"

namespace hrt {

/// Vocabulary partition into frequency clusters. Cluster 0 (the head) uses
/// the full embedding width without a projection; cluster k >= 1 uses
/// embed_dim / div_factor^k and a [embed_dim, dim_k] projection.
struct ClusterLayout {
  std::vector<Index> bounds;  // [0, c_0, ..., vocab]
  Index embed_dim = 0;
  Index div_factor = 1;

  static ClusterLayout from_config(const ModelConfig& cfg);

  Index clusters() const { return static_cast<Index>(bounds.size()) - 1; }
  Index vocab() const { return bounds.back(); }
  Index start(Index k) const { return bounds[k]; }
  Index size(Index k) const { return bounds[k + 1] - bounds[k]; }
  Index dim(Index k) const;
  Index cluster_of(Index id) const;
};

/// Throws DataError unless every id is in [0, vocab).
void check_token_ids(std::span<const std::int32_t> ids, Index vocab);

template <typename T>
class AdaptiveEmbedding {
 public:
  AdaptiveEmbedding(ClusterLayout layout, const std::string& name, RngKey init_key);

  const ClusterLayout& layout() const { return layout_; }

  /// ids are [time, batch] in row order t * batch + b.
  SequenceTensor<T> forward(std::span<const std::int32_t> ids, Index time, Index batch);
  void backward(const SequenceTensor<T>& grad);

  Parameter<T>& table(Index k) { return *tables_[k]; }
  /// Projection of cluster k >= 1, [embed_dim, dim_k].
  Parameter<T>& projection(Index k) { return *projections_[k]; }
  std::vector<Parameter<T>*> parameters();

 private:
  ClusterLayout layout_;
  std::vector<std::unique_ptr<Parameter<T>>> tables_;
  std::vector<std::unique_ptr<Parameter<T>>> projections_;  // [0] is null
  std::vector<std::int32_t> ids_;
};

/// Two-level softmax: the head distribution covers head words plus one token
/// per tail cluster; a tail word's log-probability adds the within-cluster
/// log-softmax. With a single cluster this is a plain softmax. When `tied`
/// is given, tables and projections alias the embedding's storage; biases and
/// cluster logits are always owned.
template <typename T>
class AdaptiveSoftmax {
 public:
  AdaptiveSoftmax(ClusterLayout layout, const std::string& name, RngKey init_key,
                  AdaptiveEmbedding<T>* tied = nullptr);

  const ClusterLayout& layout() const { return layout_; }
  bool tied() const { return tied_; }

  /// log P(target) per row of hidden [N, D]; caches for backward.
  Vector<T> forward(const Matrix<T>& hidden, std::span<const std::int32_t> targets);
  /// d(hidden) given d(log P(target)); accumulates parameter gradients.
  Matrix<T> backward(const Vector<T>& grad_log_probs);

  /// Full [N, vocab] log-probabilities, no cache.
  Matrix<T> log_probs(const Matrix<T>& hidden) const;

  Parameter<T>& weight(Index k) { return *weights_[k]; }
  Parameter<T>& projection(Index k) { return *projections_[k]; }
  Parameter<T>& bias(Index k) { return *biases_[k]; }
  /// Logit weights of the tail-cluster tokens in the head, [clusters-1, D].
  Parameter<T>& cluster_weight() { return *cluster_weight_; }
  Parameter<T>& cluster_bias() { return *cluster_bias_; }
  /// Owned parameters only (tied storage is reported by the embedding).
  std::vector<Parameter<T>*> parameters();

 private:
  Matrix<T> head_logits(const Matrix<T>& hidden) const;
  Matrix<T> tail_logits(Index k, const Matrix<T>& projected) const;

  ClusterLayout layout_;
  bool tied_ = false;
  std::vector<std::unique_ptr<Parameter<T>>> owned_;
  std::vector<Parameter<T>*> weights_;
  std::vector<Parameter<T>*> projections_;
  std::vector<Parameter<T>*> biases_;
  Parameter<T>* cluster_weight_ = nullptr;
  Parameter<T>* cluster_bias_ = nullptr;

  // forward cache
  Matrix<T> hidden_;
  std::vector<std::int32_t> targets_;
  Matrix<T> head_probs_;
  std::vector<Index> head_index_;
  std::vector<std::vector<Index>> rows_;  // per tail cluster
  std::vector<Matrix<T>> projected_;
  std::vector<Matrix<T>> tail_probs_;
};

extern template class AdaptiveEmbedding<float>;
extern template class AdaptiveEmbedding<double>;
extern template class AdaptiveSoftmax<float>;
extern template class AdaptiveSoftmax<double>;

}  // namespace hrt
