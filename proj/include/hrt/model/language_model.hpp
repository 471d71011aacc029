// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hrt/blocks/qrnn.hpp"
#include "hrt/blocks/relative_attention.hpp"
#include "hrt/model/adaptive.hpp"
#include "hrt/model/architecture.hpp"
#include "hrt/model/model_config.hpp"

namespace hrt {

/// Carried recurrent state: one entry per q block and per a block, in
/// network order.
template <typename T>
struct ModelState {
  std::vector<QrnnState<T>> qrnn;
  std::vector<AttentionMemory<T>> attention;

  void clear();
  /// Clears the flagged batch columns (a new stream starts there).
  void reset_columns(const std::vector<bool>& reset);

  /// State of batch columns [first, first + count).
  ModelState slice_columns(Index first, Index count) const;
  /// Writes `part` back as columns [first, first + part batch) of a batch of
  /// `total` columns, allocating or resizing entries as needed.
  void assign_columns(Index first, Index total, const ModelState& part);
};

namespace detail {
template <typename T>
class Node;
}

struct BlockParams {
  std::string label;
  Index count = 0;
};

template <typename T>
class LanguageModel {
 public:
  LanguageModel(const ArchitectureSpec& arch, const ModelConfig& cfg, std::uint64_t seed);
  ~LanguageModel();
  LanguageModel(LanguageModel&&) noexcept;
  LanguageModel& operator=(LanguageModel&&) noexcept;

  const ArchitectureSpec& architecture() const { return arch_; }
  const ModelConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  /// Fresh state with one slot per q and a block.
  ModelState<T> initial_state() const;

  /// log P(targets) per position, rows t * batch + b. Advances `state` and
  /// caches activations for backward().
  Vector<T> forward(std::span<const std::int32_t> ids, std::span<const std::int32_t> targets, Index time,
                    Index batch, ModelState<T>& state, const ForwardContext& ctx);

  /// Full [time * batch, vocab] log-probabilities. Advances `state`.
  Matrix<T> log_probs(std::span<const std::int32_t> ids, Index time, Index batch, ModelState<T>& state,
                      const ForwardContext& ctx);

  /// Accumulates parameter gradients given d(loss)/d(log P(target)).
  void backward(const Vector<T>& grad_log_probs);

  /// Unique trainable tensors (tied storage appears once), stable order.
  std::vector<Parameter<T>*> parameters();
  Parameter<T>* find_parameter(const std::string& name);
  void zero_grad();

  /// Scalar parameter count; tied tensors counted once.
  Index count_params(bool include_embeddings);
  /// Per-block counts in network order, then embedding and head.
  std::vector<BlockParams> block_params();

  Index num_blocks(BlockKind kind) const { return static_cast<Index>(arch_.count(kind)); }
  /// conv_width of every q block in order.
  std::vector<int> qrnn_conv_widths() const;
  /// Labels of the top-level sequence, with groups as "(q|f)".
  std::vector<std::string> layout() const;

  void set_eval_attn_length(Index length);

  AdaptiveEmbedding<T>& embedding() { return *embedding_; }
  AdaptiveSoftmax<T>& head() { return *head_; }

 private:
  SequenceTensor<T> encode(std::span<const std::int32_t> ids, Index time, Index batch, ModelState<T>& state,
                           const ForwardContext& ctx);
  void check_state(const ModelState<T>& state) const;

  ArchitectureSpec arch_;
  ModelConfig cfg_;
  std::uint64_t seed_ = 0;
  Index num_qrnn_ = 0;
  Index num_attention_ = 0;
  std::unique_ptr<AdaptiveEmbedding<T>> embedding_;
  std::vector<std::unique_ptr<detail::Node<T>>> nodes_;
  std::unique_ptr<AdaptiveSoftmax<T>> head_;
  Index time_ = 0;
  Index batch_ = 0;
};

/// Deterministic in (arch, cfg, seed). Throws ConfigError for invalid cfg.
template <typename T>
LanguageModel<T> build_model(const ArchitectureSpec& arch, const ModelConfig& cfg, std::uint64_t seed) {
  return LanguageModel<T>(arch, cfg, seed);
}

extern template struct ModelState<float>;
extern template struct ModelState<double>;
extern template class LanguageModel<float>;
extern template class LanguageModel<double>;

}  // namespace hrt
