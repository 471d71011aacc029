// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hrt/tensor.hpp"

namespace hrt {

/// One BPTT window for B parallel streams, [time, batch] in row order
/// t * batch + b.
struct StreamBatch {
  Index time = 0;
  Index batch = 0;
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;
  /// 1 where the target counts towards the loss.
  std::vector<std::uint8_t> loss_mask;
  /// Per column: a new stream starts here, clear carried state first.
  std::vector<bool> stream_reset;
  /// Article batching only: offset of each target from the first article's
  /// first token (-1 for padding), meaningful when articles share a buffer.
  std::vector<std::int64_t> target_offsets;

  Index counted() const;
  /// Columns [first, first + count) as a smaller batch.
  StreamBatch columns(Index first, Index count) const;
};

/// Continuous-stream batching: `ids` is cut into B equal contiguous streams
/// (remainder dropped) and each stream into consecutive windows of T inputs
/// with the next-token targets. No padding.
class StreamBatcher {
 public:
  StreamBatcher(std::span<const std::int32_t> ids, Index batch, Index bptt);

  Index windows() const { return windows_; }
  Index stream_length() const { return stream_length_; }
  /// Window k of the epoch; window 0 resets every column.
  StreamBatch window(Index k) const;

 private:
  std::span<const std::int32_t> ids_;
  Index batch_;
  Index bptt_;
  Index stream_length_;
  Index windows_;
};

/// All windows of StreamBatcher in order.
std::vector<StreamBatch> make_stream_batches(std::span<const std::int32_t> ids, Index batch, Index bptt);

/// Article batching: articles are assigned in order to the least-loaded
/// column, each starting on a window boundary with a reset flag. Every
/// article contributes its length - 1 targets; short final windows and idle
/// columns are padded with `pad_id` and masked.
std::vector<StreamBatch> make_article_batches(const std::vector<std::span<const std::int32_t>>& articles,
                                              Index batch, Index bptt, std::int32_t pad_id = 0);

/// Covers all size - 1 targets of a continuous text exactly once: the text is
/// cut into `batch` overlapping chunks fed as articles.
std::vector<StreamBatch> make_eval_batches(std::span<const std::int32_t> ids, Index batch, Index bptt,
                                           std::int32_t pad_id = 0);

}  // namespace hrt
