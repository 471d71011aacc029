// SPDX-License-Identifier: Apache-2.0
#include "hrt/data/batching.hpp"

#include <algorithm>

#include "hrt/errors.hpp"

namespace hrt {

Index StreamBatch::counted() const {
  Index n = 0;
  for (auto m : loss_mask) n += m;
  return n;
}

StreamBatch StreamBatch::columns(Index first, Index count) const {
  if (first < 0 || count < 1 || first + count > batch) throw ShapeError("column range outside batch");
  StreamBatch out;
  out.time = time;
  out.batch = count;
  const auto n = static_cast<std::size_t>(time * count);
  out.inputs.resize(n);
  out.targets.resize(n);
  out.loss_mask.resize(n);
  for (Index t = 0; t < time; ++t) {
    for (Index b = 0; b < count; ++b) {
      const auto src = static_cast<std::size_t>(t * batch + first + b);
      const auto dst = static_cast<std::size_t>(t * count + b);
      out.inputs[dst] = inputs[src];
      out.targets[dst] = targets[src];
      out.loss_mask[dst] = loss_mask[src];
    }
  }
  out.stream_reset.assign(stream_reset.begin() + first, stream_reset.begin() + first + count);
  if (!target_offsets.empty()) {
    out.target_offsets.resize(n);
    for (Index t = 0; t < time; ++t) {
      for (Index b = 0; b < count; ++b) {
        out.target_offsets[static_cast<std::size_t>(t * count + b)] =
            target_offsets[static_cast<std::size_t>(t * batch + first + b)];
      }
    }
  }
  return out;
}

StreamBatcher::StreamBatcher(std::span<const std::int32_t> ids, Index batch, Index bptt)
    : ids_(ids), batch_(batch), bptt_(bptt) {
  if (batch < 1) throw ConfigError("batch size must be >= 1", "training.batch_size");
  if (bptt < 1) throw ConfigError("bptt length must be >= 1", "model.bptt_len");
  stream_length_ = static_cast<Index>(ids.size()) / batch;
  if (stream_length_ < bptt + 1) {
    throw DataError("corpus of " + std::to_string(ids.size()) + " tokens is too small for " + std::to_string(batch) +
                    " streams of bptt " + std::to_string(bptt) + " (needs at least " +
                    std::to_string(batch * (bptt + 1)) + ")");
  }
  windows_ = (stream_length_ - 1) / bptt;
}

StreamBatch StreamBatcher::window(Index k) const {
  if (k < 0 || k >= windows_) throw ShapeError("window index outside epoch");
  StreamBatch out;
  out.time = bptt_;
  out.batch = batch_;
  const auto n = static_cast<std::size_t>(bptt_ * batch_);
  out.inputs.resize(n);
  out.targets.resize(n);
  out.loss_mask.assign(n, 1);
  out.stream_reset.assign(static_cast<std::size_t>(batch_), k == 0);
  for (Index t = 0; t < bptt_; ++t) {
    for (Index b = 0; b < batch_; ++b) {
      const auto src = static_cast<std::size_t>(b * stream_length_ + k * bptt_ + t);
      out.inputs[static_cast<std::size_t>(t * batch_ + b)] = ids_[src];
      out.targets[static_cast<std::size_t>(t * batch_ + b)] = ids_[src + 1];
    }
  }
  return out;
}

std::vector<StreamBatch> make_stream_batches(std::span<const std::int32_t> ids, Index batch, Index bptt) {
  StreamBatcher batcher(ids, batch, bptt);
  std::vector<StreamBatch> out;
  out.reserve(static_cast<std::size_t>(batcher.windows()));
  for (Index k = 0; k < batcher.windows(); ++k) out.push_back(batcher.window(k));
  return out;
}

std::vector<StreamBatch> make_article_batches(const std::vector<std::span<const std::int32_t>>& articles,
                                              Index batch, Index bptt, std::int32_t pad_id) {
  if (batch < 1) throw ConfigError("batch size must be >= 1", "training.batch_size");
  if (bptt < 1) throw ConfigError("bptt length must be >= 1", "model.bptt_len");
  struct Slot {
    std::size_t article;
    Index offset;  // first input position within the article
  };
  std::vector<std::vector<Slot>> columns(static_cast<std::size_t>(batch));
  for (std::size_t a = 0; a < articles.size(); ++a) {
    const auto targets = static_cast<Index>(articles[a].size()) - 1;
    if (targets < 1) continue;
    auto col = std::min_element(columns.begin(), columns.end(),
                                [](const auto& x, const auto& y) { return x.size() < y.size(); });
    for (Index off = 0; off < targets; off += bptt) col->push_back({a, off});
  }
  std::size_t windows = 0;
  for (const auto& c : columns) windows = std::max(windows, c.size());

  std::vector<StreamBatch> out(windows);
  const auto n = static_cast<std::size_t>(bptt * batch);
  for (std::size_t w = 0; w < windows; ++w) {
    StreamBatch& sb = out[w];
    sb.time = bptt;
    sb.batch = batch;
    sb.inputs.assign(n, pad_id);
    sb.targets.assign(n, pad_id);
    sb.loss_mask.assign(n, 0);
    sb.target_offsets.assign(n, -1);
    sb.stream_reset.assign(static_cast<std::size_t>(batch), false);
    for (Index b = 0; b < batch; ++b) {
      const auto& col = columns[static_cast<std::size_t>(b)];
      if (w >= col.size()) {
        // idle column: fresh state, nothing counted
        sb.stream_reset[static_cast<std::size_t>(b)] = true;
        continue;
      }
      const Slot& slot = col[w];
      const auto& art = articles[slot.article];
      const auto len = static_cast<Index>(art.size());
      sb.stream_reset[static_cast<std::size_t>(b)] = slot.offset == 0;
      for (Index t = 0; t < bptt && slot.offset + t + 1 < len; ++t) {
        const auto dst = static_cast<std::size_t>(t * batch + b);
        sb.inputs[dst] = art[static_cast<std::size_t>(slot.offset + t)];
        sb.targets[dst] = art[static_cast<std::size_t>(slot.offset + t + 1)];
        sb.loss_mask[dst] = 1;
        sb.target_offsets[dst] = (art.data() - articles.front().data()) + slot.offset + t + 1;
      }
    }
  }
  return out;
}

std::vector<StreamBatch> make_eval_batches(std::span<const std::int32_t> ids, Index batch, Index bptt,
                                           std::int32_t pad_id) {
  if (batch < 1) throw ConfigError("batch size must be >= 1", "eval.batch_size");
  const auto targets = static_cast<Index>(ids.size()) - 1;
  if (targets < 1) throw DataError("evaluation text needs at least 2 tokens");
  std::vector<std::span<const std::int32_t>> chunks;
  const Index per = targets / batch;
  const Index extra = targets % batch;
  Index first = 1;  // first target index of the chunk
  for (Index b = 0; b < batch; ++b) {
    const Index count = per + (b < extra ? 1 : 0);
    if (count == 0) continue;
    chunks.push_back(ids.subspan(static_cast<std::size_t>(first - 1), static_cast<std::size_t>(count + 1)));
    first += count;
  }
  return make_article_batches(chunks, batch, bptt, pad_id);
}

}  // namespace hrt
