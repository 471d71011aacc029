// SPDX-License-Identifier: Apache-2.0
#include "hrt/model/language_model.hpp"

#include <cstdio>
#include <set>

#include "hrt/blocks/dropout.hpp"
#include "hrt/blocks/feed_forward.hpp"
#include "hrt/blocks/layer_norm.hpp"
#include "hrt/errors.hpp"

namespace hrt {

template <typename T>
void ModelState<T>::clear() {
  for (auto& s : qrnn) s.clear();
  for (auto& m : attention) m.clear();
}

template <typename T>
void ModelState<T>::reset_columns(const std::vector<bool>& reset) {
  for (auto& s : qrnn) s.reset_columns(reset);
  for (auto& m : attention) m.reset_columns(reset);
}

namespace {

template <typename T>
Matrix<T> rows_of(const Matrix<T>& m, Index first, Index count) {
  if (m.size() == 0) return Matrix<T>();
  return m.middleRows(first, count);
}

/// Rows t * batch + first .. + count of a [time * batch, D] matrix.
template <typename T>
Matrix<T> sequence_columns(const SequenceTensor<T>& x, Index first, Index count) {
  Matrix<T> out(x.time() * count, x.features());
  for (Index t = 0; t < x.time(); ++t) out.middleRows(t * count, count) = x.step(t).middleRows(first, count);
  return out;
}

}  // namespace

template <typename T>
ModelState<T> ModelState<T>::slice_columns(Index first, Index count) const {
  ModelState<T> out;
  for (const auto& s : qrnn) out.qrnn.push_back({rows_of(s.cell, first, count), rows_of(s.prev_input, first, count)});
  for (const auto& m : attention) {
    AttentionMemory<T> part;
    if (!m.empty()) {
      part.states = SequenceTensor<T>(m.length(), count, sequence_columns(m.states, first, count));
      part.valid.assign(m.valid.begin() + first, m.valid.begin() + first + count);
    }
    out.attention.push_back(std::move(part));
  }
  return out;
}

template <typename T>
void ModelState<T>::assign_columns(Index first, Index total, const ModelState& part) {
  if (part.qrnn.size() != qrnn.size() || part.attention.size() != attention.size()) {
    throw ShapeError("state slice does not match the model state");
  }
  auto put = [&](Matrix<T>& dst, const Matrix<T>& src) {
    if (src.size() == 0) return;
    if (dst.rows() != total || dst.cols() != src.cols()) dst = Matrix<T>::Zero(total, src.cols());
    dst.middleRows(first, src.rows()) = src;
  };
  for (std::size_t i = 0; i < qrnn.size(); ++i) {
    put(qrnn[i].cell, part.qrnn[i].cell);
    put(qrnn[i].prev_input, part.qrnn[i].prev_input);
  }
  for (std::size_t i = 0; i < attention.size(); ++i) {
    const auto& src = part.attention[i];
    auto& dst = attention[i];
    if (src.empty()) continue;
    const Index count = src.states.batch();
    if (dst.empty() || dst.length() != src.length() || dst.states.batch() != total) {
      dst.states = SequenceTensor<T>(src.length(), total, src.states.features());
      dst.valid.assign(static_cast<std::size_t>(total), 0);
    }
    for (Index t = 0; t < src.length(); ++t) dst.states.step(t).middleRows(first, count) = src.states.step(t);
    std::copy(src.valid.begin(), src.valid.end(), dst.valid.begin() + first);
  }
}

namespace detail {

template <typename T>
class Node {
 public:
  virtual ~Node() = default;
  virtual SequenceTensor<T> forward(const SequenceTensor<T>& x, ModelState<T>& state, const ForwardContext& ctx) = 0;
  virtual SequenceTensor<T> backward(const SequenceTensor<T>& grad) = 0;
  virtual std::vector<Parameter<T>*> parameters() = 0;
  virtual std::string label() const = 0;
  virtual void set_eval_attn_length(Index) {}
  virtual void collect_conv_widths(std::vector<int>&) const {}
};

template <typename T>
class FeedForwardNode final : public Node<T> {
 public:
  FeedForwardNode(const FeedForwardConfig& cfg, const std::string& name, RngKey key) : block_(cfg, name, key) {}
  SequenceTensor<T> forward(const SequenceTensor<T>& x, ModelState<T>&, const ForwardContext& ctx) override {
    return block_.forward(x, ctx);
  }
  SequenceTensor<T> backward(const SequenceTensor<T>& g) override { return block_.backward(g); }
  std::vector<Parameter<T>*> parameters() override { return block_.parameters(); }
  std::string label() const override { return "f"; }

 private:
  FeedForward<T> block_;
};

template <typename T>
class DropoutNode final : public Node<T> {
 public:
  explicit DropoutNode(double rate) : block_(rate) {}
  SequenceTensor<T> forward(const SequenceTensor<T>& x, ModelState<T>&, const ForwardContext& ctx) override {
    return block_.forward(x, ctx);
  }
  SequenceTensor<T> backward(const SequenceTensor<T>& g) override { return block_.backward(g); }
  std::vector<Parameter<T>*> parameters() override { return {}; }
  std::string label() const override { return "|"; }

 private:
  RnnDropout<T> block_;
};

template <typename T>
class QrnnNode final : public Node<T> {
 public:
  QrnnNode(const QrnnConfig& cfg, const std::string& name, RngKey key, std::size_t slot)
      : block_(cfg, name, key), slot_(slot) {}
  SequenceTensor<T> forward(const SequenceTensor<T>& x, ModelState<T>& state, const ForwardContext& ctx) override {
    return block_.forward(x, state.qrnn[slot_], ctx);
  }
  SequenceTensor<T> backward(const SequenceTensor<T>& g) override { return block_.backward(g); }
  std::vector<Parameter<T>*> parameters() override { return block_.parameters(); }
  std::string label() const override { return "q"; }
  void collect_conv_widths(std::vector<int>& out) const override { out.push_back(block_.config().conv_width); }

 private:
  QrnnLayer<T> block_;
  std::size_t slot_;
};

template <typename T>
class AttentionNode final : public Node<T> {
 public:
  AttentionNode(const AttentionConfig& cfg, const std::string& name, RngKey key, std::size_t slot,
                Index train_len, Index eval_len)
      : block_(cfg, name, key), slot_(slot), train_len_(train_len), eval_len_(eval_len) {}
  SequenceTensor<T> forward(const SequenceTensor<T>& x, ModelState<T>& state, const ForwardContext& ctx) override {
    block_.set_attn_length(ctx.training ? train_len_ : eval_len_);
    return block_.forward(x, state.attention[slot_], ctx);
  }
  SequenceTensor<T> backward(const SequenceTensor<T>& g) override { return block_.backward(g); }
  std::vector<Parameter<T>*> parameters() override { return block_.parameters(); }
  std::string label() const override { return "a"; }
  void set_eval_attn_length(Index n) override { eval_len_ = n; }

 private:
  RelativeAttention<T> block_;
  std::size_t slot_;
  Index train_len_;
  Index eval_len_;
};

/// LayerNorm(x + chain(x)) around a q ... f run.
template <typename T>
class GroupNode final : public Node<T> {
 public:
  GroupNode(std::vector<std::unique_ptr<Node<T>>> children, const std::string& name, Index dim)
      : children_(std::move(children)), norm_(name + ".norm", dim) {}

  SequenceTensor<T> forward(const SequenceTensor<T>& x, ModelState<T>& state, const ForwardContext& ctx) override {
    SequenceTensor<T> h = x;
    for (std::size_t i = 0; i < children_.size(); ++i) {
      h = children_[i]->forward(h, state, ctx.with_key(ctx.key.split(i)));
    }
    h.data() += x.data();
    h.data() = norm_.forward(h.data());
    return h;
  }

  SequenceTensor<T> backward(const SequenceTensor<T>& g) override {
    SequenceTensor<T> dsum(g.time(), g.batch(), norm_.backward(g.data()));
    SequenceTensor<T> d = dsum;
    for (std::size_t i = children_.size(); i-- > 0;) d = children_[i]->backward(d);
    d.data() += dsum.data();
    return d;
  }

  std::vector<Parameter<T>*> parameters() override {
    std::vector<Parameter<T>*> out;
    for (auto& c : children_) {
      auto p = c->parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
    out.push_back(&norm_.gain());
    out.push_back(&norm_.bias());
    return out;
  }

  std::string label() const override {
    std::string s = "(";
    for (const auto& c : children_) s += c->label();
    return s + ")";
  }

  void collect_conv_widths(std::vector<int>& out) const override {
    for (const auto& c : children_) c->collect_conv_widths(out);
  }

 private:
  std::vector<std::unique_ptr<Node<T>>> children_;
  LayerNorm<T> norm_;
};

}  // namespace detail

template <typename T>
LanguageModel<T>::LanguageModel(const ArchitectureSpec& arch, const ModelConfig& cfg, std::uint64_t seed)
    : arch_(arch), cfg_(cfg), seed_(seed) {
  cfg_.validate();
  if (arch_.tokens.empty()) throw ConfigError("architecture has no blocks", "model.architecture");
  const RngKey root(seed);
  const ClusterLayout layout = ClusterLayout::from_config(cfg_);
  embedding_ = std::make_unique<AdaptiveEmbedding<T>>(layout, "embedding", root.split(0));
  head_ = std::make_unique<AdaptiveSoftmax<T>>(layout, "head", root.split(1),
                                               cfg_.tie_weights ? embedding_.get() : nullptr);

  const RngKey block_root = root.split(2);
  bool first_qrnn = true;
  auto make = [&](std::size_t i) -> std::unique_ptr<detail::Node<T>> {
    char idx[8];
    std::snprintf(idx, sizeof idx, "%02zu", i);
    const std::string name = std::string("blocks.") + idx;
    const RngKey key = block_root.split(i);
    switch (arch_.tokens[i]) {
      case BlockKind::FeedForward:
        return std::make_unique<detail::FeedForwardNode<T>>(
            FeedForwardConfig{cfg_.embed_dim, cfg_.boom_dim, cfg_.dropout}, name + ".f", key);
      case BlockKind::RnnDropout:
        return std::make_unique<detail::DropoutNode<T>>(i == 0 ? cfg_.embedding_rnn_dropout : cfg_.rnn_dropout);
      case BlockKind::Qrnn: {
        QrnnConfig qc{cfg_.embed_dim, first_qrnn ? 2 : 1, cfg_.rnn_weight_dropout, true};
        first_qrnn = false;
        return std::make_unique<detail::QrnnNode<T>>(qc, name + ".q", key, static_cast<std::size_t>(num_qrnn_++));
      }
      case BlockKind::Attention: {
        AttentionConfig ac{cfg_.embed_dim, cfg_.num_heads, cfg_.train_attn_len, cfg_.dropout};
        return std::make_unique<detail::AttentionNode<T>>(ac, name + ".a", key,
                                                          static_cast<std::size_t>(num_attention_++),
                                                          cfg_.train_attn_len, cfg_.eval_attn_len);
      }
    }
    throw ConfigError("unknown block kind", "model.architecture");
  };

  std::size_t g = 0;
  for (std::size_t i = 0; i < arch_.tokens.size(); ++i) {
    if (g < arch_.residual_groups.size() && arch_.residual_groups[g].first == i) {
      const ResidualGroup grp = arch_.residual_groups[g++];
      std::vector<std::unique_ptr<detail::Node<T>>> children;
      for (std::size_t j = grp.first; j <= grp.last; ++j) children.push_back(make(j));
      char idx[8];
      std::snprintf(idx, sizeof idx, "%02zu", i);
      nodes_.push_back(std::make_unique<detail::GroupNode<T>>(std::move(children),
                                                              std::string("blocks.") + idx + ".group",
                                                              cfg_.embed_dim));
      i = grp.last;
    } else {
      nodes_.push_back(make(i));
    }
  }
}

template <typename T>
LanguageModel<T>::~LanguageModel() = default;
template <typename T>
LanguageModel<T>::LanguageModel(LanguageModel&&) noexcept = default;
template <typename T>
LanguageModel<T>& LanguageModel<T>::operator=(LanguageModel&&) noexcept = default;

template <typename T>
ModelState<T> LanguageModel<T>::initial_state() const {
  ModelState<T> s;
  s.qrnn.resize(static_cast<std::size_t>(num_qrnn_));
  s.attention.resize(static_cast<std::size_t>(num_attention_));
  return s;
}

template <typename T>
void LanguageModel<T>::check_state(const ModelState<T>& state) const {
  if (static_cast<Index>(state.qrnn.size()) != num_qrnn_ ||
      static_cast<Index>(state.attention.size()) != num_attention_) {
    throw ShapeError("model state does not match the architecture");
  }
}

template <typename T>
SequenceTensor<T> LanguageModel<T>::encode(std::span<const std::int32_t> ids, Index time, Index batch,
                                          ModelState<T>& state, const ForwardContext& ctx) {
  check_state(state);
  SequenceTensor<T> h = embedding_->forward(ids, time, batch);
  for (std::size_t i = 0; i < nodes_.size(); ++i) h = nodes_[i]->forward(h, state, ctx.with_key(ctx.key.split(i)));
  time_ = time;
  batch_ = batch;
  return h;
}

template <typename T>
Vector<T> LanguageModel<T>::forward(std::span<const std::int32_t> ids, std::span<const std::int32_t> targets,
                                    Index time, Index batch, ModelState<T>& state, const ForwardContext& ctx) {
  if (static_cast<Index>(targets.size()) != time * batch) throw ShapeError("targets do not match time * batch");
  check_token_ids(targets, cfg_.vocab_size);
  SequenceTensor<T> h = encode(ids, time, batch, state, ctx);
  return head_->forward(h.data(), targets);
}

template <typename T>
Matrix<T> LanguageModel<T>::log_probs(std::span<const std::int32_t> ids, Index time, Index batch,
                                      ModelState<T>& state, const ForwardContext& ctx) {
  SequenceTensor<T> h = encode(ids, time, batch, state, ctx);
  return head_->log_probs(h.data());
}

template <typename T>
void LanguageModel<T>::backward(const Vector<T>& grad) {
  SequenceTensor<T> g(time_, batch_, head_->backward(grad));
  for (std::size_t i = nodes_.size(); i-- > 0;) g = nodes_[i]->backward(g);
  embedding_->backward(g);
}

template <typename T>
std::vector<Parameter<T>*> LanguageModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  std::set<const Parameter<T>*> seen;
  auto add = [&](const std::vector<Parameter<T>*>& ps) {
    for (auto* p : ps) {
      if (seen.insert(p).second) out.push_back(p);
    }
  };
  add(embedding_->parameters());
  for (auto& n : nodes_) add(n->parameters());
  add(head_->parameters());
  return out;
}

template <typename T>
Parameter<T>* LanguageModel<T>::find_parameter(const std::string& name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

template <typename T>
void LanguageModel<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
Index LanguageModel<T>::count_params(bool include_embeddings) {
  Index n = 0;
  for (auto* p : parameters()) {
    if (include_embeddings || !p->embedding) n += p->size();
  }
  return n;
}

template <typename T>
std::vector<BlockParams> LanguageModel<T>::block_params() {
  std::vector<BlockParams> out;
  auto sum = [](const std::vector<Parameter<T>*>& ps) {
    Index n = 0;
    for (auto* p : ps) n += p->size();
    return n;
  };
  out.push_back({"embedding", sum(embedding_->parameters())});
  for (auto& n : nodes_) out.push_back({n->label(), sum(n->parameters())});
  out.push_back({cfg_.tie_weights ? "head (tied)" : "head", sum(head_->parameters())});
  return out;
}

template <typename T>
std::vector<int> LanguageModel<T>::qrnn_conv_widths() const {
  std::vector<int> out;
  for (const auto& n : nodes_) n->collect_conv_widths(out);
  return out;
}

template <typename T>
std::vector<std::string> LanguageModel<T>::layout() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_) out.push_back(n->label());
  return out;
}

template <typename T>
void LanguageModel<T>::set_eval_attn_length(Index length) {
  if (length < 1) throw ConfigError("eval attention length must be >= 1", "model.eval_attn_len");
  cfg_.eval_attn_len = length;
  for (auto& n : nodes_) n->set_eval_attn_length(length);
}

template struct ModelState<float>;
template struct ModelState<double>;
template class LanguageModel<float>;
template class LanguageModel<double>;

}  // namespace hrt
