// SPDX-License-Identifier: Apache-2.0
#include "hrt/model/adaptive.hpp"

#include <algorithm>

#include "hrt/errors.hpp"

namespace hrt {

ClusterLayout ClusterLayout::from_config(const ModelConfig& cfg) {
  ClusterLayout layout;
  layout.bounds = cfg.cluster_bounds();
  layout.embed_dim = cfg.embed_dim;
  layout.div_factor = cfg.adaptive_div_factor;
  return layout;
}

Index ClusterLayout::dim(Index k) const {
  Index d = embed_dim;
  for (Index i = 0; i < k; ++i) d /= div_factor;
  return d;
}

Index ClusterLayout::cluster_of(Index id) const {
  auto it = std::upper_bound(bounds.begin() + 1, bounds.end(), id);
  return static_cast<Index>(it - bounds.begin()) - 1;
}

void check_token_ids(std::span<const std::int32_t> ids, Index vocab) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw DataError("token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                      " outside vocabulary [0, " + std::to_string(vocab) + ")");
    }
  }
}

namespace {

template <typename T>
void log_softmax_rows(Matrix<T>& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    const T mx = row.maxCoeff();
    const T lse = mx + std::log((row.array() - mx).exp().sum());
    row.array() -= lse;
  }
}

void check_layout(const ClusterLayout& layout) {
  if (layout.bounds.size() < 2 || layout.bounds.front() != 0) throw ShapeError("malformed cluster layout");
  for (Index k = 0; k < layout.clusters(); ++k) {
    if (layout.size(k) < 1) throw ShapeError("empty vocabulary cluster");
    if (layout.dim(k) < 1) throw ShapeError("cluster dimension below 1");
  }
}

}  // namespace

template <typename T>
AdaptiveEmbedding<T>::AdaptiveEmbedding(ClusterLayout layout, const std::string& name, RngKey init_key)
    : layout_(std::move(layout)) {
  check_layout(layout_);
  for (Index k = 0; k < layout_.clusters(); ++k) {
    const Index d = layout_.dim(k);
    tables_.push_back(
        std::make_unique<Parameter<T>>(name + ".table" + std::to_string(k), layout_.size(k), d, true));
    init_fan_in_uniform(*tables_.back(), d, init_key.split(2 * static_cast<std::uint64_t>(k)));
    if (k == 0) {
      projections_.push_back(nullptr);
    } else {
      projections_.push_back(
          std::make_unique<Parameter<T>>(name + ".proj" + std::to_string(k), layout_.embed_dim, d, true));
      init_fan_in_uniform(*projections_.back(), d, init_key.split(2 * static_cast<std::uint64_t>(k) + 1));
    }
  }
}

template <typename T>
std::vector<Parameter<T>*> AdaptiveEmbedding<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (Index k = 0; k < layout_.clusters(); ++k) {
    out.push_back(tables_[k].get());
    if (k > 0) out.push_back(projections_[k].get());
  }
  return out;
}

template <typename T>
SequenceTensor<T> AdaptiveEmbedding<T>::forward(std::span<const std::int32_t> ids, Index time, Index batch) {
  if (static_cast<Index>(ids.size()) != time * batch) throw ShapeError("embedding ids do not match time * batch");
  check_token_ids(ids, layout_.vocab());
  ids_.assign(ids.begin(), ids.end());
  SequenceTensor<T> out(time, batch, layout_.embed_dim);
  Matrix<T>& y = out.data();
  for (Index i = 0; i < y.rows(); ++i) {
    const Index id = ids_[i];
    const Index k = layout_.cluster_of(id);
    const auto row = tables_[k]->value.row(id - layout_.start(k));
    if (k == 0) {
      y.row(i) = row;
    } else {
      y.row(i).noalias() = row * projections_[k]->value.transpose();
    }
  }
  return out;
}

template <typename T>
void AdaptiveEmbedding<T>::backward(const SequenceTensor<T>& grad) {
  const Matrix<T>& g = grad.data();
  if (g.rows() != static_cast<Index>(ids_.size())) throw ShapeError("embedding backward without matching forward");
  for (Index i = 0; i < g.rows(); ++i) {
    const Index id = ids_[i];
    const Index k = layout_.cluster_of(id);
    const Index r = id - layout_.start(k);
    if (k == 0) {
      tables_[0]->grad.row(r) += g.row(i);
    } else {
      Parameter<T>& proj = *projections_[k];
      tables_[k]->grad.row(r).noalias() += g.row(i) * proj.value;
      proj.grad.noalias() += g.row(i).transpose() * tables_[k]->value.row(r);
    }
  }
}

template <typename T>
AdaptiveSoftmax<T>::AdaptiveSoftmax(ClusterLayout layout, const std::string& name, RngKey init_key,
                                    AdaptiveEmbedding<T>* tied)
    : layout_(std::move(layout)), tied_(tied != nullptr) {
  check_layout(layout_);
  if (tied && tied->layout().bounds != layout_.bounds) throw ShapeError("tied head needs the embedding's layout");
  const Index clusters = layout_.clusters();
  auto own = [this](std::string n, Index rows, Index cols) {
    owned_.push_back(std::make_unique<Parameter<T>>(std::move(n), rows, cols, true));
    return owned_.back().get();
  };
  for (Index k = 0; k < clusters; ++k) {
    const Index d = layout_.dim(k);
    const auto ks = std::to_string(k);
    if (tied) {
      weights_.push_back(&tied->table(k));
      projections_.push_back(k > 0 ? &tied->projection(k) : nullptr);
    } else {
      weights_.push_back(own(name + ".weight" + ks, layout_.size(k), d));
      init_fan_in_uniform(*weights_.back(), d, init_key.split(3 * static_cast<std::uint64_t>(k)));
      if (k > 0) {
        projections_.push_back(own(name + ".proj" + ks, layout_.embed_dim, d));
        init_fan_in_uniform(*projections_.back(), d, init_key.split(3 * static_cast<std::uint64_t>(k) + 1));
      } else {
        projections_.push_back(nullptr);
      }
    }
    biases_.push_back(own(name + ".bias" + ks, 1, layout_.size(k)));
  }
  if (clusters > 1) {
    cluster_weight_ = own(name + ".cluster.weight", clusters - 1, layout_.embed_dim);
    init_fan_in_uniform(*cluster_weight_, layout_.embed_dim, init_key.split(3 * static_cast<std::uint64_t>(clusters)));
    cluster_bias_ = own(name + ".cluster.bias", 1, clusters - 1);
  }
}

template <typename T>
std::vector<Parameter<T>*> AdaptiveSoftmax<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& p : owned_) out.push_back(p.get());
  return out;
}

template <typename T>
Matrix<T> AdaptiveSoftmax<T>::head_logits(const Matrix<T>& hidden) const {
  const Index head = layout_.size(0);
  const Index tails = layout_.clusters() - 1;
  Matrix<T> logits(hidden.rows(), head + tails);
  logits.leftCols(head).noalias() = hidden * weights_[0]->value.transpose();
  logits.leftCols(head).rowwise() += biases_[0]->value.row(0);
  if (tails > 0) {
    logits.rightCols(tails).noalias() = hidden * cluster_weight_->value.transpose();
    logits.rightCols(tails).rowwise() += cluster_bias_->value.row(0);
  }
  return logits;
}

template <typename T>
Matrix<T> AdaptiveSoftmax<T>::tail_logits(Index k, const Matrix<T>& projected) const {
  Matrix<T> logits(projected.rows(), layout_.size(k));
  logits.noalias() = projected * weights_[k]->value.transpose();
  logits.rowwise() += biases_[k]->value.row(0);
  return logits;
}

template <typename T>
Vector<T> AdaptiveSoftmax<T>::forward(const Matrix<T>& hidden, std::span<const std::int32_t> targets) {
  if (hidden.cols() != layout_.embed_dim) throw ShapeError("softmax hidden width mismatch");
  if (static_cast<Index>(targets.size()) != hidden.rows()) throw ShapeError("softmax targets do not match rows");
  check_token_ids(targets, layout_.vocab());
  const Index n = hidden.rows();
  const Index head = layout_.size(0);
  const Index tails = layout_.clusters() - 1;
  hidden_ = hidden;
  targets_.assign(targets.begin(), targets.end());

  Matrix<T> lsm = head_logits(hidden);
  log_softmax_rows(lsm);
  head_probs_ = lsm.array().exp().matrix();

  Vector<T> out(n);
  head_index_.resize(n);
  rows_.assign(tails, {});
  for (Index i = 0; i < n; ++i) {
    const Index k = layout_.cluster_of(targets_[i]);
    head_index_[i] = k == 0 ? targets_[i] : head + k - 1;
    out(i) = lsm(i, head_index_[i]);
    if (k > 0) rows_[k - 1].push_back(i);
  }
  projected_.assign(tails, Matrix<T>());
  tail_probs_.assign(tails, Matrix<T>());
  for (Index c = 0; c < tails; ++c) {
    const Index k = c + 1;
    const auto& rows = rows_[c];
    if (rows.empty()) continue;
    Matrix<T> gathered(static_cast<Index>(rows.size()), layout_.embed_dim);
    for (std::size_t r = 0; r < rows.size(); ++r) gathered.row(r) = hidden.row(rows[r]);
    projected_[c].noalias() = gathered * projections_[k]->value;
    Matrix<T> tail = tail_logits(k, projected_[c]);
    log_softmax_rows(tail);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out(rows[r]) += tail(r, targets_[rows[r]] - layout_.start(k));
    }
    tail_probs_[c] = tail.array().exp().matrix();
  }
  return out;
}

template <typename T>
Matrix<T> AdaptiveSoftmax<T>::backward(const Vector<T>& grad) {
  const Index n = hidden_.rows();
  if (grad.size() != n) throw ShapeError("softmax backward without matching forward");
  const Index head = layout_.size(0);
  const Index tails = layout_.clusters() - 1;

  // d(log p_target)/d(logits) = onehot - softmax, scaled per row
  Matrix<T> dhead = -(head_probs_.array().colwise() * grad.array()).matrix();
  for (Index i = 0; i < n; ++i) dhead(i, head_index_[i]) += grad(i);

  Matrix<T> dhidden(n, layout_.embed_dim);
  dhidden.noalias() = dhead.leftCols(head) * weights_[0]->value;
  weights_[0]->grad.noalias() += dhead.leftCols(head).transpose() * hidden_;
  biases_[0]->grad += dhead.leftCols(head).colwise().sum();
  if (tails > 0) {
    dhidden.noalias() += dhead.rightCols(tails) * cluster_weight_->value;
    cluster_weight_->grad.noalias() += dhead.rightCols(tails).transpose() * hidden_;
    cluster_bias_->grad += dhead.rightCols(tails).colwise().sum();
  }
  for (Index c = 0; c < tails; ++c) {
    const Index k = c + 1;
    const auto& rows = rows_[c];
    if (rows.empty()) continue;
    const Index m = static_cast<Index>(rows.size());
    Matrix<T> dtail(m, layout_.size(k));
    Matrix<T> gathered(m, layout_.embed_dim);
    for (Index r = 0; r < m; ++r) {
      const T g = grad(rows[r]);
      dtail.row(r) = -g * tail_probs_[c].row(r);
      dtail(r, targets_[rows[r]] - layout_.start(k)) += g;
      gathered.row(r) = hidden_.row(rows[r]);
    }
    weights_[k]->grad.noalias() += dtail.transpose() * projected_[c];
    biases_[k]->grad += dtail.colwise().sum();
    Matrix<T> dprojected = dtail * weights_[k]->value;
    projections_[k]->grad.noalias() += gathered.transpose() * dprojected;
    Matrix<T> dgathered = dprojected * projections_[k]->value.transpose();
    for (Index r = 0; r < m; ++r) dhidden.row(rows[r]) += dgathered.row(r);
  }
  return dhidden;
}

template <typename T>
Matrix<T> AdaptiveSoftmax<T>::log_probs(const Matrix<T>& hidden) const {
  if (hidden.cols() != layout_.embed_dim) throw ShapeError("softmax hidden width mismatch");
  const Index head = layout_.size(0);
  Matrix<T> lsm = head_logits(hidden);
  log_softmax_rows(lsm);
  Matrix<T> out(hidden.rows(), layout_.vocab());
  out.leftCols(head) = lsm.leftCols(head);
  for (Index k = 1; k < layout_.clusters(); ++k) {
    Matrix<T> projected = hidden * projections_[k]->value;
    Matrix<T> tail = tail_logits(k, projected);
    log_softmax_rows(tail);
    tail.colwise() += lsm.col(head + k - 1);
    out.middleCols(layout_.start(k), layout_.size(k)) = tail;
  }
  return out;
}

template class AdaptiveEmbedding<float>;
template class AdaptiveEmbedding<double>;
template class AdaptiveSoftmax<float>;
template class AdaptiveSoftmax<double>;

}  // namespace hrt
