// SPDX-License-Identifier: Apache-2.0
#include "hrt/blocks/relative_attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hrt {

void AttentionConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("attention embed_dim must be >= 1", "embed_dim");
  if (num_heads < 1 || embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim (" + std::to_string(embed_dim) + ") must be divisible by num_heads (" +
                          std::to_string(num_heads) + ")",
                      "num_heads");
  }
  if (attn_length < 1) throw ConfigError("attn_length must be >= 1", "attn_length");
  check_dropout_rate(dropout_rate, "dropout");
}

template <typename T>
void AttentionMemory<T>::reset_columns(const std::vector<bool>& reset) {
  for (std::size_t b = 0; b < reset.size() && b < valid.size(); ++b) {
    if (reset[b]) valid[b] = 0;
  }
}

template struct AttentionMemory<float>;
template struct AttentionMemory<double>;

template <typename T>
Matrix<T> sinusoid_positions(Index count, Index dim) {
  Matrix<T> pos(count, dim);
  const Index half = (dim + 1) / 2;
  for (Index d = 0; d < count; ++d) {
    for (Index k = 0; k < half; ++k) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
      const double angle = static_cast<double>(d) * freq;
      pos(d, k) = static_cast<T>(std::sin(angle));
      if (half + k < dim) pos(d, half + k) = static_cast<T>(std::cos(angle));
    }
  }
  return pos;
}

template Matrix<float> sinusoid_positions<float>(Index, Index);
template Matrix<double> sinusoid_positions<double>(Index, Index);

namespace {

template <typename T>
using StridedMap = Eigen::Map<Matrix<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const Matrix<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// Rows of batch column b, head h from a [steps * B, D] matrix.
template <typename T>
ConstStridedMap<T> head_view(const Matrix<T>& m, Index steps, Index batch, Index b, Index h, Index head_dim) {
  return ConstStridedMap<T>(m.data() + b * m.cols() + h * head_dim, steps, head_dim,
                            Eigen::OuterStride<>(batch * m.cols()));
}

template <typename T>
StridedMap<T> head_view(Matrix<T>& m, Index steps, Index batch, Index b, Index h, Index head_dim) {
  return StridedMap<T>(m.data() + b * m.cols() + h * head_dim, steps, head_dim,
                       Eigen::OuterStride<>(batch * m.cols()));
}

}  // namespace

template <typename T>
RelativeAttention<T>::RelativeAttention(const AttentionConfig& cfg, const std::string& name, RngKey init_key)
    : cfg_(cfg),
      wq_(name + ".query.weight", cfg.embed_dim, cfg.embed_dim),
      wk_(name + ".key.weight", cfg.embed_dim, cfg.embed_dim),
      wv_(name + ".value.weight", cfg.embed_dim, cfg.embed_dim),
      wr_(name + ".position.weight", cfg.embed_dim, cfg.embed_dim),
      wo_(name + ".output.weight", cfg.embed_dim, cfg.embed_dim),
      u_(name + ".content_bias", cfg.num_heads, cfg.embed_dim / std::max<Index>(cfg.num_heads, 1)),
      v_(name + ".position_bias", cfg.num_heads, cfg.embed_dim / std::max<Index>(cfg.num_heads, 1)),
      norm_(name + ".norm", cfg.embed_dim) {
  cfg_.validate();
  init_fan_in_uniform(wq_, cfg.embed_dim, init_key.split(0));
  init_fan_in_uniform(wk_, cfg.embed_dim, init_key.split(1));
  init_fan_in_uniform(wv_, cfg.embed_dim, init_key.split(2));
  init_fan_in_uniform(wr_, cfg.embed_dim, init_key.split(3));
  init_fan_in_uniform(wo_, cfg.embed_dim, init_key.split(4));
}

template <typename T>
std::vector<Parameter<T>*> RelativeAttention<T>::parameters() {
  return {&wq_, &wk_, &wv_, &wr_, &wo_, &u_, &v_, &norm_.gain(), &norm_.bias()};
}

template <typename T>
void RelativeAttention<T>::set_attn_length(Index length) {
  if (length < 1) throw ConfigError("attn_length must be >= 1", "attn_length");
  cfg_.attn_length = length;
}

template <typename T>
SequenceTensor<T> RelativeAttention<T>::forward(const SequenceTensor<T>& x, AttentionMemory<T>& memory,
                                                const ForwardContext& ctx) {
  const Index D = cfg_.embed_dim;
  const Index H = cfg_.num_heads;
  const Index dh = cfg_.head_dim();
  const Index A = cfg_.attn_length;
  if (x.features() != D) {
    throw ShapeError("attention expects " + std::to_string(D) + " features, got " + std::to_string(x.features()));
  }
  time_ = x.time();
  batch_ = x.batch();
  const Index T_ = time_;
  const Index B = batch_;
  mem_len_ = memory.empty() ? 0 : memory.length();
  if (mem_len_ > 0 && (memory.states.batch() != B || memory.states.features() != D)) {
    throw ShapeError("attention memory does not match input batch/features");
  }
  const Index L = mem_len_ + T_;
  valid_.assign(static_cast<std::size_t>(B), 0);
  if (mem_len_ > 0) {
    for (Index b = 0; b < B; ++b) {
      valid_[static_cast<std::size_t>(b)] =
          std::min(mem_len_, memory.valid.empty() ? mem_len_ : memory.valid[static_cast<std::size_t>(b)]);
    }
  }

  input_ = x.data();
  context_.resize(L * B, D);
  if (mem_len_ > 0) context_.topRows(mem_len_ * B) = memory.states.data();
  context_.bottomRows(T_ * B) = input_;

  q_.noalias() = input_ * wq_.value.transpose();
  k_.noalias() = context_ * wk_.value.transpose();
  v_proj_.noalias() = context_ * wv_.value.transpose();
  if (positions_.rows() != A || positions_.cols() != D) positions_ = sinusoid_positions<T>(A, D);
  r_.noalias() = positions_ * wr_.value.transpose();

  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  attn_.resize(T_ * B, D);
  probs_.resize(static_cast<std::size_t>(B * H));
  Matrix<T> content(T_, L);
  Matrix<T> position(T_, A);
  for (Index b = 0; b < B; ++b) {
    const Index first_valid = mem_len_ - valid_[static_cast<std::size_t>(b)];
    for (Index h = 0; h < H; ++h) {
      const auto qb = head_view(q_, T_, B, b, h, dh);
      const auto kb = head_view(k_, L, B, b, h, dh);
      const auto vb = head_view(v_proj_, L, B, b, h, dh);
      const auto rh = r_.middleCols(h * dh, dh);
      content.noalias() = (qb.rowwise() + u_.value.row(h)) * kb.transpose();
      position.noalias() = (qb.rowwise() + v_.value.row(h)) * rh.transpose();

      Matrix<T>& p = probs_[static_cast<std::size_t>(b * H + h)];
      p.setZero(T_, L);
      for (Index i = 0; i < T_; ++i) {
        const Index hi = mem_len_ + i;
        const Index lo = std::max(hi - A + 1, first_valid);
        T max_score = -std::numeric_limits<T>::infinity();
        for (Index j = lo; j <= hi; ++j) {
          const T s = (content(i, j) + position(i, hi - j)) * scale;
          p(i, j) = s;
          max_score = std::max(max_score, s);
        }
        T total = 0;
        for (Index j = lo; j <= hi; ++j) {
          p(i, j) = std::exp(p(i, j) - max_score);
          total += p(i, j);
        }
        p.row(i).segment(lo, hi - lo + 1) /= total;
      }
      head_view(attn_, T_, B, b, h, dh).noalias() = p * vb;
    }
  }

  Matrix<T> out(T_ * B, D);
  out.noalias() = attn_ * wo_.value.transpose();
  dropout_active_ = ctx.training && cfg_.dropout_rate > 0.0;
  if (dropout_active_) {
    mask_ = element_dropout_mask<T>(T_, B, D, cfg_.dropout_rate, ctx.key.split(0), ctx.column_offset).mask;
    out.array() *= mask_.array();
  }
  out += input_;

  Index keep = ctx.training ? std::max<Index>(A - T_, 0) : A - 1;
  keep = std::min(keep, L);
  if (keep == 0) {
    memory.clear();
  } else {
    Matrix<T> tail = context_.bottomRows(keep * B);
    memory.states = SequenceTensor<T>(keep, B, std::move(tail));
    memory.valid.resize(static_cast<std::size_t>(B));
    for (Index b = 0; b < B; ++b) {
      memory.valid[static_cast<std::size_t>(b)] = std::min(keep, valid_[static_cast<std::size_t>(b)] + T_);
    }
  }
  return SequenceTensor<T>(T_, B, norm_.forward(out));
}

template <typename T>
SequenceTensor<T> RelativeAttention<T>::backward(const SequenceTensor<T>& grad) {
  const Index D = cfg_.embed_dim;
  const Index H = cfg_.num_heads;
  const Index dh = cfg_.head_dim();
  const Index A = cfg_.attn_length;
  const Index T_ = time_;
  const Index B = batch_;
  const Index L = mem_len_ + T_;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Matrix<T> dsum = norm_.backward(grad.data());
  Matrix<T> dx = dsum;
  if (dropout_active_) dsum.array() *= mask_.array();
  wo_.grad.noalias() += dsum.transpose() * attn_;
  Matrix<T> dattn(T_ * B, D);
  dattn.noalias() = dsum * wo_.value;

  Matrix<T> dq = Matrix<T>::Zero(T_ * B, D);
  Matrix<T> dk = Matrix<T>::Zero(L * B, D);
  Matrix<T> dv = Matrix<T>::Zero(L * B, D);
  Matrix<T> dr = Matrix<T>::Zero(A, D);
  Matrix<T> dprob(T_, L);
  Matrix<T> dposition(T_, A);
  Matrix<T> query_u(T_, dh);
  Matrix<T> query_v(T_, dh);
  Matrix<T> dquery(T_, dh);
  for (Index b = 0; b < B; ++b) {
    const Index first_valid = mem_len_ - valid_[static_cast<std::size_t>(b)];
    for (Index h = 0; h < H; ++h) {
      const Matrix<T>& p = probs_[static_cast<std::size_t>(b * H + h)];
      const auto qb = head_view(q_, T_, B, b, h, dh);
      const auto kb = head_view(k_, L, B, b, h, dh);
      const auto vb = head_view(v_proj_, L, B, b, h, dh);
      const auto rh = r_.middleCols(h * dh, dh);
      const auto dout = head_view(dattn, T_, B, b, h, dh);

      dprob.noalias() = dout * vb.transpose();
      head_view(dv, L, B, b, h, dh).noalias() += p.transpose() * dout;

      // softmax backward; dprob becomes d(score) on the allowed band
      dposition.setZero();
      for (Index i = 0; i < T_; ++i) {
        const Index hi = mem_len_ + i;
        const Index lo = std::max(hi - A + 1, first_valid);
        const auto pr = p.row(i).segment(lo, hi - lo + 1);
        auto dr_row = dprob.row(i).segment(lo, hi - lo + 1);
        const T dot = pr.dot(dr_row);
        dprob.row(i).head(lo).setZero();
        dprob.row(i).tail(L - hi - 1).setZero();
        for (Index j = lo; j <= hi; ++j) {
          const T ds = p(i, j) * (dprob(i, j) - dot) * scale;
          dprob(i, j) = ds;
          dposition(i, hi - j) = ds;
        }
      }

      query_u = qb.rowwise() + u_.value.row(h);
      query_v = qb.rowwise() + v_.value.row(h);
      dquery.noalias() = dprob * kb;
      u_.grad.row(h) += dquery.colwise().sum();
      Matrix<T> dquery_pos = dposition * rh;
      v_.grad.row(h) += dquery_pos.colwise().sum();
      head_view(dq, T_, B, b, h, dh) = dquery + dquery_pos;
      head_view(dk, L, B, b, h, dh).noalias() += dprob.transpose() * query_u;
      dr.middleCols(h * dh, dh).noalias() += dposition.transpose() * query_v;
    }
  }

  wq_.grad.noalias() += dq.transpose() * input_;
  wk_.grad.noalias() += dk.transpose() * context_;
  wv_.grad.noalias() += dv.transpose() * context_;
  wr_.grad.noalias() += dr.transpose() * positions_;
  dx.noalias() += dq * wq_.value;
  // memory rows are detached; only the x rows of the context receive gradient
  dx.noalias() += dk.bottomRows(T_ * B) * wk_.value;
  dx.noalias() += dv.bottomRows(T_ * B) * wv_.value;
  return SequenceTensor<T>(T_, B, std::move(dx));
}

template class RelativeAttention<float>;
template class RelativeAttention<double>;

}  // namespace hrt
