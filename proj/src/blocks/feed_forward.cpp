// SPDX-License-Identifier: Apache-2.0
#include "hrt/blocks/feed_forward.hpp"

namespace hrt {

void FeedForwardConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("feed-forward embed_dim must be >= 1", "embed_dim");
  if (boom_dim < embed_dim) {
    throw ConfigError("feed-forward boom_dim (" + std::to_string(boom_dim) + ") must be >= embed_dim (" +
                          std::to_string(embed_dim) + ")",
                      "boom_dim");
  }
  check_dropout_rate(dropout_rate, "dropout");
}

template <typename T>
FeedForward<T>::FeedForward(const FeedForwardConfig& cfg, const std::string& name, RngKey init_key)
    : cfg_(cfg),
      w1_(name + ".boom.weight", cfg.boom_dim, cfg.embed_dim),
      b1_(name + ".boom.bias", 1, cfg.boom_dim),
      w2_(name + ".down.weight", cfg.embed_dim, cfg.boom_dim),
      b2_(name + ".down.bias", 1, cfg.embed_dim),
      norm_(name + ".norm", cfg.embed_dim) {
  cfg_.validate();
  init_fan_in_uniform(w1_, cfg.embed_dim, init_key.split(0));
  init_fan_in_uniform(w2_, cfg.boom_dim, init_key.split(1));
}

template <typename T>
std::vector<Parameter<T>*> FeedForward<T>::parameters() {
  return {&w1_, &b1_, &w2_, &b2_, &norm_.gain(), &norm_.bias()};
}

template <typename T>
SequenceTensor<T> FeedForward<T>::forward(const SequenceTensor<T>& x, const ForwardContext& ctx) {
  if (x.features() != cfg_.embed_dim) {
    throw ShapeError("feed-forward expects " + std::to_string(cfg_.embed_dim) + " features, got " +
                     std::to_string(x.features()));
  }
  time_ = x.time();
  batch_ = x.batch();
  dropout_active_ = ctx.training && cfg_.dropout_rate > 0.0;
  input_ = x.data();

  pre_activation_.noalias() = input_ * w1_.value.transpose();
  pre_activation_.rowwise() += b1_.value.row(0);
  hidden_ = pre_activation_.cwiseMax(T(0));
  if (dropout_active_) {
    mask1_ = element_dropout_mask<T>(time_, batch_, cfg_.boom_dim, cfg_.dropout_rate, ctx.key.split(0),
                                     ctx.column_offset)
                 .mask;
    hidden_.array() *= mask1_.array();
  }
  Matrix<T> out(input_.rows(), cfg_.embed_dim);
  out.noalias() = hidden_ * w2_.value.transpose();
  out.rowwise() += b2_.value.row(0);
  if (dropout_active_) {
    mask2_ = element_dropout_mask<T>(time_, batch_, cfg_.embed_dim, cfg_.dropout_rate, ctx.key.split(1),
                                     ctx.column_offset)
                 .mask;
    out.array() *= mask2_.array();
  }
  out += input_;
  return SequenceTensor<T>(time_, batch_, norm_.forward(out));
}

template <typename T>
SequenceTensor<T> FeedForward<T>::backward(const SequenceTensor<T>& grad) {
  Matrix<T> dsum = norm_.backward(grad.data());
  Matrix<T> dx = dsum;

  Matrix<T> dout = std::move(dsum);
  if (dropout_active_) dout.array() *= mask2_.array();
  w2_.grad.noalias() += dout.transpose() * hidden_;
  b2_.grad.row(0) += dout.colwise().sum();

  Matrix<T> dhidden(dout.rows(), cfg_.boom_dim);
  dhidden.noalias() = dout * w2_.value;
  if (dropout_active_) dhidden.array() *= mask1_.array();
  dhidden = (pre_activation_.array() > T(0)).select(dhidden, T(0));

  w1_.grad.noalias() += dhidden.transpose() * input_;
  b1_.grad.row(0) += dhidden.colwise().sum();
  dx.noalias() += dhidden * w1_.value;
  return SequenceTensor<T>(time_, batch_, std::move(dx));
}

template class FeedForward<float>;
template class FeedForward<double>;

}  // namespace hrt
