// SPDX-License-Identifier: Apache-2.0
#include "hrt/training/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "hrt/errors.hpp"
#include "hrt/model/checkpoint.hpp"

namespace hrt {

void OptimizerConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& what) {
    throw ConfigError("optimizer." + key + ": " + what, "optimizer." + key);
  };
  if (!(start_lr > 0.0)) fail("start_lr", "must be > 0");
  if (!(peak_lr > start_lr)) fail("peak_lr", "must be > start_lr");
  if (!(final_lr >= 0.0 && final_lr < peak_lr)) fail("final_lr", "must be in [0, peak_lr)");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must be in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon", "must be > 0");
  if (std::isnan(grad_clip)) fail("grad_clip", "must be a number");
}

double one_cycle_lr(Index step, Index total, double start_lr, double peak_lr, double final_lr) {
  if (total < 0 || step < 0 || step > total) {
    throw std::out_of_range("schedule step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
  }
  if (total == 0) return start_lr;
  const Index peak_step = total / 3;
  auto cosine = [](double a, double b, double u) { return a + (b - a) * (1.0 - std::cos(std::numbers::pi * u)) / 2.0; };
  if (step == peak_step) return peak_lr;
  if (step == total) return final_lr;
  if (step < peak_step) return cosine(start_lr, peak_lr, static_cast<double>(step) / static_cast<double>(peak_step));
  return cosine(peak_lr, final_lr,
                static_cast<double>(step - peak_step) / static_cast<double>(total - peak_step));
}

double one_cycle_lr(Index step, Index total, const OptimizerConfig& cfg) {
  return one_cycle_lr(step, total, cfg.start_lr, cfg.peak_lr, cfg.final_lr);
}

template <typename T>
AdamW<T>::AdamW(const OptimizerConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
}

template <typename T>
void AdamW<T>::ensure(const std::vector<Parameter<T>*>& params) {
  if (m_.size() == params.size()) return;
  if (!m_.empty()) throw ShapeError("optimizer was set up for a different parameter list");
  for (auto* p : params) {
    m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
  }
}

template <typename T>
StepReport AdamW<T>::step(const std::vector<Parameter<T>*>& params, double lr) {
  ensure(params);
  StepReport report;
  double sq = 0.0;
  for (auto* p : params) sq += static_cast<double>(p->grad.squaredNorm());
  report.grad_norm = std::sqrt(sq);
  if (!std::isfinite(report.grad_norm)) {
    report.skipped = true;
    return report;
  }
  double scale = 1.0;
  if (cfg_.grad_clip > 0.0 && report.grad_norm > cfg_.grad_clip) {
    scale = cfg_.grad_clip / report.grad_norm;
    report.clipped = true;
  }
  ++updates_;
  const double t = static_cast<double>(updates_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T decay = static_cast<T>(1.0 - lr * cfg_.weight_decay);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg_.epsilon);
  const T s = static_cast<T>(scale);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = params[i]->grad.array() * s;
    m_[i].array() = b1 * m_[i].array() + (T(1) - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * g * g;
    params[i]->value.array() *= decay;
    params[i]->value.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() * inv_sqrt_bc2 + eps);
  }
  return report;
}

template <typename T>
void AdamW<T>::save(const std::vector<Parameter<T>*>& params, Checkpoint& ckpt) const {
  ckpt.put_ints("adam/updates", {static_cast<std::int64_t>(updates_)});
  for (std::size_t i = 0; i < m_.size() && i < params.size(); ++i) {
    ckpt.put_matrix<T>("adam/m/" + params[i]->name, m_[i]);
    ckpt.put_matrix<T>("adam/v/" + params[i]->name, v_[i]);
  }
}

template <typename T>
void AdamW<T>::load(const std::vector<Parameter<T>*>& params, const Checkpoint& ckpt) {
  const auto updates = ckpt.get_ints("adam/updates");
  if (updates.size() != 1) throw CheckpointError("malformed optimizer step counter");
  updates_ = updates[0];
  m_.clear();
  v_.clear();
  if (!ckpt.has("adam/m/" + params.front()->name)) {
    if (updates_ != 0) throw CheckpointError("checkpoint lacks optimizer moments");
    return;
  }
  for (auto* p : params) {
    m_.push_back(ckpt.get_matrix<T>("adam/m/" + p->name));
    v_.push_back(ckpt.get_matrix<T>("adam/v/" + p->name));
    if (m_.back().rows() != p->value.rows() || m_.back().cols() != p->value.cols()) {
      throw CheckpointError("optimizer moments for '" + p->name + "' have the wrong shape");
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace hrt
