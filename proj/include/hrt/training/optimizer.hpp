// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hrt/tensor.hpp"

namespace hrt {

class Checkpoint;

struct OptimizerConfig {
  double peak_lr = 4e-4;
  double start_lr = 1e-7;
  double final_lr = 5e-6;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; <= 0 disables clipping.
  double grad_clip = 0.25;

  void validate() const;
};

/// One-cycle schedule: cosine from start to peak over [0, floor(total/3)],
/// then cosine from peak to final over [floor(total/3), total]. total == 0
/// yields start_lr; for total < 3 the peak lands on step 0.
double one_cycle_lr(Index step, Index total, double start_lr, double peak_lr, double final_lr);
double one_cycle_lr(Index step, Index total, const OptimizerConfig& cfg);

struct StepReport {
  double grad_norm = 0.0;  // before clipping
  bool clipped = false;
  bool skipped = false;    // non-finite gradient, parameters untouched
};

/// AdamW with decoupled weight decay: p <- p * (1 - lr * wd) - lr * m_hat /
/// (sqrt(v_hat) + eps), after global-norm clipping of the gradients.
template <typename T>
class AdamW {
 public:
  explicit AdamW(const OptimizerConfig& cfg);

  const OptimizerConfig& config() const { return cfg_; }
  /// Updates taken so far (skipped steps excluded); drives bias correction.
  Index updates() const { return updates_; }

  StepReport step(const std::vector<Parameter<T>*>& params, double lr);

  /// Moments are stored as "adam/m/<param>" and "adam/v/<param>".
  void save(const std::vector<Parameter<T>*>& params, Checkpoint& ckpt) const;
  void load(const std::vector<Parameter<T>*>& params, const Checkpoint& ckpt);

 private:
  void ensure(const std::vector<Parameter<T>*>& params);

  OptimizerConfig cfg_;
  Index updates_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace hrt
