#pragma once

#include <cstddef>

#include "five/param_store.hpp"

namespace five {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// One AdamW step over every trainable parameter. Weight decay is decoupled:
// theta <- theta * (1 - lr * wd) is applied before the moment update.
// Throws StateError when a trainable parameter has no current gradient.
// Gradients are cleared afterwards.
void adamw_step(ParamStore& params, const AdamWConfig& config);

// Linear warmup over ceil(warmup_ratio * total_steps) steps, then constant.
// `step` is zero-based.
double warmup_lr(double base_lr, std::size_t step, std::size_t total_steps, double warmup_ratio);

}  // namespace five
