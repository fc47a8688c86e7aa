#include "five/optim.hpp"

#include <algorithm>
#include <cmath>

#include "five/error.hpp"

namespace five {

void adamw_step(ParamStore& params, const AdamWConfig& config) {
  for (const auto& [name, p] : params)
    if (p.requires_grad && !p.grad_ready)
      throw StateError("adamw_step: parameter '" + name + "' has no current gradient");

  for (auto& [name, p] : params) {
    if (!p.requires_grad) continue;
    p.step += 1;
    const double t = static_cast<double>(p.step);
    const double bias1 = 1.0 - std::pow(config.beta1, t);
    const double bias2 = 1.0 - std::pow(config.beta2, t);
    const double decay = 1.0 - config.lr * config.weight_decay;
    auto theta = p.value.data();
    auto g = p.grad.data();
    auto m = p.first_moment.data();
    auto v = p.second_moment.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (config.weight_decay != 0.0) theta[i] *= decay;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      theta[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
    if (!p.value.all_finite())
      throw NumericError("adamw_step: parameter '" + name + "' became non-finite");
  }
  params.zero_grad();
}

double warmup_lr(double base_lr, std::size_t step, std::size_t total_steps, double warmup_ratio) {
  const auto warmup =
      static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
  if (warmup == 0 || step >= warmup) return base_lr;
  return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

}  // namespace five
