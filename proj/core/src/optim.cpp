#include "ddp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ddp/error.hpp"

namespace ddp {

AdamW::AdamW(std::size_t n, AdamWOptions opts) : opts_(opts), m_(n, 0.0), v_(n, 0.0) {
  if (!(opts.beta1 >= 0.0 && opts.beta1 < 1.0 && opts.beta2 >= 0.0 && opts.beta2 < 1.0)) {
    throw ValidationError("adamw: betas must lie in [0, 1)");
  }
}

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ValidationError("adamw: parameter/gradient size mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * grad[i];
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + opts_.eps) + opts_.weight_decay * params[i]);
  }
}

double WarmupCosine::at(std::size_t t) const {
  if (total_steps == 0) throw ValidationError("lr schedule: total_steps must be positive");
  t = std::clamp<std::size_t>(t, 1, total_steps);
  if (warmup_steps > 0 && t <= warmup_steps) {
    return peak * static_cast<double>(t) / static_cast<double>(warmup_steps);
  }
  const std::size_t decay = total_steps - std::min(warmup_steps, total_steps);
  if (decay == 0) return peak;
  const double progress =
      static_cast<double>(t - warmup_steps) / static_cast<double>(decay);
  return floor + (peak - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace ddp
