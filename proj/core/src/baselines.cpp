#include "ddp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ddp/error.hpp"

namespace ddp {

double choose(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return std::round(c);
}

OracleResult brute_force_l0(const ComponentModel& model, const Batch& data, std::size_t p,
                            double guard) {
  const std::size_t k = model.num_components();
  if (p < 1 || p > k) {
    throw ValidationError("oracle: subset size must lie in [1, K], got " + std::to_string(p) +
                          " for K = " + std::to_string(k));
  }
  const double count = choose(k, p);
  if (count > guard) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "oracle: C(%zu, %zu) = %.0f candidates exceeds the guard of %.0f",
                  k, p, count, guard);
    throw GuardError(buf, count);
  }
  // Lexicographic enumeration; a strict < keeps the first (smallest) subset on ties.
  std::vector<std::size_t> idx(p);
  for (std::size_t i = 0; i < p; ++i) idx[i] = i;
  std::vector<double> m(k, 0.0);
  OracleResult best;
  best.best_loss = std::numeric_limits<double>::infinity();
  while (true) {
    std::fill(m.begin(), m.end(), 0.0);
    for (std::size_t i : idx) m[i] = 1.0;
    const double loss = model.task_loss(data, m);
    ++best.evaluated_count;
    if (loss < best.best_loss) {
      best.best_loss = loss;
      best.best_subset = idx;
    }
    std::size_t i = p;
    while (i > 0 && idx[i - 1] == k - p + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < p; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

void HardConcreteParams::validate() const {
  if (!(l < 0.0 && r > 1.0 && std::isfinite(l) && std::isfinite(r))) {
    throw ValidationError("hard concrete: stretch must satisfy l < 0 < 1 < r");
  }
  for (double v : z) {
    if (!std::isfinite(v)) throw ValidationError("hard concrete: non-finite logit");
  }
}

double hc_stretched(double z, double u, double l, double r) {
  return sigmoid(std::log(u) - std::log1p(-u) + z) * (r - l) + l;
}

std::vector<double> sample_hc_mask(const HardConcreteParams& p, std::span<const double> u) {
  p.validate();
  if (u.size() != p.z.size()) throw ValidationError("hard concrete: one uniform per gate");
  std::vector<double> m(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (!(u[k] > 0.0 && u[k] < 1.0)) {
      throw ValidationError("hard concrete: uniforms must lie strictly inside (0, 1)");
    }
    m[k] = std::clamp(hc_stretched(p.z[k], u[k], p.l, p.r), 0.0, 1.0);
  }
  return m;
}

std::vector<double> sample_hc_mask(const HardConcreteParams& p, Philox4x32& rng) {
  std::vector<double> u(p.z.size());
  for (double& x : u) x = rng.uniform_open();
  return sample_hc_mask(p, u);
}

double expected_l0(std::span<const double> z, double l, double r) {
  if (!(l < 0.0 && r > 0.0)) throw ValidationError("expected_l0: requires l < 0 < r");
  const double shift = std::log(-l / r);
  double sum = 0.0;
  for (double v : z) sum += sigmoid(v - shift);
  return sum;
}

TrainResult hard_concrete_train(const ComponentModel& model, const Batch& data, TrainConfig cfg,
                                const ComponentModel* teacher) {
  cfg.variant = Variant::kHardConcrete;
  return train_masks(model, data, cfg, teacher);
}

double hc_expected_loss(const ComponentModel& model, const Batch& data, std::span<const double> z,
                        double l, double r, std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw ValidationError("hc_expected_loss: draws must be positive");
  HardConcreteParams p{l, r, std::vector<double>(z.begin(), z.end()), seed};
  Philox4x32 rng(seed, 0xe4a1);
  double sum = 0.0;
  for (std::size_t d = 0; d < draws; ++d) sum += model.task_loss(data, sample_hc_mask(p, rng));
  return sum / static_cast<double>(draws);
}

}  // namespace ddp
