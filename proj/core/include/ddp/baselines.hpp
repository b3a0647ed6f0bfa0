#pragma once

// Exhaustive l0 oracle and the stochastic hard-concrete gate.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ddp/models.hpp"
#include "ddp/rng.hpp"
#include "ddp/trainer.hpp"

namespace ddp {

inline constexpr double kOracleGuard = 2e6;

struct OracleResult {
  std::vector<std::size_t> best_subset;  ///< ascending
  double best_loss = 0.0;
  std::size_t evaluated_count = 0;
};

/// Binomial coefficient as a double (exact below 2^53).
double choose(std::size_t n, std::size_t k);

/// Evaluates every size-p subset with indicator masks; ties go to the
/// lexicographically smallest subset. Throws GuardError above kOracleGuard.
OracleResult brute_force_l0(const ComponentModel& model, const Batch& data, std::size_t p,
                            double guard = kOracleGuard);

struct HardConcreteParams {
  double l = -0.1;
  double r = 1.1;
  std::vector<double> z;
  std::uint64_t seed = 0;

  void validate() const;
};

/// m = clamp(sigmoid(logit(u) + z) (r - l) + l, 0, 1); u must lie in (0, 1).
std::vector<double> sample_hc_mask(const HardConcreteParams& p, std::span<const double> u);
/// Pre-clamp value for a single gate.
double hc_stretched(double z, double u, double l, double r);
/// Draws fresh uniforms from the generator and samples a mask.
std::vector<double> sample_hc_mask(const HardConcreteParams& p, Philox4x32& rng);

/// sum_k sigmoid(z_k - ln(-l / r)).
double expected_l0(std::span<const double> z, double l, double r);

/// Runs the stochastic hard-concrete baseline: trainer loop with sampled
/// masks and the expected-l0 penalty.
TrainResult hard_concrete_train(const ComponentModel& model, const Batch& data, TrainConfig cfg,
                                const ComponentModel* teacher = nullptr);

/// Monte Carlo estimate of E_u[task loss] under sampled masks.
double hc_expected_loss(const ComponentModel& model, const Batch& data, std::span<const double> z,
                        double l, double r, std::size_t draws, std::uint64_t seed);

}  // namespace ddp
