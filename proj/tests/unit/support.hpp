#pragma once

// Small fixtures and numeric helpers shared by the unit suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ddp/fixtures.hpp"
#include "ddp/models.hpp"
#include "ddp/rng.hpp"

namespace ddp::testing {

inline std::vector<double> uniform_vec(Philox4x32& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

/// Central difference of f along coordinate k.
inline double central_diff(const std::function<double(std::span<const double>)>& f,
                           std::vector<double> x, std::size_t k, double h) {
  const double x0 = x[k];
  x[k] = x0 + h;
  const double fp = f(x);
  x[k] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Small instance of every model kind, sized for finite-difference probes.
inline FixtureSpec small_spec(ModelKind kind) {
  FixtureSpec s;
  s.kind = kind;
  s.noise = 0.05;
  s.samples = 6;
  switch (kind) {
    case ModelKind::kPlantedLinear:
      s.name = "planted";
      s.components = 6;
      s.p_true = 3;
      break;
    case ModelKind::kToyAttention:
      s.name = "attention";
      s.components = 3;
      s.p_true = 2;
      s.seq_len = 5;
      s.model_dim = 6;
      s.head_dim = 3;
      s.in_dim = 6;
      s.out_dim = 6;
      break;
    case ModelKind::kToyMlp:
      s.name = "mlp";
      s.components = 6;
      s.p_true = 3;
      s.in_dim = 5;
      s.out_dim = 3;
      break;
    case ModelKind::kToyMoe:
      s.name = "moe";
      s.experts = 3;
      s.channels = 2;
      s.p_true = 3;
      s.in_dim = 5;
      s.out_dim = 3;
      break;
    case ModelKind::kTinyTransformer:
      s.name = "transformer";
      s.layers = 2;
      s.heads = 2;
      s.model_dim = 8;
      s.head_dim = 4;
      s.mlp_width = 6;
      s.vocab = 7;
      s.seq_len = 6;
      s.samples = 3;
      s.logit_scale = 1.0;
      break;
  }
  return s;
}

inline const std::vector<ModelKind>& all_kinds() {
  static const std::vector<ModelKind> kinds{ModelKind::kPlantedLinear, ModelKind::kToyAttention,
                                            ModelKind::kToyMlp, ModelKind::kToyMoe,
                                            ModelKind::kTinyTransformer};
  return kinds;
}

}  // namespace ddp::testing
