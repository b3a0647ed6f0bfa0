#pragma once

// Deterministic forward gate and annealed retention-score mapping.
//
// Forward masks are m = ReLU(z). Retention scores, used only by the
// regularizers, are
//
//   s = clamp(sigmoid((z - mu) * c0 / mu) * (r - l) + l, 0, 1)
//
// with c0 chosen so that s(0) = 0; for r + l >= 1 this also gives
// s(2 mu) = 1. Both clamp and ReLU are differentiated with a
// straight-through estimator whose flavour is selectable.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ddp {

struct MaskLogits {
  std::vector<double> values;
  std::string group_tag;

  MaskLogits() = default;
  MaskLogits(std::vector<double> v, std::string tag);

  std::size_t size() const noexcept { return values.size(); }
  /// Throws ValidationError if empty or any entry is non-finite.
  void validate() const;

  /// Dense start: every logit set to 1.
  static MaskLogits ones(std::size_t k, std::string tag);
};

struct SurrogateParams {
  double l = -0.1;
  double r = 1.1;
  double c0 = 0.0;

  /// l = -0.1, r = 1.1 with c0 solved from s(0) = 0 (c0 = ln 11).
  static SurrogateParams defaults();
  /// Stretch bounds with c0 derived; throws if no positive c0 exists.
  static SurrogateParams from_stretch(double l, double r);
  void validate() const;
};

struct AnnealSchedule {
  double mu0 = 0.5;
  double muT = 0.05;
  std::size_t total_steps = 1000;

  void validate() const;
};

enum class ClampBackward {
  kIdentity,  ///< gradient passes through saturated regions
  kMasked,    ///< zero gradient where the pre-clamp value is outside [0, 1]
};

enum class ReluBackward {
  kIdentity,    ///< pruned components keep receiving gradient
  kSubgradient, ///< upstream * 1[z > 0]
};

struct C0Derivation {
  double c0 = 0.0;
  /// sigmoid(c0) * (r - l) + l; must reach 1 for s(2 mu) to clamp to one.
  double upper_value = 0.0;
  bool upper_ok = false;
};

std::vector<double> relu_gate(const MaskLogits& z);

/// Throws ValidationError when mu <= 0.
std::vector<double> retention_scores(std::span<const double> z, double mu,
                                     const SurrogateParams& p);

/// Pre-clamp value sigmoid((z - mu) c0 / mu) (r - l) + l, used by the
/// masked backward and by finite-difference checks.
double stretched_score(double z, double mu, const SurrogateParams& p);

double mu_at(std::size_t t, const AnnealSchedule& sched);

/// Solves sigmoid(-c0) (r - l) + l = 0. Throws ValidationError when the
/// bounds are out of order or no positive c0 exists; the companion
/// condition at 2 mu is reported, not thrown.
C0Derivation derive_c0(double l, double r);

std::vector<double> surrogate_backward(std::span<const double> z, double mu,
                                       const SurrogateParams& p,
                                       std::span<const double> upstream,
                                       ClampBackward mode = ClampBackward::kIdentity);

std::vector<double> relu_backward(std::span<const double> z, std::span<const double> upstream,
                                  ReluBackward mode = ReluBackward::kIdentity);

double sigmoid(double x) noexcept;

std::string to_string(ClampBackward m);
std::string to_string(ReluBackward m);
ClampBackward clamp_backward_from_string(const std::string& s);
ReluBackward relu_backward_from_string(const std::string& s);

}  // namespace ddp
