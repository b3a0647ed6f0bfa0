#include "ddp/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "ddp/error.hpp"

namespace ddp {

namespace {

void require_same_size(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw ValidationError(std::string(what) + ": size mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
}

void require_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw ValidationError(std::string(what) + ": non-finite entry at index " +
                            std::to_string(i));
    }
  }
}

void require_mu(double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu)) {
    throw ValidationError("retention scores: mu must be a positive finite number, got " +
                          std::to_string(mu));
  }
}

}  // namespace

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

MaskLogits::MaskLogits(std::vector<double> v, std::string tag)
    : values(std::move(v)), group_tag(std::move(tag)) {}

void MaskLogits::validate() const {
  if (values.empty()) throw ValidationError("mask logits must be non-empty");
  require_finite(values, "mask logits");
}

MaskLogits MaskLogits::ones(std::size_t k, std::string tag) {
  return MaskLogits(std::vector<double>(k, 1.0), std::move(tag));
}

SurrogateParams SurrogateParams::defaults() { return from_stretch(-0.1, 1.1); }

SurrogateParams SurrogateParams::from_stretch(double l, double r) {
  SurrogateParams p;
  p.l = l;
  p.r = r;
  p.c0 = derive_c0(l, r).c0;
  return p;
}

void SurrogateParams::validate() const {
  if (!(l < 0.0 && r > 1.0)) {
    throw ValidationError("surrogate: stretch bounds must satisfy l < 0 < 1 < r");
  }
  if (!(c0 > 0.0) || !std::isfinite(c0)) {
    throw ValidationError("surrogate: c0 must be positive");
  }
  const double at_zero = sigmoid(-c0) * (r - l) + l;
  if (std::abs(at_zero) > 1e-12) {
    throw ValidationError("surrogate: c0 does not pin s(0) = 0 (residual " +
                          std::to_string(at_zero) + ")");
  }
}

void AnnealSchedule::validate() const {
  if (total_steps == 0) throw ValidationError("schedule: total_steps must be positive");
  if (!(muT > 0.0)) throw ValidationError("schedule: muT must be > 0");
  if (!(mu0 >= muT)) throw ValidationError("schedule: mu0 must be >= muT");
}

std::vector<double> relu_gate(const MaskLogits& z) {
  z.validate();
  std::vector<double> m(z.size());
  std::transform(z.values.begin(), z.values.end(), m.begin(),
                 [](double v) { return v > 0.0 ? v : 0.0; });
  return m;
}

double stretched_score(double z, double mu, const SurrogateParams& p) {
  return sigmoid((z - mu) * p.c0 / mu) * (p.r - p.l) + p.l;
}

std::vector<double> retention_scores(std::span<const double> z, double mu,
                                     const SurrogateParams& p) {
  require_mu(mu);
  std::vector<double> s(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    s[k] = std::clamp(stretched_score(z[k], mu, p), 0.0, 1.0);
  }
  return s;
}

double mu_at(std::size_t t, const AnnealSchedule& sched) {
  sched.validate();
  if (t > sched.total_steps) {
    throw ValidationError("mu_at: step " + std::to_string(t) + " exceeds total steps " +
                          std::to_string(sched.total_steps));
  }
  if (t == sched.total_steps) return sched.muT;
  const double progress = static_cast<double>(t) / static_cast<double>(sched.total_steps);
  return sched.mu0 - (sched.mu0 - sched.muT) * std::sqrt(progress);
}

C0Derivation derive_c0(double l, double r) {
  if (!(l < 0.0 && r > 1.0)) {
    throw ValidationError("derive_c0: requires l < 0 < 1 < r");
  }
  // sigmoid(-c0) = -l / (r - l)  =>  c0 = ln((r - l) / (-l) - 1) = ln(r / -l).
  const double ratio = (r - l) / (-l) - 1.0;
  if (!(ratio > 1.0)) {
    throw ValidationError("derive_c0: no positive c0 for l = " + std::to_string(l) +
                          ", r = " + std::to_string(r) + " (need -l < (r - l) / 2)");
  }
  C0Derivation out;
  out.c0 = std::log(ratio);
  out.upper_value = sigmoid(out.c0) * (r - l) + l;
  out.upper_ok = out.upper_value >= 1.0 - 1e-12;
  return out;
}

std::vector<double> surrogate_backward(std::span<const double> z, double mu,
                                       const SurrogateParams& p,
                                       std::span<const double> upstream, ClampBackward mode) {
  require_mu(mu);
  require_same_size(z, upstream, "surrogate_backward");
  const double scale = p.c0 / mu * (p.r - p.l);
  std::vector<double> grad(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double x = (z[k] - mu) * p.c0 / mu;
    // e / (1 + e)^2 with e = exp(-|x|) keeps the slope positive where sg(1 - sg) rounds to 0
    const double e = std::exp(-std::abs(x));
    double local = scale * e / ((1.0 + e) * (1.0 + e));
    if (mode == ClampBackward::kMasked) {
      const double pre = sigmoid(x) * (p.r - p.l) + p.l;
      if (pre < 0.0 || pre > 1.0) local = 0.0;
    }
    grad[k] = upstream[k] * local;
  }
  return grad;
}

std::vector<double> relu_backward(std::span<const double> z, std::span<const double> upstream,
                                  ReluBackward mode) {
  require_same_size(z, upstream, "relu_backward");
  require_finite(z, "relu_backward");
  std::vector<double> grad(upstream.begin(), upstream.end());
  if (mode == ReluBackward::kSubgradient) {
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (!(z[k] > 0.0)) grad[k] = 0.0;
    }
  }
  return grad;
}

std::string to_string(ClampBackward m) {
  return m == ClampBackward::kIdentity ? "identity" : "masked";
}

std::string to_string(ReluBackward m) {
  return m == ReluBackward::kIdentity ? "identity" : "subgradient";
}

ClampBackward clamp_backward_from_string(const std::string& s) {
  if (s == "identity") return ClampBackward::kIdentity;
  if (s == "masked") return ClampBackward::kMasked;
  throw ValidationError("ste.clamp: expected identity|masked, got '" + s + "'");
}

ReluBackward relu_backward_from_string(const std::string& s) {
  if (s == "identity") return ReluBackward::kIdentity;
  if (s == "subgradient") return ReluBackward::kSubgradient;
  throw ValidationError("ste.relu: expected identity|subgradient, got '" + s + "'");
}

}  // namespace ddp
