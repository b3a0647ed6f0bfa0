#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ddp {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  bool operator==(const AdamWOptions&) const = default;
};

/// Decoupled-weight-decay Adam over a flat parameter vector.
class AdamW {
 public:
  AdamW(std::size_t n, AdamWOptions opts = {});

  void step(std::span<double> params, std::span<const double> grad, double lr);
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  AdamWOptions opts_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

/// Linear warmup to the peak followed by cosine decay to `floor`.
struct WarmupCosine {
  double peak = 2e-2;
  std::size_t warmup_steps = 50;
  std::size_t total_steps = 1000;
  double floor = 0.0;

  /// Learning rate at 1-based step t.
  double at(std::size_t t) const;
};

}  // namespace ddp
