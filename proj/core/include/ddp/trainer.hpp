#pragma once

// Mask-only training loop: annealed retention scores, multiplier ascent,
// optional distillation, per-step telemetry and finalization.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ddp/models.hpp"
#include "ddp/objective.hpp"
#include "ddp/optim.hpp"
#include "ddp/surrogate.hpp"

namespace ddp {

enum class MultiplierMode { kAscent, kClassicAlm };
enum class Granularity { kGlobal, kPerGroup };
/// The constraint target per group: round(rho K) / K, or rho itself.
enum class BudgetTarget { kRounded, kNominal };

/// Gate/regularizer combination. kDdp is the method proper; the others are
/// the ablation rows (stochastic hard concrete, its deterministic u = 0.5
/// variant, and that variant with the ReLU forward gate).
enum class Variant { kDdp, kHardConcrete, kDetHardConcrete, kDetHardConcreteRelu };
/// How the hard-concrete variants discretize at the end.
enum class HcFinalize { kThreshold, kTopP };

std::string to_string(MultiplierMode m);
std::string to_string(Granularity g);
std::string to_string(BudgetTarget b);
std::string to_string(Variant v);
std::string to_string(HcFinalize f);
MultiplierMode multiplier_mode_from_string(const std::string& s);
Granularity granularity_from_string(const std::string& s);
BudgetTarget budget_target_from_string(const std::string& s);
/// Accepts "ours", "hc", "det_hc", "det_hc_em".
Variant variant_from_string(const std::string& s);
HcFinalize hc_finalize_from_string(const std::string& s);

struct AlmOptions {
  double gamma0 = 1.0;
  double growth = 10.0;
  /// gamma grows when |c| fails to shrink below stall_ratio * previous |c|.
  double stall_ratio = 0.25;
  std::size_t window = 50;  ///< trainer steps per outer iteration
  double gamma_max = 1e6;
  /// |c| at or below this counts as feasible and never escalates gamma.
  double feas_tol = 1e-9;

  bool operator==(const AlmOptions&) const = default;
};

struct TrainConfig {
  std::size_t total_steps = 1000;
  std::size_t batch_size = 64;
  /// Keep ratio per module type; the key "*" applies to every type not listed.
  std::map<std::string, double> rho{{"*", 0.5}};
  double eta = 2.0;
  KlReduction kl_reduction = KlReduction::kSum;
  bool distill = true;
  double lr_z = 2e-2;
  double lr_lambda1 = 2e-2;
  double lr_lambda2 = 8e-1;
  double lr_lambda3 = 2e-2;
  AdamWOptions adam{};
  std::size_t warmup_steps = 50;
  double lr_floor = 0.0;
  double mu0 = 0.5;
  double muT = 0.05;
  double stretch_l = -0.1;
  double stretch_r = 1.1;
  Granularity granularity = Granularity::kGlobal;
  BudgetTarget budget_target = BudgetTarget::kRounded;
  ClampBackward clamp_backward = ClampBackward::kIdentity;
  ReluBackward relu_backward = ReluBackward::kIdentity;
  MultiplierMode multiplier_mode = MultiplierMode::kAscent;
  AlmOptions alm{};
  double z_init = 1.0;
  Variant variant = Variant::kDdp;
  double hc_z_init = 2.0;
  HcFinalize hc_finalize = HcFinalize::kThreshold;
  std::uint64_t seed = 0;

  /// Throws ValidationError naming the offending field.
  void validate() const;
  double rho_for(const std::string& type) const;
  AnnealSchedule schedule() const { return {mu0, muT, total_steps}; }
  SurrogateParams surrogate() const { return SurrogateParams::from_stretch(stretch_l, stretch_r); }
  bool operator==(const TrainConfig&) const = default;
};

/// Per-module-type slice of a step record.
struct TypeRecord {
  std::string type;
  double target = 0.0;     ///< constraint target (see BudgetTarget)
  double sbar = 0.0;       ///< mean retention score (expected keep ratio for hc)
  double violation = 0.0;  ///< max over groups of |sbar_g - target_g|
  double binarization = 0.0;
  LagrangeState lambda{};
  std::size_t kept = 0;
};

struct TrainRecord {
  std::size_t t = 0;
  double mu = 0.0;
  double loss_task = 0.0;
  double loss_kl = 0.0;
  double loss_sparsity = 0.0;
  double loss_bin = 0.0;
  double loss_total = 0.0;
  double lr_z = 0.0;
  std::vector<TypeRecord> types;
  std::size_t kept_count = 0;
  double violation = 0.0;     ///< max over types
  double binarization = 0.0;  ///< max over types
};

struct FinalMask {
  std::vector<double> binary;   ///< b_k in {0, 1}
  std::vector<double> deployed; ///< mask folded into the pruned model
  std::size_t kept_count = 0;
  std::map<std::string, std::size_t> kept_per_type;
  double margin = 0.0;          ///< min_k |z_k|
};

struct TrainResult {
  std::vector<double> z;
  std::vector<TrainRecord> history;
  FinalMask final;
  double hard_loss = 0.0;      ///< task loss at the binary mask, full data
  double deployed_loss = 0.0;  ///< task loss at the deployed mask, full data
  double soft_loss = 0.0;      ///< training-mode loss at the final z, full data
  std::uint64_t theta_before = 0;
  std::uint64_t theta_after = 0;
};

/// b_k = 1[z_k > 0]. A zero margin is logged as a warning.
FinalMask finalize(std::span<const double> z);

struct MultiplierRates {
  double lr1 = 2e-2;
  double lr2 = 8e-1;
  double lr3 = 2e-2;
};

/// Plain ascent: lambda1 += lr1 gap, lambda2 += lr2 gap^2, lambda3 += lr3 B,
/// with lambda2 and lambda3 kept nonnegative. `gap2` is the mean squared gap
/// (gap^2 for a single group).
LagrangeState update_multipliers(const LagrangeState& lam, double gap, double gap2, double b,
                                 const MultiplierRates& rates);

/// Classic augmented-Lagrangian multiplier for one equality constraint.
struct AlmState {
  double nu = 0.0;
  double gamma = 1.0;
  double last_abs_c = -1.0;
};

/// nu += gamma c; gamma *= growth when |c| stalls.
void alm_update(AlmState& st, double c, const AlmOptions& opts);

/// Runs the configured variant. `teacher` is used only for token models
/// with distillation enabled; pass nullptr otherwise.
TrainResult train_masks(const ComponentModel& model, const Batch& data, const TrainConfig& cfg,
                        const ComponentModel* teacher = nullptr);

/// Constraint target count per module type, after budget rounding.
std::map<std::string, std::size_t> budget_counts(const ComponentModel& model,
                                                 const TrainConfig& cfg);

}  // namespace ddp
