#pragma once

// Regularizers and loss assembly for mask-only pruning.

#include <cstddef>
#include <span>
#include <vector>

#include "Eigen/Core"

namespace ddp {

/// Multipliers for one prunable module type.
struct LagrangeState {
  double lambda1 = 0.0;  ///< linear (Lagrange) multiplier
  double lambda2 = 0.0;  ///< quadratic penalty weight
  double lambda3 = 0.0;  ///< binarization weight

  bool operator==(const LagrangeState&) const = default;
};

/// Disjoint cover of {0..K-1} with a shared keep ratio.
struct GroupPartition {
  std::vector<std::vector<std::size_t>> groups;
  double rho = 0.5;

  /// Throws ValidationError on overlap, gaps, empty groups or rho outside (0, 1).
  void validate(std::size_t k) const;
  static GroupPartition single(std::size_t k, double rho);
};

struct BudgetSpec {
  double rho = 0.5;
  double alpha = 0.5;
  std::size_t target_count = 0;  ///< round-half-up of rho * K

  static BudgetSpec make(double rho, std::size_t k);
};

/// Loss value together with its gradient with respect to the scores.
struct ScoreLoss {
  double value = 0.0;
  std::vector<double> grad;
};

double mean(std::span<const double> s);

/// lambda1 (s_bar - rho) + lambda2 (s_bar - rho)^2.
ScoreLoss sparsity_loss(std::span<const double> s, double rho, const LagrangeState& lam);

/// Average of the per-group sparsity penalties.
ScoreLoss group_sparsity_loss(std::span<const double> s, const GroupPartition& part,
                              const LagrangeState& lam);

/// lambda3 * mean(s (1 - s)).
ScoreLoss binarization_loss(std::span<const double> s, double lambda3);

/// Unweighted binarization measure B(s) = mean(s (1 - s)).
double binarization_measure(std::span<const double> s);

enum class KlReduction { kSum, kMean };

/// KL(teacher || student) summed over positions (rows); each row is a
/// distribution over the vocabulary. Throws ValidationError for malformed
/// distributions and for an infinite divergence.
double kl_distill_loss(const Eigen::MatrixXd& teacher, const Eigen::MatrixXd& student,
                       KlReduction reduction = KlReduction::kSum);

/// ce + eta kl + sum(sparsity) + sum(bin), one regularizer pair per module type.
double total_loss(double ce, double kl, std::span<const double> sparsity_terms,
                  std::span<const double> bin_terms, double eta);

}  // namespace ddp
