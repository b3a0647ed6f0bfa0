#include "ddp/objective.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "ddp/error.hpp"

namespace ddp {

namespace {

void require_scores(std::span<const double> s, const char* what) {
  if (s.empty()) throw ValidationError(std::string(what) + ": empty score vector");
  for (double v : s) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError(std::string(what) + ": scores must lie in [0, 1]");
    }
  }
}

}  // namespace

void GroupPartition::validate(std::size_t k) const {
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("partition: rho must lie in (0, 1)");
  if (groups.empty()) throw ValidationError("partition: no groups");
  std::vector<char> seen(k, 0);
  std::size_t covered = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw ValidationError("partition: empty group");
    for (std::size_t i : g) {
      if (i >= k) throw ValidationError("partition: index out of range");
      if (seen[i]) throw ValidationError("partition: groups overlap at index " + std::to_string(i));
      seen[i] = 1;
      ++covered;
    }
  }
  if (covered != k) throw ValidationError("partition: groups do not cover all components");
}

GroupPartition GroupPartition::single(std::size_t k, double rho) {
  GroupPartition p;
  p.rho = rho;
  p.groups.emplace_back(k);
  std::iota(p.groups.front().begin(), p.groups.front().end(), std::size_t{0});
  return p;
}

BudgetSpec BudgetSpec::make(double rho, std::size_t k) {
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("budget: rho must lie in (0, 1)");
  if (k == 0) throw ValidationError("budget: K must be positive");
  BudgetSpec b;
  b.rho = rho;
  b.alpha = 1.0 - rho;
  b.target_count = static_cast<std::size_t>(std::floor(rho * static_cast<double>(k) + 0.5));
  return b;
}

double mean(std::span<const double> s) {
  if (s.empty()) return 0.0;
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

ScoreLoss sparsity_loss(std::span<const double> s, double rho, const LagrangeState& lam) {
  require_scores(s, "sparsity_loss");
  const double gap = mean(s) - rho;
  ScoreLoss out;
  out.value = lam.lambda1 * gap + lam.lambda2 * gap * gap;
  const double g = (lam.lambda1 + 2.0 * lam.lambda2 * gap) / static_cast<double>(s.size());
  out.grad.assign(s.size(), g);
  return out;
}

ScoreLoss group_sparsity_loss(std::span<const double> s, const GroupPartition& part,
                              const LagrangeState& lam) {
  require_scores(s, "group_sparsity_loss");
  part.validate(s.size());
  ScoreLoss out;
  out.grad.assign(s.size(), 0.0);
  const double inv_groups = 1.0 / static_cast<double>(part.groups.size());
  for (const auto& g : part.groups) {
    double sum = 0.0;
    for (std::size_t i : g) sum += s[i];
    const double n = static_cast<double>(g.size());
    const double gap = sum / n - part.rho;
    out.value += lam.lambda1 * gap + lam.lambda2 * gap * gap;
    const double dg = inv_groups * (lam.lambda1 + 2.0 * lam.lambda2 * gap) / n;
    for (std::size_t i : g) out.grad[i] = dg;
  }
  out.value *= inv_groups;
  return out;
}

double binarization_measure(std::span<const double> s) {
  double acc = 0.0;
  for (double v : s) acc += v * (1.0 - v);
  return s.empty() ? 0.0 : acc / static_cast<double>(s.size());
}

ScoreLoss binarization_loss(std::span<const double> s, double lambda3) {
  require_scores(s, "binarization_loss");
  ScoreLoss out;
  out.value = lambda3 * binarization_measure(s);
  out.grad.resize(s.size());
  const double inv_k = 1.0 / static_cast<double>(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) out.grad[k] = lambda3 * (1.0 - 2.0 * s[k]) * inv_k;
  return out;
}

double kl_distill_loss(const Eigen::MatrixXd& teacher, const Eigen::MatrixXd& student,
                       KlReduction reduction) {
  if (teacher.rows() != student.rows() || teacher.cols() != student.cols()) {
    throw ValidationError("kl_distill_loss: teacher and student shapes differ");
  }
  if (teacher.rows() == 0) throw ValidationError("kl_distill_loss: no positions");
  double total = 0.0;
  for (Eigen::Index i = 0; i < teacher.rows(); ++i) {
    for (const auto* dist : {&teacher, &student}) {
      const double row_sum = dist->row(i).sum();
      if (std::abs(row_sum - 1.0) > 1e-6 || dist->row(i).minCoeff() < 0.0) {
        throw ValidationError("kl_distill_loss: row " + std::to_string(i) +
                              " is not a probability distribution");
      }
    }
    for (Eigen::Index v = 0; v < teacher.cols(); ++v) {
      const double pt = teacher(i, v);
      if (pt == 0.0) continue;
      const double ps = student(i, v);
      if (ps == 0.0) {
        throw ValidationError("kl_distill_loss: infinite divergence at position " +
                              std::to_string(i) + ", token " + std::to_string(v));
      }
      total += pt * std::log(pt / ps);
    }
  }
  if (reduction == KlReduction::kMean) total /= static_cast<double>(teacher.rows());
  return total;
}

double total_loss(double ce, double kl, std::span<const double> sparsity_terms,
                  std::span<const double> bin_terms, double eta) {
  if (!(eta >= 0.0)) throw ValidationError("total_loss: eta must be >= 0");
  double total = ce + eta * kl;
  for (double v : sparsity_terms) total += v;
  for (double v : bin_terms) total += v;
  return total;
}

}  // namespace ddp
