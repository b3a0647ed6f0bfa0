#pragma once

// Classic augmented-Lagrangian iteration for one smooth equality
// constraint: inner minimization of F + nu c + (gamma / 2) c^2, then
// nu += gamma c with gamma escalated when feasibility stalls.

#include <cstddef>
#include <functional>
#include <vector>

#include "Eigen/Core"
#include "ddp/trainer.hpp"

namespace ddp {

struct AlmProblem {
  std::function<double(const Eigen::VectorXd&)> f;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_f;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess_f;
  std::function<double(const Eigen::VectorXd&)> c;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_c;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess_c;
};

struct AlmIterate {
  std::size_t outer = 0;
  Eigen::VectorXd x;
  double nu = 0.0;
  double gamma = 0.0;
  double c = 0.0;
  double kkt = 0.0;  ///< |grad F + nu grad c| after the multiplier update
  std::size_t inner_steps = 0;
};

/// F(x) = 1/2 (x - a)^T Q (x - a) subject to |x|^2 = 1, with
/// a = (2, 1) and Q = diag(3, 1).
AlmProblem quadratic_circle_problem();

/// Runs `outer_iters` outer iterations from x0. Inner problems are solved by
/// damped Newton to a gradient norm of `inner_tol`.
std::vector<AlmIterate> run_classic_alm(const AlmProblem& prob, Eigen::VectorXd x0,
                                        const AlmOptions& opts, std::size_t outer_iters,
                                        double inner_tol = 1e-12);

}  // namespace ddp
