#include "ddp/classic_alm.hpp"

#include <cmath>

#include "Eigen/Dense"
#include "ddp/error.hpp"

namespace ddp {

AlmProblem quadratic_circle_problem() {
  const Eigen::Vector2d a(2.0, 1.0);
  const Eigen::Matrix2d q = Eigen::Vector2d(3.0, 1.0).asDiagonal();
  AlmProblem p;
  p.f = [=](const Eigen::VectorXd& x) { return 0.5 * (x - a).dot(q * (x - a)); };
  p.grad_f = [=](const Eigen::VectorXd& x) -> Eigen::VectorXd { return q * (x - a); };
  p.hess_f = [=](const Eigen::VectorXd&) -> Eigen::MatrixXd { return q; };
  p.c = [](const Eigen::VectorXd& x) { return x.squaredNorm() - 1.0; };
  p.grad_c = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return 2.0 * x; };
  p.hess_c = [](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    return 2.0 * Eigen::MatrixXd::Identity(x.size(), x.size());
  };
  return p;
}

namespace {

double lagrangian(const AlmProblem& p, const Eigen::VectorXd& x, double nu, double gamma) {
  const double c = p.c(x);
  return p.f(x) + nu * c + 0.5 * gamma * c * c;
}

Eigen::VectorXd lagrangian_grad(const AlmProblem& p, const Eigen::VectorXd& x, double nu,
                                double gamma) {
  return p.grad_f(x) + (nu + gamma * p.c(x)) * p.grad_c(x);
}

std::size_t minimize_inner(const AlmProblem& p, Eigen::VectorXd& x, double nu, double gamma,
                           double tol) {
  std::size_t it = 0;
  for (; it < 200; ++it) {
    const Eigen::VectorXd g = lagrangian_grad(p, x, nu, gamma);
    if (g.norm() <= tol) break;
    const double c = p.c(x);
    const Eigen::VectorXd gc = p.grad_c(x);
    Eigen::MatrixXd h = p.hess_f(x) + (nu + gamma * c) * p.hess_c(x) + gamma * gc * gc.transpose();
    Eigen::VectorXd dir;
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() == Eigen::Success) {
      dir = -llt.solve(g);
    } else {
      dir = -g;
    }
    if (dir.dot(g) >= 0.0) dir = -g;
    // A full step that shrinks the gradient is taken as is: near the minimizer the
    // Armijo test compares values that differ only in round-off.
    double step = 1.0;
    if (lagrangian_grad(p, x + dir, nu, gamma).norm() >= g.norm()) {
      const double f0 = lagrangian(p, x, nu, gamma);
      while (step > 1e-16 &&
             lagrangian(p, x + step * dir, nu, gamma) > f0 + 1e-4 * step * g.dot(dir)) {
        step *= 0.5;
      }
    }
    const Eigen::VectorXd next = x + step * dir;
    if ((next - x).norm() == 0.0) break;
    x = next;
  }
  return it;
}

}  // namespace

std::vector<AlmIterate> run_classic_alm(const AlmProblem& prob, Eigen::VectorXd x0,
                                        const AlmOptions& opts, std::size_t outer_iters,
                                        double inner_tol) {
  if (!(inner_tol > 0.0)) throw ValidationError("classic alm: inner tolerance must be positive");
  AlmState st;
  st.gamma = opts.gamma0;
  Eigen::VectorXd x = std::move(x0);
  std::vector<AlmIterate> out;
  out.reserve(outer_iters);
  for (std::size_t k = 1; k <= outer_iters; ++k) {
    AlmIterate rec;
    rec.outer = k;
    rec.inner_steps = minimize_inner(prob, x, st.nu, st.gamma, inner_tol);
    rec.c = prob.c(x);
    alm_update(st, rec.c, opts);
    rec.x = x;
    rec.nu = st.nu;
    rec.gamma = st.gamma;
    rec.kkt = (prob.grad_f(x) + st.nu * prob.grad_c(x)).norm();
    if (!std::isfinite(rec.kkt) || !std::isfinite(rec.c)) {
      throw DivergenceError("classic alm: non-finite iterate", k);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace ddp
