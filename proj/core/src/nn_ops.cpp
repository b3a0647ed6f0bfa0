#include "nn_ops.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "spec_util.hpp"

namespace ddp::detail {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

std::vector<std::size_t> kept_indices(std::span<const double> m, std::size_t offset,
                                      std::size_t count) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < count; ++i) {
    if (m[offset + i] > 0.0) kept.push_back(offset + i);
  }
  return kept;
}

Eigen::MatrixXd attention_head_forward(const AttentionHead& head, const Eigen::MatrixXd& x,
                                       HeadCache* cache) {
  HeadCache local;
  HeadCache& c = cache != nullptr ? *cache : local;
  c.q = x * head.wq;
  c.k = x * head.wk;
  c.v = x * head.wv;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head.wq.cols()));
  const Eigen::Index len = x.rows();
  c.probs = Eigen::MatrixXd::Zero(len, len);
  for (Eigen::Index i = 0; i < len; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j <= i; ++j) {
      c.probs(i, j) = scale * c.q.row(i).dot(c.k.row(j));
      mx = std::max(mx, c.probs(i, j));
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      c.probs(i, j) = std::exp(c.probs(i, j) - mx);
      z += c.probs(i, j);
    }
    for (Eigen::Index j = 0; j <= i; ++j) c.probs(i, j) /= z;
  }
  c.context = c.probs * c.v;
  return c.context * head.wo;
}

Eigen::MatrixXd attention_head_backward(const AttentionHead& head, const HeadCache& c,
                                        const Eigen::MatrixXd& dout) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(head.wq.cols()));
  const Eigen::MatrixXd dcontext = dout * head.wo.transpose();
  const Eigen::MatrixXd dprobs = dcontext * c.v.transpose();
  const Eigen::MatrixXd dv = c.probs.transpose() * dcontext;
  Eigen::MatrixXd dscores = Eigen::MatrixXd::Zero(c.probs.rows(), c.probs.cols());
  for (Eigen::Index i = 0; i < c.probs.rows(); ++i) {
    const double inner = c.probs.row(i).dot(dprobs.row(i));
    for (Eigen::Index j = 0; j <= i; ++j) {
      dscores(i, j) = c.probs(i, j) * (dprobs(i, j) - inner) * scale;
    }
  }
  const Eigen::MatrixXd dq = dscores * c.k;
  const Eigen::MatrixXd dk = dscores.transpose() * c.q;
  return dq * head.wq.transpose() + dk * head.wk.transpose() + dv * head.wv.transpose();
}

Eigen::MatrixXd gated_channels(const GatedMlp& mlp, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd up = x * mlp.wu;
  const Eigen::MatrixXd gate = x * mlp.wg;
  return up.unaryExpr([](double v) { return gelu(v); }).cwiseProduct(gate);
}

Eigen::MatrixXd rms_norm(const Eigen::MatrixXd& x, Eigen::VectorXd* inv_rms) {
  constexpr double kEps = 1e-6;
  Eigen::VectorXd inv(x.rows());
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    inv(i) = 1.0 / std::sqrt(x.row(i).squaredNorm() / static_cast<double>(x.cols()) + kEps);
    y.row(i) = x.row(i) * inv(i);
  }
  if (inv_rms != nullptr) *inv_rms = std::move(inv);
  return y;
}

Eigen::MatrixXd rms_norm_backward(const Eigen::MatrixXd& normed, const Eigen::VectorXd& inv_rms,
                                  const Eigen::MatrixXd& dy) {
  Eigen::MatrixXd dx(dy.rows(), dy.cols());
  const double n = static_cast<double>(dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double proj = dy.row(i).dot(normed.row(i)) / n;
    dx.row(i) = (dy.row(i) - proj * normed.row(i)) * inv_rms(i);
  }
  return dx;
}

GatedMlp select_channels(const GatedMlp& mlp, std::span<const double> m, std::size_t offset) {
  const auto width = static_cast<std::size_t>(mlp.wu.cols());
  const auto kept = kept_indices(m, offset, width);
  GatedMlp out;
  const auto n = static_cast<Eigen::Index>(kept.size());
  out.wu.resize(mlp.wu.rows(), n);
  out.wg.resize(mlp.wg.rows(), n);
  out.wd.resize(n, mlp.wd.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = static_cast<Eigen::Index>(kept[static_cast<std::size_t>(i)] - offset);
    out.wu.col(i) = mlp.wu.col(src);
    out.wg.col(i) = mlp.wg.col(src);
    out.wd.row(i) = m[kept[static_cast<std::size_t>(i)]] * mlp.wd.row(src);
  }
  return out;
}

}  // namespace ddp::detail
