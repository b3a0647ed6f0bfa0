#pragma once

// Naive-loop dense forwards rebuilt from a model's exported parameters.
// They share no code with the library models and serve as the unmasked
// reference for dense-equivalence checks.

#include <cmath>
#include <string>

#include "Eigen/Core"
#include "ddp/models.hpp"

namespace ddp::testing {

inline Eigen::MatrixXd naive_mul(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      long double acc = 0.0L;
      for (Eigen::Index k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(acc);
    }
  return c;
}

inline Eigen::MatrixXd tensor(const ModelSpec& s, const std::string& name) {
  return s.tensors.at(name).to_matrix();
}

inline double ref_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Eigen::MatrixXd ref_gated(const Eigen::MatrixXd& x, const Eigen::MatrixXd& wu,
                                 const Eigen::MatrixXd& wg) {
  Eigen::MatrixXd up = naive_mul(x, wu), gate = naive_mul(x, wg);
  for (Eigen::Index i = 0; i < up.rows(); ++i)
    for (Eigen::Index j = 0; j < up.cols(); ++j) up(i, j) = ref_gelu(up(i, j)) * gate(i, j);
  return up;
}

inline Eigen::MatrixXd ref_head(const Eigen::MatrixXd& x, const Eigen::MatrixXd& wq,
                                const Eigen::MatrixXd& wk, const Eigen::MatrixXd& wv,
                                const Eigen::MatrixXd& wo) {
  const Eigen::MatrixXd q = naive_mul(x, wq), k = naive_mul(x, wk), v = naive_mul(x, wv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  Eigen::MatrixXd ctx = Eigen::MatrixXd::Zero(x.rows(), v.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> w(static_cast<std::size_t>(i + 1));
    double mx = -1e300, z = 0.0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      double d = 0.0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) d += q(i, c) * k(j, c);
      w[static_cast<std::size_t>(j)] = d * scale;
      mx = std::max(mx, d * scale);
    }
    for (auto& e : w) z += (e = std::exp(e - mx));
    for (Eigen::Index j = 0; j <= i; ++j)
      for (Eigen::Index c = 0; c < v.cols(); ++c) ctx(i, c) += w[static_cast<std::size_t>(j)] / z * v(j, c);
  }
  return naive_mul(ctx, wo);
}

inline Eigen::MatrixXd ref_rms(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double ss = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) ss += x(i, j) * x(i, j);
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.cols()) + 1e-6);
    for (Eigen::Index j = 0; j < x.cols(); ++j) y(i, j) = x(i, j) * inv;
  }
  return y;
}

inline Eigen::MatrixXd reference_forward(const ComponentModel& model, const Batch& b) {
  const ModelSpec s = model.spec();
  switch (model.kind()) {
    case ModelKind::kPlantedLinear:
      return naive_mul(naive_mul(b.x, tensor(s, "u")), tensor(s, "v"));
    case ModelKind::kToyMlp:
      return naive_mul(ref_gated(b.x, tensor(s, "wu"), tensor(s, "wg")), tensor(s, "wd"));
    case ModelKind::kToyMoe: {
      Eigen::MatrixXd logits = naive_mul(b.x, tensor(s, "router"));
      const auto experts = s.dims.at("experts");
      Eigen::MatrixXd out;
      for (std::int64_t e = 0; e < experts; ++e) {
        const std::string p = "expert" + std::to_string(e) + ".";
        const Eigen::MatrixXd ye =
            naive_mul(ref_gated(b.x, tensor(s, p + "wu"), tensor(s, p + "wg")), tensor(s, p + "wd"));
        if (out.size() == 0) out = Eigen::MatrixXd::Zero(ye.rows(), ye.cols());
        for (Eigen::Index i = 0; i < ye.rows(); ++i) {
          double z = 0.0;
          for (Eigen::Index j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j));
          out.row(i) += std::exp(logits(i, e)) / z * ye.row(i);
        }
      }
      return out;
    }
    case ModelKind::kToyAttention: {
      const auto heads = s.dims.at("heads");
      const auto len = static_cast<Eigen::Index>(b.rows_per_sample);
      Eigen::MatrixXd out;
      for (Eigen::Index st = 0; st < b.x.rows(); st += len) {
        const Eigen::MatrixXd x = b.x.middleRows(st, len);
        for (std::int64_t h = 0; h < heads; ++h) {
          const std::string p = "head" + std::to_string(h) + ".";
          const Eigen::MatrixXd yh =
              ref_head(x, tensor(s, p + "wq"), tensor(s, p + "wk"), tensor(s, p + "wv"), tensor(s, p + "wo"));
          if (out.size() == 0) out = Eigen::MatrixXd::Zero(b.x.rows(), yh.cols());
          out.middleRows(st, len) += yh;
        }
      }
      return out;
    }
    case ModelKind::kTinyTransformer: {
      const Eigen::MatrixXd tok = tensor(s, "tok_emb"), pos = tensor(s, "pos_emb"),
                            un = tensor(s, "unembed");
      Eigen::Index rows = 0;
      for (const auto& seq : b.tokens) rows += static_cast<Eigen::Index>(seq.size()) - 1;
      Eigen::MatrixXd out(rows, un.cols());
      Eigen::Index r = 0;
      for (const auto& seq : b.tokens) {
        const auto n = static_cast<Eigen::Index>(seq.size());
        Eigen::MatrixXd h(n, tok.cols());
        for (Eigen::Index i = 0; i < n; ++i) h.row(i) = tok.row(seq[static_cast<std::size_t>(i)]) + pos.row(i);
        for (std::int64_t l = 0; l < s.dims.at("layers"); ++l) {
          const std::string p = "layer" + std::to_string(l) + ".";
          const Eigen::MatrixXd a = ref_rms(h);
          for (std::int64_t hd = 0; hd < s.dims.at(p + "heads"); ++hd) {
            const std::string hp = p + "head" + std::to_string(hd) + ".";
            h += ref_head(a, tensor(s, hp + "wq"), tensor(s, hp + "wk"), tensor(s, hp + "wv"),
                          tensor(s, hp + "wo"));
          }
          const Eigen::MatrixXd nrm = ref_rms(h);
          h += naive_mul(ref_gated(nrm, tensor(s, p + "mlp.wu"), tensor(s, p + "mlp.wg")),
                         tensor(s, p + "mlp.wd"));
        }
        const Eigen::MatrixXd logits = naive_mul(ref_rms(h), un);
        out.middleRows(r, n - 1) = logits.topRows(n - 1);
        r += n - 1;
      }
      return out;
    }
  }
  return {};
}

}  // namespace ddp::testing
