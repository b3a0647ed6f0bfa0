#pragma once

// Building blocks shared by the attention, MLP, MoE and transformer kinds.

#include "Eigen/Core"
#include "ddp/models.hpp"

namespace ddp::detail {

struct HeadCache {
  Eigen::MatrixXd q, k, v;  ///< L x head_dim
  Eigen::MatrixXd probs;    ///< L x L attention weights (causal)
  Eigen::MatrixXd context;  ///< probs * v
};

/// Causal scaled dot-product attention of one head; returns context * W_O.
Eigen::MatrixXd attention_head_forward(const AttentionHead& head, const Eigen::MatrixXd& x,
                                       HeadCache* cache);

/// Backward of attention_head_forward given d(out); returns d(x).
Eigen::MatrixXd attention_head_backward(const AttentionHead& head, const HeadCache& cache,
                                        const Eigen::MatrixXd& dout);

/// Channel activations gelu(X W_u) .* (X W_g), rows x C.
Eigen::MatrixXd gated_channels(const GatedMlp& mlp, const Eigen::MatrixXd& x);

/// y = x / sqrt(mean(x^2) + eps) row-wise, no learned gain.
Eigen::MatrixXd rms_norm(const Eigen::MatrixXd& x, Eigen::VectorXd* inv_rms);
Eigen::MatrixXd rms_norm_backward(const Eigen::MatrixXd& normed, const Eigen::VectorXd& inv_rms,
                                  const Eigen::MatrixXd& dy);

GatedMlp select_channels(const GatedMlp& mlp, std::span<const double> m, std::size_t offset);

}  // namespace ddp::detail
