#pragma once

// Frozen-parameter models written as sums of maskable components,
// y = sum_k m_k f_k(X). Every kind exposes the masked forward, exact mask
// gradients of its task loss, and structural pruning with mask folding.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "ddp/objective.hpp"

namespace ddp {

enum class ModelKind { kPlantedLinear, kToyAttention, kToyMlp, kToyMoe, kTinyTransformer };
enum class TaskLoss { kMse, kCrossEntropy };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

/// One prunable group: a contiguous slice of the global mask vector.
struct ComponentGroup {
  std::string type;   ///< module type, e.g. "attn", "mlp", "expert"
  std::string name;   ///< group label, e.g. "layer0", "expert2"
  std::vector<std::size_t> indices;

  bool operator==(const ComponentGroup&) const = default;
};

/// Regression kinds use x/y with one row per sample (sequence kinds stack
/// rows_per_sample rows per sample). Token kinds use `tokens`.
struct Batch {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  std::vector<std::vector<int>> tokens;
  std::size_t rows_per_sample = 1;

  std::size_t num_samples() const;
  Batch select(std::span<const std::size_t> samples) const;
  void validate() const;
};

struct MaskGradient {
  double loss = 0.0;       ///< task + eta * kl
  double task_loss = 0.0;  ///< MSE or cross-entropy
  double kl = 0.0;
  std::vector<double> dloss_dm;
};

/// Dense tensor with explicit shape, row-major.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  static Tensor from_matrix(const Eigen::MatrixXd& m);
  Eigen::MatrixXd to_matrix() const;
  bool operator==(const Tensor&) const = default;
};

/// Serializable snapshot of a model: kind, integer hyperparameters and
/// named parameter tensors.
struct ModelSpec {
  ModelKind kind = ModelKind::kPlantedLinear;
  std::uint64_t seed = 0;
  std::map<std::string, std::int64_t> dims;
  std::map<std::string, Tensor> tensors;

  bool operator==(const ModelSpec&) const = default;
};

class ComponentModel {
 public:
  virtual ~ComponentModel() = default;

  virtual ModelKind kind() const = 0;
  virtual TaskLoss task() const = 0;
  virtual std::unique_ptr<ComponentModel> clone() const = 0;

  std::size_t num_components() const noexcept { return k_; }
  const std::vector<ComponentGroup>& component_map() const noexcept { return groups_; }
  /// Module types in first-appearance order.
  std::vector<std::string> module_types() const;
  /// Global indices belonging to a module type, ascending.
  std::vector<std::size_t> indices_of_type(const std::string& type) const;

  /// Predictions (regression) or next-token logits (token kinds), one row
  /// per predicted position.
  Eigen::MatrixXd forward_masked(const Batch& batch, std::span<const double> m) const;
  Eigen::MatrixXd forward_dense(const Batch& batch) const;

  double task_loss(const Batch& batch, std::span<const double> m) const;

  /// Task loss and its exact gradient with respect to the masks. With a
  /// teacher (token kinds only) the distillation term KL(teacher || student)
  /// is added with weight eta.
  MaskGradient loss_and_mask_grads(const Batch& batch, std::span<const double> m,
                                   const ComponentModel* teacher = nullptr, double eta = 0.0,
                                   KlReduction reduction = KlReduction::kSum) const;

  /// Removes components with m_k == 0 and multiplies the remaining m_k into
  /// each component's output-side parameters.
  std::unique_ptr<ComponentModel> fold(std::span<const double> m) const;

  virtual ModelSpec spec() const = 0;
  /// FNV-1a over every parameter; constant for the model's lifetime.
  std::uint64_t theta_checksum() const;

 protected:
  ComponentModel() = default;
  void set_component_map(std::vector<ComponentGroup> groups);

  virtual Eigen::MatrixXd forward_impl(const Batch& batch, std::span<const double> m) const = 0;
  /// Gradient of sum_ij dloss_dout(i, j) * out(i, j) with respect to m.
  virtual std::vector<double> mask_vjp(const Batch& batch, std::span<const double> m,
                                       const Eigen::MatrixXd& dloss_dout) const = 0;
  virtual std::unique_ptr<ComponentModel> fold_impl(std::span<const double> m) const = 0;
  /// Targets aligned with forward rows: regression y, or next-token ids.
  void check_batch(const Batch& batch) const;
  virtual void check_batch_impl(const Batch& batch) const = 0;

 private:
  std::vector<ComponentGroup> groups_;
  std::size_t k_ = 0;
};

/// Regression kind with y = sum_k m_k f_k(X), where each f_k is available
/// explicitly.
class SummedComponentModel : public ComponentModel {
 public:
  TaskLoss task() const override { return TaskLoss::kMse; }
  /// f_k(X) for every component, each rows x out_dim.
  virtual std::vector<Eigen::MatrixXd> component_outputs(const Batch& batch) const = 0;
  virtual std::size_t in_dim() const = 0;
  virtual std::size_t out_dim() const = 0;
  virtual std::size_t rows_per_sample() const { return 1; }

 protected:
  Eigen::MatrixXd forward_impl(const Batch& batch, std::span<const double> m) const override;
  std::vector<double> mask_vjp(const Batch& batch, std::span<const double> m,
                               const Eigen::MatrixXd& dloss_dout) const override;
  void check_batch_impl(const Batch& batch) const override;
};

/// f_k(X) = (X u_k) v_k^T.
class PlantedLinearModel final : public SummedComponentModel {
 public:
  /// u: in_dim x K, v: K x out_dim.
  PlantedLinearModel(Eigen::MatrixXd u, Eigen::MatrixXd v, std::uint64_t seed = 0);

  ModelKind kind() const override { return ModelKind::kPlantedLinear; }
  std::unique_ptr<ComponentModel> clone() const override;
  std::vector<Eigen::MatrixXd> component_outputs(const Batch& batch) const override;
  std::size_t in_dim() const override { return static_cast<std::size_t>(u_.rows()); }
  std::size_t out_dim() const override { return static_cast<std::size_t>(v_.cols()); }
  ModelSpec spec() const override;
  static std::unique_ptr<PlantedLinearModel> from_spec(const ModelSpec& spec);

  const Eigen::MatrixXd& u() const { return u_; }
  const Eigen::MatrixXd& v() const { return v_; }

 protected:
  Eigen::MatrixXd forward_impl(const Batch& batch, std::span<const double> m) const override;
  std::unique_ptr<ComponentModel> fold_impl(std::span<const double> m) const override;

 private:
  Eigen::MatrixXd u_;
  Eigen::MatrixXd v_;
  std::uint64_t seed_;
};

struct AttentionHead {
  Eigen::MatrixXd wq, wk, wv;  ///< model_dim x head_dim
  Eigen::MatrixXd wo;          ///< head_dim x model_dim
};

/// Single causal multi-head attention block on sequences; one component per head.
class ToyAttentionModel final : public SummedComponentModel {
 public:
  ToyAttentionModel(std::vector<AttentionHead> heads, std::size_t seq_len, std::uint64_t seed = 0);

  ModelKind kind() const override { return ModelKind::kToyAttention; }
  std::unique_ptr<ComponentModel> clone() const override;
  std::vector<Eigen::MatrixXd> component_outputs(const Batch& batch) const override;
  std::size_t in_dim() const override;
  std::size_t out_dim() const override;
  std::size_t rows_per_sample() const override { return seq_len_; }
  ModelSpec spec() const override;
  static std::unique_ptr<ToyAttentionModel> from_spec(const ModelSpec& spec);

  const std::vector<AttentionHead>& heads() const { return heads_; }

 protected:
  std::unique_ptr<ComponentModel> fold_impl(std::span<const double> m) const override;

 private:
  std::vector<AttentionHead> heads_;
  std::size_t seq_len_;
  std::uint64_t seed_;
};

/// Gated MLP channels (gelu(X u_j) * (X g_j)) v_j.
struct GatedMlp {
  Eigen::MatrixXd wu;  ///< in_dim x C
  Eigen::MatrixXd wg;  ///< in_dim x C
  Eigen::MatrixXd wd;  ///< C x out_dim
};

class ToyMlpModel final : public SummedComponentModel {
 public:
  explicit ToyMlpModel(GatedMlp mlp, std::uint64_t seed = 0);

  ModelKind kind() const override { return ModelKind::kToyMlp; }
  std::unique_ptr<ComponentModel> clone() const override;
  std::vector<Eigen::MatrixXd> component_outputs(const Batch& batch) const override;
  std::size_t in_dim() const override { return static_cast<std::size_t>(mlp_.wu.rows()); }
  std::size_t out_dim() const override { return static_cast<std::size_t>(mlp_.wd.cols()); }
  ModelSpec spec() const override;
  static std::unique_ptr<ToyMlpModel> from_spec(const ModelSpec& spec);

  const GatedMlp& mlp() const { return mlp_; }

 protected:
  std::unique_ptr<ComponentModel> fold_impl(std::span<const double> m) const override;

 private:
  GatedMlp mlp_;
  std::uint64_t seed_;
};

/// Dense-routed mixture of gated-MLP experts:
/// y = sum_e pi_e(X) sum_j m_{e,j} f_{e,j}(X), pi = softmax(X W_router).
/// Experts may have different channel counts after pruning; an expert with
/// zero channels stays in the router.
class ToyMoeModel final : public SummedComponentModel {
 public:
  ToyMoeModel(Eigen::MatrixXd router, std::vector<GatedMlp> experts, std::uint64_t seed = 0);

  ModelKind kind() const override { return ModelKind::kToyMoe; }
  std::unique_ptr<ComponentModel> clone() const override;
  std::vector<Eigen::MatrixXd> component_outputs(const Batch& batch) const override;
  std::size_t in_dim() const override { return static_cast<std::size_t>(router_.rows()); }
  std::size_t out_dim() const override { return out_dim_; }
  ModelSpec spec() const override;
  static std::unique_ptr<ToyMoeModel> from_spec(const ModelSpec& spec);

  /// Router weights pi(X), rows x E.
  Eigen::MatrixXd routing(const Eigen::MatrixXd& x) const;
  const std::vector<GatedMlp>& experts() const { return experts_; }

 protected:
  std::unique_ptr<ComponentModel> fold_impl(std::span<const double> m) const override;

 private:
  Eigen::MatrixXd router_;
  std::vector<GatedMlp> experts_;
  std::size_t out_dim_;
  std::uint64_t seed_;
};

struct TransformerLayer {
  std::vector<AttentionHead> heads;
  GatedMlp mlp;  ///< model_dim -> C -> model_dim
};

/// Pre-norm (RMSNorm, unit gain) causal decoder over token ids. Masks
/// cover every attention head, then every MLP channel, layer by layer.
class TinyTransformerModel final : public ComponentModel {
 public:
  TinyTransformerModel(Eigen::MatrixXd token_embedding, Eigen::MatrixXd position_embedding,
                       std::vector<TransformerLayer> layers, Eigen::MatrixXd unembedding,
                       std::uint64_t seed = 0);

  ModelKind kind() const override { return ModelKind::kTinyTransformer; }
  TaskLoss task() const override { return TaskLoss::kCrossEntropy; }
  std::unique_ptr<ComponentModel> clone() const override;
  ModelSpec spec() const override;
  static std::unique_ptr<TinyTransformerModel> from_spec(const ModelSpec& spec);

  std::size_t vocab_size() const { return static_cast<std::size_t>(unembedding_.cols()); }
  std::size_t max_seq_len() const { return static_cast<std::size_t>(position_embedding_.rows()); }
  std::size_t model_dim() const { return static_cast<std::size_t>(token_embedding_.cols()); }
  const std::vector<TransformerLayer>& layers() const { return layers_; }

  /// Logits for every position of one sequence (length <= max_seq_len).
  Eigen::MatrixXd sequence_logits(std::span<const int> tokens, std::span<const double> m) const;

 protected:
  Eigen::MatrixXd forward_impl(const Batch& batch, std::span<const double> m) const override;
  std::vector<double> mask_vjp(const Batch& batch, std::span<const double> m,
                               const Eigen::MatrixXd& dloss_dout) const override;
  std::unique_ptr<ComponentModel> fold_impl(std::span<const double> m) const override;
  void check_batch_impl(const Batch& batch) const override;

 private:
  struct Cache;
  Eigen::MatrixXd run_sequence(std::span<const int> tokens, std::span<const double> m,
                               Cache* cache) const;
  void backprop_sequence(const Cache& cache, std::span<const double> m,
                         const Eigen::MatrixXd& dlogits, std::vector<double>& dm) const;

  Eigen::MatrixXd token_embedding_;
  Eigen::MatrixXd position_embedding_;
  std::vector<TransformerLayer> layers_;
  Eigen::MatrixXd unembedding_;
  std::uint64_t seed_;
};

std::unique_ptr<ComponentModel> model_from_spec(const ModelSpec& spec);

/// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

}  // namespace ddp
