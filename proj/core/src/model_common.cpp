#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "ddp/error.hpp"
#include "ddp/models.hpp"

namespace ddp {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kPlantedLinear: return "planted-linear";
    case ModelKind::kToyAttention: return "toy-attention";
    case ModelKind::kToyMlp: return "toy-mlp";
    case ModelKind::kToyMoe: return "toy-moe";
    case ModelKind::kTinyTransformer: return "tiny-transformer";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& s) {
  for (ModelKind k : {ModelKind::kPlantedLinear, ModelKind::kToyAttention, ModelKind::kToyMlp,
                      ModelKind::kToyMoe, ModelKind::kTinyTransformer}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown model kind '" + s + "'");
}

std::size_t Batch::num_samples() const {
  if (!tokens.empty()) return tokens.size();
  if (rows_per_sample == 0) return 0;
  return static_cast<std::size_t>(x.rows()) / rows_per_sample;
}

Batch Batch::select(std::span<const std::size_t> samples) const {
  Batch out;
  out.rows_per_sample = rows_per_sample;
  if (!tokens.empty()) {
    out.tokens.reserve(samples.size());
    for (std::size_t s : samples) out.tokens.push_back(tokens.at(s));
    return out;
  }
  const auto rps = static_cast<Eigen::Index>(rows_per_sample);
  const auto n = static_cast<Eigen::Index>(samples.size());
  out.x.resize(n * rps, x.cols());
  out.y.resize(n * rps, y.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = static_cast<Eigen::Index>(samples[static_cast<std::size_t>(i)]) * rps;
    if (src + rps > x.rows()) throw ValidationError("batch: sample index out of range");
    out.x.middleRows(i * rps, rps) = x.middleRows(src, rps);
    out.y.middleRows(i * rps, rps) = y.middleRows(src, rps);
  }
  return out;
}

void Batch::validate() const {
  if (!tokens.empty()) {
    for (const auto& seq : tokens) {
      if (seq.size() < 2) throw ValidationError("batch: token sequences need at least 2 tokens");
    }
    return;
  }
  if (x.rows() == 0) throw ValidationError("batch: empty");
  if (rows_per_sample == 0 || x.rows() % static_cast<Eigen::Index>(rows_per_sample) != 0) {
    throw ValidationError("batch: rows are not a multiple of rows_per_sample");
  }
  if (y.rows() != x.rows()) throw ValidationError("batch: inputs and targets differ in rows");
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("batch: non-finite data");
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  t.data.resize(static_cast<std::size_t>(m.size()));
  std::size_t idx = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data[idx++] = m(i, j);
  }
  return t;
}

Eigen::MatrixXd Tensor::to_matrix() const {
  if (shape.size() != 2) throw ValidationError("tensor: expected a rank-2 shape");
  if (shape[0] * shape[1] != data.size()) throw ValidationError("tensor: shape/data mismatch");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
  std::size_t idx = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = data[idx++];
  }
  return m;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      p(i, j) = std::exp(logits(i, j) - mx);
      z += p(i, j);
    }
    p.row(i) /= z;
  }
  return p;
}

void ComponentModel::set_component_map(std::vector<ComponentGroup> groups) {
  std::size_t k = 0;
  for (const auto& g : groups) {
    for (std::size_t idx : g.indices) {
      if (idx != k) throw ValidationError("component map: indices must be contiguous and ordered");
      ++k;
    }
  }
  groups_ = std::move(groups);
  k_ = k;
}

std::vector<std::string> ComponentModel::module_types() const {
  std::vector<std::string> types;
  for (const auto& g : groups_) {
    if (std::find(types.begin(), types.end(), g.type) == types.end()) types.push_back(g.type);
  }
  return types;
}

std::vector<std::size_t> ComponentModel::indices_of_type(const std::string& type) const {
  std::vector<std::size_t> out;
  for (const auto& g : groups_) {
    if (g.type == type) out.insert(out.end(), g.indices.begin(), g.indices.end());
  }
  return out;
}

void ComponentModel::check_batch(const Batch& batch) const {
  batch.validate();
  check_batch_impl(batch);
}

Eigen::MatrixXd ComponentModel::forward_masked(const Batch& batch, std::span<const double> m) const {
  if (m.size() != k_) {
    throw ValidationError("forward: mask has " + std::to_string(m.size()) + " entries, model has " +
                          std::to_string(k_) + " components");
  }
  check_batch(batch);
  return forward_impl(batch, m);
}

Eigen::MatrixXd ComponentModel::forward_dense(const Batch& batch) const {
  const std::vector<double> ones(k_, 1.0);
  return forward_masked(batch, ones);
}

namespace {

/// Cross-entropy against next-token targets with its logit gradient.
double cross_entropy(const Batch& batch, const Eigen::MatrixXd& logits, Eigen::MatrixXd& probs,
                     Eigen::MatrixXd& dlogits) {
  probs = softmax_rows(logits);
  dlogits = probs;
  double loss = 0.0;
  Eigen::Index row = 0;
  for (const auto& seq : batch.tokens) {
    for (std::size_t p = 0; p + 1 < seq.size(); ++p, ++row) {
      const int target = seq[p + 1];
      const double mx = logits.row(row).maxCoeff();
      const double lse = mx + std::log((logits.row(row).array() - mx).exp().sum());
      loss += lse - logits(row, target);
      dlogits(row, target) -= 1.0;
    }
  }
  const double n = static_cast<double>(row);
  dlogits /= n;
  return loss / n;
}

}  // namespace

double ComponentModel::task_loss(const Batch& batch, std::span<const double> m) const {
  const Eigen::MatrixXd out = forward_masked(batch, m);
  if (task() == TaskLoss::kMse) {
    return (out - batch.y).squaredNorm() / static_cast<double>(out.size());
  }
  Eigen::MatrixXd probs, dlogits;
  return cross_entropy(batch, out, probs, dlogits);
}

MaskGradient ComponentModel::loss_and_mask_grads(const Batch& batch, std::span<const double> m,
                                                 const ComponentModel* teacher, double eta,
                                                 KlReduction reduction) const {
  for (double v : m) {
    if (!std::isfinite(v)) throw ValidationError("loss_and_mask_grads: non-finite mask");
  }
  const Eigen::MatrixXd out = forward_masked(batch, m);
  MaskGradient g;
  Eigen::MatrixXd dout;
  if (task() == TaskLoss::kMse) {
    if (teacher != nullptr) {
      throw ValidationError("loss_and_mask_grads: distillation needs a token model");
    }
    const Eigen::MatrixXd diff = out - batch.y;
    const double n = static_cast<double>(out.size());
    g.task_loss = diff.squaredNorm() / n;
    dout = diff * (2.0 / n);
  } else {
    Eigen::MatrixXd probs;
    g.task_loss = cross_entropy(batch, out, probs, dout);
    if (teacher != nullptr) {
      if (teacher->task() != TaskLoss::kCrossEntropy) {
        throw ValidationError("loss_and_mask_grads: teacher must be a token model");
      }
      const Eigen::MatrixXd teacher_probs = softmax_rows(teacher->forward_dense(batch));
      if (teacher_probs.cols() != probs.cols()) {
        throw ValidationError("loss_and_mask_grads: teacher vocabulary differs");
      }
      g.kl = kl_distill_loss(teacher_probs, probs, reduction);
      const double scale =
          reduction == KlReduction::kSum ? eta : eta / static_cast<double>(probs.rows());
      dout += scale * (probs - teacher_probs);
    }
  }
  g.loss = g.task_loss + eta * g.kl;
  if (!std::isfinite(g.loss)) {
    throw DivergenceError("loss_and_mask_grads: non-finite loss (task " +
                              std::to_string(g.task_loss) + ", kl " + std::to_string(g.kl) + ")",
                          0);
  }
  g.dloss_dm = mask_vjp(batch, m, dout);
  for (double v : g.dloss_dm) {
    if (!std::isfinite(v)) throw DivergenceError("loss_and_mask_grads: non-finite gradient", 0);
  }
  return g;
}

std::unique_ptr<ComponentModel> ComponentModel::fold(std::span<const double> m) const {
  if (m.size() != k_) throw ValidationError("fold: mask size mismatch");
  for (double v : m) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("fold: masks must be finite and >= 0");
  }
  for (const auto& type : module_types()) {
    bool any = false;
    for (std::size_t i : indices_of_type(type)) any = any || m[i] > 0.0;
    if (!any) throw ValidationError("fold: every component of module type '" + type + "' is pruned");
  }
  return fold_impl(m);
}

std::uint64_t ComponentModel::theta_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  };
  const ModelSpec s = spec();
  for (const auto& [name, dim] : s.dims) {
    mix(name.data(), name.size());
    mix(&dim, sizeof dim);
  }
  for (const auto& [name, t] : s.tensors) {
    mix(name.data(), name.size());
    mix(t.shape.data(), t.shape.size() * sizeof(std::size_t));
    mix(t.data.data(), t.data.size() * sizeof(double));
  }
  return h;
}

Eigen::MatrixXd SummedComponentModel::forward_impl(const Batch& batch,
                                                   std::span<const double> m) const {
  const auto parts = component_outputs(batch);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(batch.x.rows(), static_cast<Eigen::Index>(out_dim()));
  for (std::size_t k = 0; k < parts.size(); ++k) out += m[k] * parts[k];
  return out;
}

std::vector<double> SummedComponentModel::mask_vjp(const Batch& batch, std::span<const double>,
                                                   const Eigen::MatrixXd& dloss_dout) const {
  const auto parts = component_outputs(batch);
  std::vector<double> dm(parts.size());
  for (std::size_t k = 0; k < parts.size(); ++k) dm[k] = parts[k].cwiseProduct(dloss_dout).sum();
  return dm;
}

void SummedComponentModel::check_batch_impl(const Batch& batch) const {
  if (!batch.tokens.empty()) throw ValidationError("batch: regression model given token data");
  if (batch.x.cols() != static_cast<Eigen::Index>(in_dim())) {
    throw ValidationError("batch: expected " + std::to_string(in_dim()) + " input features, got " +
                          std::to_string(batch.x.cols()));
  }
  if (batch.y.cols() != static_cast<Eigen::Index>(out_dim())) {
    throw ValidationError("batch: expected " + std::to_string(out_dim()) + " target columns, got " +
                          std::to_string(batch.y.cols()));
  }
  if (batch.rows_per_sample != rows_per_sample()) {
    throw ValidationError("batch: rows_per_sample does not match the model");
  }
}

std::unique_ptr<ComponentModel> model_from_spec(const ModelSpec& spec) {
  switch (spec.kind) {
    case ModelKind::kPlantedLinear: return PlantedLinearModel::from_spec(spec);
    case ModelKind::kToyAttention: return ToyAttentionModel::from_spec(spec);
    case ModelKind::kToyMlp: return ToyMlpModel::from_spec(spec);
    case ModelKind::kToyMoe: return ToyMoeModel::from_spec(spec);
    case ModelKind::kTinyTransformer: return TinyTransformerModel::from_spec(spec);
  }
  throw ValidationError("model_from_spec: unknown kind");
}

}  // namespace ddp
