#include "ddp/error.hpp"
#include "ddp/models.hpp"
#include "nn_ops.hpp"
#include "spec_util.hpp"

namespace ddp {

ToyAttentionModel::ToyAttentionModel(std::vector<AttentionHead> heads, std::size_t seq_len,
                                     std::uint64_t seed)
    : heads_(std::move(heads)), seq_len_(seq_len), seed_(seed) {
  if (heads_.empty()) throw ValidationError("toy-attention: needs at least one head");
  if (seq_len_ == 0) throw ValidationError("toy-attention: seq_len must be positive");
  const auto d = heads_.front().wq.rows();
  for (const auto& h : heads_) {
    if (h.wq.rows() != d || h.wk.rows() != d || h.wv.rows() != d || h.wo.cols() != d ||
        h.wq.cols() != h.wk.cols() || h.wv.cols() != h.wo.rows()) {
      throw ValidationError("toy-attention: inconsistent head shapes");
    }
  }
  set_component_map(detail::single_group("attn", "layer0", heads_.size()));
}

std::unique_ptr<ComponentModel> ToyAttentionModel::clone() const {
  return std::make_unique<ToyAttentionModel>(*this);
}

std::size_t ToyAttentionModel::in_dim() const {
  return static_cast<std::size_t>(heads_.front().wq.rows());
}

std::size_t ToyAttentionModel::out_dim() const {
  return static_cast<std::size_t>(heads_.front().wo.cols());
}

std::vector<Eigen::MatrixXd> ToyAttentionModel::component_outputs(const Batch& batch) const {
  const auto len = static_cast<Eigen::Index>(seq_len_);
  const Eigen::Index n = batch.x.rows() / len;
  std::vector<Eigen::MatrixXd> out(heads_.size(),
                                   Eigen::MatrixXd(batch.x.rows(), static_cast<Eigen::Index>(out_dim())));
  for (Eigen::Index s = 0; s < n; ++s) {
    const Eigen::MatrixXd x = batch.x.middleRows(s * len, len);
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      out[h].middleRows(s * len, len) = detail::attention_head_forward(heads_[h], x, nullptr);
    }
  }
  return out;
}

std::unique_ptr<ComponentModel> ToyAttentionModel::fold_impl(std::span<const double> m) const {
  std::vector<AttentionHead> kept;
  for (std::size_t h : detail::kept_indices(m, 0, heads_.size())) {
    AttentionHead head = heads_[h];
    head.wo *= m[h];
    kept.push_back(std::move(head));
  }
  return std::make_unique<ToyAttentionModel>(std::move(kept), seq_len_, seed_);
}

ModelSpec ToyAttentionModel::spec() const {
  ModelSpec s;
  s.kind = kind();
  s.seed = seed_;
  s.dims["heads"] = static_cast<std::int64_t>(heads_.size());
  s.dims["seq_len"] = static_cast<std::int64_t>(seq_len_);
  s.dims["model_dim"] = static_cast<std::int64_t>(in_dim());
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const std::string p = "head" + std::to_string(h) + ".";
    s.tensors[p + "wq"] = Tensor::from_matrix(heads_[h].wq);
    s.tensors[p + "wk"] = Tensor::from_matrix(heads_[h].wk);
    s.tensors[p + "wv"] = Tensor::from_matrix(heads_[h].wv);
    s.tensors[p + "wo"] = Tensor::from_matrix(heads_[h].wo);
  }
  return s;
}

std::unique_ptr<ToyAttentionModel> ToyAttentionModel::from_spec(const ModelSpec& spec) {
  detail::require_kind(spec, ModelKind::kToyAttention);
  const auto n = detail::dim_at(spec, "heads");
  std::vector<AttentionHead> heads;
  for (std::int64_t h = 0; h < n; ++h) {
    const std::string p = "head" + std::to_string(h) + ".";
    heads.push_back({detail::matrix_at(spec, p + "wq"), detail::matrix_at(spec, p + "wk"),
                     detail::matrix_at(spec, p + "wv"), detail::matrix_at(spec, p + "wo")});
  }
  return std::make_unique<ToyAttentionModel>(
      std::move(heads), static_cast<std::size_t>(detail::dim_at(spec, "seq_len")), spec.seed);
}

}  // namespace ddp
