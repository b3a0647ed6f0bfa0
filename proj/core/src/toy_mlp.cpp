#include "ddp/error.hpp"
#include "ddp/models.hpp"
#include "nn_ops.hpp"
#include "spec_util.hpp"

namespace ddp {

namespace {

void check_mlp(const GatedMlp& mlp, const char* who) {
  if (mlp.wu.rows() != mlp.wg.rows() || mlp.wu.cols() != mlp.wg.cols() ||
      mlp.wd.rows() != mlp.wu.cols()) {
    throw ValidationError(std::string(who) + ": inconsistent gated MLP shapes");
  }
}

}  // namespace

ToyMlpModel::ToyMlpModel(GatedMlp mlp, std::uint64_t seed) : mlp_(std::move(mlp)), seed_(seed) {
  check_mlp(mlp_, "toy-mlp");
  if (mlp_.wu.cols() == 0) throw ValidationError("toy-mlp: needs at least one channel");
  set_component_map(detail::single_group("mlp", "layer0", static_cast<std::size_t>(mlp_.wu.cols())));
}

std::unique_ptr<ComponentModel> ToyMlpModel::clone() const { return std::make_unique<ToyMlpModel>(*this); }

std::vector<Eigen::MatrixXd> ToyMlpModel::component_outputs(const Batch& batch) const {
  const Eigen::MatrixXd act = detail::gated_channels(mlp_, batch.x);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(act.cols()));
  for (Eigen::Index j = 0; j < act.cols(); ++j) out.emplace_back(act.col(j) * mlp_.wd.row(j));
  return out;
}

std::unique_ptr<ComponentModel> ToyMlpModel::fold_impl(std::span<const double> m) const {
  return std::make_unique<ToyMlpModel>(detail::select_channels(mlp_, m, 0), seed_);
}

ModelSpec ToyMlpModel::spec() const {
  ModelSpec s;
  s.kind = kind();
  s.seed = seed_;
  s.dims["channels"] = mlp_.wu.cols();
  s.dims["in_dim"] = mlp_.wu.rows();
  s.dims["out_dim"] = mlp_.wd.cols();
  s.tensors["wu"] = Tensor::from_matrix(mlp_.wu);
  s.tensors["wg"] = Tensor::from_matrix(mlp_.wg);
  s.tensors["wd"] = Tensor::from_matrix(mlp_.wd);
  return s;
}

std::unique_ptr<ToyMlpModel> ToyMlpModel::from_spec(const ModelSpec& spec) {
  detail::require_kind(spec, ModelKind::kToyMlp);
  return std::make_unique<ToyMlpModel>(
      GatedMlp{detail::matrix_at(spec, "wu"), detail::matrix_at(spec, "wg"),
               detail::matrix_at(spec, "wd")},
      spec.seed);
}

ToyMoeModel::ToyMoeModel(Eigen::MatrixXd router, std::vector<GatedMlp> experts, std::uint64_t seed)
    : router_(std::move(router)), experts_(std::move(experts)), seed_(seed) {
  if (experts_.empty() || router_.cols() != static_cast<Eigen::Index>(experts_.size())) {
    throw ValidationError("toy-moe: router must have one column per expert");
  }
  out_dim_ = static_cast<std::size_t>(experts_.front().wd.cols());
  std::vector<ComponentGroup> groups;
  std::size_t offset = 0;
  for (std::size_t e = 0; e < experts_.size(); ++e) {
    check_mlp(experts_[e], "toy-moe");
    if (experts_[e].wu.rows() != router_.rows() ||
        static_cast<std::size_t>(experts_[e].wd.cols()) != out_dim_) {
      throw ValidationError("toy-moe: expert " + std::to_string(e) + " has mismatched dimensions");
    }
    const auto c = static_cast<std::size_t>(experts_[e].wu.cols());
    auto g = detail::single_group("expert", "expert" + std::to_string(e), c, offset);
    groups.push_back(std::move(g.front()));
    offset += c;
  }
  if (offset == 0) throw ValidationError("toy-moe: no channels");
  std::erase_if(groups, [](const ComponentGroup& g) { return g.indices.empty(); });
  set_component_map(std::move(groups));
}

std::unique_ptr<ComponentModel> ToyMoeModel::clone() const { return std::make_unique<ToyMoeModel>(*this); }

Eigen::MatrixXd ToyMoeModel::routing(const Eigen::MatrixXd& x) const {
  return softmax_rows(x * router_);
}

std::vector<Eigen::MatrixXd> ToyMoeModel::component_outputs(const Batch& batch) const {
  const Eigen::MatrixXd pi = routing(batch.x);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(num_components());
  for (std::size_t e = 0; e < experts_.size(); ++e) {
    const Eigen::MatrixXd act = detail::gated_channels(experts_[e], batch.x);
    const auto col = static_cast<Eigen::Index>(e);
    for (Eigen::Index j = 0; j < act.cols(); ++j) {
      out.emplace_back(act.col(j).cwiseProduct(pi.col(col)) * experts_[e].wd.row(j));
    }
  }
  return out;
}

std::unique_ptr<ComponentModel> ToyMoeModel::fold_impl(std::span<const double> m) const {
  std::vector<GatedMlp> experts;
  std::size_t offset = 0;
  for (const auto& ex : experts_) {
    experts.push_back(detail::select_channels(ex, m, offset));
    offset += static_cast<std::size_t>(ex.wu.cols());
  }
  return std::make_unique<ToyMoeModel>(router_, std::move(experts), seed_);
}

ModelSpec ToyMoeModel::spec() const {
  ModelSpec s;
  s.kind = kind();
  s.seed = seed_;
  s.dims["experts"] = static_cast<std::int64_t>(experts_.size());
  s.dims["in_dim"] = router_.rows();
  s.dims["out_dim"] = static_cast<std::int64_t>(out_dim_);
  s.tensors["router"] = Tensor::from_matrix(router_);
  for (std::size_t e = 0; e < experts_.size(); ++e) {
    const std::string p = "expert" + std::to_string(e) + ".";
    s.dims[p + "channels"] = experts_[e].wu.cols();
    s.tensors[p + "wu"] = Tensor::from_matrix(experts_[e].wu);
    s.tensors[p + "wg"] = Tensor::from_matrix(experts_[e].wg);
    s.tensors[p + "wd"] = Tensor::from_matrix(experts_[e].wd);
  }
  return s;
}

std::unique_ptr<ToyMoeModel> ToyMoeModel::from_spec(const ModelSpec& spec) {
  detail::require_kind(spec, ModelKind::kToyMoe);
  const auto n = detail::dim_at(spec, "experts");
  std::vector<GatedMlp> experts;
  for (std::int64_t e = 0; e < n; ++e) {
    const std::string p = "expert" + std::to_string(e) + ".";
    experts.push_back({detail::matrix_at(spec, p + "wu"), detail::matrix_at(spec, p + "wg"),
                       detail::matrix_at(spec, p + "wd")});
  }
  return std::make_unique<ToyMoeModel>(detail::matrix_at(spec, "router"), std::move(experts),
                                       spec.seed);
}

}  // namespace ddp
