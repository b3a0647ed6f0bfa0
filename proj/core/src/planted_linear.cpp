#include "ddp/error.hpp"
#include "ddp/models.hpp"
#include "spec_util.hpp"

namespace ddp {

PlantedLinearModel::PlantedLinearModel(Eigen::MatrixXd u, Eigen::MatrixXd v, std::uint64_t seed)
    : u_(std::move(u)), v_(std::move(v)), seed_(seed) {
  if (u_.cols() == 0 || u_.cols() != v_.rows()) {
    throw ValidationError("planted-linear: u is in_dim x K and v is K x out_dim");
  }
  set_component_map(detail::single_group("linear", "all", static_cast<std::size_t>(u_.cols())));
}

std::unique_ptr<ComponentModel> PlantedLinearModel::clone() const {
  return std::make_unique<PlantedLinearModel>(*this);
}

std::vector<Eigen::MatrixXd> PlantedLinearModel::component_outputs(const Batch& batch) const {
  const Eigen::MatrixXd proj = batch.x * u_;  // rows x K
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(u_.cols()));
  for (Eigen::Index k = 0; k < u_.cols(); ++k) out.emplace_back(proj.col(k) * v_.row(k));
  return out;
}

Eigen::MatrixXd PlantedLinearModel::forward_impl(const Batch& batch,
                                                 std::span<const double> m) const {
  const Eigen::Map<const Eigen::VectorXd> mk(m.data(), static_cast<Eigen::Index>(m.size()));
  return (batch.x * u_) * mk.asDiagonal() * v_;
}

std::unique_ptr<ComponentModel> PlantedLinearModel::fold_impl(std::span<const double> m) const {
  const auto kept = detail::kept_indices(m, 0, m.size());
  Eigen::MatrixXd u(u_.rows(), static_cast<Eigen::Index>(kept.size()));
  Eigen::MatrixXd v(static_cast<Eigen::Index>(kept.size()), v_.cols());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(kept[i]);
    const auto dst = static_cast<Eigen::Index>(i);
    u.col(dst) = u_.col(src);
    v.row(dst) = m[kept[i]] * v_.row(src);
  }
  return std::make_unique<PlantedLinearModel>(std::move(u), std::move(v), seed_);
}

ModelSpec PlantedLinearModel::spec() const {
  ModelSpec s;
  s.kind = kind();
  s.seed = seed_;
  s.dims["in_dim"] = u_.rows();
  s.dims["out_dim"] = v_.cols();
  s.dims["components"] = u_.cols();
  s.tensors["u"] = Tensor::from_matrix(u_);
  s.tensors["v"] = Tensor::from_matrix(v_);
  return s;
}

std::unique_ptr<PlantedLinearModel> PlantedLinearModel::from_spec(const ModelSpec& spec) {
  detail::require_kind(spec, ModelKind::kPlantedLinear);
  auto model = std::make_unique<PlantedLinearModel>(detail::matrix_at(spec, "u"),
                                                    detail::matrix_at(spec, "v"), spec.seed);
  if (static_cast<std::int64_t>(model->num_components()) != detail::dim_at(spec, "components")) {
    throw ValidationError("planted-linear spec: component count disagrees with tensors");
  }
  return model;
}

}  // namespace ddp
