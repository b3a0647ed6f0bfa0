#pragma once

#include <string>

#include "ddp/error.hpp"
#include "ddp/models.hpp"

namespace ddp::detail {

inline const Tensor& tensor_at(const ModelSpec& spec, const std::string& name) {
  auto it = spec.tensors.find(name);
  if (it == spec.tensors.end()) throw ValidationError("model spec: missing tensor '" + name + "'");
  return it->second;
}

inline Eigen::MatrixXd matrix_at(const ModelSpec& spec, const std::string& name) {
  return tensor_at(spec, name).to_matrix();
}

inline std::int64_t dim_at(const ModelSpec& spec, const std::string& name) {
  auto it = spec.dims.find(name);
  if (it == spec.dims.end()) throw ValidationError("model spec: missing dimension '" + name + "'");
  if (it->second < 0) throw ValidationError("model spec: negative dimension '" + name + "'");
  return it->second;
}

inline void require_kind(const ModelSpec& spec, ModelKind kind) {
  if (spec.kind != kind) {
    throw ValidationError("model spec: expected kind " + to_string(kind) + ", got " +
                          to_string(spec.kind));
  }
}

inline std::vector<ComponentGroup> single_group(std::string type, std::string name, std::size_t k,
                                                std::size_t offset = 0) {
  ComponentGroup g{std::move(type), std::move(name), {}};
  for (std::size_t i = 0; i < k; ++i) g.indices.push_back(offset + i);
  return {g};
}

/// Exact GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);

/// Components kept by the fold, i.e. m_k > 0.
std::vector<std::size_t> kept_indices(std::span<const double> m, std::size_t offset,
                                      std::size_t count);

}  // namespace ddp::detail
