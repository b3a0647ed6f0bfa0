#include "ddp/model_io.hpp"

#include <fstream>
#include <sstream>

#include "ddp/error.hpp"
#include "json.hpp"

namespace ddp {

using nlohmann::json;

namespace {

json tensor_to_json(const Tensor& t) {
  json data = json::array();
  if (t.shape.size() == 2) {
    for (std::size_t i = 0; i < t.shape[0]; ++i) {
      json row = json::array();
      for (std::size_t j = 0; j < t.shape[1]; ++j) row.push_back(t.data[i * t.shape[1] + j]);
      data.push_back(std::move(row));
    }
  } else {
    for (double v : t.data) data.push_back(v);
  }
  return {{"shape", t.shape}, {"data", std::move(data)}};
}

Tensor tensor_from_json(const json& j, const std::string& name) {
  Tensor t;
  t.shape = j.at("shape").get<std::vector<std::size_t>>();
  const json& data = j.at("data");
  if (t.shape.size() == 2) {
    if (data.size() != t.shape[0]) throw ValidationError("tensor '" + name + "': row count mismatch");
    for (const auto& row : data) {
      if (row.size() != t.shape[1]) {
        throw ValidationError("tensor '" + name + "': column count mismatch");
      }
      for (const auto& v : row) t.data.push_back(v.get<double>());
    }
  } else {
    t.data = data.get<std::vector<double>>();
  }
  return t;
}

}  // namespace

std::string model_to_json(const ComponentModel& model) {
  const ModelSpec s = model.spec();
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["kind"] = to_string(s.kind);
  j["seed"] = s.seed;
  j["dims"] = s.dims;
  json groups = json::array();
  for (const auto& g : model.component_map()) {
    groups.push_back({{"type", g.type}, {"name", g.name}, {"indices", g.indices}});
  }
  j["component_map"] = std::move(groups);
  json tensors = json::object();
  for (const auto& [name, t] : s.tensors) tensors[name] = tensor_to_json(t);
  j["tensors"] = std::move(tensors);
  return j.dump();
}

std::unique_ptr<ComponentModel> model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model json: ") + e.what());
  }
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kModelSchemaVersion) {
      throw ValidationError("model json: unsupported schema_version " + std::to_string(version));
    }
    ModelSpec s;
    s.kind = model_kind_from_string(j.at("kind").get<std::string>());
    s.seed = j.value("seed", std::uint64_t{0});
    s.dims = j.at("dims").get<std::map<std::string, std::int64_t>>();
    for (const auto& [name, t] : j.at("tensors").items()) s.tensors[name] = tensor_from_json(t, name);
    auto model = model_from_spec(s);
    if (j.contains("component_map")) {
      std::vector<ComponentGroup> groups;
      for (const auto& g : j.at("component_map")) {
        groups.push_back({g.at("type").get<std::string>(), g.at("name").get<std::string>(),
                          g.at("indices").get<std::vector<std::size_t>>()});
      }
      if (groups != model->component_map()) {
        throw ValidationError("model json: component_map does not match the tensors");
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model json: ") + e.what());
  }
}

void save_model(const ComponentModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << model_to_json(model) << '\n';
}

std::unique_ptr<ComponentModel> load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("model file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace ddp
