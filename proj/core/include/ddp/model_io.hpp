#pragma once

// JSON checkpoints for component models.
//
//   {
//     "schema_version": 1,
//     "kind": "tiny-transformer",
//     "seed": 7,
//     "dims": {"layers": 2, ...},
//     "component_map": [{"type": "attn", "name": "layer0", "indices": [0, 1, 2, 3]}, ...],
//     "tensors": {"tok_emb": {"shape": [32, 32], "data": [[...], ...]}, ...}
//   }

#include <filesystem>
#include <memory>
#include <string>

#include "ddp/models.hpp"

namespace ddp {

inline constexpr int kModelSchemaVersion = 1;

std::string model_to_json(const ComponentModel& model);
std::unique_ptr<ComponentModel> model_from_json(const std::string& text);

void save_model(const ComponentModel& model, const std::filesystem::path& path);
std::unique_ptr<ComponentModel> load_model(const std::filesystem::path& path);

}  // namespace ddp
