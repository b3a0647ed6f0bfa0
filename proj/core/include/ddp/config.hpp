#pragma once

// Run configuration: fixture + training hyperparameters + harness options,
// read from and written to JSON.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddp/fixtures.hpp"
#include "ddp/trainer.hpp"

namespace ddp {

inline constexpr int kConfigSchemaVersion = 1;

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::string name = "run";
  FixtureSpec fixture{};
  TrainConfig train{};
  std::uint64_t seed = 0;
  /// Seeds for `ablate`; empty means {seed}.
  std::vector<std::uint64_t> seeds;
  std::vector<Variant> variants{Variant::kHardConcrete, Variant::kDetHardConcrete,
                                Variant::kDetHardConcreteRelu, Variant::kDdp};
  /// Oracle subset size; unset means the rounded budget of the single module type.
  std::optional<std::size_t> oracle_p;

  bool operator==(const RunConfig&) const = default;
};

/// Parses and validates; unknown keys and bad values raise ValidationError
/// naming the field (e.g. "train.rho").
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
/// Normalized JSON: every field present, keys sorted.
std::string config_to_json(const RunConfig& cfg, int indent = 2);

}  // namespace ddp
