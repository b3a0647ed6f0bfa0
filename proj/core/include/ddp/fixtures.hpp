#pragma once

// Synthetic fixtures with known structure, plus seeded minibatch sampling.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ddp/models.hpp"
#include "ddp/rng.hpp"

namespace ddp {

struct PlantedOptions {
  std::size_t in_dim = 0;  ///< 0 means in_dim = K
  std::size_t out_dim = 4;
  std::size_t samples = 256;
};

struct PlantedModel {
  std::unique_ptr<PlantedLinearModel> model;
  Batch data;
  std::vector<std::size_t> true_support;  ///< ascending
};

/// Linear component model where exactly p_true components carry unit-scale
/// signal and the rest have output weights bounded by `noise`; targets are
/// the model restricted to the planted support.
PlantedModel make_planted_model(std::size_t k, std::size_t p_true, double noise, std::uint64_t seed,
                                const PlantedOptions& opts = {});

/// Declarative description of a fixture, as found in run configs.
struct FixtureSpec {
  std::string name = "planted8";
  ModelKind kind = ModelKind::kPlantedLinear;
  std::size_t components = 8;  ///< K for planted/attention/mlp; ignored otherwise
  std::size_t p_true = 4;
  double noise = 0.0;
  std::size_t samples = 256;
  std::size_t in_dim = 0;
  std::size_t out_dim = 4;
  // toy-attention / tiny-transformer
  std::size_t seq_len = 16;
  std::size_t model_dim = 32;
  std::size_t head_dim = 8;
  // toy-moe
  std::size_t experts = 4;
  std::size_t channels = 4;
  // tiny-transformer
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t mlp_width = 64;
  std::size_t vocab = 32;
  double logit_scale = 0.5;
  /// When set, the model and data come from this seed rather than the run seed.
  bool pin_model_seed = false;
  std::uint64_t model_seed = 0;
  /// Optional checkpoint to load instead of generating the model.
  std::string model_path;

  bool operator==(const FixtureSpec&) const = default;
};

struct Fixture {
  std::string name;
  std::unique_ptr<ComponentModel> model;
  Batch data;
  std::vector<std::size_t> true_support;  ///< empty when not planted
};

/// Builds the fixture; `run_seed` drives generation unless `pin_model_seed` is set.
Fixture make_fixture(const FixtureSpec& spec, std::uint64_t run_seed);

/// Token sequences sampled autoregressively from a token model.
std::vector<std::vector<int>> sample_corpus(const TinyTransformerModel& model, std::size_t count,
                                            std::size_t length, Philox4x32& rng);

/// Draws minibatches without replacement within an epoch, reshuffling per epoch.
class MinibatchSampler {
 public:
  MinibatchSampler(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> next();

 private:
  void reshuffle();

  std::size_t n_;
  std::size_t batch_;
  Philox4x32 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace ddp
