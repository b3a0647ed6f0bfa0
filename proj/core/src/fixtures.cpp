#include "ddp/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ddp/error.hpp"
#include "ddp/model_io.hpp"

namespace ddp {

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double scale, Philox4x32& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

std::vector<std::size_t> choose_support(std::size_t k, std::size_t p, Philox4x32& rng) {
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = k; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  idx.resize(p);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> indicator(std::size_t k, const std::vector<std::size_t>& support) {
  std::vector<double> m(k, 0.0);
  for (std::size_t i : support) m[i] = 1.0;
  return m;
}

void require_support(std::size_t k, std::size_t p) {
  if (p < 1 || p > k) {
    throw ValidationError("planted fixture: p_true must lie in [1, K], got " + std::to_string(p) +
                          " for K = " + std::to_string(k));
  }
}

/// Rescales distractor output rows so their entries stay within `noise`.
void damp_rows(Eigen::MatrixXd& w, Eigen::Index row, double noise) {
  const double mx = w.row(row).cwiseAbs().maxCoeff();
  if (mx > 0.0) w.row(row) *= noise / mx;
}

Fixture planted_attention(const FixtureSpec& spec, std::uint64_t seed) {
  Philox4x32 rng(seed, 11);
  const auto d = static_cast<Eigen::Index>(spec.model_dim);
  const auto dh = static_cast<Eigen::Index>(spec.head_dim);
  std::vector<AttentionHead> heads;
  for (std::size_t h = 0; h < spec.components; ++h) {
    heads.push_back({gaussian(d, dh, 1.0 / std::sqrt(double(d)), rng),
                     gaussian(d, dh, 1.0 / std::sqrt(double(d)), rng),
                     gaussian(d, dh, 1.0 / std::sqrt(double(d)), rng),
                     gaussian(dh, d, 1.0 / std::sqrt(double(dh)), rng)});
  }
  require_support(spec.components, spec.p_true);
  const auto support = choose_support(spec.components, spec.p_true, rng);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    if (!std::binary_search(support.begin(), support.end(), h)) {
      for (Eigen::Index r = 0; r < dh; ++r) damp_rows(heads[h].wo, r, spec.noise);
    }
  }
  Fixture f;
  f.model = std::make_unique<ToyAttentionModel>(std::move(heads), spec.seq_len, seed);
  f.data.rows_per_sample = spec.seq_len;
  f.data.x = gaussian(static_cast<Eigen::Index>(spec.samples * spec.seq_len), d, 1.0, rng);
  f.data.y = Eigen::MatrixXd::Zero(f.data.x.rows(), d);
  f.data.y = f.model->forward_masked(f.data, indicator(spec.components, support));
  f.true_support = support;
  return f;
}

GatedMlp random_mlp(Eigen::Index in, Eigen::Index width, Eigen::Index out, Philox4x32& rng) {
  return {gaussian(in, width, 1.0 / std::sqrt(double(in)), rng),
          gaussian(in, width, 1.0 / std::sqrt(double(in)), rng),
          gaussian(width, out, 1.0, rng)};
}

Fixture planted_mlp(const FixtureSpec& spec, std::uint64_t seed) {
  Philox4x32 rng(seed, 12);
  const auto in = static_cast<Eigen::Index>(spec.in_dim == 0 ? 8 : spec.in_dim);
  const auto out = static_cast<Eigen::Index>(spec.out_dim);
  GatedMlp mlp = random_mlp(in, static_cast<Eigen::Index>(spec.components), out, rng);
  require_support(spec.components, spec.p_true);
  const auto support = choose_support(spec.components, spec.p_true, rng);
  for (std::size_t j = 0; j < spec.components; ++j) {
    if (!std::binary_search(support.begin(), support.end(), j)) {
      damp_rows(mlp.wd, static_cast<Eigen::Index>(j), spec.noise);
    }
  }
  Fixture f;
  f.model = std::make_unique<ToyMlpModel>(std::move(mlp), seed);
  f.data.x = gaussian(static_cast<Eigen::Index>(spec.samples), in, 1.0, rng);
  f.data.y = Eigen::MatrixXd::Zero(f.data.x.rows(), out);
  f.data.y = f.model->forward_masked(f.data, indicator(spec.components, support));
  f.true_support = support;
  return f;
}

Fixture planted_moe(const FixtureSpec& spec, std::uint64_t seed) {
  Philox4x32 rng(seed, 13);
  const auto in = static_cast<Eigen::Index>(spec.in_dim == 0 ? 8 : spec.in_dim);
  const auto out = static_cast<Eigen::Index>(spec.out_dim);
  const auto c = static_cast<Eigen::Index>(spec.channels);
  const std::size_t k = spec.experts * spec.channels;
  Eigen::MatrixXd router = gaussian(in, static_cast<Eigen::Index>(spec.experts), 1.0, rng);
  std::vector<GatedMlp> experts;
  for (std::size_t e = 0; e < spec.experts; ++e) experts.push_back(random_mlp(in, c, out, rng));
  require_support(k, spec.p_true);
  const auto support = choose_support(k, spec.p_true, rng);
  for (std::size_t i = 0; i < k; ++i) {
    if (!std::binary_search(support.begin(), support.end(), i)) {
      damp_rows(experts[i / spec.channels].wd, static_cast<Eigen::Index>(i % spec.channels),
                spec.noise);
    }
  }
  Fixture f;
  f.model = std::make_unique<ToyMoeModel>(std::move(router), std::move(experts), seed);
  f.data.x = gaussian(static_cast<Eigen::Index>(spec.samples), in, 1.0, rng);
  f.data.y = Eigen::MatrixXd::Zero(f.data.x.rows(), out);
  f.data.y = f.model->forward_masked(f.data, indicator(k, support));
  f.true_support = support;
  return f;
}

Fixture tiny_transformer(const FixtureSpec& spec, std::uint64_t seed) {
  Philox4x32 rng(seed, 14);
  const auto d = static_cast<Eigen::Index>(spec.model_dim);
  const auto dh = static_cast<Eigen::Index>(spec.head_dim);
  const auto v = static_cast<Eigen::Index>(spec.vocab);
  const auto c = static_cast<Eigen::Index>(spec.mlp_width);
  std::vector<TransformerLayer> layers;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    TransformerLayer layer;
    for (std::size_t h = 0; h < spec.heads; ++h) {
      layer.heads.push_back({gaussian(d, dh, 1.0 / std::sqrt(double(d)), rng),
                             gaussian(d, dh, 1.0 / std::sqrt(double(d)), rng),
                             gaussian(d, dh, 1.0 / std::sqrt(double(d)), rng),
                             gaussian(dh, d, 1.0 / std::sqrt(double(dh)), rng)});
    }
    layer.mlp = {gaussian(d, c, 1.0 / std::sqrt(double(d)), rng),
                 gaussian(d, c, 1.0 / std::sqrt(double(d)), rng),
                 gaussian(c, d, 1.0 / std::sqrt(double(c)), rng)};
    layers.push_back(std::move(layer));
  }
  auto model = std::make_unique<TinyTransformerModel>(
      gaussian(v, d, 1.0, rng), gaussian(static_cast<Eigen::Index>(spec.seq_len), d, 0.5, rng),
      std::move(layers), gaussian(d, v, spec.logit_scale, rng), seed);
  Fixture f;
  f.data.tokens = sample_corpus(*model, spec.samples, spec.seq_len, rng);
  f.model = std::move(model);
  return f;
}

}  // namespace

PlantedModel make_planted_model(std::size_t k, std::size_t p_true, double noise, std::uint64_t seed,
                                const PlantedOptions& opts) {
  if (k == 0) throw ValidationError("planted fixture: K must be positive");
  require_support(k, p_true);
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    throw ValidationError("planted fixture: noise must be a finite non-negative number");
  }
  if (opts.out_dim == 0 || opts.samples == 0) {
    throw ValidationError("planted fixture: out_dim and samples must be positive");
  }
  Philox4x32 rng(seed, 10);
  const auto in = static_cast<Eigen::Index>(opts.in_dim == 0 ? k : opts.in_dim);
  const auto out = static_cast<Eigen::Index>(opts.out_dim);
  const auto kk = static_cast<Eigen::Index>(k);

  Eigen::MatrixXd u = gaussian(in, kk, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  Eigen::MatrixXd v = gaussian(kk, out, 1.0, rng);
  auto support = choose_support(k, p_true, rng);
  for (Eigen::Index i = 0; i < kk; ++i) {
    if (std::binary_search(support.begin(), support.end(), static_cast<std::size_t>(i))) {
      v.row(i).normalize();
    } else {
      for (Eigen::Index j = 0; j < out; ++j) v(i, j) = noise * (2.0 * rng.uniform() - 1.0);
    }
  }

  PlantedModel pm;
  pm.model = std::make_unique<PlantedLinearModel>(std::move(u), std::move(v), seed);
  pm.data.x = gaussian(static_cast<Eigen::Index>(opts.samples), in, 1.0, rng);
  pm.data.y = Eigen::MatrixXd::Zero(pm.data.x.rows(), out);
  pm.data.y = pm.model->forward_masked(pm.data, indicator(k, support));
  pm.true_support = std::move(support);
  return pm;
}

Fixture make_fixture(const FixtureSpec& spec, std::uint64_t run_seed) {
  const std::uint64_t seed = spec.pin_model_seed ? spec.model_seed : run_seed;
  Fixture f;
  switch (spec.kind) {
    case ModelKind::kPlantedLinear: {
      PlantedOptions opts{spec.in_dim, spec.out_dim, spec.samples};
      auto pm = make_planted_model(spec.components, spec.p_true, spec.noise, seed, opts);
      f.model = std::move(pm.model);
      f.data = std::move(pm.data);
      f.true_support = std::move(pm.true_support);
      break;
    }
    case ModelKind::kToyAttention: f = planted_attention(spec, seed); break;
    case ModelKind::kToyMlp: f = planted_mlp(spec, seed); break;
    case ModelKind::kToyMoe: f = planted_moe(spec, seed); break;
    case ModelKind::kTinyTransformer: f = tiny_transformer(spec, seed); break;
  }
  if (!spec.model_path.empty()) {
    auto loaded = load_model(spec.model_path);
    if (loaded->kind() != spec.kind) throw ValidationError("fixture: checkpoint kind mismatch");
    f.model = std::move(loaded);
  }
  f.name = spec.name;
  return f;
}

std::vector<std::vector<int>> sample_corpus(const TinyTransformerModel& model, std::size_t count,
                                            std::size_t length, Philox4x32& rng) {
  if (length < 2 || length > model.max_seq_len()) {
    throw ValidationError("sample_corpus: length must lie in [2, context]");
  }
  const std::vector<double> ones(model.num_components(), 1.0);
  std::vector<std::vector<int>> corpus;
  corpus.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    std::vector<int> seq{static_cast<int>(rng.below(model.vocab_size()))};
    while (seq.size() < length) {
      const Eigen::MatrixXd logits = model.sequence_logits(seq, ones);
      const Eigen::MatrixXd p = softmax_rows(logits.bottomRows(1));
      const double u = rng.uniform();
      double acc = 0.0;
      int next = static_cast<int>(p.cols()) - 1;
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        acc += p(0, j);
        if (u < acc) {
          next = static_cast<int>(j);
          break;
        }
      }
      seq.push_back(next);
    }
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

MinibatchSampler::MinibatchSampler(std::size_t num_samples, std::size_t batch_size,
                                   std::uint64_t seed)
    : n_(num_samples), batch_(batch_size), rng_(seed, 0xba7c4) {
  if (n_ == 0 || batch_ == 0) throw ValidationError("sampler: empty dataset or batch");
  batch_ = std::min(batch_, n_);
  order_.resize(n_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void MinibatchSampler::reshuffle() {
  for (std::size_t i = n_; i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
  cursor_ = 0;
}

std::vector<std::size_t> MinibatchSampler::next() {
  if (cursor_ + batch_ > n_) reshuffle();
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
  cursor_ += batch_;
  return out;
}

}  // namespace ddp
