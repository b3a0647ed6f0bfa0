#include "ddp/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ddp/error.hpp"
#include "json.hpp"

namespace ddp {

namespace {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ValidationError(where() + "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    out = convert<T>(*it, field(key));
  }

  template <typename T>
  void get_required(const char* key, T& out) {
    if (!obj_.contains(key)) throw ValidationError(field(key) + ": required field is missing");
    get(key, out);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      (void)v;
      if (!seen_.count(k)) throw ValidationError(field(k) + ": unknown field");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& name) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError(name + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ValidationError(name + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ValidationError(name + ": expected a number");
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw ValidationError(name + ": must be finite");
      return d;
    } else if constexpr (std::is_integral_v<T>) {
      if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
      if (v.is_number_integer()) {
        if (v.get<std::int64_t>() < 0 && std::is_unsigned_v<T>) {
          throw ValidationError(name + ": must be non-negative");
        }
        return static_cast<T>(v.get<std::int64_t>());
      }
      throw ValidationError(name + ": expected an integer");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : path_ + ": "; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E, typename F>
void get_enum(Reader& r, const char* key, E& out, F from_string) {
  std::string s;
  bool present = r.child(key) != nullptr;
  if (!present) return;
  r.get(key, s);
  try {
    out = from_string(s);
  } catch (const ValidationError& e) {
    throw ValidationError(r.field(key) + ": " + e.what());
  }
}

FixtureSpec parse_fixture(const json& j) {
  FixtureSpec f;
  Reader r(j, "fixture");
  r.get("name", f.name);
  get_enum(r, "kind", f.kind, model_kind_from_string);
  r.get("components", f.components);
  r.get("p_true", f.p_true);
  r.get("noise", f.noise);
  r.get("samples", f.samples);
  r.get("in_dim", f.in_dim);
  r.get("out_dim", f.out_dim);
  r.get("seq_len", f.seq_len);
  r.get("model_dim", f.model_dim);
  r.get("head_dim", f.head_dim);
  r.get("experts", f.experts);
  r.get("channels", f.channels);
  r.get("layers", f.layers);
  r.get("heads", f.heads);
  r.get("mlp_width", f.mlp_width);
  r.get("vocab", f.vocab);
  r.get("logit_scale", f.logit_scale);
  r.get("pin_model_seed", f.pin_model_seed);
  r.get("model_seed", f.model_seed);
  r.get("model_path", f.model_path);
  r.finish();

  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ValidationError(std::string("fixture.") + name + ": must be positive");
  };
  positive(f.samples, "samples");
  positive(f.out_dim, "out_dim");
  positive(f.seq_len, "seq_len");
  positive(f.model_dim, "model_dim");
  positive(f.head_dim, "head_dim");
  if (f.kind == ModelKind::kPlantedLinear || f.kind == ModelKind::kToyAttention ||
      f.kind == ModelKind::kToyMlp) {
    if (f.components < 2) throw ValidationError("fixture.components: must be at least 2");
    if (f.p_true < 1 || f.p_true > f.components) {
      throw ValidationError("fixture.p_true: must lie in [1, components]");
    }
  }
  if (f.kind == ModelKind::kToyMoe) {
    positive(f.experts, "experts");
    positive(f.channels, "channels");
    if (f.p_true < 1 || f.p_true > f.experts * f.channels) {
      throw ValidationError("fixture.p_true: must lie in [1, experts * channels]");
    }
  }
  if (f.kind == ModelKind::kTinyTransformer) {
    positive(f.layers, "layers");
    positive(f.heads, "heads");
    positive(f.mlp_width, "mlp_width");
    if (f.vocab < 2) throw ValidationError("fixture.vocab: must be at least 2");
    if (f.seq_len < 2) throw ValidationError("fixture.seq_len: must be at least 2");
  }
  if (!(f.noise >= 0.0)) throw ValidationError("fixture.noise: must be non-negative");
  if (!(f.logit_scale > 0.0)) throw ValidationError("fixture.logit_scale: must be positive");
  return f;
}

TrainConfig parse_train(const json& j) {
  TrainConfig t;
  Reader r(j, "train");
  r.get("total_steps", t.total_steps);
  r.get("batch_size", t.batch_size);
  if (const json* rho = r.child("rho")) {
    t.rho.clear();
    if (rho->is_number()) {
      t.rho["*"] = Reader::convert<double>(*rho, "train.rho");
    } else if (rho->is_object() && !rho->empty()) {
      for (const auto& [type, v] : rho->items()) {
        t.rho[type] = Reader::convert<double>(v, "train.rho." + type);
      }
    } else {
      throw ValidationError("train.rho: expected a number or a non-empty object of numbers");
    }
  }
  r.get("eta", t.eta);
  get_enum(r, "kl_reduction", t.kl_reduction, [](const std::string& s) {
    if (s == "sum") return KlReduction::kSum;
    if (s == "mean") return KlReduction::kMean;
    throw ValidationError("expected 'sum' or 'mean', got '" + s + "'");
  });
  r.get("distill", t.distill);
  r.get("lr_z", t.lr_z);
  r.get("lr_lambda1", t.lr_lambda1);
  r.get("lr_lambda2", t.lr_lambda2);
  r.get("lr_lambda3", t.lr_lambda3);
  if (const json* betas = r.child("betas")) {
    if (!betas->is_array() || betas->size() != 2) {
      throw ValidationError("train.betas: expected [beta1, beta2]");
    }
    t.adam.beta1 = Reader::convert<double>((*betas)[0], "train.betas[0]");
    t.adam.beta2 = Reader::convert<double>((*betas)[1], "train.betas[1]");
  }
  r.get("eps", t.adam.eps);
  r.get("weight_decay", t.adam.weight_decay);
  r.get("warmup_steps", t.warmup_steps);
  r.get("lr_floor", t.lr_floor);
  r.get("mu0", t.mu0);
  r.get("muT", t.muT);
  r.get("stretch_l", t.stretch_l);
  r.get("stretch_r", t.stretch_r);
  get_enum(r, "granularity", t.granularity, granularity_from_string);
  get_enum(r, "budget_target", t.budget_target, budget_target_from_string);
  get_enum(r, "clamp_backward", t.clamp_backward, clamp_backward_from_string);
  get_enum(r, "relu_backward", t.relu_backward, relu_backward_from_string);
  get_enum(r, "multiplier_mode", t.multiplier_mode, multiplier_mode_from_string);
  if (const json* alm = r.child("alm")) {
    Reader a(*alm, "train.alm");
    a.get("gamma0", t.alm.gamma0);
    a.get("growth", t.alm.growth);
    a.get("stall_ratio", t.alm.stall_ratio);
    a.get("window", t.alm.window);
    a.get("gamma_max", t.alm.gamma_max);
    a.get("feas_tol", t.alm.feas_tol);
    a.finish();
  }
  r.get("z_init", t.z_init);
  r.get("hc_z_init", t.hc_z_init);
  get_enum(r, "variant", t.variant, variant_from_string);
  get_enum(r, "hc_finalize", t.hc_finalize, hc_finalize_from_string);
  r.finish();
  return t;
}

json fixture_json(const FixtureSpec& f) {
  return json{{"name", f.name},
              {"kind", to_string(f.kind)},
              {"components", f.components},
              {"p_true", f.p_true},
              {"noise", f.noise},
              {"samples", f.samples},
              {"in_dim", f.in_dim},
              {"out_dim", f.out_dim},
              {"seq_len", f.seq_len},
              {"model_dim", f.model_dim},
              {"head_dim", f.head_dim},
              {"experts", f.experts},
              {"channels", f.channels},
              {"layers", f.layers},
              {"heads", f.heads},
              {"mlp_width", f.mlp_width},
              {"vocab", f.vocab},
              {"logit_scale", f.logit_scale},
              {"pin_model_seed", f.pin_model_seed},
              {"model_seed", f.model_seed},
              {"model_path", f.model_path}};
}

json train_json(const TrainConfig& t) {
  json rho = json::object();
  for (const auto& [type, v] : t.rho) rho[type] = v;
  return json{{"total_steps", t.total_steps},
              {"batch_size", t.batch_size},
              {"rho", rho},
              {"eta", t.eta},
              {"kl_reduction", t.kl_reduction == KlReduction::kSum ? "sum" : "mean"},
              {"distill", t.distill},
              {"lr_z", t.lr_z},
              {"lr_lambda1", t.lr_lambda1},
              {"lr_lambda2", t.lr_lambda2},
              {"lr_lambda3", t.lr_lambda3},
              {"betas", {t.adam.beta1, t.adam.beta2}},
              {"eps", t.adam.eps},
              {"weight_decay", t.adam.weight_decay},
              {"warmup_steps", t.warmup_steps},
              {"lr_floor", t.lr_floor},
              {"mu0", t.mu0},
              {"muT", t.muT},
              {"stretch_l", t.stretch_l},
              {"stretch_r", t.stretch_r},
              {"granularity", to_string(t.granularity)},
              {"budget_target", to_string(t.budget_target)},
              {"clamp_backward", to_string(t.clamp_backward)},
              {"relu_backward", to_string(t.relu_backward)},
              {"multiplier_mode", to_string(t.multiplier_mode)},
              {"alm",
               {{"gamma0", t.alm.gamma0},
                {"growth", t.alm.growth},
                {"stall_ratio", t.alm.stall_ratio},
                {"window", t.alm.window},
                {"gamma_max", t.alm.gamma_max},
                {"feas_tol", t.alm.feas_tol}}},
              {"z_init", t.z_init},
              {"hc_z_init", t.hc_z_init},
              {"variant", to_string(t.variant)},
              {"hc_finalize", to_string(t.hc_finalize)}};
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: malformed JSON: ") + e.what());
  }
  RunConfig cfg;
  Reader r(j, "");
  r.get_required("schema_version", cfg.schema_version);
  if (cfg.schema_version != kConfigSchemaVersion) {
    throw ValidationError("schema_version: unsupported version " +
                          std::to_string(cfg.schema_version) + " (expected " +
                          std::to_string(kConfigSchemaVersion) + ")");
  }
  r.get("name", cfg.name);
  r.get("seed", cfg.seed);
  if (const json* seeds = r.child("seeds")) {
    if (!seeds->is_array()) throw ValidationError("seeds: expected an array of integers");
    cfg.seeds.clear();
    for (const auto& s : *seeds) cfg.seeds.push_back(Reader::convert<std::uint64_t>(s, "seeds"));
  }
  if (const json* variants = r.child("variants")) {
    if (!variants->is_array() || variants->empty()) {
      throw ValidationError("variants: expected a non-empty array of names");
    }
    cfg.variants.clear();
    for (const auto& v : *variants) {
      try {
        cfg.variants.push_back(variant_from_string(Reader::convert<std::string>(v, "variants")));
      } catch (const ValidationError& e) {
        throw ValidationError(std::string("variants: ") + e.what());
      }
    }
  }
  if (const json* p = r.child("oracle_p"); p != nullptr && !p->is_null()) {
    cfg.oracle_p = Reader::convert<std::size_t>(*p, "oracle_p");
  }
  if (const json* f = r.child("fixture")) cfg.fixture = parse_fixture(*f);
  if (const json* t = r.child("train")) cfg.train = parse_train(*t);
  r.finish();
  cfg.train.seed = cfg.seed;
  cfg.train.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& cfg, int indent) {
  json variants = json::array();
  for (Variant v : cfg.variants) variants.push_back(to_string(v));
  json j{{"schema_version", cfg.schema_version},
         {"name", cfg.name},
         {"seed", cfg.seed},
         {"seeds", cfg.seeds},
         {"variants", variants},
         {"oracle_p", cfg.oracle_p ? json(*cfg.oracle_p) : json(nullptr)},
         {"fixture", fixture_json(cfg.fixture)},
         {"train", train_json(cfg.train)}};
  return j.dump(indent);
}

}  // namespace ddp
