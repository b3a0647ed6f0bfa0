#include "ddp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "ddp/baselines.hpp"
#include "ddp/error.hpp"
#include "ddp/fixtures.hpp"

namespace ddp {

namespace {

template <typename E>
struct Names {
  E value;
  const char* name;
};

constexpr Names<Variant> kVariants[] = {{Variant::kDdp, "ours"},
                                        {Variant::kHardConcrete, "hc"},
                                        {Variant::kDetHardConcrete, "det_hc"},
                                        {Variant::kDetHardConcreteRelu, "det_hc_em"}};

template <typename E, std::size_t N>
E parse_enum(const Names<E> (&table)[N], const std::string& s, const char* what) {
  for (const auto& e : table) {
    if (s == e.name) return e.value;
  }
  std::string allowed;
  for (const auto& e : table) allowed += std::string(allowed.empty() ? "" : ", ") + e.name;
  throw ValidationError(std::string("unknown ") + what + " '" + s + "' (expected one of " +
                        allowed + ")");
}

template <typename E, std::size_t N>
std::string name_of(const Names<E> (&table)[N], E v) {
  for (const auto& e : table) {
    if (e.value == v) return e.name;
  }
  return "?";
}

constexpr Names<MultiplierMode> kModes[] = {{MultiplierMode::kAscent, "ascent"},
                                            {MultiplierMode::kClassicAlm, "classic-alm"}};
constexpr Names<Granularity> kGran[] = {{Granularity::kGlobal, "global"},
                                        {Granularity::kPerGroup, "per-group"}};
constexpr Names<BudgetTarget> kBudget[] = {{BudgetTarget::kRounded, "rounded"},
                                           {BudgetTarget::kNominal, "nominal"}};
constexpr Names<HcFinalize> kFinal[] = {{HcFinalize::kThreshold, "threshold"},
                                        {HcFinalize::kTopP, "top-p"}};

void require(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw ValidationError("train." + field + ": " + msg);
}

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

struct GroupSlot {
  std::vector<std::size_t> idx;  ///< global indices
  double target = 0.0;
  std::size_t count = 0;         ///< rounded budget
};

struct TypeSlot {
  std::string name;
  std::vector<std::size_t> idx;  ///< global indices, ascending
  std::vector<GroupSlot> groups;
  LagrangeState lam{};
  AlmState alm{};
  double window_gap = 0.0;
  std::size_t window_n = 0;
};

std::vector<TypeSlot> build_slots(const ComponentModel& model, const TrainConfig& cfg) {
  std::vector<TypeSlot> slots;
  for (const auto& type : model.module_types()) {
    TypeSlot ts;
    ts.name = type;
    ts.idx = model.indices_of_type(type);
    const double rho = cfg.rho_for(type);
    std::vector<std::vector<std::size_t>> parts;
    if (cfg.granularity == Granularity::kGlobal) {
      parts.push_back(ts.idx);
    } else {
      for (const auto& g : model.component_map()) {
        if (g.type == type) parts.push_back(g.indices);
      }
    }
    for (auto& p : parts) {
      const BudgetSpec b = BudgetSpec::make(rho, p.size());
      if (b.target_count == 0) {
        throw ValidationError("train.rho: keep ratio " + std::to_string(rho) + " leaves no " +
                              type + " component in a group of " + std::to_string(p.size()));
      }
      GroupSlot g;
      g.count = b.target_count;
      g.target = cfg.budget_target == BudgetTarget::kRounded
                     ? static_cast<double>(b.target_count) / static_cast<double>(p.size())
                     : rho;
      g.idx = std::move(p);
      ts.groups.push_back(std::move(g));
    }
    ts.alm.gamma = cfg.alm.gamma0;
    slots.push_back(std::move(ts));
  }
  return slots;
}

double dsigmoid(double x) {
  const double e = std::exp(-std::abs(x));
  return e / ((1.0 + e) * (1.0 + e));
}

/// Retention scores of one type under the variant, with ds/dz.
struct Scores {
  std::vector<double> s;
  std::vector<double> ds;  ///< diagonal Jacobian
};

Scores type_scores(const TrainConfig& cfg, const SurrogateParams& sp, double mu,
                   std::span<const double> zt) {
  Scores out;
  const std::size_t n = zt.size();
  out.s.resize(n);
  out.ds.resize(n);
  const double l = cfg.stretch_l, r = cfg.stretch_r;
  switch (cfg.variant) {
    case Variant::kDdp: {
      out.s = retention_scores(zt, mu, sp);
      const std::vector<double> ones(n, 1.0);
      out.ds = surrogate_backward(zt, mu, sp, ones, cfg.clamp_backward);
      break;
    }
    case Variant::kHardConcrete: {
      const double shift = std::log(-l / r);
      for (std::size_t i = 0; i < n; ++i) {
        out.s[i] = sigmoid(zt[i] - shift);
        out.ds[i] = dsigmoid(zt[i] - shift);
      }
      break;
    }
    case Variant::kDetHardConcrete:
    case Variant::kDetHardConcreteRelu: {
      for (std::size_t i = 0; i < n; ++i) {
        const double pre = hc_stretched(zt[i], 0.5, l, r);
        out.s[i] = std::clamp(pre, 0.0, 1.0);
        const bool inside = pre >= 0.0 && pre <= 1.0;
        out.ds[i] = (cfg.clamp_backward == ClampBackward::kMasked && !inside)
                        ? 0.0
                        : (r - l) * dsigmoid(zt[i]);
      }
      break;
    }
  }
  return out;
}

bool uses_binarization(Variant v) { return v != Variant::kHardConcrete; }
bool uses_relu_gate(Variant v) { return v == Variant::kDdp || v == Variant::kDetHardConcreteRelu; }
bool is_hc_family(Variant v) { return !uses_relu_gate(v); }

std::vector<double> gather(std::span<const double> v, const std::vector<std::size_t>& idx) {
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

FinalMask finalize_variant(const TrainConfig& cfg, const ComponentModel& model,
                           const std::vector<TypeSlot>& slots, std::span<const double> z) {
  if (uses_relu_gate(cfg.variant)) {
    FinalMask f = finalize(z);
    for (const auto& ts : slots) {
      std::size_t n = 0;
      for (std::size_t k : ts.idx) n += f.binary[k] > 0.0 ? 1 : 0;
      f.kept_per_type[ts.name] = n;
    }
    return f;
  }
  const std::size_t k = z.size();
  FinalMask f;
  f.binary.assign(k, 0.0);
  f.deployed.assign(k, 0.0);
  f.margin = std::numeric_limits<double>::infinity();
  std::vector<double> det(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double pre = hc_stretched(z[i], 0.5, cfg.stretch_l, cfg.stretch_r);
    det[i] = std::clamp(pre, 0.0, 1.0);
    f.margin = std::min(f.margin, std::abs(pre));
  }
  if (cfg.hc_finalize == HcFinalize::kThreshold) {
    for (std::size_t i = 0; i < k; ++i) {
      if (det[i] > 0.0) {
        f.binary[i] = 1.0;
        f.deployed[i] = det[i];
      }
    }
  } else {
    for (const auto& ts : slots) {
      for (const auto& g : ts.groups) {
        std::vector<std::size_t> order = g.idx;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return z[a] > z[b]; });
        for (std::size_t j = 0; j < g.count; ++j) {
          f.binary[order[j]] = 1.0;
          // A top-P pick can sit below the threshold; deploy it at full scale.
          f.deployed[order[j]] = det[order[j]] > 0.0 ? det[order[j]] : 1.0;
        }
      }
    }
  }
  (void)model;
  for (const auto& ts : slots) {
    std::size_t n = 0;
    for (std::size_t i : ts.idx) n += f.binary[i] > 0.0 ? 1 : 0;
    f.kept_per_type[ts.name] = n;
    f.kept_count += n;
  }
  return f;
}

}  // namespace

std::string to_string(MultiplierMode m) { return name_of(kModes, m); }
std::string to_string(Granularity g) { return name_of(kGran, g); }
std::string to_string(BudgetTarget b) { return name_of(kBudget, b); }
std::string to_string(Variant v) { return name_of(kVariants, v); }
std::string to_string(HcFinalize f) { return name_of(kFinal, f); }
MultiplierMode multiplier_mode_from_string(const std::string& s) {
  return parse_enum(kModes, s, "multiplier mode");
}
Granularity granularity_from_string(const std::string& s) {
  return parse_enum(kGran, s, "granularity");
}
BudgetTarget budget_target_from_string(const std::string& s) {
  return parse_enum(kBudget, s, "budget target");
}
Variant variant_from_string(const std::string& s) { return parse_enum(kVariants, s, "variant"); }
HcFinalize hc_finalize_from_string(const std::string& s) {
  return parse_enum(kFinal, s, "hc finalization");
}

void TrainConfig::validate() const {
  require(total_steps >= 1, "total_steps", "must be at least 1");
  require(batch_size >= 1, "batch_size", "must be at least 1");
  require(!rho.empty(), "rho", "at least one keep ratio is required");
  for (const auto& [type, v] : rho) {
    require(std::isfinite(v) && v > 0.0 && v < 1.0, "rho",
            "keep ratio for '" + type + "' must lie in (0, 1), got " + std::to_string(v));
  }
  require(std::isfinite(eta) && eta >= 0.0, "eta", "must be finite and non-negative");
  require(finite_positive(lr_z), "lr_z", "must be positive");
  require(std::isfinite(lr_lambda1) && lr_lambda1 >= 0.0, "lr_lambda1", "must be >= 0");
  require(std::isfinite(lr_lambda2) && lr_lambda2 >= 0.0, "lr_lambda2", "must be >= 0");
  require(std::isfinite(lr_lambda3) && lr_lambda3 >= 0.0, "lr_lambda3", "must be >= 0");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "betas", "beta1 must lie in [0, 1)");
  require(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "betas", "beta2 must lie in [0, 1)");
  require(finite_positive(adam.eps), "eps", "must be positive");
  require(std::isfinite(adam.weight_decay) && adam.weight_decay >= 0.0, "weight_decay",
          "must be >= 0");
  require(warmup_steps <= total_steps, "warmup_steps", "must not exceed total_steps");
  require(std::isfinite(lr_floor) && lr_floor >= 0.0 && lr_floor <= lr_z, "lr_floor",
          "must lie in [0, lr_z]");
  require(finite_positive(muT), "muT", "must be positive");
  require(std::isfinite(mu0) && mu0 >= muT, "mu0", "must be finite and >= muT");
  try {
    schedule().validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("train.schedule: ") + e.what());
  }
  try {
    surrogate().validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("train.stretch: ") + e.what());
  }
  require(std::isfinite(z_init), "z_init", "must be finite");
  require(std::isfinite(hc_z_init), "hc_z_init", "must be finite");
  require(finite_positive(alm.gamma0), "alm.gamma0", "must be positive");
  require(std::isfinite(alm.growth) && alm.growth >= 1.0, "alm.growth", "must be >= 1");
  require(alm.stall_ratio > 0.0 && alm.stall_ratio <= 1.0, "alm.stall_ratio",
          "must lie in (0, 1]");
  require(alm.window >= 1, "alm.window", "must be at least 1");
  require(finite_positive(alm.gamma_max), "alm.gamma_max", "must be positive");
  require(std::isfinite(alm.feas_tol) && alm.feas_tol >= 0.0, "alm.feas_tol", "must be >= 0");
}

double TrainConfig::rho_for(const std::string& type) const {
  if (auto it = rho.find(type); it != rho.end()) return it->second;
  if (auto it = rho.find("*"); it != rho.end()) return it->second;
  throw ValidationError("train.rho: no keep ratio for module type '" + type + "'");
}

FinalMask finalize(std::span<const double> z) {
  FinalMask f;
  f.binary.resize(z.size());
  f.deployed.resize(z.size());
  f.margin = z.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (!std::isfinite(z[k])) throw ValidationError("finalize: non-finite logit");
    const bool keep = z[k] > 0.0;
    f.binary[k] = keep ? 1.0 : 0.0;
    f.deployed[k] = keep ? z[k] : 0.0;
    f.kept_count += keep ? 1 : 0;
    f.margin = std::min(f.margin, std::abs(z[k]));
  }
  if (f.margin == 0.0) spdlog::warn("finalize: a logit sits exactly at the ReLU threshold");
  return f;
}

LagrangeState update_multipliers(const LagrangeState& lam, double gap, double gap2, double b,
                                 const MultiplierRates& rates) {
  LagrangeState out = lam;
  out.lambda1 += rates.lr1 * gap;
  out.lambda2 = std::max(0.0, out.lambda2 + rates.lr2 * gap2);
  out.lambda3 = std::max(0.0, out.lambda3 + rates.lr3 * b);
  return out;
}

void alm_update(AlmState& st, double c, const AlmOptions& opts) {
  st.nu += st.gamma * c;
  const double ac = std::abs(c);
  if (st.last_abs_c >= 0.0 && ac > opts.feas_tol && ac > opts.stall_ratio * st.last_abs_c) {
    st.gamma = std::min(opts.gamma_max, st.gamma * opts.growth);
  }
  st.last_abs_c = ac;
}

std::map<std::string, std::size_t> budget_counts(const ComponentModel& model,
                                                 const TrainConfig& cfg) {
  std::map<std::string, std::size_t> out;
  for (const auto& ts : build_slots(model, cfg)) {
    std::size_t n = 0;
    for (const auto& g : ts.groups) n += g.count;
    out[ts.name] = n;
  }
  return out;
}

TrainResult train_masks(const ComponentModel& model, const Batch& data, const TrainConfig& cfg,
                        const ComponentModel* teacher) {
  cfg.validate();
  data.validate();
  const std::size_t k = model.num_components();
  if (k < 2) throw ValidationError("train: model needs at least two components");
  if (teacher != nullptr && model.task() != TaskLoss::kCrossEntropy) teacher = nullptr;
  if (!cfg.distill || cfg.eta == 0.0) teacher = nullptr;

  const SurrogateParams sp = cfg.surrogate();
  const AnnealSchedule sched = cfg.schedule();
  std::vector<TypeSlot> slots = build_slots(model, cfg);
  const WarmupCosine lr_sched{cfg.lr_z, cfg.warmup_steps, cfg.total_steps, cfg.lr_floor};
  const MultiplierRates rates{cfg.lr_lambda1, cfg.lr_lambda2, cfg.lr_lambda3};

  TrainResult res;
  res.theta_before = model.theta_checksum();
  res.z.assign(k, is_hc_family(cfg.variant) ? cfg.hc_z_init : cfg.z_init);
  AdamW opt(k, cfg.adam);
  MinibatchSampler sampler(data.num_samples(), cfg.batch_size, cfg.seed);
  Philox4x32 gate_rng(cfg.seed, 0x6a7e);
  const bool binarize = uses_binarization(cfg.variant);
  res.history.reserve(cfg.total_steps);

  std::vector<double> m(k), u(k, 0.5), dz(k);
  for (std::size_t t = 1; t <= cfg.total_steps; ++t) {
    TrainRecord rec;
    rec.t = t;
    rec.mu = cfg.variant == Variant::kDdp ? mu_at(t, sched) : 0.0;

    const Batch batch = data.select(sampler.next());
    if (cfg.variant == Variant::kHardConcrete) {
      for (std::size_t i = 0; i < k; ++i) u[i] = gate_rng.uniform_open();
    }
    for (std::size_t i = 0; i < k; ++i) {
      m[i] = uses_relu_gate(cfg.variant)
                 ? std::max(0.0, res.z[i])
                 : std::clamp(hc_stretched(res.z[i], u[i], cfg.stretch_l, cfg.stretch_r), 0.0,
                              1.0);
    }

    MaskGradient g;
    try {
      g = model.loss_and_mask_grads(batch, m, teacher, cfg.eta, cfg.kl_reduction);
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.what(), t);
    }

    if (uses_relu_gate(cfg.variant)) {
      dz = relu_backward(res.z, g.dloss_dm, cfg.relu_backward);
    } else {
      const ClampBackward cb = cfg.variant == Variant::kHardConcrete ? ClampBackward::kMasked
                                                                     : cfg.clamp_backward;
      for (std::size_t i = 0; i < k; ++i) {
        const double x = std::log(u[i]) - std::log1p(-u[i]) + res.z[i];
        const double pre = sigmoid(x) * (cfg.stretch_r - cfg.stretch_l) + cfg.stretch_l;
        const bool inside = pre >= 0.0 && pre <= 1.0;
        dz[i] = (cb == ClampBackward::kMasked && !inside)
                    ? 0.0
                    : g.dloss_dm[i] * (cfg.stretch_r - cfg.stretch_l) * dsigmoid(x);
      }
    }

    std::vector<double> sp_terms, bin_terms;
    struct Pending {
      double gap = 0.0, gap2 = 0.0, b = 0.0;
    };
    std::vector<Pending> pending(slots.size());
    for (std::size_t ti = 0; ti < slots.size(); ++ti) {
      TypeSlot& ts = slots[ti];
      const std::vector<double> zt = gather(res.z, ts.idx);
      const Scores sc = type_scores(cfg, sp, rec.mu, zt);
      std::vector<double> ds(ts.idx.size(), 0.0);

      const double ng = static_cast<double>(ts.groups.size());
      double sp_val = 0.0, gap_sum = 0.0, gap2_sum = 0.0, viol = 0.0;
      std::size_t off = 0;
      for (const auto& gslot : ts.groups) {
        // Groups appear in index order inside a type, so slices are contiguous.
        const std::size_t n = gslot.idx.size();
        std::span<const double> sg(sc.s.data() + off, n);
        const ScoreLoss sl = sparsity_loss(sg, gslot.target, ts.lam);
        for (std::size_t j = 0; j < n; ++j) ds[off + j] += sl.grad[j] / ng;
        sp_val += sl.value / ng;
        const double gap = mean(sg) - gslot.target;
        gap_sum += gap;
        gap2_sum += gap * gap;
        viol = std::max(viol, std::abs(gap));
        off += n;
      }
      double bin_val = 0.0;
      const double bmeas = binarization_measure(sc.s);
      if (binarize) {
        const ScoreLoss bl = binarization_loss(sc.s, ts.lam.lambda3);
        for (std::size_t j = 0; j < ds.size(); ++j) ds[j] += bl.grad[j];
        bin_val = bl.value;
      }
      for (std::size_t j = 0; j < ts.idx.size(); ++j) dz[ts.idx[j]] += ds[j] * sc.ds[j];

      sp_terms.push_back(sp_val);
      bin_terms.push_back(bin_val);
      pending[ti] = {gap_sum / ng, gap2_sum / ng, bmeas};

      TypeRecord tr;
      tr.type = ts.name;
      double tsum = 0.0;
      for (const auto& gslot : ts.groups) tsum += gslot.target * gslot.idx.size();
      tr.target = tsum / static_cast<double>(ts.idx.size());
      tr.sbar = mean(sc.s);
      tr.violation = viol;
      tr.binarization = bmeas;
      rec.types.push_back(std::move(tr));
    }

    rec.loss_task = g.task_loss;
    rec.loss_kl = g.kl;
    rec.loss_sparsity = std::accumulate(sp_terms.begin(), sp_terms.end(), 0.0);
    rec.loss_bin = std::accumulate(bin_terms.begin(), bin_terms.end(), 0.0);
    rec.loss_total = total_loss(g.task_loss, g.kl, sp_terms, bin_terms,
                                teacher != nullptr ? cfg.eta : 0.0);
    bool finite = std::isfinite(rec.loss_total);
    for (double d : dz) finite = finite && std::isfinite(d);
    if (!finite) {
      res.history.push_back(rec);
      throw DivergenceError("train: non-finite objective or gradient at step " +
                                std::to_string(t),
                            t);
    }

    rec.lr_z = lr_sched.at(t);
    opt.step(res.z, dz, rec.lr_z);

    for (std::size_t ti = 0; ti < slots.size(); ++ti) {
      TypeSlot& ts = slots[ti];
      const Pending& p = pending[ti];
      if (cfg.multiplier_mode == MultiplierMode::kAscent) {
        ts.lam = update_multipliers(ts.lam, p.gap, p.gap2, binarize ? p.b : 0.0, rates);
      } else {
        ts.window_gap += p.gap;
        ++ts.window_n;
        if (ts.window_n == cfg.alm.window) {
          alm_update(ts.alm, ts.window_gap / static_cast<double>(ts.window_n), cfg.alm);
          ts.window_gap = 0.0;
          ts.window_n = 0;
        }
        ts.lam.lambda1 = ts.alm.nu;
        ts.lam.lambda2 = 0.5 * ts.alm.gamma;
        if (binarize) ts.lam.lambda3 = std::max(0.0, ts.lam.lambda3 + rates.lr3 * p.b);
      }
      TypeRecord& tr = rec.types[ti];
      tr.lambda = ts.lam;
      for (std::size_t i : ts.idx) tr.kept += res.z[i] > 0.0 ? 1 : 0;
      rec.kept_count += tr.kept;
      rec.violation = std::max(rec.violation, tr.violation);
      rec.binarization = std::max(rec.binarization, tr.binarization);
    }
    res.history.push_back(std::move(rec));
  }

  res.final = finalize_variant(cfg, model, slots, res.z);
  res.hard_loss = model.task_loss(data, res.final.binary);
  res.deployed_loss = model.task_loss(data, res.final.deployed);
  switch (cfg.variant) {
    case Variant::kDdp:
    case Variant::kDetHardConcreteRelu: {
      std::vector<double> relu(k);
      for (std::size_t i = 0; i < k; ++i) relu[i] = std::max(0.0, res.z[i]);
      res.soft_loss = model.task_loss(data, relu);
      break;
    }
    case Variant::kHardConcrete:
      res.soft_loss =
          hc_expected_loss(model, data, res.z, cfg.stretch_l, cfg.stretch_r, 64, cfg.seed);
      break;
    case Variant::kDetHardConcrete: {
      std::vector<double> det(k);
      for (std::size_t i = 0; i < k; ++i) {
        det[i] = std::clamp(hc_stretched(res.z[i], 0.5, cfg.stretch_l, cfg.stretch_r), 0.0, 1.0);
      }
      res.soft_loss = model.task_loss(data, det);
      break;
    }
  }
  res.theta_after = model.theta_checksum();
  return res;
}

}  // namespace ddp
