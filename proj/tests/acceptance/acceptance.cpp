// Acceptance suite: one PASS/FAIL line per criterion, exit status = number
// of failed criteria. Every tolerance used below is pinned in `tol`.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ddp/baselines.hpp"
#include "ddp/classic_alm.hpp"
#include "ddp/config.hpp"
#include "ddp/harness.hpp"
#include "ddp/surrogate.hpp"
#include "ddp/telemetry.hpp"
#include "reference.hpp"
#include "support.hpp"

using namespace ddp;
namespace fs = std::filesystem;

namespace tol {
constexpr double kEndpoint = 1e-9;
constexpr double kC0Paper = 2.4;
constexpr double kC0Match = 0.01;
constexpr double kSurrogateGrad = 1e-5;
constexpr double kModelGrad = 1e-4;
constexpr int kGradProbes = 100;  // per model kind, and for the surrogate
constexpr double kMarginDelta = 0.5;
constexpr double kMarginMu = 0.05;
constexpr double kMarginSlack = 0.5;
constexpr double kBudgetFallback = 0.01;
constexpr int kSeeds = 10;
constexpr int kOracleSupportSeeds = 9;
constexpr double kOracleRel = 0.05;
constexpr double kOracleAbsFloor = 1e-12;
constexpr double kViolation = 0.01;
constexpr double kBinarization = 0.02;
constexpr int kAblationWins = 7;
constexpr int kMcDraws = 1000000;
constexpr double kMcSigmas = 3.0;
constexpr double kFold = 1e-10;
constexpr double kDense = 1e-12;
constexpr int kFoldInputs = 100;
constexpr std::size_t kAlmOuter = 20;
constexpr double kAlmKkt = 1e-4;
constexpr double kAlmFeasibility = 1e-5;
}  // namespace tol

namespace {

int failures = 0;

void report(int id, const char* title, bool ok, const std::string& detail) {
  std::printf("%s  %2d  %s: %s\n", ok ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string fixture_path(const std::string& name) {
  return std::string(DDP_FIXTURE_DIR) + "/" + name;
}

RunConfig with_seed(RunConfig c, std::uint64_t seed) {
  c.seed = seed;
  c.train.seed = seed;
  return c;
}

// ---------------------------------------------------------------- 1
void endpoints() {
  const auto p = SurrogateParams::defaults();
  double worst0 = 0.0, worst1 = 0.0;
  for (double mu : {0.5, 0.2, 0.05}) {
    const double z[] = {0.0, 2.0 * mu};
    const auto s = retention_scores(z, mu, p);
    worst0 = std::max(worst0, std::abs(s[0]));
    worst1 = std::max(worst1, std::abs(s[1] - 1.0));
  }
  const double c0 = derive_c0(-0.1, 1.1).c0;
  const bool ok = worst0 <= tol::kEndpoint && worst1 <= tol::kEndpoint &&
                  std::abs(c0 - std::log(11.0)) <= 1e-12 &&
                  std::abs(c0 - tol::kC0Paper) <= tol::kC0Match;
  report(1, "surrogate endpoints", ok,
         fmt("max|s(0)|=%.2e max|s(2mu)-1|=%.2e (<= %.0e), c0=%.6f, ln 11=%.6f, |c0-2.4|=%.4f (<= %.2f)",
             worst0, worst1, tol::kEndpoint, c0, std::log(11.0), std::abs(c0 - tol::kC0Paper),
             tol::kC0Match));
}

// ---------------------------------------------------------------- 2
void gradients() {
  const auto p = SurrogateParams::defaults();
  Philox4x32 rng(90210);
  double worst_s = 0.0;
  int n_s = 0;
  while (n_s < tol::kGradProbes) {
    const double mu = 0.05 + 0.45 * rng.uniform();
    const double z = -mu + 4.0 * mu * rng.uniform();
    const double pre = stretched_score(z, mu, p);
    if (pre < 1e-3 || pre > 1.0 - 1e-3) continue;  // away from the clamp kinks
    const double up = 2.0 * rng.uniform() - 1.0;
    const double h = 1e-6 * mu;
    const double zp[] = {z + h}, zm[] = {z - h}, z0[] = {z}, u0[] = {up};
    const double fd = up * (retention_scores(zp, mu, p)[0] - retention_scores(zm, mu, p)[0]) / (2 * h);
    worst_s = std::max(worst_s, testing::rel_err(surrogate_backward(z0, mu, p, u0)[0], fd, 1e-12));
    ++n_s;
  }

  double worst_m = 0.0;
  int n_m = 0;
  std::string per_kind;
  for (auto kind : testing::all_kinds()) {
    const auto f = make_fixture(testing::small_spec(kind), 31);
    const ComponentModel* teacher = kind == ModelKind::kTinyTransformer ? f.model.get() : nullptr;
    const auto k = f.model->num_components();
    double kind_worst = 0.0;
    for (int probe = 0; probe < tol::kGradProbes; ++probe) {
      const auto m = testing::uniform_vec(rng, k, 0.1, 1.6);
      const auto dir = testing::uniform_vec(rng, k, -1.0, 1.0);
      const auto g = f.model->loss_and_mask_grads(f.data, m, teacher, 2.0, KlReduction::kMean);
      auto mp = m, mm = m;
      double analytic = 0.0;
      const double h = 1e-5;
      for (std::size_t i = 0; i < k; ++i) {
        mp[i] += h * dir[i];
        mm[i] -= h * dir[i];
        analytic += g.dloss_dm[i] * dir[i];
      }
      const double fd = (f.model->loss_and_mask_grads(f.data, mp, teacher, 2.0, KlReduction::kMean).loss -
                         f.model->loss_and_mask_grads(f.data, mm, teacher, 2.0, KlReduction::kMean).loss) /
                        (2 * h);
      kind_worst = std::max(kind_worst, testing::rel_err(analytic, fd, 1e-12));
      ++n_m;
    }
    worst_m = std::max(worst_m, kind_worst);
    per_kind += fmt(" %s=%.1e", to_string(kind).c_str(), kind_worst);
  }
  report(2, "gradient fidelity", worst_s <= tol::kSurrogateGrad && worst_m <= tol::kModelGrad,
         fmt("surrogate max rel err %.2e over %d probes (<= %.0e); models max %.2e over %d probes (<= %.0e):%s",
             worst_s, n_s, tol::kSurrogateGrad, worst_m, n_m, tol::kModelGrad, per_kind.c_str()));
}

// ---------------------------------------------------------------- 3
void margin_lemma() {
  const auto p = SurrogateParams::defaults();
  Philox4x32 rng(4242);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.below(128);
    std::vector<double> z(k);
    double count = 0.0;
    for (auto& v : z) {
      const double mag = tol::kMarginDelta + 4.0 * rng.uniform();
      v = rng.uniform() < 0.5 ? -mag : mag;
      count += v > 0.0;
    }
    double sum = 0.0;
    for (double s : retention_scores(z, tol::kMarginMu, p)) sum += s;
    worst = std::max(worst, std::abs(sum - count));
  }
  report(3, "margin lemma", worst <= tol::kMarginSlack,
         fmt("1000 random z, |z_k| >= %.1f, mu=%.2f: max |sum s - #{z>0}| = %.2e (<= %.1f)",
             tol::kMarginDelta, tol::kMarginMu, worst, tol::kMarginSlack));
}

// ---------------------------------------------------------------- 4, 5, 6
struct FixtureRuns {
  std::string name;
  std::vector<PruneOutcome> runs;
  std::vector<std::map<std::string, double>> type_margin;  // min |z| per module type
  double mu_T = 0.05;
};

FixtureRuns run_fixture(const std::string& file) {
  const RunConfig base = load_config(fixture_path(file));
  FixtureRuns fr;
  fr.name = base.name;
  fr.mu_T = base.train.muT;
  for (int s = 1; s <= tol::kSeeds; ++s) {
    const RunConfig cfg = with_seed(base, static_cast<std::uint64_t>(s));
    PruneOutcome o = run_prune(cfg);
    const Fixture f = make_fixture(cfg.fixture, cfg.seed);
    std::map<std::string, double> margins;
    for (const auto& type : f.model->module_types()) {
      double m = 1e300;
      for (auto i : f.model->indices_of_type(type)) m = std::min(m, std::abs(o.result.z[i]));
      margins[type] = m;
    }
    fr.type_margin.push_back(std::move(margins));
    fr.runs.push_back(std::move(o));
  }
  return fr;
}

void exact_budget(const std::vector<FixtureRuns>& all) {
  bool ok = true;
  std::string detail;
  for (const auto& fr : all) {
    int exact = 0;
    double worst_gap = 0.0;
    int strict_miss = 0;
    for (std::size_t r = 0; r < fr.runs.size(); ++r) {
      const auto& o = fr.runs[r];
      bool run_exact = true;
      for (const auto& [type, target] : o.target_counts) {
        const std::size_t kept = o.result.final.kept_per_type.at(type);
        std::size_t k = 0;
        for (const auto& t : o.result.history.back().types)
          if (t.type == type) k = static_cast<std::size_t>(std::llround(target / t.target));
        const double gap = std::abs(static_cast<double>(kept) - static_cast<double>(target)) /
                           static_cast<double>(k);
        worst_gap = std::max(worst_gap, gap);
        if (kept == target) continue;
        run_exact = false;
        // strict equality applies where the margin assumption holds at the end
        const bool margin_holds = fr.type_margin[r].at(type) >= 2.0 * fr.mu_T;
        if (margin_holds || gap > tol::kBudgetFallback) ++strict_miss, ok = false;
      }
      exact += run_exact;
    }
    detail += fmt(" %s exact %d/%zu (worst |kept-P|/K=%.4f)%s;", fr.name.c_str(), exact,
                  fr.runs.size(), worst_gap, strict_miss ? " HARD MISS" : "");
  }
  report(4, "exact budget recovery", ok,
         fmt("%s strict where min|z| >= 2 mu_T, else |kept-P|/K <= %.2f", detail.c_str(),
             tol::kBudgetFallback));
}

void oracle_equivalence(const FixtureRuns& planted8, const RunConfig& cfg) {
  int support_match = 0, loss_ok = 0;
  double worst_rel = 0.0;
  for (std::size_t r = 0; r < planted8.runs.size(); ++r) {
    const RunConfig c = with_seed(cfg, r + 1);
    const Fixture f = make_fixture(c.fixture, c.seed);
    const auto oracle = brute_force_l0(*f.model, f.data, f.true_support.size());
    const auto& res = planted8.runs[r].result;
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < res.final.binary.size(); ++k)
      if (res.final.binary[k] > 0.0) kept.push_back(k);
    support_match += kept == oracle.best_subset;
    const double diff = std::abs(res.hard_loss - oracle.best_loss);
    loss_ok += diff <= tol::kOracleRel * std::abs(oracle.best_loss) + tol::kOracleAbsFloor;
    worst_rel = std::max(worst_rel, diff);
  }
  const int n = static_cast<int>(planted8.runs.size());
  report(5, "oracle equivalence", support_match >= tol::kOracleSupportSeeds && loss_ok == n,
         fmt("planted8 noise=0: support = oracle argmin on %d/%d seeds (>= %d); hard loss within "
             "%.0f%% of oracle on %d/%d (max |h-o| = %.2e)",
             support_match, n, tol::kOracleSupportSeeds, 100 * tol::kOracleRel, loss_ok, n, worst_rel));
}

void dynamics(const std::vector<FixtureRuns>& all) {
  bool ok = true;
  std::string detail;
  for (const auto& fr : all) {
    double worst_v = 0.0, worst_b = 0.0;
    int not_shrinking = 0;
    for (const auto& o : fr.runs) {
      const auto& h = o.result.history;
      const auto& last = h.back();
      const auto& early = h[h.size() / 10 - 1];  // step T/10
      worst_v = std::max(worst_v, last.violation);
      worst_b = std::max(worst_b, last.binarization);
      if (!(last.violation < early.violation && last.binarization < early.binarization)) ++not_shrinking;
    }
    const bool f_ok = worst_v < tol::kViolation && worst_b < tol::kBinarization && not_shrinking == 0;
    ok = ok && f_ok;
    detail += fmt(" %s max|sbar-target|=%.4f max B=%.4f, not below step-T/10 on %d runs;",
                  fr.name.c_str(), worst_v, worst_b, not_shrinking);
  }
  report(6, "constraint and binarization dynamics", ok,
         fmt("%s (< %.2f, < %.2f)", detail.c_str(), tol::kViolation, tol::kBinarization));
}

// ---------------------------------------------------------------- 7
void ablation() {
  RunConfig cfg = load_config(fixture_path("planted8.json"));
  cfg.seeds.clear();
  for (int s = 1; s <= tol::kSeeds; ++s) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  const auto rows = run_ablation(cfg);
  std::map<Variant, double> mean;
  std::map<std::uint64_t, std::map<Variant, double>> by_seed;
  for (const auto& r : rows) {
    mean[r.variant] += r.hard_loss / tol::kSeeds;
    by_seed[r.seed][r.variant] = r.hard_loss;
  }
  int wins = 0;
  for (auto& [seed, v] : by_seed) wins += v[Variant::kDdp] < v[Variant::kHardConcrete];
  const bool ok = mean[Variant::kDdp] <= mean[Variant::kHardConcrete] && wins >= tol::kAblationWins;
  const bool four_way = mean[Variant::kDdp] <= mean[Variant::kDetHardConcreteRelu] &&
                        mean[Variant::kDetHardConcreteRelu] <= mean[Variant::kHardConcrete];
  report(7, "ablation direction", ok,
         fmt("planted8, %d paired seeds: mean hard loss ours=%.4g det_hc_em=%.4g det_hc=%.4g hc=%.4g; "
             "ours < hc on %d/%d (>= %d); ours <= det_hc_em <= hc %s (reported)",
             tol::kSeeds, mean[Variant::kDdp], mean[Variant::kDetHardConcreteRelu],
             mean[Variant::kDetHardConcrete], mean[Variant::kHardConcrete], wins, tol::kSeeds,
             tol::kAblationWins, four_way ? "holds" : "does not hold"));
}

// ---------------------------------------------------------------- 8
void hc_statistics() {
  HardConcreteParams p;
  p.z = {-2.0, 0.0, 2.0};
  Philox4x32 rng(1618);
  std::vector<long> open(3, 0);
  for (int i = 0; i < tol::kMcDraws; ++i) {
    const auto m = sample_hc_mask(p, rng);
    for (int k = 0; k < 3; ++k) open[k] += m[k] > 0.0;
  }
  bool ok = true;
  std::string detail;
  for (int k = 0; k < 3; ++k) {
    const double expected = 1.0 / (1.0 + std::exp(-(p.z[k] + std::log(11.0))));
    const double se = std::sqrt(expected * (1.0 - expected) / tol::kMcDraws);
    const double got = static_cast<double>(open[k]) / tol::kMcDraws;
    const double sig = std::abs(got - expected) / se;
    ok = ok && sig <= tol::kMcSigmas;
    detail += fmt(" z=%+.0f: %.5f vs %.5f (%.2f se);", p.z[k], got, expected, sig);
  }
  report(8, "hard-concrete statistics", ok,
         fmt("%d draws:%s (<= %.0f se)", tol::kMcDraws, detail.c_str(), tol::kMcSigmas));
}

// ---------------------------------------------------------------- 9
void fold_correctness() {
  double worst_fold = 0.0, worst_dense = 0.0;
  Philox4x32 rng(8080);
  for (auto kind : testing::all_kinds()) {
    const auto f = make_fixture(testing::small_spec(kind), 17);
    const auto k = f.model->num_components();
    auto m = testing::uniform_vec(rng, k, 0.0, 2.0);
    for (auto& v : m)
      if (rng.uniform() < 0.4) v = 0.0;
    for (const auto& type : f.model->module_types()) m[f.model->indices_of_type(type).front()] = 0.8;
    const auto pruned = f.model->fold(m);
    std::vector<double> ones_p(pruned->num_components(), 1.0), ones(k, 1.0);
    for (int in = 0; in < tol::kFoldInputs; ++in) {
      Batch b = f.data;
      if (b.tokens.empty()) {
        for (Eigen::Index i = 0; i < b.x.rows(); ++i)
          for (Eigen::Index j = 0; j < b.x.cols(); ++j) b.x(i, j) = rng.normal();
      } else {
        for (auto& seq : b.tokens)
          for (auto& t : seq) t = static_cast<int>(rng.below(7));
      }
      worst_fold = std::max(worst_fold, (pruned->forward_masked(b, ones_p) - f.model->forward_masked(b, m))
                                            .cwiseAbs().maxCoeff());
      worst_dense = std::max(worst_dense, (f.model->forward_masked(b, ones) - testing::reference_forward(*f.model, b))
                                              .cwiseAbs().maxCoeff());
    }
  }
  report(9, "fold correctness", worst_fold <= tol::kFold && worst_dense <= tol::kDense,
         fmt("5 model kinds x %d inputs: max |fold - masked| = %.2e (<= %.0e), max |m=1 - reference| = "
             "%.2e (<= %.0e)",
             tol::kFoldInputs, worst_fold, tol::kFold, worst_dense, tol::kDense));
}

// ---------------------------------------------------------------- 10
void determinism() {
  const fs::path root = fs::path(DDP_TEST_TMP);
  bool ok = true;
  std::string detail;
  for (const char* file : {"planted8.json", "toy_moe.json"}) {
    std::string hist[2], svg[2];
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path dir = root / (std::string(file) + "." + std::to_string(rep));
      fs::remove_all(dir);
      CommandOptions o;
      o.config_path = fixture_path(file);
      o.out_dir = dir.string();
      o.seed = 7;
      const int rc = cmd_prune(o);
      const int rp = cmd_plot((dir / "history.csv").string(), (dir / "history.svg").string());
      if (rc != kExitOk || rp != kExitOk) ok = false;
      hist[rep] = read_text_file((dir / "history.csv").string());
      svg[rep] = read_text_file((dir / "history.svg").string());
    }
    const bool same = hist[0] == hist[1] && svg[0] == svg[1] && !hist[0].empty();
    ok = ok && same;
    detail += fmt(" %s history %zu bytes %s, svg %zu bytes %s;", file, hist[0].size(),
                  hist[0] == hist[1] ? "identical" : "DIFFER", svg[0].size(),
                  svg[0] == svg[1] ? "identical" : "DIFFER");
  }
  report(10, "determinism", ok, detail);
}

// ---------------------------------------------------------------- 11
void classic_alm() {
  const auto it = run_classic_alm(quadratic_circle_problem(), Eigen::Vector2d(0.5, 0.5), AlmOptions{},
                                  tol::kAlmOuter);
  const auto& last = it.back();
  report(11, "classic-ALM stationarity", last.kkt < tol::kAlmKkt && std::abs(last.c) < tol::kAlmFeasibility,
         fmt("outer %zu: |grad F + nu grad c| = %.2e (< %.0e), |c| = %.2e (< %.0e), nu = %.10f",
             last.outer, last.kkt, tol::kAlmKkt, std::abs(last.c), tol::kAlmFeasibility, last.nu));
}

}  // namespace

int main() {
  init_logging_from_env();
  const auto t0 = std::chrono::steady_clock::now();
  endpoints();
  gradients();
  margin_lemma();

  std::vector<FixtureRuns> runs;
  for (const char* file : {"planted8.json", "planted12.json", "tiny_transformer_char.json", "toy_moe.json"}) {
    runs.push_back(run_fixture(file));
  }
  exact_budget(runs);
  oracle_equivalence(runs.front(), load_config(fixture_path("planted8.json")));
  dynamics(runs);
  ablation();
  hc_statistics();
  fold_correctness();
  determinism();
  classic_alm();

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d of 11 criteria failed (%.1f s)\n", failures, secs);
  return failures == 0 ? 0 : 1;
}
