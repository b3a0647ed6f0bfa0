#include "ddp/harness.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "ddp/error.hpp"
#include "ddp/fixtures.hpp"
#include "ddp/model_io.hpp"
#include "ddp/plot.hpp"
#include "ddp/telemetry.hpp"
#include "json.hpp"

#ifndef DDP_VERSION_STRING
#define DDP_VERSION_STRING "unknown"
#endif

namespace ddp {

namespace fs = std::filesystem;
using nlohmann::json;

std::string git_blob_sha1(const std::string& content) {
  const std::string head = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("sha1: out of memory");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, head.data(), head.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

std::string manifest_to_json(const RunManifest& m) {
  json j{{"command", m.command},
         {"config", json::parse(m.config_json)},
         {"code_version", m.code_version},
         {"seed", m.seed},
         {"fixtures", m.fixtures},
         {"outputs", m.outputs},
         {"started_at", m.started_at},
         {"input_hashes", m.input_hashes},
         {"input_hash", m.input_hash}};
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_json = j.at("config").dump(2);
    m.code_version = j.at("code_version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.fixtures = j.at("fixtures").get<std::vector<std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.started_at = j.at("started_at").get<std::string>();
    m.input_hashes = j.at("input_hashes").get<std::map<std::string, std::string>>();
    m.input_hash = j.at("input_hash").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt_num(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

RunManifest begin_manifest(const std::string& command, const RunConfig& cfg,
                           std::map<std::string, std::string> outputs) {
  RunManifest m;
  m.command = command;
  m.config_json = config_to_json(cfg);
  m.code_version = DDP_VERSION_STRING;
  m.seed = cfg.seed;
  m.fixtures = {cfg.fixture.name};
  outputs["manifest"] = "manifest.json";
  m.outputs = std::move(outputs);
  m.started_at = utc_now();
  m.input_hashes["config"] = git_blob_sha1(m.config_json);
  if (!cfg.fixture.model_path.empty()) {
    m.input_hashes["model"] = git_blob_sha1(read_text_file(cfg.fixture.model_path));
  }
  std::string tree;
  for (const auto& [k, v] : m.input_hashes) tree += k + " " + v + "\n";
  m.input_hash = git_blob_sha1(tree);
  return m;
}

fs::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  write_text_file((dir / "manifest.json").string(), manifest_to_json(m));
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const GuardError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitGuard;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (step " << e.step() << ")\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

std::unique_ptr<ComponentModel> teacher_for(const Fixture& f) {
  if (f.model->task() != TaskLoss::kCrossEntropy) return nullptr;
  return f.model->clone();
}

std::string summarize(const PruneOutcome& o, const RunConfig& cfg) {
  std::ostringstream s;
  s << cfg.name << " seed=" << cfg.seed << " variant=" << to_string(cfg.train.variant)
    << " kept_count=" << o.result.final.kept_count << "/" << o.num_components;
  for (const auto& [type, n] : o.result.final.kept_per_type) {
    s << " " << type << "=" << n << "/" << o.target_counts.at(type);
  }
  const TrainRecord& last = o.result.history.back();
  s << " hard_loss=" << fmt_num(o.result.hard_loss)
    << " deployed_loss=" << fmt_num(o.result.deployed_loss)
    << " final_task_loss=" << fmt_num(last.loss_task) << " kl=" << fmt_num(last.loss_kl)
    << " |sbar-rho|=" << fmt_num(last.violation) << " B=" << fmt_num(last.binarization)
    << " margin=" << fmt_num(o.result.final.margin);
  return s.str();
}

}  // namespace

PruneOutcome run_prune(const RunConfig& cfg) {
  Fixture f = make_fixture(cfg.fixture, cfg.seed);
  auto teacher = teacher_for(f);
  PruneOutcome o;
  o.num_components = f.model->num_components();
  o.target_counts = budget_counts(*f.model, cfg.train);
  o.true_support = f.true_support;
  o.result = train_masks(*f.model, f.data, cfg.train, teacher.get());
  o.summary = summarize(o, cfg);
  return o;
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg) {
  std::vector<std::uint64_t> seeds = cfg.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed}
                                                       : cfg.seeds;
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : seeds) {
    Fixture f = make_fixture(cfg.fixture, seed);
    auto teacher = teacher_for(f);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const auto targets = budget_counts(*f.model, tc);
    std::size_t p = 0;
    for (const auto& [type, n] : targets) p += n;
    for (Variant v : cfg.variants) {
      tc.variant = v;
      spdlog::info("ablate: seed {} variant {}", seed, to_string(v));
      const TrainResult r = train_masks(*f.model, f.data, tc, teacher.get());
      AblationRow row;
      row.variant = v;
      row.seed = seed;
      row.hard_loss = r.hard_loss;
      row.deployed_loss = r.deployed_loss;
      row.soft_loss = r.soft_loss;
      row.kept_count = r.final.kept_count;
      row.target_count = p;
      const double k = static_cast<double>(f.model->num_components());
      row.constraint_gap =
          std::abs(static_cast<double>(row.kept_count) - static_cast<double>(p)) / k;
      row.final_violation = r.history.back().violation;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::string out =
      "variant,seed,hard_loss,deployed_loss,soft_loss,kept_count,target_count,constraint_gap,"
      "final_violation\n";
  for (const auto& r : rows) {
    out += to_string(r.variant) + "," + std::to_string(r.seed) + "," + format_double(r.hard_loss) +
           "," + format_double(r.deployed_loss) + "," + format_double(r.soft_loss) + "," +
           std::to_string(r.kept_count) + "," + std::to_string(r.target_count) + "," +
           format_double(r.constraint_gap) + "," + format_double(r.final_violation) + "\n";
  }
  return out;
}

RunConfig resolve_config(const CommandOptions& opts) {
  if (opts.config_path.empty()) throw ValidationError("--config is required");
  if (!fs::exists(opts.config_path)) throw ValidationError("config not found: " + opts.config_path);
  RunConfig cfg = load_config(opts.config_path);
  if (opts.seed) {
    cfg.seed = *opts.seed;
    cfg.train.seed = *opts.seed;
    cfg.seeds = {*opts.seed};
  }
  return cfg;
}

int cmd_prune(const CommandOptions& opts) {
  return guarded([&] {
    const RunConfig cfg = resolve_config(opts);
    const fs::path dir = prepare_out_dir(opts.out_dir);
    const RunManifest m = begin_manifest("prune", cfg,
                                         {{"history", "history.csv"},
                                          {"masks", "masks.json"},
                                          {"pruned_model", "pruned_model.json"},
                                          {"summary", "summary.json"}});
    write_manifest(dir, m);

    Fixture f = make_fixture(cfg.fixture, cfg.seed);
    auto teacher = teacher_for(f);
    PruneOutcome o;
    o.num_components = f.model->num_components();
    o.target_counts = budget_counts(*f.model, cfg.train);
    o.result = train_masks(*f.model, f.data, cfg.train, teacher.get());
    o.summary = summarize(o, cfg);
    const TrainResult& r = o.result;

    write_text_file((dir / m.outputs.at("history")).string(), history_to_csv(r.history));
    json masks{{"z", r.z},
               {"binary", r.final.binary},
               {"deployed", r.final.deployed},
               {"kept_count", r.final.kept_count},
               {"kept_per_type", r.final.kept_per_type},
               {"target_per_type", o.target_counts},
               {"margin", r.final.margin}};
    write_text_file((dir / m.outputs.at("masks")).string(), masks.dump(2) + "\n");
    auto pruned = f.model->fold(r.final.deployed);
    write_text_file((dir / m.outputs.at("pruned_model")).string(), model_to_json(*pruned));
    json summary{{"kept_count", r.final.kept_count},
                 {"kept_per_type", r.final.kept_per_type},
                 {"target_per_type", o.target_counts},
                 {"hard_loss", r.hard_loss},
                 {"deployed_loss", r.deployed_loss},
                 {"pruned_model_loss", pruned->task_loss(f.data, std::vector<double>(
                                                                     pruned->num_components(), 1.0))},
                 {"final_task_loss", r.history.back().loss_task},
                 {"final_kl", r.history.back().loss_kl},
                 {"violation", r.history.back().violation},
                 {"binarization", r.history.back().binarization},
                 {"margin", r.final.margin},
                 {"theta_unchanged", r.theta_before == r.theta_after}};
    write_text_file((dir / m.outputs.at("summary")).string(), summary.dump(2) + "\n");
    std::cout << o.summary << "\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_oracle(const CommandOptions& opts) {
  return guarded([&] {
    const RunConfig cfg = resolve_config(opts);
    const fs::path dir = prepare_out_dir(opts.out_dir);
    const RunManifest m = begin_manifest("oracle", cfg, {{"oracle", "oracle.json"}});
    write_manifest(dir, m);

    Fixture f = make_fixture(cfg.fixture, cfg.seed);
    std::size_t p = 0;
    if (cfg.oracle_p) {
      p = *cfg.oracle_p;
    } else {
      const auto counts = budget_counts(*f.model, cfg.train);
      if (counts.size() != 1) {
        throw ValidationError("oracle_p: required when the model has several module types");
      }
      p = counts.begin()->second;
    }
    const OracleResult res = brute_force_l0(*f.model, f.data, p);
    json out{{"best_subset", res.best_subset},
             {"best_loss", res.best_loss},
             {"evaluated_count", res.evaluated_count},
             {"p", p},
             {"k", f.model->num_components()},
             {"true_support", f.true_support}};
    write_text_file((dir / m.outputs.at("oracle")).string(), out.dump(2) + "\n");
    std::string subset;
    for (std::size_t i : res.best_subset) subset += (subset.empty() ? "" : ",") + std::to_string(i);
    std::cout << cfg.name << " oracle P=" << p << " best_subset={" << subset
              << "} best_loss=" << fmt_num(res.best_loss) << " evaluated=" << res.evaluated_count
              << "\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_ablate(const CommandOptions& opts) {
  return guarded([&] {
    const RunConfig cfg = resolve_config(opts);
    const fs::path dir = prepare_out_dir(opts.out_dir);
    const RunManifest m = begin_manifest("ablate", cfg,
                                         {{"ablation", "ablation.csv"},
                                          {"ablation_summary", "ablation_summary.csv"},
                                          {"chart", "ablation.svg"}});
    write_manifest(dir, m);

    const auto rows = run_ablation(cfg);
    write_text_file((dir / m.outputs.at("ablation")).string(), ablation_to_csv(rows));

    std::vector<BarGroup> bars;
    std::string summary = "variant,runs,mean_hard_loss,min_hard_loss,max_hard_loss,mean_kept\n";
    for (Variant v : cfg.variants) {
      BarGroup b{to_string(v), 0.0, INFINITY, -INFINITY};
      double kept = 0.0;
      std::size_t n = 0;
      for (const auto& r : rows) {
        if (r.variant != v) continue;
        b.mean += r.hard_loss;
        b.lo = std::min(b.lo, r.hard_loss);
        b.hi = std::max(b.hi, r.hard_loss);
        kept += static_cast<double>(r.kept_count);
        ++n;
      }
      b.mean /= static_cast<double>(n);
      kept /= static_cast<double>(n);
      summary += b.label + "," + std::to_string(n) + "," + format_double(b.mean) + "," +
                 format_double(b.lo) + "," + format_double(b.hi) + "," + format_double(kept) +
                 "\n";
      std::cout << cfg.name << " " << b.label << " mean_hard_loss=" << fmt_num(b.mean)
                << " mean_kept=" << fmt_num(kept) << "\n";
      bars.push_back(b);
    }
    write_text_file((dir / m.outputs.at("ablation_summary")).string(), summary);
    write_text_file((dir / m.outputs.at("chart")).string(),
                    render_bar_svg(cfg.name + ": final hard-mask loss per variant",
                                   "hard-mask loss", bars));
    return static_cast<int>(kExitOk);
  });
}

int cmd_plot(const std::string& history_csv, const std::string& out_svg) {
  return guarded([&] {
    if (!fs::exists(history_csv)) throw ValidationError("history not found: " + history_csv);
    const CsvTable t = parse_csv(read_text_file(history_csv));
    write_text_file(out_svg, render_history_svg(t));
    return static_cast<int>(kExitOk);
  });
}

}  // namespace ddp
