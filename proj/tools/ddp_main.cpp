// ddp: mask-only structured pruning driver.
//
//   ddp prune  --config fixtures/planted8.json [--seed N] [--out-dir DIR]
//   ddp oracle --config fixtures/planted8.json
//   ddp ablate --config fixtures/planted8_ablate.json
//   ddp plot   DIR/history.csv [DIR/history.svg]
//
// Log verbosity comes from DDP_LOG_LEVEL (trace|debug|info|warn|error|off).

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ddp/harness.hpp"
#include "ddp/telemetry.hpp"

int main(int argc, char** argv) {
  ddp::init_logging_from_env();

  CLI::App app{"Deterministic differentiable pruning: mask-only structured pruning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(DDP_CLI_VERSION));

  ddp::CommandOptions opts;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "Run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--out-dir", opts.out_dir, "Directory for artifacts")
        ->capture_default_str();
  };
  auto* prune = app.add_subcommand("prune", "Train masks and write the pruned model");
  auto* oracle = app.add_subcommand("oracle", "Exhaustive l0 subset search");
  auto* ablate = app.add_subcommand("ablate", "Run the gate/regularizer ablation matrix");
  add_common(prune);
  add_common(oracle);
  add_common(ablate);

  auto* plot = app.add_subcommand("plot", "Render a training history as SVG");
  std::string history, svg;
  plot->add_option("history", history, "History CSV written by prune")->required();
  plot->add_option("svg", svg, "Output SVG (default: next to the CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ddp::kExitInvalid;
  }

  for (auto* sub : {prune, oracle, ablate}) {
    if (sub->parsed() && sub->count("--seed") > 0) opts.seed = seed;
  }
  if (*prune) return ddp::cmd_prune(opts);
  if (*oracle) return ddp::cmd_oracle(opts);
  if (*ablate) return ddp::cmd_ablate(opts);
  if (svg.empty()) {
    const auto dot = history.rfind('.');
    svg = (dot == std::string::npos ? history : history.substr(0, dot)) + ".svg";
  }
  return ddp::cmd_plot(history, svg);
}
