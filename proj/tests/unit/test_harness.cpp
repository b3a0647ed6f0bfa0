#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "ddp/config.hpp"
#include "ddp/error.hpp"
#include "ddp/harness.hpp"
#include "ddp/model_io.hpp"
#include "ddp/plot.hpp"
#include "ddp/telemetry.hpp"

using namespace ddp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fixture(const std::string& name) { return std::string(DDP_FIXTURE_DIR) + "/" + name; }

fs::path scratch(const std::string& name) {
  fs::path p = fs::path(DDP_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_config(const fs::path& dir, const json& j) {
  const auto p = (dir / "config.json").string();
  write_text_file(p, j.dump(2));
  return p;
}

json planted8() { return json::parse(read_text_file(fixture("planted8.json"))); }

CommandOptions opts(const std::string& config, const fs::path& out) {
  CommandOptions o;
  o.config_path = config;
  o.out_dir = out.string();
  return o;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("shipped configs round-trip through normalization") {
  for (const char* name : {"planted8.json", "planted12.json", "toy_moe.json",
                           "tiny_transformer_char.json", "planted40_guard.json"}) {
    CAPTURE(name);
    const RunConfig a = load_config(fixture(name));
    const std::string norm = config_to_json(a);
    const RunConfig b = parse_config(norm);
    CHECK(b == a);
    CHECK(config_to_json(b) == norm);
  }
}

TEST_CASE("config errors name the field") {
  auto j = planted8();
  j["train"]["rho"] = {{"linear", 1.5}};
  CHECK(error_of(j.dump()).find("train.rho") != std::string::npos);
  j = planted8();
  j["train"]["learning_rate"] = 0.1;
  CHECK(error_of(j.dump()).find("train.learning_rate: unknown field") != std::string::npos);
  j = planted8();
  j["fixture"]["components"] = "eight";
  CHECK(error_of(j.dump()).find("fixture.components") != std::string::npos);
  j = planted8();
  j["variants"] = {"ours", "magic"};
  CHECK(error_of(j.dump()).find("variants") != std::string::npos);
  j = planted8();
  j.erase("schema_version");
  CHECK(error_of(j.dump()).find("schema_version") != std::string::npos);
  j = planted8();
  j["schema_version"] = 99;
  CHECK(error_of(j.dump()).find("schema_version") != std::string::npos);
  CHECK(error_of("{not json").find("malformed") != std::string::npos);
  try {
    load_config("/nonexistent/config.json");
    FAIL("loaded a missing file");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("config not found") != std::string::npos);
  }
}

TEST_CASE("seed override") {
  CommandOptions o;
  o.config_path = fixture("planted8.json");
  o.seed = 17;
  const RunConfig c = resolve_config(o);
  CHECK(c.seed == 17);
  CHECK(c.train.seed == 17);
}

TEST_CASE("git blob hash") {
  CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("number formatting and csv parsing") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.0, 0.0}) CHECK(std::stod(format_double(v)) == v);
  const auto t = parse_csv("a,b\n1,2\n3,4.5\n");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  CHECK(t.column("b") == std::vector<double>{2.0, 4.5});
  CHECK_FALSE(t.has("c"));
  CHECK_THROWS_AS(parse_csv(""), ValidationError);
  CHECK_THROWS_AS(parse_csv("a,b\n1\n"), ValidationError);
  CHECK_THROWS_AS(parse_csv("a\nx\n"), ValidationError);
}

TEST_CASE("prune writes a complete, referenced output set") {
  const auto dir = scratch("prune");
  CHECK(cmd_prune(opts(fixture("planted8.json"), dir)) == kExitOk);
  const auto summary = json::parse(read_text_file((dir / "summary.json").string()));
  CHECK(summary["kept_count"] == 4);
  CHECK(summary["theta_unchanged"] == true);
  const auto text = read_text_file((dir / "manifest.json").string());
  const RunManifest m = manifest_from_json(text);
  CHECK(m.command == "prune");
  CHECK(m.seed == 1);
  CHECK(manifest_to_json(m) == text);

  std::set<std::string> referenced, present;
  for (const auto& [role, file] : m.outputs) referenced.insert(file);
  for (const auto& e : fs::directory_iterator(dir)) present.insert(e.path().filename().string());
  CHECK(referenced == present);

  // config -> manifest -> re-parse gives the normalized config back
  const RunConfig original = load_config(fixture("planted8.json"));
  CHECK(parse_config(m.config_json) == original);
  CHECK(config_to_json(parse_config(m.config_json)) == config_to_json(original));
  CHECK(m.input_hashes.at("config") == git_blob_sha1(m.config_json));

  const auto hist = parse_csv(read_text_file((dir / "history.csv").string()));
  CHECK(hist.rows.size() == 1000);
  CHECK(hist.column("linear.violation").back() < 0.01);
  const auto pruned = load_model((dir / "pruned_model.json").string());
  CHECK(pruned->num_components() == 4);
}

TEST_CASE("prune is byte-deterministic") {
  const auto a = scratch("det_a"), b = scratch("det_b");
  REQUIRE(cmd_prune(opts(fixture("planted8.json"), a)) == kExitOk);
  REQUIRE(cmd_prune(opts(fixture("planted8.json"), b)) == kExitOk);
  CHECK(read_text_file((a / "history.csv").string()) == read_text_file((b / "history.csv").string()));
  CHECK(read_text_file((a / "masks.json").string()) == read_text_file((b / "masks.json").string()));
}

TEST_CASE("exit codes") {
  const auto dir = scratch("codes");
  CHECK(cmd_prune(opts("/nonexistent.json", dir)) == kExitInvalid);
  auto j = planted8();
  j["train"]["rho"] = 1.5;
  CHECK(cmd_prune(opts(write_config(dir, j), dir / "out")) == kExitInvalid);
  CHECK(cmd_oracle(opts(fixture("planted40_guard.json"), dir / "guard")) == kExitGuard);
  j = planted8();
  j["variants"] = {"ours", "nonsense"};
  CHECK(cmd_ablate(opts(write_config(dir, j), dir / "abl")) == kExitInvalid);

  // a checkpoint whose activations overflow makes the first loss non-finite
  auto pm = make_planted_model(8, 4, 0.0, 1);
  PlantedLinearModel huge(pm.model->u() * 1e200, pm.model->v() * 1e200);
  const auto ckpt = (dir / "huge.json").string();
  save_model(huge, ckpt);
  j = planted8();
  j["fixture"]["model_path"] = ckpt;
  CHECK(cmd_prune(opts(write_config(dir, j), dir / "div")) == kExitDiverged);
}

TEST_CASE("oracle command") {
  const auto dir = scratch("oracle");
  REQUIRE(cmd_oracle(opts(fixture("planted8.json"), dir)) == kExitOk);
  const auto o = json::parse(read_text_file((dir / "oracle.json").string()));
  CHECK(o["best_loss"] == 0.0);
  CHECK(o["best_subset"] == o["true_support"]);
  CHECK(o["evaluated_count"] == 70);

  auto j = planted8();
  j["oracle_p"] = 8;
  const auto full = scratch("oracle_full");
  REQUIRE(cmd_oracle(opts(write_config(full, j), full / "out")) == kExitOk);
  const auto f = json::parse(read_text_file((full / "out" / "oracle.json").string()));
  CHECK(f["best_subset"] == json::array({0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST_CASE("ablate with one seed") {
  const auto dir = scratch("ablate");
  REQUIRE(cmd_ablate(opts(fixture("planted8.json"), dir)) == kExitOk);
  const auto t = parse_csv([&] {
    // drop the variant name column so the numeric parser accepts the table
    std::string out, line;
    std::istringstream in(read_text_file((dir / "ablation.csv").string()));
    while (std::getline(in, line)) out += line.substr(line.find(',') + 1) + "\n";
    return out;
  }());
  CHECK(t.rows.size() == 4);
  CHECK(fs::exists(dir / "ablation.svg"));
  const RunManifest m = manifest_from_json(read_text_file((dir / "manifest.json").string()));
  for (const auto& [role, file] : m.outputs) CHECK(fs::exists(dir / file));
}

TEST_CASE("plot command") {
  const auto dir = scratch("plot");
  REQUIRE(cmd_prune(opts(fixture("planted8.json"), dir)) == kExitOk);
  const auto csv = (dir / "history.csv").string();
  REQUIRE(cmd_plot(csv, (dir / "a.svg").string()) == kExitOk);
  REQUIRE(cmd_plot(csv, (dir / "b.svg").string()) == kExitOk);
  const auto svg = read_text_file((dir / "a.svg").string());
  CHECK(svg == read_text_file((dir / "b.svg").string()));
  CHECK(svg.rfind("<svg", 0) == 0);

  write_text_file((dir / "empty.csv").string(), "");
  CHECK(cmd_plot((dir / "empty.csv").string(), (dir / "e.svg").string()) == kExitInvalid);
  write_text_file((dir / "header.csv").string(), "step,mu\n");
  CHECK(cmd_plot((dir / "header.csv").string(), (dir / "h.svg").string()) == kExitInvalid);
  CHECK(cmd_plot((dir / "missing.csv").string(), (dir / "m.svg").string()) == kExitInvalid);
  try {
    render_history_svg(parse_csv("step,mu\n1,0.5\n"));
    FAIL("rendered without required columns");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("violation") != std::string::npos);
    CHECK(msg.find("binarization") != std::string::npos);
  }
}

TEST_CASE("command line exit codes") {
  const char* cli = std::getenv("DDP_CLI");
  if (cli == nullptr) return;
  const std::string exe = cli;
  auto run = [&](const std::string& args) {
    const int st = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(st);
  };
  const auto dir = scratch("cli");
  CHECK(run("prune") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("prune --config /nonexistent.json --out-dir " + dir.string()) == 2);
  CHECK(run("oracle --config " + fixture("planted40_guard.json") + " --out-dir " + dir.string()) == 3);
  CHECK(run("prune --config " + fixture("planted8.json") + " --seed 3 --out-dir " + dir.string()) == 0);
  CHECK(manifest_from_json(read_text_file((dir / "manifest.json").string())).seed == 3);
  CHECK(run("plot " + (dir / "history.csv").string()) == 0);
  CHECK(fs::exists(dir / "history.svg"));
}

TEST_CASE("logging setup is idempotent") {
  CHECK_NOTHROW(init_logging_from_env());
  CHECK_NOTHROW(init_logging_from_env());
}
