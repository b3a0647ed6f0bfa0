#include "ddp/telemetry.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ddp/error.hpp"

namespace ddp {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double: buffer too small");
  return std::string(buf, end);
}

namespace {

const char* const kTypeFields[] = {"target",  "sbar",    "violation", "binarization",
                                   "lambda1", "lambda2", "lambda3",   "kept"};

}  // namespace

std::vector<std::string> history_columns(const std::vector<TrainRecord>& history) {
  std::vector<std::string> cols{"step",      "mu",         "lr_z",         "loss_task",
                                "loss_kl",   "loss_sparsity", "loss_bin",  "loss_total",
                                "kept_count", "violation", "binarization"};
  if (!history.empty()) {
    for (const auto& tr : history.front().types) {
      for (const char* f : kTypeFields) cols.push_back(tr.type + "." + f);
    }
  }
  return cols;
}

std::string history_to_csv(const std::vector<TrainRecord>& history) {
  std::string out;
  const auto cols = history_columns(history);
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += '\n';
  for (const auto& r : history) {
    out += std::to_string(r.t);
    for (double v : {r.mu, r.lr_z, r.loss_task, r.loss_kl, r.loss_sparsity, r.loss_bin,
                     r.loss_total}) {
      out += ',' + format_double(v);
    }
    out += ',' + std::to_string(r.kept_count);
    out += ',' + format_double(r.violation);
    out += ',' + format_double(r.binarization);
    for (const auto& tr : r.types) {
      for (double v : {tr.target, tr.sbar, tr.violation, tr.binarization, tr.lambda.lambda1,
                       tr.lambda.lambda2, tr.lambda.lambda3}) {
        out += ',' + format_double(v);
      }
      out += ',' + std::to_string(tr.kept);
    }
    out += '\n';
  }
  return out;
}

bool CsvTable::has(const std::string& name) const {
  for (const auto& h : header) {
    if (h == name) return true;
  }
  return false;
}

std::vector<double> CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] != name) continue;
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[j]);
    return out;
  }
  throw ValidationError("csv: missing column '" + name + "'");
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ValidationError("csv: line " + std::to_string(lineno) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(t.header.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto& c = cells[j];
      auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), row[j]);
      if (ec != std::errc() || p != c.data() + c.size()) {
        throw ValidationError("csv: non-numeric cell '" + c + "' at line " +
                              std::to_string(lineno));
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw ValidationError("csv: empty file");
  return t;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path);
  out << content;
  if (!out) throw ValidationError("write failed: " + path);
}

void init_logging_from_env() {
  const char* env = std::getenv("DDP_LOG_LEVEL");
  auto logger = spdlog::get("ddp");
  if (!logger) logger = spdlog::stderr_color_mt("ddp");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (env != nullptr && *env != '\0') spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace ddp
