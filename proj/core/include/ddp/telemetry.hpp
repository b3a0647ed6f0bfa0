#pragma once

// History CSV, number formatting, file helpers and logging setup.

#include <string>
#include <vector>

#include "ddp/trainer.hpp"

namespace ddp {

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

/// Fixed column set: step, mu, lr_z, loss_*, kept_count, violation,
/// binarization, then `<type>.<field>` for every module type.
std::vector<std::string> history_columns(const std::vector<TrainRecord>& history);
std::string history_to_csv(const std::vector<TrainRecord>& history);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  bool has(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
};

/// Numeric CSV with a header row. Throws ValidationError on ragged rows or
/// non-numeric cells.
CsvTable parse_csv(const std::string& text);

std::string read_text_file(const std::string& path);
/// Writes atomically enough for our purposes: truncate then write; throws
/// ValidationError on failure.
void write_text_file(const std::string& path, const std::string& content);

/// Reads DDP_LOG_LEVEL (trace, debug, info, warn, error, off); default warn.
void init_logging_from_env();

}  // namespace ddp
