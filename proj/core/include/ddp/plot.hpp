#pragma once

// Static SVG charts. Output depends only on the input values, so identical
// input yields identical bytes.

#include <string>
#include <vector>

#include "ddp/telemetry.hpp"

namespace ddp {

/// Columns a history CSV needs for plotting, besides at least one `<type>.sbar`.
const std::vector<std::string>& required_history_columns();

/// Panels: mu_t, sbar per type, |sbar - target|, B(s), kept count per type.
/// Throws ValidationError listing missing columns, or when there are no rows.
std::string render_history_svg(const CsvTable& history);

struct BarGroup {
  std::string label;
  double mean = 0.0;
  double lo = 0.0;  ///< whisker bounds, e.g. min/max over seeds
  double hi = 0.0;
};

/// Bar chart of per-variant means with whiskers.
std::string render_bar_svg(const std::string& title, const std::string& y_label,
                           const std::vector<BarGroup>& bars);

}  // namespace ddp
