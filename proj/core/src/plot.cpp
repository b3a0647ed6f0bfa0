#include "ddp/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ddp/error.hpp"

namespace ddp {

namespace {

constexpr double kWidth = 720.0;
constexpr double kPanelH = 150.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 28.0;
constexpr double kGap = 40.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Series {
  std::string name;
  std::vector<double> y;
};

void panel(std::string& svg, double top, const std::string& title, const std::vector<double>& x,
           const std::vector<Series>& series) {
  const double w = kWidth - kLeft - kRight;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series) {
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  if (hi - lo < 1e-12) {
    hi += 0.5;
    lo -= 0.5;
  }
  const double x0 = x.front(), x1 = x.back() > x.front() ? x.back() : x.front() + 1.0;
  auto px = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * w; };
  auto py = [&](double v) { return top + kPanelH - (v - lo) / (hi - lo) * kPanelH; };

  svg += "<text x=\"" + num(kLeft) + "\" y=\"" + num(top - 8) + "\" font-size=\"13\">" +
         escape(title) + "</text>\n";
  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(top) + "\" width=\"" + num(w) +
         "\" height=\"" + num(kPanelH) + "\" fill=\"none\" stroke=\"#888\"/>\n";
  svg += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(top + 10) +
         "\" font-size=\"10\" text-anchor=\"end\">" + label_num(hi) + "</text>\n";
  svg += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(top + kPanelH) +
         "\" font-size=\"10\" text-anchor=\"end\">" + label_num(lo) + "</text>\n";
  svg += "<text x=\"" + num(kLeft + w) + "\" y=\"" + num(top + kPanelH + 14) +
         "\" font-size=\"10\" text-anchor=\"end\">step " + label_num(x1) + "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % std::size(kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(series[si].y[i])) continue;
      if (!pts.empty()) pts += ' ';
      pts += num(px(x[i])) + "," + num(py(series[si].y[i]));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    svg += "<text x=\"" + num(kLeft + w - 4) + "\" y=\"" + num(top + 14 + 12.0 * si) +
           "\" font-size=\"10\" text-anchor=\"end\" fill=\"" + color + "\">" +
           escape(series[si].name) + "</text>\n";
  }
}

std::vector<std::string> type_names(const CsvTable& t) {
  std::vector<std::string> out;
  const std::string suffix = ".sbar";
  for (const auto& h : t.header) {
    if (h.size() > suffix.size() && h.compare(h.size() - suffix.size(), suffix.size(), suffix) == 0) {
      out.push_back(h.substr(0, h.size() - suffix.size()));
    }
  }
  return out;
}

std::string header(double height) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(height) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(height) +
         "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace

const std::vector<std::string>& required_history_columns() {
  static const std::vector<std::string> cols{"step", "mu", "violation", "binarization",
                                             "kept_count"};
  return cols;
}

std::string render_history_svg(const CsvTable& t) {
  std::vector<std::string> missing;
  for (const auto& c : required_history_columns()) {
    if (!t.has(c)) missing.push_back(c);
  }
  const auto types = type_names(t);
  if (types.empty()) missing.push_back("<type>.sbar");
  for (const auto& ty : types) {
    for (const char* f : {".violation", ".binarization", ".kept"}) {
      if (!t.has(ty + f)) missing.push_back(ty + f);
    }
  }
  if (!missing.empty()) {
    std::string msg = "history csv: missing columns:";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }
  if (t.rows.empty()) throw ValidationError("history csv: no data rows");

  const auto x = t.column("step");
  std::vector<Series> sbar, viol, bin, kept;
  for (const auto& ty : types) {
    sbar.push_back({ty, t.column(ty + ".sbar")});
    viol.push_back({ty, t.column(ty + ".violation")});
    bin.push_back({ty, t.column(ty + ".binarization")});
    kept.push_back({ty, t.column(ty + ".kept")});
  }
  const double height = kTop + 5 * (kPanelH + kGap);
  std::string svg = header(height);
  double top = kTop;
  panel(svg, top, "annealing level mu_t", x, {{"mu", t.column("mu")}});
  top += kPanelH + kGap;
  panel(svg, top, "mean retention score", x, sbar);
  top += kPanelH + kGap;
  panel(svg, top, "constraint gap |sbar - target|", x, viol);
  top += kPanelH + kGap;
  panel(svg, top, "binarization B(s)", x, bin);
  top += kPanelH + kGap;
  panel(svg, top, "kept components", x, kept);
  svg += "</svg>\n";
  return svg;
}

std::string render_bar_svg(const std::string& title, const std::string& y_label,
                           const std::vector<BarGroup>& bars) {
  if (bars.empty()) throw ValidationError("bar chart: no bars");
  const double h = 320.0, top = 40.0, bottom = 50.0;
  const double ph = h - top - bottom, w = kWidth - kLeft - kRight;
  double hi = 0.0;
  for (const auto& b : bars) hi = std::max({hi, b.mean, b.hi});
  if (hi <= 0.0) hi = 1.0;
  hi *= 1.1;
  auto py = [&](double v) { return top + ph - std::max(0.0, v) / hi * ph; };
  std::string svg = header(h);
  svg += "<text x=\"" + num(kLeft) + "\" y=\"24\" font-size=\"14\">" + escape(title) + "</text>\n";
  svg += "<text x=\"14\" y=\"" + num(top + ph / 2) + "\" font-size=\"11\" transform=\"rotate(-90 14 " +
         num(top + ph / 2) + ")\" text-anchor=\"middle\">" + escape(y_label) + "</text>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(kLeft + w) +
         "\" y2=\"" + num(top + ph) + "\" stroke=\"#444\"/>\n";
  svg += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(top + 10) +
         "\" font-size=\"10\" text-anchor=\"end\">" + label_num(hi) + "</text>\n";
  const double slot = w / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
    const double bw = slot * 0.5;
    const char* color = kPalette[i % std::size(kPalette)];
    svg += "<rect x=\"" + num(cx - bw / 2) + "\" y=\"" + num(py(b.mean)) + "\" width=\"" +
           num(bw) + "\" height=\"" + num(top + ph - py(b.mean)) + "\" fill=\"" + color +
           "\" fill-opacity=\"0.75\"/>\n";
    svg += "<line x1=\"" + num(cx) + "\" y1=\"" + num(py(b.lo)) + "\" x2=\"" + num(cx) +
           "\" y2=\"" + num(py(b.hi)) + "\" stroke=\"#222\"/>\n";
    svg += "<text x=\"" + num(cx) + "\" y=\"" + num(top + ph + 16) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + escape(b.label) + "</text>\n";
    svg += "<text x=\"" + num(cx) + "\" y=\"" + num(py(b.mean) - 4) +
           "\" font-size=\"10\" text-anchor=\"middle\">" + label_num(b.mean) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace ddp
