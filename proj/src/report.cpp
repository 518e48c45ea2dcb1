#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gcdlab/error.hpp"
#include "gcdlab/experiment.hpp"
#include "gcdlab/format.hpp"

namespace gcdlab {

namespace {

struct RunSeries {
  std::string name;
  std::vector<EpochMetrics> history;
};

struct Series {
  std::string label;
  std::string color;
  bool dashed = false;
  std::vector<std::pair<double, double>> points;
};

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string line_chart(const std::string& title, const std::string& y_label,
                       const std::vector<Series>& series, double y_min, double y_max) {
  constexpr double width = 760, height = 420, left = 60, right = 230, top = 40, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  double x_max = 1.0;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) x_max = std::max(x_max, x);
  }
  if (y_max <= y_min) y_max = y_min + 1.0;
  auto sx = [&](double x) { return left + plot_w * x / x_max; };
  auto sy = [&](double y) { return top + plot_h * (1.0 - (y - y_min) / (y_max - y_min)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left << "\" y=\"24\" font-size=\"15\">" << escape_xml(title) << "</text>\n";
  for (int t = 0; t <= 5; ++t) {
    const double y = y_min + (y_max - y_min) * t / 5.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << fixed(sy(y), 1)
        << "\" y2=\"" << fixed(sy(y), 1) << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << fixed(sy(y) + 4, 1)
        << "\" text-anchor=\"end\">" << fixed(y, y_max - y_min <= 1.0 ? 2 : 0) << "</text>\n";
  }
  for (int t = 0; t <= 5; ++t) {
    const double x = x_max * t / 5.0;
    svg << "<text x=\"" << fixed(sx(x), 1) << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\">" << fixed(x, 0) << "</text>\n";
  }
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\">epoch</text>\n";
  svg << "<text transform=\"translate(16," << top + plot_h / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape_xml(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.8\"";
    if (s.dashed) svg << " stroke-dasharray=\"6,4\"";
    svg << " points=\"";
    for (std::size_t p = 0; p < s.points.size(); ++p) {
      if (p > 0) svg << ' ';
      svg << fixed(sx(s.points[p].first), 1) << ',' << fixed(sy(s.points[p].second), 1);
    }
    svg << "\"><title>" << escape_xml(s.label) << "</title></polyline>\n";
    const double ly = top + 12 + 18.0 * static_cast<double>(i);
    const double lx = left + plot_w + 12;
    svg << "<line x1=\"" << lx << "\" x2=\"" << lx + 24 << "\" y1=\"" << ly << "\" y2=\"" << ly
        << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6,4\"" : "")
        << "/>\n";
    svg << "<text x=\"" << lx + 30 << "\" y=\"" << ly + 4 << "\">" << escape_xml(s.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::filesystem::path> collect_inputs(const std::filesystem::path& input) {
  std::vector<std::filesystem::path> found;
  if (std::filesystem::is_directory(input)) {
    for (const auto& entry : std::filesystem::recursive_directory_iterator(input)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name.rfind("metrics_", 0) == 0 && entry.path().extension() == ".csv") {
        found.push_back(entry.path());
      }
    }
    std::sort(found.begin(), found.end());
  } else {
    found.push_back(input);
  }
  return found;
}

std::string run_name(const std::filesystem::path& csv) {
  std::string stem = csv.stem().string();
  if (stem.rfind("metrics_", 0) == 0) stem = stem.substr(8);
  return stem;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << content)) throw Error("cannot write " + path.string());
}

}  // namespace

int emit_report(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out,
                const Logger& log) {
  auto warn = [&](const std::string& msg) {
    if (log) log(msg);
  };
  std::vector<RunSeries> runs;
  for (const auto& input : inputs) {
    if (!std::filesystem::exists(input)) {
      warn("skipping " + input.string() + ": no such file or directory");
      continue;
    }
    const auto files = collect_inputs(input);
    if (files.empty()) warn("skipping " + input.string() + ": no metrics_*.csv found");
    for (const auto& file : files) {
      try {
        auto history = read_metrics_csv(file);
        if (history.empty()) {
          warn("skipping " + file.string() + ": no epochs");
          continue;
        }
        runs.push_back({run_name(file), std::move(history)});
      } catch (const Error& e) {
        warn("skipping " + file.string() + ": " + e.what());
      }
    }
  }
  if (runs.empty()) {
    warn("no usable metrics files");
    return 1;
  }

  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) {
    warn("cannot create " + out.string() + ": " + ec.message());
    return 1;
  }

  std::vector<Series> acc;
  std::vector<Series> known;
  double known_max = 1.0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string color = kPalette[i % std::size(kPalette)];
    Series old_s{runs[i].name + " old", color, false, {}};
    Series new_s{runs[i].name + " new", color, true, {}};
    Series known_s{runs[i].name, color, false, {}};
    for (const auto& m : runs[i].history) {
      old_s.points.emplace_back(m.epoch, m.acc_old);
      new_s.points.emplace_back(m.epoch, m.acc_new);
      known_s.points.emplace_back(m.epoch, static_cast<double>(m.known_count));
      known_max = std::max(known_max, static_cast<double>(m.known_count));
    }
    acc.push_back(std::move(old_s));
    acc.push_back(std::move(new_s));
    known.push_back(std::move(known_s));
  }

  std::ostringstream table;
  std::size_t width = 4;
  for (const auto& r : runs) width = std::max(width, r.name.size());
  auto pad = [&](const std::string& s) { return s + std::string(width + 2 - s.size(), ' '); };
  auto cell = [](const std::string& s) { return std::string(8 - std::min<std::size_t>(8, s.size()), ' ') + s; };
  auto signed_pct = [](double v) { return (v >= 0 ? "+" : "") + fixed(100.0 * v, 2); };
  table << pad("run") << cell("All") << cell("Old") << cell("New") << '\n';
  const EpochMetrics& base = runs.front().history.back();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const EpochMetrics& m = runs[i].history.back();
    table << pad(runs[i].name) << cell(fixed(100.0 * m.acc_all, 2)) << cell(fixed(100.0 * m.acc_old, 2))
          << cell(fixed(100.0 * m.acc_new, 2)) << '\n';
    if (i > 0) {
      // "Δ" is two bytes but one column wide.
      table << "  Δ" << std::string(width + 2 - 3, ' ') << cell(signed_pct(m.acc_all - base.acc_all)) << cell(signed_pct(m.acc_old - base.acc_old))
            << cell(signed_pct(m.acc_new - base.acc_new)) << '\n';
    }
  }

  try {
    write_text(out / "accuracy.svg", line_chart("Old (solid) and New (dashed) accuracy", "accuracy", acc, 0.0, 1.0));
    write_text(out / "known_count.svg",
               line_chart("High-confidence known samples", "count", known, 0.0, std::ceil(known_max * 1.1)));
    write_text(out / "comparison.txt", table.str());
  } catch (const Error& e) {
    warn(e.what());
    return 1;
  }
  return 0;
}

}  // namespace gcdlab
