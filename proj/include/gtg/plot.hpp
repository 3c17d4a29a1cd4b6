#pragma once
// Training-curve plots: metrics CSVs in, a self-contained SVG out. Each run
// is drawn as a translucent line, the across-run mean as a bold one.

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gtg/common.hpp"

namespace gtg {

struct Series {
  std::string name;
  std::vector<double> x;  // env_steps
  std::vector<double> y;  // mean_return
};

// Reads env_steps and mean_return from a metrics CSV. Throws on a malformed
// header/row or when no data rows are present.
inline Series read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("plot: cannot open " + path);
  Series s;
  s.name = path;
  std::string line;
  int lineno = 0;
  int x_col = -1, y_col = -1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (lineno == 1) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "env_steps") x_col = static_cast<int>(i);
        if (cells[i] == "mean_return") y_col = static_cast<int>(i);
      }
      if (x_col < 0 || y_col < 0)
        throw std::runtime_error("plot: " + path +
                                 " has no env_steps/mean_return columns");
      continue;
    }
    if (static_cast<int>(cells.size()) <= std::max(x_col, y_col))
      throw std::runtime_error("plot: " + path + " line " +
                               std::to_string(lineno) + ": too few columns");
    try {
      s.x.push_back(std::stod(cells[static_cast<std::size_t>(x_col)]));
      s.y.push_back(std::stod(cells[static_cast<std::size_t>(y_col)]));
    } catch (const std::exception&) {
      throw std::runtime_error("plot: " + path + " line " +
                               std::to_string(lineno) + ": bad number");
    }
  }
  if (s.x.empty())
    throw std::runtime_error("plot: " + path + " has no data rows");
  return s;
}

// Piecewise-linear interpolation, clamped to the endpoints.
inline double interp_series(const Series& s, double x) {
  if (x <= s.x.front()) return s.y.front();
  if (x >= s.x.back()) return s.y.back();
  for (std::size_t i = 1; i < s.x.size(); ++i) {
    if (x <= s.x[i]) {
      double t = (x - s.x[i - 1]) / (s.x[i] - s.x[i - 1]);
      return s.y[i - 1] + t * (s.y[i] - s.y[i - 1]);
    }
  }
  return s.y.back();
}

// x grid for the mean line: the union of every run's sample points.
inline std::vector<double> mean_sample_points(const std::vector<Series>& runs) {
  std::set<double> xs;
  for (const auto& s : runs) xs.insert(s.x.begin(), s.x.end());
  return {xs.begin(), xs.end()};
}

inline std::string render_training_curves_svg(const std::vector<Series>& runs) {
  if (runs.empty()) throw std::invalid_argument("plot: no series");
  const double width = 800, height = 500;
  const double ml = 70, mr = 20, mt = 20, mb = 50;
  double xmin = runs[0].x.front(), xmax = runs[0].x.back();
  double ymin = runs[0].y.front(), ymax = runs[0].y.front();
  for (const auto& s : runs) {
    for (double v : s.x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
    for (double v : s.y) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) { ymax = ymin + 1.0; ymin -= 1.0; }
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  auto py = [&](double y) {
    return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
  };
  auto polyline = [&](const std::vector<double>& xs,
                      const std::vector<double>& ys) {
    std::ostringstream p;
    p << std::setprecision(8);
    for (std::size_t i = 0; i < xs.size(); ++i)
      p << (i ? " " : "") << px(xs[i]) << ',' << py(ys[i]);
    return p.str();
  };

  std::ostringstream svg;
  svg << std::setprecision(8);
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "' viewBox='0 0 " << width << ' ' << height
      << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  // axes
  svg << "<line x1='" << ml << "' y1='" << height - mb << "' x2='"
      << width - mr << "' y2='" << height - mb
      << "' stroke='black' stroke-width='1'/>\n";
  svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='"
      << height - mb << "' stroke='black' stroke-width='1'/>\n";
  auto label = [&](double x, double y, const std::string& text,
                   const char* anchor) {
    svg << "<text x='" << x << "' y='" << y << "' font-size='12' text-anchor='"
        << anchor << "' font-family='sans-serif'>" << text << "</text>\n";
  };
  std::ostringstream fmt;
  fmt << std::setprecision(4) << xmin;
  label(px(xmin), height - mb + 18, fmt.str(), "middle");
  fmt.str("");
  fmt << std::setprecision(4) << xmax;
  label(px(xmax), height - mb + 18, fmt.str(), "middle");
  fmt.str("");
  fmt << std::setprecision(3) << ymin + ypad;
  label(ml - 8, py(ymin + ypad) + 4, fmt.str(), "end");
  fmt.str("");
  fmt << std::setprecision(3) << ymax - ypad;
  label(ml - 8, py(ymax - ypad) + 4, fmt.str(), "end");
  label((ml + width - mr) / 2, height - 12, "env steps", "middle");
  svg << "<text x='16' y='" << (mt + height - mb) / 2
      << "' font-size='12' font-family='sans-serif' text-anchor='middle' "
         "transform='rotate(-90 16 "
      << (mt + height - mb) / 2 << ")'>mean return</text>\n";

  for (const auto& s : runs)
    svg << "<polyline fill='none' stroke='#1f77b4' stroke-opacity='0.35' "
           "stroke-width='1.5' points='"
        << polyline(s.x, s.y) << "'/>\n";

  std::vector<double> xs = mean_sample_points(runs);
  std::vector<double> mean(xs.size(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double acc = 0.0;
    for (const auto& s : runs) acc += interp_series(s, xs[i]);
    mean[i] = acc / static_cast<double>(runs.size());
  }
  svg << "<polyline fill='none' stroke='#1f77b4' stroke-width='3' points='"
      << polyline(xs, mean) << "'/>\n";
  svg << "</svg>\n";
  return svg.str();
}

// Reads every CSV, renders the figure, and writes it to out_path. No file is
// written when any input fails to parse.
inline void write_plot(const std::string& out_path,
                       const std::vector<std::string>& csv_paths) {
  std::vector<Series> runs;
  for (const auto& p : csv_paths) runs.push_back(read_metrics_csv(p));
  std::string svg = render_training_curves_svg(runs);
  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("plot: cannot write " + out_path);
  os << svg;
}

}  // namespace gtg
