#include "vbdepth/figures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vbd::figures {

namespace {

constexpr int kWidth = 640, kHeight = 400, kMargin = 50;

std::ofstream open_or_throw(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open figure output: " + path);
  f.precision(17);
  return f;
}

struct Scale {
  double x_min, x_max, y_min, y_max;
  double px(double x) const {
    const double t = x_max > x_min ? (x - x_min) / (x_max - x_min) : 0.5;
    return kMargin + t * (kWidth - 2 * kMargin);
  }
  double py(double y) const {
    const double t = y_max > y_min ? (y - y_min) / (y_max - y_min) : 0.5;
    return kHeight - kMargin - t * (kHeight - 2 * kMargin);
  }
};

void svg_header(std::ofstream& f, const std::string& title) {
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
    << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
    << "<text x='" << kWidth / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
    << "</text>\n";
}

void svg_axes(std::ofstream& f, const Scale& s) {
  f << "<line x1='" << kMargin << "' y1='" << kHeight - kMargin << "' x2='" << kWidth - kMargin
    << "' y2='" << kHeight - kMargin << "' stroke='black'/>\n";
  f << "<line x1='" << kMargin << "' y1='" << kMargin << "' x2='" << kMargin << "' y2='"
    << kHeight - kMargin << "' stroke='black'/>\n";
  f << "<text x='" << kMargin << "' y='" << kHeight - kMargin + 16 << "' font-size='11'>"
    << s.x_min << "</text>\n";
  f << "<text x='" << kWidth - kMargin << "' y='" << kHeight - kMargin + 16
    << "' text-anchor='end' font-size='11'>" << s.x_max << "</text>\n";
  f << "<text x='" << kMargin - 4 << "' y='" << kHeight - kMargin
    << "' text-anchor='end' font-size='11'>" << s.y_min << "</text>\n";
  f << "<text x='" << kMargin - 4 << "' y='" << kMargin + 4
    << "' text-anchor='end' font-size='11'>" << s.y_max << "</text>\n";
}

const char* kPalette[6] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

void svg_polyline(std::ofstream& f, const Scale& s, const std::vector<double>& xs,
                  const std::vector<double>& ys, const char* color) {
  f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
  for (size_t i = 0; i < xs.size(); ++i) f << s.px(xs[i]) << "," << s.py(ys[i]) << " ";
  f << "'/>\n";
}

}  // namespace

void bin_center_curves(const std::string& stem,
                       const std::vector<std::pair<std::string, std::vector<double>>>& curves) {
  if (curves.empty()) throw std::invalid_argument("bin_center_curves: no curves");
  const size_t n = curves[0].second.size();
  for (const auto& c : curves)
    if (c.second.size() != n)
      throw std::invalid_argument("bin_center_curves: curve length mismatch");

  auto csv = open_or_throw(stem + ".csv");
  csv << "bin_index";
  for (const auto& c : curves) csv << "," << c.first;
  csv << "\n";
  for (size_t i = 0; i < n; ++i) {
    csv << i + 1;
    for (const auto& c : curves) csv << "," << c.second[i];
    csv << "\n";
  }

  double y_min = curves[0].second[0], y_max = y_min;
  for (const auto& c : curves)
    for (double v : c.second) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  Scale s{1.0, static_cast<double>(n), y_min, y_max};
  auto f = open_or_throw(stem + ".svg");
  svg_header(f, "bin centers vs index");
  svg_axes(f, s);
  std::vector<double> xs(n);
  for (size_t i = 0; i < n; ++i) xs[i] = static_cast<double>(i + 1);
  for (size_t c = 0; c < curves.size(); ++c) {
    svg_polyline(f, s, xs, curves[c].second, kPalette[c % 6]);
    f << "<text x='" << kWidth - kMargin + 2 << "' y='" << kMargin + 14 * (c + 1)
      << "' font-size='11' fill='" << kPalette[c % 6] << "' text-anchor='end'>" << curves[c].first
      << "</text>\n";
  }
  f << "</svg>\n";
}

void occupancy_heatmap(const std::string& stem, const Tensor& hist) {
  if (hist.ndim() != 2) throw std::invalid_argument("occupancy_heatmap: expects a matrix");
  const int64_t rows = hist.dim(0), cols = hist.dim(1);
  auto csv = open_or_throw(stem + ".csv");
  csv << "bucket";
  for (int64_t c = 0; c < cols; ++c) csv << ",bin" << c + 1;
  csv << "\n";
  for (int64_t r = 0; r < rows; ++r) {
    csv << r;
    for (int64_t c = 0; c < cols; ++c) csv << "," << hist.at2(r, c);
    csv << "\n";
  }

  double mx = 0.0;
  for (int64_t i = 0; i < hist.numel(); ++i) mx = std::max(mx, hist[i]);
  auto f = open_or_throw(stem + ".svg");
  svg_header(f, "bin occupancy by depth bucket");
  const double cw = static_cast<double>(kWidth - 2 * kMargin) / static_cast<double>(cols);
  const double ch = static_cast<double>(kHeight - 2 * kMargin) / static_cast<double>(rows);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) {
      const double v = mx > 0.0 ? hist.at2(r, c) / mx : 0.0;
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - v)));
      f << "<rect x='" << kMargin + static_cast<double>(c) * cw << "' y='"
        << kMargin + static_cast<double>(r) * ch << "' width='" << cw << "' height='" << ch
        << "' fill='rgb(" << shade << "," << shade << ",255)'/>\n";
    }
  f << "</svg>\n";
}

void rmse_series(const std::string& stem, const std::vector<evalmetrics::SeriesPoint>& series) {
  evalmetrics::write_series_csv(stem + ".csv", series);
  auto f = open_or_throw(stem + ".svg");
  svg_header(f, "RMSE per frame (shaded: indoor)");
  if (series.empty()) {
    f << "</svg>\n";
    return;
  }
  double y_max = 0.0;
  for (const auto& p : series) y_max = std::max(y_max, p.rmse);
  Scale s{static_cast<double>(series.front().frame_index),
          static_cast<double>(series.back().frame_index), 0.0, y_max};
  // shaded bands over indoor frames
  for (const auto& p : series) {
    if (!p.indoor_flag) continue;
    const double x0 = s.px(static_cast<double>(p.frame_index) - 0.5);
    const double x1 = s.px(static_cast<double>(p.frame_index) + 0.5);
    f << "<rect x='" << x0 << "' y='" << kMargin << "' width='" << x1 - x0 << "' height='"
      << kHeight - 2 * kMargin << "' fill='#dddddd'/>\n";
  }
  svg_axes(f, s);
  std::vector<double> xs, ys;
  for (const auto& p : series) {
    xs.push_back(static_cast<double>(p.frame_index));
    ys.push_back(p.rmse);
  }
  svg_polyline(f, s, xs, ys, kPalette[0]);
  f << "</svg>\n";
}

void k_sweep(const std::string& stem, const std::vector<int>& ks,
             const std::vector<double>& delta1, const std::vector<double>& rmse) {
  if (ks.size() != delta1.size() || ks.size() != rmse.size() || ks.empty())
    throw std::invalid_argument("k_sweep: length mismatch");
  auto csv = open_or_throw(stem + ".csv");
  csv << "k,delta1,rmse\n";
  for (size_t i = 0; i < ks.size(); ++i)
    csv << ks[i] << "," << delta1[i] << "," << rmse[i] << "\n";

  auto f = open_or_throw(stem + ".svg");
  svg_header(f, "delta1 and RMSE vs K");
  double r_max = 0.0;
  for (double v : rmse) r_max = std::max(r_max, v);
  Scale s{static_cast<double>(ks.front()), static_cast<double>(ks.back()), 0.0,
          std::max(1.0, r_max)};
  svg_axes(f, s);
  std::vector<double> xs;
  for (int k : ks) xs.push_back(static_cast<double>(k));
  svg_polyline(f, s, xs, delta1, kPalette[0]);
  svg_polyline(f, s, xs, rmse, kPalette[1]);
  f << "<text x='" << kWidth - kMargin << "' y='" << kMargin + 14
    << "' font-size='11' fill='" << kPalette[0] << "' text-anchor='end'>delta1</text>\n";
  f << "<text x='" << kWidth - kMargin << "' y='" << kMargin + 28
    << "' font-size='11' fill='" << kPalette[1] << "' text-anchor='end'>rmse</text>\n";
  f << "</svg>\n";
}

}  // namespace vbd::figures
