#include "vbdepth/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vbdepth/kernels.hpp"

namespace vbd::evalmetrics {

MetricRecord compute_metrics(const bincore::DepthMap& pred, const bincore::DepthMap& gt,
                             double cap) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw std::invalid_argument("compute_metrics: pred/gt registration mismatch");
  const int64_t n = gt.numel();
  std::vector<double> p(static_cast<size_t>(n));
  std::vector<unsigned char> joint(static_cast<size_t>(n), 0);
  for (int64_t i = 0; i < n; ++i) {
    p[static_cast<size_t>(i)] = std::max(pred.depth[static_cast<size_t>(i)], 1e-3);
    joint[static_cast<size_t>(i)] =
        gt.valid[static_cast<size_t>(i)] && pred.valid[static_cast<size_t>(i)] &&
        gt.depth[static_cast<size_t>(i)] <= cap;
  }
  double acc[7];
  kernels::metric_accum(p.data(), gt.depth.data(), joint.data(), n, acc);
  if (acc[0] < 1.0) throw std::invalid_argument("compute_metrics: empty joint validity");

  MetricRecord r;
  r.n_pixels = static_cast<int64_t>(acc[0]);
  const double inv = 1.0 / acc[0];
  r.rel = acc[1] * inv;
  r.rmse = std::sqrt(acc[2] * inv);
  r.log10 = acc[3] * inv;
  r.delta1 = acc[4] * inv;
  r.delta2 = acc[5] * inv;
  r.delta3 = acc[6] * inv;
  return r;
}

double mri_theta(const std::array<double, 3>& candidate, const std::array<double, 3>& baseline) {
  for (double b : baseline)
    if (b == 0.0) throw std::invalid_argument("mri_theta: zero baseline entry");
  const double d1 = (candidate[0] - baseline[0]) / baseline[0];   // higher is better
  const double rel = (baseline[1] - candidate[1]) / baseline[1];  // lower is better
  const double rmse = (baseline[2] - candidate[2]) / baseline[2];
  return 100.0 * (d1 + rel + rmse) / 3.0;
}

double mri_eta(const std::vector<double>& candidate_rmse,
               const std::vector<double>& baseline_rmse) {
  if (candidate_rmse.size() != baseline_rmse.size() || candidate_rmse.empty())
    throw std::invalid_argument("mri_eta: length mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < candidate_rmse.size(); ++i) {
    if (baseline_rmse[i] == 0.0) throw std::invalid_argument("mri_eta: zero baseline entry");
    sum += (baseline_rmse[i] - candidate_rmse[i]) / baseline_rmse[i];
  }
  return 100.0 * sum / static_cast<double>(candidate_rmse.size());
}

std::vector<SeriesPoint> per_frame_series(
    const std::vector<EvalFrame>& frames,
    const std::function<bincore::DepthMap(int64_t)>& predict, double cap) {
  std::vector<SeriesPoint> out;
  for (size_t i = 0; i < frames.size(); ++i) {
    bincore::DepthMap pred = predict(static_cast<int64_t>(i));
    try {
      MetricRecord r = compute_metrics(pred, frames[i].gt, cap);
      out.push_back({static_cast<int64_t>(i), r.rmse, frames[i].indoor_flag});
    } catch (const std::invalid_argument&) {
      // empty joint validity: the frame is missing from the series
    }
  }
  return out;
}

void write_series_csv(const std::string& path, const std::vector<SeriesPoint>& series) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write series csv: " + path);
  f << "frame_index,rmse,indoor_flag\n";
  f.precision(17);
  for (const auto& s : series)
    f << s.frame_index << "," << s.rmse << "," << (s.indoor_flag ? 1 : 0) << "\n";
}

std::vector<SeriesPoint> read_series_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read series csv: " + path);
  std::string line;
  std::getline(f, line);  // header
  std::vector<SeriesPoint> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    SeriesPoint s;
    char comma;
    int indoor = 0;
    ss >> s.frame_index >> comma >> s.rmse >> comma >> indoor;
    if (!ss) throw std::runtime_error("malformed series csv line: " + line);
    s.indoor_flag = indoor != 0;
    out.push_back(s);
  }
  return out;
}

}  // namespace vbd::evalmetrics
