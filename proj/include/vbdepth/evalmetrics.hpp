#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vbdepth/bincore.hpp"

namespace vbd::evalmetrics {

struct MetricRecord {
  double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;
  double rel = 0.0, rmse = 0.0, log10 = 0.0;
  int64_t n_pixels = 0;
};

// Jointly valid pixels only (gt valid, gt <= cap, pred valid); pred clamped
// to 1e-3; delta thresholds use strict inequality.
MetricRecord compute_metrics(const bincore::DepthMap& pred, const bincore::DepthMap& gt,
                             double cap);

// Mean relative improvement across (delta1 up, REL down, RMSE down), in
// percent. Entries are (delta1, rel, rmse).
double mri_theta(const std::array<double, 3>& candidate, const std::array<double, 3>& baseline);

// Mean over datasets of the relative RMSE improvement, in percent.
double mri_eta(const std::vector<double>& candidate_rmse, const std::vector<double>& baseline_rmse);

struct SeriesPoint {
  int64_t frame_index = 0;
  double rmse = 0.0;
  bool indoor_flag = false;
};

struct EvalFrame {
  bincore::DepthMap gt;
  bool indoor_flag = false;
};

// One RMSE per evaluable frame; frames whose joint validity is empty are
// skipped (missing, not zero), which leaves gaps in frame_index.
std::vector<SeriesPoint> per_frame_series(
    const std::vector<EvalFrame>& frames,
    const std::function<bincore::DepthMap(int64_t)>& predict, double cap);

// CSV schema: frame_index,rmse,indoor_flag
void write_series_csv(const std::string& path, const std::vector<SeriesPoint>& series);
std::vector<SeriesPoint> read_series_csv(const std::string& path);

}  // namespace vbd::evalmetrics
