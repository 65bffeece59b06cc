#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vbdepth/evalmetrics.hpp"
#include "vbdepth/tensor.hpp"

namespace vbd::figures {

// Every figure writes <stem>.svg plus a <stem>.csv twin holding the exact
// plotted values.

// One column per labeled curve, x axis is the bin index (1-based).
void bin_center_curves(const std::string& stem,
                       const std::vector<std::pair<std::string, std::vector<double>>>& curves);

// Row-normalized occupancy matrix: rows are depth buckets, columns bins.
void occupancy_heatmap(const std::string& stem, const Tensor& hist);

// Per-frame RMSE polyline; indoor frames get a shaded background band.
void rmse_series(const std::string& stem, const std::vector<evalmetrics::SeriesPoint>& series);

// delta1 and RMSE against the domain count K.
void k_sweep(const std::string& stem, const std::vector<int>& ks,
             const std::vector<double>& delta1, const std::vector<double>& rmse);

}  // namespace vbd::figures
