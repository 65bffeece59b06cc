#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vbdepth/autograd.hpp"
#include "vbdepth/tensor.hpp"

namespace vbd::bincore {

constexpr double kEpsilon = 1e-3;  // shared by width normalization and variation centers

struct BinWidthVector {
  std::vector<double> raw_widths;  // unnormalized, >= 0
  std::vector<double> normalized;  // sums to 1, strictly positive
};

struct BinVariationVector {
  std::vector<double> variations;  // meters, any sign
};

enum class CenterKind { width_based, variation_based, fused };

struct BinCenterVector {
  std::vector<double> centers;  // meters
  CenterKind kind = CenterKind::width_based;
};

// Per-pixel probability over N bins, channel-first layout (N,H,W).
struct ProbabilityVolume {
  Tensor probs;
  int64_t n_bins() const { return probs.dim(0); }
  int64_t height() const { return probs.dim(1); }
  int64_t width() const { return probs.dim(2); }
};

struct DepthMap {
  int64_t h = 0, w = 0;
  std::vector<double> depth;          // meters
  std::vector<unsigned char> valid;   // 0/1; invalid pixels never enter losses or metrics
  DepthMap() = default;
  DepthMap(int64_t h_, int64_t w_, double fill = 0.0, bool valid_fill = true)
      : h(h_), w(w_), depth(static_cast<size_t>(h_ * w_), fill),
        valid(static_cast<size_t>(h_ * w_), valid_fill ? 1 : 0) {}
  int64_t numel() const { return h * w; }
  double& at(int64_t y, int64_t x) { return depth[static_cast<size_t>(y * w + x)]; }
  double at(int64_t y, int64_t x) const { return depth[static_cast<size_t>(y * w + x)]; }
  bool is_valid(int64_t y, int64_t x) const { return valid[static_cast<size_t>(y * w + x)] != 0; }
  std::vector<double> valid_depths() const;
};

// b_n = (b'_n + eps) / sum_i (b'_i + eps)
BinWidthVector normalize_widths(const std::vector<double>& raw, double epsilon = kEpsilon);

// c_n = d_min + (d_max - d_min) * (b_n/2 + sum_{j<n} b_j)
BinCenterVector width_bin_centers(const BinWidthVector& b, double d_min, double d_max);

// c_n = eps + v_n/2 + sum_{j<n} v_j; centers may be non-monotone and negative
BinCenterVector variation_bin_centers(const BinVariationVector& v, double epsilon = kEpsilon);

// D(i) = sum_n c_n P_n(i); output valid mask is all-true
DepthMap combine_depth(const ProbabilityVolume& p, const BinCenterVector& c);

// Bi-directional Chamfer between centers and ground-truth depth samples.
// Sets larger than subsample_cap are reduced by a seeded uniform subsample.
double chamfer_bin_loss(const BinCenterVector& c, const std::vector<double>& gt_depths,
                        int64_t subsample_cap = 10000, uint64_t seed = 0);

// 1-based index of the (first) maximal center.
int peak_bin_index(const BinCenterVector& c);

// Rows are ground-truth depth buckets, columns are bins; each valid pixel adds
// its per-bin probability mass to its depth bucket row. Rows normalized to 1.
// Bucket range defaults to [0, max valid gt depth].
Tensor bin_occupancy_histogram(const BinCenterVector& c, const ProbabilityVolume& p,
                               const DepthMap& gt, int depth_buckets,
                               std::optional<double> bucket_max = std::nullopt);

// Occupancy-weighted mean ground-truth depth per bin (NaN-free: unoccupied
// bins yield 0 weight and are skipped by the caller).
std::vector<double> occupancy_mean_depth_per_bin(const ProbabilityVolume& p, const DepthMap& gt);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// --- differentiable bridges (training path) ---

// centers from a variation vector; exact lower-triangular Jacobian
ag::Var ag_variation_centers(const ag::Var& variations, double epsilon = kEpsilon);

// Chamfer loss of a differentiable center vector against fixed depth samples.
ag::Var ag_chamfer_loss(const ag::Var& centers, const std::vector<double>& depths);

// centers from raw widths: relu, +eps normalization, then the monotone
// width-center formula over [d_min, d_max]
ag::Var ag_width_centers(const ag::Var& raw, double d_min, double d_max,
                         double epsilon = kEpsilon);

// Seeded uniform subsample used by chamfer_bin_loss, exposed for the loss path.
std::vector<double> subsample_depths(const std::vector<double>& depths, int64_t cap,
                                     uint64_t seed);

}  // namespace vbd::bincore
