#include "vbdepth/bincore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "vbdepth/kernels.hpp"

namespace vbd::bincore {

std::vector<double> DepthMap::valid_depths() const {
  std::vector<double> out;
  out.reserve(depth.size());
  for (size_t i = 0; i < depth.size(); ++i)
    if (valid[i]) out.push_back(depth[i]);
  return out;
}

BinWidthVector normalize_widths(const std::vector<double>& raw, double epsilon) {
  if (raw.empty()) throw std::invalid_argument("normalize_widths: empty width vector");
  if (epsilon <= 0.0) throw std::invalid_argument("normalize_widths: epsilon must be positive");
  double total = 0.0;
  for (double v : raw) {
    if (!(v >= 0.0)) throw std::invalid_argument("normalize_widths: negative raw width");
    total += v + epsilon;
  }
  BinWidthVector out;
  out.raw_widths = raw;
  out.normalized.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) out.normalized[i] = (raw[i] + epsilon) / total;
  return out;
}

BinCenterVector width_bin_centers(const BinWidthVector& b, double d_min, double d_max) {
  if (!(d_max > d_min)) throw std::invalid_argument("width_bin_centers: d_max must exceed d_min");
  if (b.normalized.empty()) throw std::invalid_argument("width_bin_centers: empty widths");
  BinCenterVector out;
  out.kind = CenterKind::width_based;
  out.centers.resize(b.normalized.size());
  double cum = 0.0;
  const double span = d_max - d_min;
  for (size_t n = 0; n < b.normalized.size(); ++n) {
    out.centers[n] = d_min + span * (b.normalized[n] / 2.0 + cum);
    cum += b.normalized[n];
  }
  return out;
}

BinCenterVector variation_bin_centers(const BinVariationVector& v, double epsilon) {
  if (v.variations.empty()) throw std::invalid_argument("variation_bin_centers: empty vector");
  for (double x : v.variations)
    if (!std::isfinite(x)) throw std::invalid_argument("variation_bin_centers: non-finite entry");
  BinCenterVector out;
  out.kind = CenterKind::variation_based;
  out.centers.resize(v.variations.size());
  double cum = 0.0;
  for (size_t n = 0; n < v.variations.size(); ++n) {
    out.centers[n] = epsilon + v.variations[n] / 2.0 + cum;
    cum += v.variations[n];
  }
  return out;
}

DepthMap combine_depth(const ProbabilityVolume& p, const BinCenterVector& c) {
  const int64_t n = p.n_bins();
  if (static_cast<int64_t>(c.centers.size()) != n)
    throw std::invalid_argument("combine_depth: probability channels do not match center count");
  const int64_t h = p.height(), w = p.width(), hw = h * w;
  DepthMap out(h, w);
  for (int64_t ch = 0; ch < n; ++ch) {
    const double cv = c.centers[static_cast<size_t>(ch)];
    const double* pp = p.probs.data() + ch * hw;
    for (int64_t i = 0; i < hw; ++i) out.depth[static_cast<size_t>(i)] += cv * pp[i];
  }
  return out;
}

std::vector<double> subsample_depths(const std::vector<double>& depths, int64_t cap,
                                     uint64_t seed) {
  if (static_cast<int64_t>(depths.size()) <= cap) return depths;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(cap));
  std::mt19937_64 rng(seed);
  std::sample(depths.begin(), depths.end(), std::back_inserter(out),
              static_cast<size_t>(cap), rng);
  return out;
}

double chamfer_bin_loss(const BinCenterVector& c, const std::vector<double>& gt_depths,
                        int64_t subsample_cap, uint64_t seed) {
  if (gt_depths.empty()) throw std::invalid_argument("chamfer_bin_loss: empty depth set");
  if (c.centers.empty()) throw std::invalid_argument("chamfer_bin_loss: empty centers");
  const std::vector<double> d = subsample_depths(gt_depths, subsample_cap, seed);
  return kernels::chamfer(c.centers.data(), static_cast<int64_t>(c.centers.size()), d.data(),
                          static_cast<int64_t>(d.size()));
}

int peak_bin_index(const BinCenterVector& c) {
  if (c.centers.empty()) throw std::invalid_argument("peak_bin_index: empty centers");
  size_t best = 0;
  for (size_t i = 1; i < c.centers.size(); ++i)
    if (c.centers[i] > c.centers[best]) best = i;  // strict: ties keep the smallest index
  return static_cast<int>(best) + 1;
}

Tensor bin_occupancy_histogram(const BinCenterVector& c, const ProbabilityVolume& p,
                               const DepthMap& gt, int depth_buckets,
                               std::optional<double> bucket_max) {
  const int64_t n = p.n_bins();
  if (static_cast<int64_t>(c.centers.size()) != n)
    throw std::invalid_argument("bin_occupancy_histogram: center/probability mismatch");
  if (gt.h != p.height() || gt.w != p.width())
    throw std::invalid_argument("bin_occupancy_histogram: gt/probability shape mismatch");
  if (depth_buckets < 1) throw std::invalid_argument("bin_occupancy_histogram: need >=1 bucket");

  double dmax = 0.0;
  int64_t n_valid = 0;
  for (int64_t i = 0; i < gt.numel(); ++i)
    if (gt.valid[static_cast<size_t>(i)]) {
      dmax = std::max(dmax, gt.depth[static_cast<size_t>(i)]);
      ++n_valid;
    }
  if (n_valid == 0) throw std::invalid_argument("bin_occupancy_histogram: no valid pixels");
  if (bucket_max) dmax = *bucket_max;
  if (dmax <= 0.0) dmax = 1.0;

  Tensor hist({depth_buckets, n});
  const int64_t hw = gt.numel();
  for (int64_t i = 0; i < hw; ++i) {
    if (!gt.valid[static_cast<size_t>(i)]) continue;
    int bucket = static_cast<int>(gt.depth[static_cast<size_t>(i)] / dmax *
                                  static_cast<double>(depth_buckets));
    bucket = std::clamp(bucket, 0, depth_buckets - 1);
    for (int64_t ch = 0; ch < n; ++ch)
      hist.at2(bucket, ch) += p.probs.data()[ch * hw + i];
  }
  for (int r = 0; r < depth_buckets; ++r) {
    double row_sum = 0.0;
    for (int64_t ch = 0; ch < n; ++ch) row_sum += hist.at2(r, ch);
    if (row_sum > 0.0)
      for (int64_t ch = 0; ch < n; ++ch) hist.at2(r, ch) /= row_sum;
  }
  return hist;
}

std::vector<double> occupancy_mean_depth_per_bin(const ProbabilityVolume& p, const DepthMap& gt) {
  const int64_t n = p.n_bins(), hw = gt.numel();
  if (gt.h != p.height() || gt.w != p.width())
    throw std::invalid_argument("occupancy_mean_depth_per_bin: shape mismatch");
  std::vector<double> mass(static_cast<size_t>(n), 0.0), wsum(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < hw; ++i) {
    if (!gt.valid[static_cast<size_t>(i)]) continue;
    const double d = gt.depth[static_cast<size_t>(i)];
    for (int64_t ch = 0; ch < n; ++ch) {
      const double pr = p.probs.data()[ch * hw + i];
      mass[static_cast<size_t>(ch)] += pr;
      wsum[static_cast<size_t>(ch)] += pr * d;
    }
  }
  std::vector<double> out(static_cast<size_t>(n), 0.0);
  for (int64_t ch = 0; ch < n; ++ch)
    if (mass[static_cast<size_t>(ch)] > 1e-12)
      out[static_cast<size_t>(ch)] = wsum[static_cast<size_t>(ch)] / mass[static_cast<size_t>(ch)];
  return out;
}

namespace {
std::vector<double> avg_ranks(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}
}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length series of size >= 2");
  const auto ra = avg_ranks(a);
  const auto rb = avg_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

ag::Var ag_variation_centers(const ag::Var& variations, double epsilon) {
  const int64_t n = variations->val.numel();
  if (n == 0) throw std::invalid_argument("ag_variation_centers: empty vector");
  Tensor out({n});
  double cum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    out[i] = epsilon + variations->val[i] / 2.0 + cum;
    cum += variations->val[i];
  }
  return ag::make_node(std::move(out), {variations}, [n](ag::Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    // dc_n/dv_j = 1 for j<n, 1/2 for j=n  =>  dv_j = g_j/2 + sum_{n>j} g_n
    double suffix = 0.0;
    for (int64_t j = n - 1; j >= 0; --j) {
      p->grad[j] += self.grad[j] / 2.0 + suffix;
      suffix += self.grad[j];
    }
  });
}

ag::Var ag_chamfer_loss(const ag::Var& centers, const std::vector<double>& depths) {
  if (depths.empty()) throw std::invalid_argument("ag_chamfer_loss: empty depth set");
  const int64_t n = centers->val.numel();
  auto nn_centers = std::make_shared<std::vector<int>>(depths.size());
  auto nn_depths = std::make_shared<std::vector<int>>(static_cast<size_t>(n));
  auto d_keep = std::make_shared<std::vector<double>>(depths);
  const double loss =
      kernels::chamfer(centers->val.data(), n, depths.data(),
                       static_cast<int64_t>(depths.size()), nn_centers->data(), nn_depths->data());
  return ag::make_node(Tensor::scalar(loss), {centers},
                       [n, nn_centers, nn_depths, d_keep](ag::Node& self) {
                         auto& p = self.parents[0];
                         p->ensure_grad();
                         const double g = self.grad[0];
                         for (size_t i = 0; i < d_keep->size(); ++i) {
                           const int j = (*nn_centers)[i];
                           p->grad[j] += g * 2.0 * (p->val[j] - (*d_keep)[i]);
                         }
                         for (int64_t j = 0; j < n; ++j) {
                           const double d = (*d_keep)[static_cast<size_t>((*nn_depths)[j])];
                           p->grad[j] += g * 2.0 * (p->val[j] - d);
                         }
                       });
}

ag::Var ag_width_centers(const ag::Var& raw, double d_min, double d_max, double epsilon) {
  const int64_t n = raw->val.numel();
  if (n == 0) throw std::invalid_argument("ag_width_centers: empty vector");
  if (!(d_max > d_min)) throw std::invalid_argument("ag_width_centers: empty range");
  auto w = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  auto b = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  double S = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    (*w)[static_cast<size_t>(i)] = std::max(raw->val[i], 0.0) + epsilon;
    S += (*w)[static_cast<size_t>(i)];
  }
  const double R = d_max - d_min;
  Tensor out({n});
  double cum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    (*b)[static_cast<size_t>(i)] = (*w)[static_cast<size_t>(i)] / S;
    out[i] = d_min + R * ((*b)[static_cast<size_t>(i)] / 2.0 + cum);
    cum += (*b)[static_cast<size_t>(i)];
  }
  return ag::make_node(std::move(out), {raw}, [n, w, b, S, R, epsilon](ag::Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    // dc_n/db_j = R*(1/2 if j==n else 1 if j<n else 0); chain through the
    // normalization db_j/dw_i = (delta_ij - b_j)/S and the relu clip
    std::vector<double> gb(static_cast<size_t>(n), 0.0);
    double suffix = 0.0;
    for (int64_t j = n - 1; j >= 0; --j) {
      gb[static_cast<size_t>(j)] = R * (self.grad[j] / 2.0 + suffix);
      suffix += self.grad[j];
    }
    double dot = 0.0;
    for (int64_t j = 0; j < n; ++j) dot += gb[static_cast<size_t>(j)] * (*b)[static_cast<size_t>(j)];
    for (int64_t i = 0; i < n; ++i) {
      if (p->val[i] <= 0.0) continue;  // relu region contributes nothing
      p->grad[i] += (gb[static_cast<size_t>(i)] - dot) / S;
    }
  });
}

}  // namespace vbd::bincore
