#pragma once

#include <vector>

#include "vbdepth/autograd.hpp"
#include "vbdepth/bincore.hpp"

namespace vbd::domains {

// K nested depth intervals [z_min, uppers[k]]; uppers[K-1] == z_max.
struct RangeDomainSet {
  double z_min = 0.0;
  double z_max = 80.0;
  int k_count = 4;
  std::vector<double> uppers;
};

struct DomainProbability {
  std::vector<double> y;  // simplex over K
};

struct BinBank {
  std::vector<bincore::BinCenterVector> per_domain_centers;  // K vectors, shared N
};

// Space-increasing partition: uppers[k] = z_min + sum_{i=1..k} 2i(z_max-z_min)/(K(1+K)).
RangeDomainSet partition_range(double z_min, double z_max, int k_count);

// Equal-width comparator used by the partition ablation.
RangeDomainSet uniform_partition(double z_min, double z_max, int k_count);

// 1-based label: smallest k whose upper bound covers the given percentile of
// valid depths; depths beyond z_max clamp to K.
int rd_label(const bincore::DepthMap& gt, const RangeDomainSet& rds, double percentile = 0.99);

// c = sum_k chat^[k] * y_k, elementwise.
bincore::BinCenterVector fuse_bins(const BinBank& bank, const DomainProbability& y);

// Differentiable fusion: bank entries are (K,N) rows, y is length-K.
ag::Var ag_fuse_bins(const std::vector<ag::Var>& bank_centers, const ag::Var& y);

}  // namespace vbd::domains
