#include "vbdepth/domains.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vbd::domains {

RangeDomainSet partition_range(double z_min, double z_max, int k_count) {
  if (k_count < 1) throw std::invalid_argument("partition_range: K must be >= 1");
  if (!(z_max > z_min)) throw std::invalid_argument("partition_range: z_max must exceed z_min");
  RangeDomainSet out;
  out.z_min = z_min;
  out.z_max = z_max;
  out.k_count = k_count;
  out.uppers.resize(static_cast<size_t>(k_count));
  const double unit = 2.0 * (z_max - z_min) / (static_cast<double>(k_count) * (1.0 + k_count));
  double cum = 0.0;
  for (int k = 1; k <= k_count; ++k) {
    cum += static_cast<double>(k) * unit;
    out.uppers[static_cast<size_t>(k - 1)] = z_min + cum;
  }
  out.uppers.back() = z_max;  // exact despite rounding
  return out;
}

RangeDomainSet uniform_partition(double z_min, double z_max, int k_count) {
  if (k_count < 1) throw std::invalid_argument("uniform_partition: K must be >= 1");
  if (!(z_max > z_min)) throw std::invalid_argument("uniform_partition: z_max must exceed z_min");
  RangeDomainSet out;
  out.z_min = z_min;
  out.z_max = z_max;
  out.k_count = k_count;
  out.uppers.resize(static_cast<size_t>(k_count));
  for (int k = 1; k <= k_count; ++k)
    out.uppers[static_cast<size_t>(k - 1)] =
        z_min + static_cast<double>(k) * (z_max - z_min) / static_cast<double>(k_count);
  out.uppers.back() = z_max;
  return out;
}

int rd_label(const bincore::DepthMap& gt, const RangeDomainSet& rds, double percentile) {
  if (!(percentile > 0.0 && percentile <= 1.0))
    throw std::invalid_argument("rd_label: percentile must be in (0,1]");
  std::vector<double> d = gt.valid_depths();
  if (d.empty()) throw std::invalid_argument("rd_label: no valid pixels");
  const size_t pos = std::min(
      d.size() - 1, static_cast<size_t>(std::ceil(percentile * static_cast<double>(d.size())) - 1));
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(pos), d.end());
  const double q = d[pos];
  for (int k = 0; k < rds.k_count; ++k)
    if (rds.uppers[static_cast<size_t>(k)] >= q) return k + 1;
  return rds.k_count;  // beyond z_max clamps to the last domain
}

bincore::BinCenterVector fuse_bins(const BinBank& bank, const DomainProbability& y) {
  if (bank.per_domain_centers.size() != y.y.size() || y.y.empty())
    throw std::invalid_argument("fuse_bins: bank size does not match probability length");
  const size_t n = bank.per_domain_centers.front().centers.size();
  for (const auto& c : bank.per_domain_centers)
    if (c.centers.size() != n) throw std::invalid_argument("fuse_bins: inconsistent bin counts");
  bincore::BinCenterVector out;
  out.kind = bincore::CenterKind::fused;
  out.centers.assign(n, 0.0);
  for (size_t k = 0; k < y.y.size(); ++k)
    for (size_t i = 0; i < n; ++i) out.centers[i] += bank.per_domain_centers[k].centers[i] * y.y[k];
  return out;
}

ag::Var ag_fuse_bins(const std::vector<ag::Var>& bank_centers, const ag::Var& y) {
  if (bank_centers.empty() || y->val.numel() != static_cast<int64_t>(bank_centers.size()))
    throw std::invalid_argument("ag_fuse_bins: bank size does not match probability length");
  const int64_t n = bank_centers.front()->val.numel();
  for (const auto& c : bank_centers)
    if (c->val.numel() != n) throw std::invalid_argument("ag_fuse_bins: inconsistent bin counts");
  const int64_t k = y->val.numel();
  Tensor out({n});
  for (int64_t kk = 0; kk < k; ++kk) {
    const double w = y->val[kk];
    for (int64_t i = 0; i < n; ++i) out[i] += bank_centers[static_cast<size_t>(kk)]->val[i] * w;
  }
  std::vector<ag::Var> parents = bank_centers;
  parents.push_back(y);
  return ag::make_node(std::move(out), std::move(parents), [n, k](ag::Node& self) {
    auto& py = self.parents[static_cast<size_t>(k)];
    for (int64_t kk = 0; kk < k; ++kk) {
      auto& pc = self.parents[static_cast<size_t>(kk)];
      if (pc->requires_grad) {
        pc->ensure_grad();
        const double w = py->val[kk];
        for (int64_t i = 0; i < n; ++i) pc->grad[i] += w * self.grad[i];
      }
      if (py->requires_grad) {
        py->ensure_grad();
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i) s += pc->val[i] * self.grad[i];
        py->grad[kk] += s;
      }
    }
  });
}

}  // namespace vbd::domains
