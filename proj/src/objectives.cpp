#include "vbdepth/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vbd::objectives {

namespace {

const double kStageWeights[5] = {1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 1.0};

Tensor depth_tensor(const bincore::DepthMap& d) {
  Tensor t({d.h, d.w});
  std::copy(d.depth.begin(), d.depth.end(), t.data());
  return t;
}

}  // namespace

ag::Var ag_pixel_depth_loss(const ag::Var& pred, const bincore::DepthMap& gt, double alpha,
                            double lambda) {
  if (pred->val.ndim() != 2 || pred->val.dim(0) != gt.h || pred->val.dim(1) != gt.w)
    throw std::invalid_argument("pixel_depth_loss: pred/gt registration mismatch");
  return ag::silog_loss(pred, depth_tensor(gt), gt.valid, alpha, lambda, kDepthClampMin);
}

double pixel_depth_loss(const bincore::DepthMap& pred, const bincore::DepthMap& gt, double alpha,
                        double lambda) {
  return ag_pixel_depth_loss(ag::constant(depth_tensor(pred)), gt, alpha, lambda)->val[0];
}

bincore::DepthMap downsample_gt(const bincore::DepthMap& gt, int64_t h, int64_t w) {
  bincore::DepthMap out(h, w, 0.0, false);
  const double sy = static_cast<double>(gt.h) / static_cast<double>(h);
  const double sx = static_cast<double>(gt.w) / static_cast<double>(w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double cy = (static_cast<double>(y) + 0.5) * sy - 0.5;
      const double cx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(
                                                 static_cast<double>(y) * sy)),
                                             0, gt.h - 1);
      const int64_t y1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil(
                                                 static_cast<double>(y + 1) * sy)) -
                                                 1,
                                             0, gt.h - 1);
      const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(
                                                 static_cast<double>(x) * sx)),
                                             0, gt.w - 1);
      const int64_t x1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil(
                                                 static_cast<double>(x + 1) * sx)) -
                                                 1,
                                             0, gt.w - 1);
      double best = 1e300;
      for (int64_t yy = y0; yy <= y1; ++yy)
        for (int64_t xx = x0; xx <= x1; ++xx) {
          if (!gt.is_valid(yy, xx)) continue;
          const double d2 = (static_cast<double>(yy) - cy) * (static_cast<double>(yy) - cy) +
                            (static_cast<double>(xx) - cx) * (static_cast<double>(xx) - cx);
          if (d2 < best) {
            best = d2;
            out.at(y, x) = gt.at(yy, xx);
            out.valid[static_cast<size_t>(y * w + x)] = 1;
          }
        }
    }
  return out;
}

ag::Var ag_hierarchical_loss(const std::vector<ag::Var>& stage_depths,
                             const bincore::DepthMap& gt) {
  if (stage_depths.size() != 5)
    throw std::invalid_argument("hierarchical_loss: expects 5 stage depths");
  ag::Var total;
  for (size_t s = 0; s < 5; ++s) {
    const auto& d = stage_depths[s];
    bincore::DepthMap gts = downsample_gt(gt, d->val.dim(0), d->val.dim(1));
    bool any = false;
    for (auto v : gts.valid)
      if (v) {
        any = true;
        break;
      }
    if (!any) continue;
    ag::Var term = ag::scale(ag_pixel_depth_loss(d, gts), kStageWeights[s]);
    total = total ? ag::add(total, term) : term;
  }
  if (!total) throw std::invalid_argument("hierarchical_loss: no valid pixels at any stage");
  return total;
}

double rd_classification_loss(const domains::DomainProbability& y, int label) {
  if (label < 1 || label > static_cast<int>(y.y.size()))
    throw std::invalid_argument("rd_classification_loss: label out of range");
  const double p = std::max(y.y[static_cast<size_t>(label - 1)], 1e-300);
  return -std::log(p);
}

TotalLoss total_loss(const model::PredictionBundle& bundle, const bincore::DepthMap& gt,
                     int label, LossWeights w, int64_t chamfer_cap, uint64_t chamfer_seed) {
  if (label < 1 || label > static_cast<int>(bundle.domain_probs.y.size()))
    throw std::invalid_argument("total_loss: label out of range");

  ag::Var pixel = ag_hierarchical_loss(bundle.stage_depths, gt);
  const std::vector<double> depths =
      bincore::subsample_depths(gt.valid_depths(), chamfer_cap, chamfer_seed);
  if (depths.empty()) throw std::invalid_argument("total_loss: no valid ground-truth depths");
  ag::Var chamfer = bincore::ag_chamfer_loss(bundle.fused_centers_var, depths);
  ag::Var ce = ag::cross_entropy_logits(
      ag::reshape(bundle.domain_logits, {bundle.domain_logits->val.numel()}), label - 1);

  ag::Var total = ag::add(ag::add(ag::scale(pixel, w.pixel), ag::scale(chamfer, w.chamfer)),
                          ag::scale(ce, w.domain_ce));
  TotalLoss out;
  out.total = total;
  out.breakdown.pixel = pixel->val[0];
  out.breakdown.chamfer = chamfer->val[0];
  out.breakdown.domain_ce = ce->val[0];
  out.breakdown.total = total->val[0];
  out.breakdown.weights = w;
  return out;
}

}  // namespace vbd::objectives
