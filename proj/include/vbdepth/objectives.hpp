#pragma once

#include <cstdint>
#include <vector>

#include "vbdepth/bincore.hpp"
#include "vbdepth/domains.hpp"
#include "vbdepth/model.hpp"

namespace vbd::objectives {

constexpr double kSilogAlpha = 10.0;
constexpr double kSilogLambda = 0.85;
constexpr double kDepthClampMin = 1e-3;

struct LossWeights {
  double pixel = 1.0;
  double chamfer = 0.1;
  double domain_ce = 0.1;
};

struct LossBreakdown {
  double pixel = 0.0;
  double chamfer = 0.0;
  double domain_ce = 0.0;
  double total = 0.0;
  LossWeights weights;
};

// Scale-invariant log loss over jointly valid pixels; pred clamped to the
// depth floor before the log.
double pixel_depth_loss(const bincore::DepthMap& pred, const bincore::DepthMap& gt,
                        double alpha = kSilogAlpha, double lambda = kSilogLambda);
ag::Var ag_pixel_depth_loss(const ag::Var& pred, const bincore::DepthMap& gt,
                            double alpha = kSilogAlpha, double lambda = kSilogLambda);

// Validity-aware nearest downsampling: each target pixel takes the valid
// source pixel closest to its footprint center, invalid when none exists.
bincore::DepthMap downsample_gt(const bincore::DepthMap& gt, int64_t h, int64_t w);

// Sum of per-stage pixel losses with weights (1/16, 1/8, 1/4, 1/2, 1);
// stages whose downsampled ground truth has no valid pixel are skipped.
ag::Var ag_hierarchical_loss(const std::vector<ag::Var>& stage_depths,
                             const bincore::DepthMap& gt);

// Cross entropy -ln(y_label) for the 1-based RD label.
double rd_classification_loss(const domains::DomainProbability& y, int label);

struct TotalLoss {
  ag::Var total;
  LossBreakdown breakdown;
};

// total = w.pixel * hierarchical + w.chamfer * chamfer(fused centers, gt
// depths) + w.domain_ce * CE(domain logits, label)
TotalLoss total_loss(const model::PredictionBundle& bundle, const bincore::DepthMap& gt,
                     int label, LossWeights w = {}, int64_t chamfer_cap = 10000,
                     uint64_t chamfer_seed = 0);

}  // namespace vbd::objectives
