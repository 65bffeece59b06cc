#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vbdepth/config.hpp"
#include "vbdepth/datakit.hpp"
#include "vbdepth/evalmetrics.hpp"
#include "vbdepth/model.hpp"

namespace vbd::trainer {

struct EpochLog {
  int64_t epoch = 0;
  double lr = 0.0;
  double train_pixel = 0.0, train_chamfer = 0.0, train_ce = 0.0, train_total = 0.0;
  double val_total = 0.0;
  double val_rd_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double final_train_loss = 0.0;
};

datakit::SyntheticDataset dataset_from_config(const config::RunConfig& cfg);

// Seeded run over the synthetic dataset: per-batch gradient accumulation,
// Adam with linear lr decay, per-epoch validation appended to a structured
// log. Saves a resumable checkpoint each epoch; resume continues epoch
// numbering. Aborts on non-finite loss.
TrainResult train(const config::RunConfig& cfg, const std::string& checkpoint_out,
                  const std::string& log_path, const std::string& resume_from = "");

struct RdRow {
  int rd = 0;
  evalmetrics::MetricRecord rec;
};

struct EvalReport {
  evalmetrics::MetricRecord overall;
  std::vector<RdRow> per_rd;  // only RDs that occur in the split
  double rd_accuracy = 0.0;
  int64_t frames = 0;
};

// Full protocol: align, mirror-averaged prediction, inverse alignment back to
// the source frame, metrics against the source ground truth capped at the
// sample's max range. Pixel pools aggregate per true RD label.
EvalReport evaluate_split(const model::DepthModel& m, const config::RunConfig& cfg,
                          const datakit::SyntheticDataset& ds,
                          const std::vector<int64_t>& indices);

}  // namespace vbd::trainer
