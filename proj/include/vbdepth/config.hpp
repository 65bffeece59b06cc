#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vbdepth/domains.hpp"
#include "vbdepth/fovalign.hpp"
#include "vbdepth/model.hpp"
#include "vbdepth/objectives.hpp"

namespace vbd::config {

// Flat key=value run configuration. Parsing rejects unknown keys and
// out-of-range values; serialization emits a canonical key order so
// serialize(parse(x)) is a fixed point.
struct RunConfig {
  // architecture
  int64_t n_bins = 256;
  int k_domains = 4;
  int64_t base_channels = 32;
  std::vector<int> pst_patch_sizes = {1, 2, 4};
  int pst_depth = 2;
  int pst_heads = 4;
  int64_t pst_dim = 256;
  std::string head_variant = "shared_ffn";
  bool width_based_bins = false;
  // depth range and partition
  double z_min = 0.0;
  double z_max = 80.0;
  std::string partition = "space_increasing";  // or "uniform"
  // preprocessing
  double fov_x_deg = 58.0;
  double fov_y_deg = 45.0;
  int64_t input_w = 564;
  int64_t input_h = 424;
  // optimization
  double lr_start = 2e-5;
  double lr_end = 2e-6;
  int64_t epochs = 20;
  int64_t batch_size = 10;
  double lambda_pixel = 1.0;
  double lambda_chamfer = 0.1;
  double lambda_ce = 0.1;
  int64_t chamfer_cap = 10000;
  // data
  int64_t dataset_count = 2222;  // hash split yields roughly 90/10 train/test
  uint64_t seed = 0;
  int threads = 1;  // 1 keeps runs bit-reproducible

  void validate() const;
  model::ModelConfig model_config() const;
  fovalign::FovSpec fov_spec() const;
  domains::RangeDomainSet range_set() const;
  objectives::LossWeights loss_weights() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

}  // namespace vbd::config
