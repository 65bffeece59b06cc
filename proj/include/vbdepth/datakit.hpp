#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vbdepth/bincore.hpp"
#include "vbdepth/domains.hpp"
#include "vbdepth/fovalign.hpp"

namespace vbd::datakit {

struct SampleMeta {
  std::string dataset_id = "synth";
  int64_t frame_id = 0;
  bool indoor_flag = false;
  double max_range = 80.0;
};

struct DepthSample {
  fovalign::Image rgb;
  bincore::DepthMap depth;  // meters; validity excludes zeros and > max_range
  fovalign::CameraIntrinsics intrinsics;
  SampleMeta meta;
};

struct SynthConfig {
  uint64_t seed = 0;
  int rd_index = 0;  // 1..K; 0 means mixed, resolved per sample by make_dataset
  int shape_count_min = 2, shape_count_max = 6;
  domains::RangeDomainSet range_set = domains::partition_range(0.0, 80.0, 4);
  double texture_freq = 3.0;
  int64_t image_h = 32, image_w = 32;
  double fx_jitter = 0.05;     // fractional jitter around the nominal focal length
  double dropout_prob = 0.2;   // chance of one invalid rectangle per sample
};

// Deterministic procedural RGB-D scene. The depth field is a background ramp
// toward the RD upper bound plus nearer boxes and ellipses; color encodes
// depth through a hue ramp modulated by a seeded texture, so appearance
// determines depth by construction. Identical configs give identical bytes.
DepthSample synth_scene(const SynthConfig& cfg);

// Recovers the depth a synth pixel encodes, used by learnability checks.
double synth_depth_from_rgb(uint8_t r, uint8_t g, uint8_t b, double z_max);

struct SyntheticDataset {
  SynthConfig base;
  std::vector<uint64_t> seeds;      // per-sample generator seeds
  std::vector<int> rd;              // per-sample RD index, 1..K
  std::vector<int64_t> train_idx, test_idx;
  DepthSample sample(int64_t index) const;
  int64_t size() const { return static_cast<int64_t>(seeds.size()); }
};

// Seeded ordered sample source with per-RD proportions following rd_mix and a
// deterministic 90/10 train/test split by seed hash.
SyntheticDataset make_dataset(const SynthConfig& base, int64_t count,
                              const std::vector<double>& rd_mix);

fovalign::Image hflip_image(const fovalign::Image& img);
bincore::DepthMap hflip_depth(const bincore::DepthMap& d);

// Mirrors the whole sample, including the principal point.
DepthSample hflip_sample(const DepthSample& s);

// Seeded horizontal flip (p=0.5) plus brightness/contrast jitter (within
// ±10%). Depth is never touched; geometric scaling would corrupt metric depth.
DepthSample augment(const DepthSample& sample, uint64_t seed);

// Directory layout: rgb/<id>.png, depth/<id>.png, intrinsics/<id>.json with
// keys fx, fy, cx, cy, depth_scale, max_range, indoor_flag.
DepthSample load_rgbd_sample(const std::string& image_path, const std::string& depth_path,
                             const std::string& intrinsics_path);
void save_rgbd_sample(const std::string& dir, const std::string& id, const DepthSample& sample,
                      double depth_scale = 2e-3);

// SplitMix64 stream hash, the seed derivation used across the data pipeline.
uint64_t hash_seed(uint64_t base, uint64_t index);

}  // namespace vbd::datakit
