#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vbdepth/bincore.hpp"
#include "vbdepth/domains.hpp"
#include "vbdepth/fovalign.hpp"
#include "vbdepth/nn.hpp"

namespace vbd::model {

enum class HeadVariant { shared_ffn, one_query_k_ffn, k_query_k_ffn };

HeadVariant head_variant_from_string(const std::string& s);
std::string to_string(HeadVariant v);

struct ModelConfig {
  int64_t n_bins = 256;
  int k_domains = 4;
  int64_t base_channels = 32;   // encoder channels scale base*{1,2,4,8,16}
  std::vector<int> pst_patch_sizes = {1, 2, 4};
  int pst_depth = 2;
  int pst_heads = 4;
  int64_t pst_dim = 256;
  int64_t input_h = 424, input_w = 564;
  HeadVariant head_variant = HeadVariant::shared_ffn;
  bool width_based_bins = false;  // ablation: normalized widths instead of variations
  double z_min = 0.0, z_max = 80.0;
  void validate() const;  // throws on invalid field combinations
};

// f[0] is the deepest feature (h/32), f[4] the shallowest (h/2), each (C,h,w).
struct FeaturePyramid {
  std::vector<ag::Var> f;
};

struct QueryBundle {
  std::vector<ag::Var> bin_query_outputs;  // (1, pst_dim) each
  ag::Var domain_query_output;             // (1, pst_dim)
};

struct PredictionBundle {
  std::vector<ag::Var> stage_depths;   // 5 stages, (h_s, w_s), coarse to fine
  ag::Var domain_logits;               // (1, K)
  domains::DomainProbability domain_probs;
  std::vector<ag::Var> bank_vars;      // K differentiable center vectors (N)
  domains::BinBank bin_bank;
  ag::Var fused_centers_var;           // (N)
  bincore::BinCenterVector fused_centers;
  ag::Var finest_probs;                // (N, h/2, w/2) stage-5 probabilities
  ag::Var full_depth_var;              // (input_h, input_w)
  bincore::DepthMap full_depth;
};

// (3,h,w) double tensor in [0,1] from an 8-bit image.
Tensor image_to_tensor(const fovalign::Image& img);

class DepthModel {
public:
  DepthModel(ModelConfig cfg, uint64_t seed);

  FeaturePyramid backbone_forward(const ag::Var& image) const;
  std::pair<ag::Var, QueryBundle> pst_forward(const ag::Var& f1) const;
  std::pair<std::vector<ag::Var>, domains::BinBank> bin_head(const QueryBundle& q) const;
  std::pair<ag::Var, domains::DomainProbability> domain_head(const ag::Var& domain_out) const;
  // Every stage consumes the same fused centers. If finest_probs is given it
  // receives the stage-5 per-pixel probability volume.
  std::vector<ag::Var> hsc_decode(const FeaturePyramid& pyr, const ag::Var& context,
                                  const ag::Var& centers,
                                  ag::Var* finest_probs = nullptr) const;

  PredictionBundle forward(const fovalign::AlignedSample& sample) const;
  bincore::DepthMap predict_with_mirror(const fovalign::AlignedSample& sample) const;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

private:
  ModelConfig cfg_;
  nn::ParamStore ps_;
  struct Layers;
  std::shared_ptr<Layers> layers_;
};

struct TrainState {
  int64_t epoch = 0;
  int64_t adam_step = 0;
  std::vector<Tensor> adam_m, adam_v;
};

// Versioned container: config echo + named tensors (+ optimizer state).
// Loading rebuilds the model and fails loudly on any mismatch.
void save_checkpoint(const std::string& path, const DepthModel& model,
                     const TrainState* state = nullptr);
DepthModel load_checkpoint(const std::string& path, TrainState* state = nullptr);

}  // namespace vbd::model
