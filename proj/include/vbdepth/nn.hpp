#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vbdepth/autograd.hpp"

namespace vbd::nn {

using ag::Var;

// Named parameter registry shared by all layers of one network. Names are
// stable across runs, which is what the checkpoint format keys on.
class ParamStore {
public:
  Var create(const std::string& name, Tensor init);
  Var find(const std::string& name) const;  // throws if missing
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  int64_t total_params() const;
  void zero_grads();

private:
  std::vector<std::pair<std::string, Var>> entries_;
};

using Rng = std::mt19937_64;

Tensor randn(Rng& rng, std::vector<int64_t> shape, double stddev);

struct Conv2d {
  Var w, b;
  int stride = 1, pad = 1;
  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int64_t in_ch, int64_t out_ch, int kernel,
         int stride, int pad, Rng& rng);
  Var operator()(const Var& x) const { return ag::conv2d(x, w, b, stride, pad); }
};

struct Linear {
  Var w, b;
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int64_t in_dim, int64_t out_dim, Rng& rng);
  Var operator()(const Var& x) const { return ag::linear(x, w, b); }
};

struct LayerNorm {
  Var gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int64_t dim);
  Var operator()(const Var& x) const { return ag::layernorm_rows(x, gamma, beta); }
};

// Pre-norm transformer encoder layer over a (T, D) token matrix.
struct TransformerLayer {
  int heads = 4;
  int64_t dim = 0;
  LayerNorm ln1, ln2;
  Linear wq, wk, wv, wo, mlp1, mlp2;
  TransformerLayer() = default;
  TransformerLayer(ParamStore& ps, const std::string& name, int64_t dim, int heads,
                   int64_t mlp_hidden, Rng& rng);
  Var operator()(const Var& tokens) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
public:
  Adam(ParamStore& ps, AdamConfig cfg = {});
  void step(double lr);
  int64_t step_count() const { return t_; }
  // serialized moment state, aligned with ParamStore entry order
  std::vector<Tensor>& moments_m() { return m_; }
  std::vector<Tensor>& moments_v() { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

private:
  ParamStore& ps_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

}  // namespace vbd::nn
