#include "vbdepth/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vbd::nn {

Var ParamStore::create(const std::string& name, Tensor init) {
  for (const auto& [n, v] : entries_)
    if (n == name) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  Var v = ag::param(std::move(init));
  entries_.emplace_back(name, v);
  return v;
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  throw std::invalid_argument("ParamStore: unknown parameter " + name);
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& [name, v] : entries_) n += v->val.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, v] : entries_) v->grad.fill(0.0);
}

Tensor randn(Rng& rng, std::vector<int64_t> shape, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
  return t;
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int64_t in_ch, int64_t out_ch, int kernel,
               int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  const double std = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel));
  w = ps.create(name + ".w", randn(rng, {out_ch, in_ch, kernel, kernel}, std));
  b = ps.create(name + ".b", Tensor({out_ch}));
}

Linear::Linear(ParamStore& ps, const std::string& name, int64_t in_dim, int64_t out_dim, Rng& rng) {
  const double std = std::sqrt(1.0 / static_cast<double>(in_dim));
  w = ps.create(name + ".w", randn(rng, {out_dim, in_dim}, std));
  b = ps.create(name + ".b", Tensor({out_dim}));
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int64_t dim) {
  gamma = ps.create(name + ".gamma", Tensor({dim}, 1.0));
  beta = ps.create(name + ".beta", Tensor({dim}));
}

TransformerLayer::TransformerLayer(ParamStore& ps, const std::string& name, int64_t dim_,
                                   int heads_, int64_t mlp_hidden, Rng& rng)
    : heads(heads_), dim(dim_) {
  if (dim % heads != 0) throw std::invalid_argument("TransformerLayer: dim not divisible by heads");
  ln1 = LayerNorm(ps, name + ".ln1", dim);
  ln2 = LayerNorm(ps, name + ".ln2", dim);
  wq = Linear(ps, name + ".wq", dim, dim, rng);
  wk = Linear(ps, name + ".wk", dim, dim, rng);
  wv = Linear(ps, name + ".wv", dim, dim, rng);
  wo = Linear(ps, name + ".wo", dim, dim, rng);
  mlp1 = Linear(ps, name + ".mlp1", dim, mlp_hidden, rng);
  mlp2 = Linear(ps, name + ".mlp2", mlp_hidden, dim, rng);
}

Var TransformerLayer::operator()(const Var& tokens) const {
  const int64_t dh = dim / heads;
  Var x = tokens;
  Var h = ln1(x);
  Var q = wq(h), k = wk(h), v = wv(h);
  std::vector<Var> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int hh = 0; hh < heads; ++hh) {
    Var qh = ag::slice_cols(q, hh * dh, (hh + 1) * dh);
    Var kh = ag::slice_cols(k, hh * dh, (hh + 1) * dh);
    Var vh = ag::slice_cols(v, hh * dh, (hh + 1) * dh);
    Var attn = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose2d(kh)), scl));
    head_outs.push_back(ag::matmul(attn, vh));
  }
  x = ag::add(x, wo(ag::concat_cols(head_outs)));
  Var m = mlp2(ag::gelu(mlp1(ln2(x))));
  return ag::add(x, m);
}

Adam::Adam(ParamStore& ps, AdamConfig cfg) : ps_(ps), cfg_(cfg) {
  for (const auto& [name, v] : ps.entries()) {
    m_.emplace_back(v->val.shape());
    v_.emplace_back(v->val.shape());
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  size_t idx = 0;
  for (auto& [name, p] : const_cast<std::vector<std::pair<std::string, Var>>&>(ps_.entries())) {
    Tensor& m = m_[idx];
    Tensor& v = v_[idx];
    ++idx;
    for (int64_t i = 0; i < p->val.numel(); ++i) {
      const double g = p->grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->val[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  ps_.zero_grads();
}

}  // namespace vbd::nn
