#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vbdepth/tensor.hpp"

namespace vbd::ag {

// Minimal reverse-mode autodiff. A forward pass builds a graph of shared
// nodes; backward() runs the recorded closures in reverse topological order.
// Everything is double precision so analytic gradients can be checked against
// central finite differences directly.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // lazily allocated, same shape as val
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.numel() == 0) grad = Tensor(val.shape());
  }
};

Var constant(Tensor v);
Var param(Tensor v);  // requires_grad = true
Var make_node(Tensor v, std::vector<Var> parents, std::function<void(Node&)> bw);

// Seeds root->grad with 1 (root must be scalar) and propagates.
void backward(const Var& root);

inline bool any_grad(const std::vector<Var>& vs) {
  for (const auto& v : vs)
    if (v && v->requires_grad) return true;
  return false;
}

// --- elementwise / scalar ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var gelu(const Var& a);

// --- reductions / shaping ---
Var sum(const Var& a);
Var mean(const Var& a);
Var reshape(const Var& a, std::vector<int64_t> shape);
Var transpose2d(const Var& a);
Var slice_cols(const Var& a, int64_t from, int64_t to);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, int64_t from, int64_t to);
// concat along channel axis of (C,H,W) tensors
Var concat_channels(const std::vector<Var>& parts);

// --- linear algebra ---
Var matmul(const Var& a, const Var& b);                       // [M,K]x[K,N]
Var linear(const Var& x, const Var& w, const Var& b);         // x[M,K], w[N,K], b[N] -> [M,N]
Var softmax_rows(const Var& a);                               // over last dim of [R,C]
Var layernorm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// --- conv / spatial, layout (C,H,W) ---
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var softmax_channels(const Var& x);                           // per-pixel over C
Var upsample_bilinear(const Var& x, int64_t out_h, int64_t out_w);
Var upsample_nearest(const Var& x, int64_t out_h, int64_t out_w);

// Per-pixel convex combination of bin centers: probs (N,H,W), centers (N) -> (H,W).
Var combine_depth(const Var& probs, const Var& centers);

// Masked scale-invariant log loss; gt and valid are constants.
Var silog_loss(const Var& pred, const Tensor& gt, const std::vector<unsigned char>& valid,
               double alpha, double lambda, double clamp_min);

// Cross entropy from logits (length-K vector), target index in [0,K).
Var cross_entropy_logits(const Var& logits, int target);

}  // namespace vbd::ag
