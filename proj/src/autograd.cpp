#include "vbdepth/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

#include "vbdepth/kernels.hpp"

namespace vbd::ag {

Var constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  return n;
}

Var param(Tensor v) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->requires_grad = true;
  n->ensure_grad();
  return n;
}

Var make_node(Tensor v, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->requires_grad = any_grad(parents);
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  return n;
}

void backward(const Var& root) {
  if (!root) throw std::invalid_argument("backward: null root");
  if (root->val.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
  if (!root->requires_grad) return;

  // iterative post-order DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

namespace {
void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->val.same_shape(b->val))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                Tensor::shape_str(a->val.shape()) + " vs " +
                                Tensor::shape_str(b->val.shape()));
}
}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) pa->grad[i] += self.grad[i] * pb->val[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) pb->grad[i] += self.grad[i] * pa->val[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return make_node(std::move(out), {a}, [s](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += s * self.grad[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
  return make_node(std::move(out), {a}, [](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += self.grad[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(0.0, out[i]);
  return make_node(std::move(out), {a}, [](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      if (p->val[i] > 0.0) p->grad[i] += self.grad[i];
  });
}

Var gelu(const Var& a) {
  Tensor out = a->val;
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double x = out[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
  }
  return make_node(std::move(out), {a}, [](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      const double x = p->val[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
      p->grad[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a->val.numel(); ++i) s += a->val[i];
  return make_node(Tensor::scalar(s), {a}, [](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const double g = self.grad[0];
    for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g;
  });
}

Var mean(const Var& a) {
  const int64_t n = a->val.numel();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += a->val[i];
  return make_node(Tensor::scalar(s / static_cast<double>(n)), {a}, [n](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g;
  });
}

Var reshape(const Var& a, std::vector<int64_t> shape) {
  Tensor out = a->val.reshaped(std::move(shape));
  return make_node(std::move(out), {a}, [](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += self.grad[i];
  });
}

Var transpose2d(const Var& a) {
  if (a->val.ndim() != 2) throw std::invalid_argument("transpose2d: expects 2-D");
  const int64_t r = a->val.dim(0), c = a->val.dim(1);
  Tensor out({c, r});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.at2(j, i) = a->val.at2(i, j);
  return make_node(std::move(out), {a}, [r, c](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) p->grad[i * c + j] += self.grad.at2(j, i);
  });
}

Var slice_cols(const Var& a, int64_t from, int64_t to) {
  if (a->val.ndim() != 2) throw std::invalid_argument("slice_cols: expects 2-D");
  const int64_t r = a->val.dim(0), c = a->val.dim(1);
  if (from < 0 || to > c || from >= to) throw std::invalid_argument("slice_cols: bad range");
  Tensor out({r, to - from});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = from; j < to; ++j) out.at2(i, j - from) = a->val.at2(i, j);
  return make_node(std::move(out), {a}, [r, c, from, to](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = from; j < to; ++j) p->grad[i * c + j] += self.grad.at2(i, j - from);
  });
}

Var slice_rows(const Var& a, int64_t from, int64_t to) {
  if (a->val.ndim() != 2) throw std::invalid_argument("slice_rows: expects 2-D");
  const int64_t r = a->val.dim(0), c = a->val.dim(1);
  if (from < 0 || to > r || from >= to) throw std::invalid_argument("slice_rows: bad range");
  Tensor out({to - from, c});
  std::memcpy(out.data(), a->val.data() + from * c,
              sizeof(double) * static_cast<size_t>((to - from) * c));
  return make_node(std::move(out), {a}, [c, from](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) p->grad[from * c + i] += self.grad[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int64_t r = parts[0]->val.dim(0);
  int64_t c = 0;
  for (const auto& p : parts) {
    if (p->val.ndim() != 2 || p->val.dim(0) != r)
      throw std::invalid_argument("concat_cols: incompatible shapes");
    c += p->val.dim(1);
  }
  Tensor out({r, c});
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t pc = p->val.dim(1);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < pc; ++j) out.at2(i, off + j) = p->val.at2(i, j);
    off += pc;
  }
  return make_node(std::move(out), parts, [r, c](Node& self) {
    int64_t off = 0;
    for (auto& p : self.parents) {
      const int64_t pc = p->val.dim(1);
      if (p->requires_grad) {
        p->ensure_grad();
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < pc; ++j) p->grad[i * pc + j] += self.grad[i * c + off + j];
      }
      off += pc;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const int64_t c = parts[0]->val.dim(1);
  int64_t r = 0;
  for (const auto& p : parts) {
    if (p->val.ndim() != 2 || p->val.dim(1) != c)
      throw std::invalid_argument("concat_rows: incompatible shapes");
    r += p->val.dim(0);
  }
  Tensor out({r, c});
  int64_t off = 0;
  for (const auto& p : parts) {
    std::memcpy(out.data() + off, p->val.data(), sizeof(double) * p->val.numel());
    off += p->val.numel();
  }
  return make_node(std::move(out), parts, [](Node& self) {
    int64_t off = 0;
    for (auto& p : self.parents) {
      if (p->requires_grad) {
        p->ensure_grad();
        for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += self.grad[off + i];
      }
      off += p->val.numel();
    }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: empty");
  const int64_t h = parts[0]->val.dim(1), w = parts[0]->val.dim(2);
  int64_t c = 0;
  for (const auto& p : parts) {
    if (p->val.ndim() != 3 || p->val.dim(1) != h || p->val.dim(2) != w)
      throw std::invalid_argument("concat_channels: incompatible shapes");
    c += p->val.dim(0);
  }
  Tensor out({c, h, w});
  int64_t off = 0;
  for (const auto& p : parts) {
    std::memcpy(out.data() + off, p->val.data(), sizeof(double) * p->val.numel());
    off += p->val.numel();
  }
  return make_node(std::move(out), parts, [](Node& self) {
    int64_t off = 0;
    for (auto& p : self.parents) {
      if (p->requires_grad) {
        p->ensure_grad();
        for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += self.grad[off + i];
      }
      off += p->val.numel();
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a->val.ndim() != 2 || b->val.ndim() != 2 || a->val.dim(1) != b->val.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes");
  const int64_t m = a->val.dim(0), k = a->val.dim(1), n = b->val.dim(1);
  Tensor out({m, n});
  kernels::matmul(a->val.data(), b->val.data(), out.data(), m, k, n);
  return make_node(std::move(out), {a, b}, [m, k, n](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      // dA = dC * B^T  (B stored [K,N])
      kernels::matmul_bt(self.grad.data(), pb->val.data(), pa->grad.data(), m, n, k, true);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      // dB = A^T * dC  (A stored [M,K])
      kernels::matmul_at(pa->val.data(), self.grad.data(), pb->grad.data(), k, m, n, true);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x->val.ndim() != 2 || w->val.ndim() != 2 || x->val.dim(1) != w->val.dim(1))
    throw std::invalid_argument("linear: incompatible shapes");
  const int64_t m = x->val.dim(0), k = x->val.dim(1), n = w->val.dim(0);
  if (b->val.numel() != n) throw std::invalid_argument("linear: bad bias");
  Tensor out({m, n});
  kernels::matmul_bt(x->val.data(), w->val.data(), out.data(), m, k, n);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at2(i, j) += b->val[j];
  return make_node(std::move(out), {x, w, b}, [m, k, n](Node& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    if (px->requires_grad) {
      px->ensure_grad();
      // dX = dY * W  (dY [M,N], W [N,K])
      kernels::matmul(self.grad.data(), pw->val.data(), px->grad.data(), m, n, k, true);
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      // dW = dY^T * X (dY stored [M,N])
      kernels::matmul_at(self.grad.data(), px->val.data(), pw->grad.data(), n, m, k, true);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) pb->grad[j] += self.grad.at2(i, j);
    }
  });
}

Var softmax_rows(const Var& a) {
  if (a->val.ndim() != 2) throw std::invalid_argument("softmax_rows: expects 2-D");
  const int64_t r = a->val.dim(0), c = a->val.dim(1);
  Tensor out({r, c});
  kernels::softmax_rows(a->val.data(), out.data(), r, c);
  return make_node(std::move(out), {a}, [r, c](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t i = 0; i < r; ++i) {
      const double* y = self.val.data() + i * c;
      const double* dy = self.grad.data() + i * c;
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j) dot += y[j] * dy[j];
      double* dx = p->grad.data() + i * c;
      for (int64_t j = 0; j < c; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  });
}

Var layernorm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x->val.ndim() != 2) throw std::invalid_argument("layernorm_rows: expects 2-D");
  const int64_t r = x->val.dim(0), c = x->val.dim(1);
  if (gamma->val.numel() != c || beta->val.numel() != c)
    throw std::invalid_argument("layernorm_rows: bad affine shapes");
  Tensor out({r, c});
  Tensor stats({r, 2});  // mean, inv-std per row
  for (int64_t i = 0; i < r; ++i) {
    const double* xr = x->val.data() + i * c;
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    const double istd = 1.0 / std::sqrt(var + eps);
    stats.at2(i, 0) = mu;
    stats.at2(i, 1) = istd;
    for (int64_t j = 0; j < c; ++j)
      out.at2(i, j) = gamma->val[j] * (xr[j] - mu) * istd + beta->val[j];
  }
  return make_node(std::move(out), {x, gamma, beta}, [r, c, stats](Node& self) {
    auto& px = self.parents[0];
    auto& pg = self.parents[1];
    auto& pb = self.parents[2];
    for (int64_t i = 0; i < r; ++i) {
      const double mu = stats.at2(i, 0), istd = stats.at2(i, 1);
      const double* xr = px->val.data() + i * c;
      const double* dy = self.grad.data() + i * c;
      if (pg->requires_grad || pb->requires_grad) {
        pg->ensure_grad();
        pb->ensure_grad();
        for (int64_t j = 0; j < c; ++j) {
          pg->grad[j] += dy[j] * (xr[j] - mu) * istd;
          pb->grad[j] += dy[j];
        }
      }
      if (px->requires_grad) {
        px->ensure_grad();
        double sum_dh = 0.0, sum_dh_xhat = 0.0;
        std::vector<double> dh(static_cast<size_t>(c));
        for (int64_t j = 0; j < c; ++j) {
          dh[static_cast<size_t>(j)] = dy[j] * pg->val[j];
          const double xhat = (xr[j] - mu) * istd;
          sum_dh += dh[static_cast<size_t>(j)];
          sum_dh_xhat += dh[static_cast<size_t>(j)] * xhat;
        }
        double* dx = px->grad.data() + i * c;
        const double invc = 1.0 / static_cast<double>(c);
        for (int64_t j = 0; j < c; ++j) {
          const double xhat = (xr[j] - mu) * istd;
          dx[j] += istd * (dh[static_cast<size_t>(j)] - invc * sum_dh - invc * xhat * sum_dh_xhat);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// conv2d via im2col

namespace {
void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int64_t oh, int64_t ow,
            Tensor& col) {
  const int64_t ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  double* cp = col.data();
  for (int64_t c = 0; c < ci; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx)
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            *cp++ = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? x.at3(c, iy, ix) : 0.0;
          }
        }
}

void col2im_accum(const Tensor& col, int kh, int kw, int stride, int pad, int64_t oh, int64_t ow,
                  Tensor& dx) {
  const int64_t ci = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
  const double* cp = col.data();
  for (int64_t c = 0; c < ci; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx)
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) dx.at3(c, iy, ix) += *cp;
            ++cp;
          }
        }
}
}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  if (x->val.ndim() != 3 || w->val.ndim() != 4)
    throw std::invalid_argument("conv2d: expects x (C,H,W), w (Co,Ci,kh,kw)");
  const int64_t ci = x->val.dim(0), h = x->val.dim(1), wd = x->val.dim(2);
  const int64_t co = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3);
  if (w->val.dim(1) != ci) throw std::invalid_argument("conv2d: channel mismatch");
  if (b->val.numel() != co) throw std::invalid_argument("conv2d: bad bias");
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (wd + 2 * pad - kw) / stride + 1;
  if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: output collapses to zero size");
  const int64_t kk = ci * kh * kw;
  Tensor col({kk, oh * ow});
  im2col(x->val, static_cast<int>(kh), static_cast<int>(kw), stride, pad, oh, ow, col);
  Tensor out({co, oh, ow});
  kernels::matmul(w->val.data(), col.data(), out.data(), co, kk, oh * ow);
  for (int64_t c = 0; c < co; ++c) {
    double* o = out.data() + c * oh * ow;
    const double bv = b->val[c];
    for (int64_t i = 0; i < oh * ow; ++i) o[i] += bv;
  }
  auto col_keep = std::make_shared<Tensor>(std::move(col));
  return make_node(std::move(out), {x, w, b},
                   [col_keep, stride, pad, ci, co, kh, kw, oh, ow, kk](Node& self) {
                     auto& px = self.parents[0];
                     auto& pw = self.parents[1];
                     auto& pb = self.parents[2];
                     const double* dy = self.grad.data();
                     if (pb->requires_grad) {
                       pb->ensure_grad();
                       for (int64_t c = 0; c < co; ++c) {
                         double s = 0.0;
                         for (int64_t i = 0; i < oh * ow; ++i) s += dy[c * oh * ow + i];
                         pb->grad[c] += s;
                       }
                     }
                     if (pw->requires_grad) {
                       pw->ensure_grad();
                       // dW[co,kk] += dY[co,ohw] * col^T (col stored [kk,ohw])
                       kernels::matmul_bt(dy, col_keep->data(), pw->grad.data(), co, oh * ow, kk,
                                          true);
                     }
                     if (px->requires_grad) {
                       px->ensure_grad();
                       // dcol[kk,ohw] = W^T[kk,co] * dY
                       Tensor dcol({kk, oh * ow});
                       kernels::matmul_at(pw->val.data(), dy, dcol.data(), kk, co, oh * ow);
                       col2im_accum(dcol, static_cast<int>(kh), static_cast<int>(kw), stride, pad,
                                    oh, ow, px->grad);
                     }
                   });
}

Var softmax_channels(const Var& x) {
  if (x->val.ndim() != 3) throw std::invalid_argument("softmax_channels: expects (C,H,W)");
  const int64_t c = x->val.dim(0), hw = x->val.dim(1) * x->val.dim(2);
  Tensor out(x->val.shape());
  const double* in = x->val.data();
  double* o = out.data();
  for (int64_t i = 0; i < hw; ++i) {
    double mx = in[i];
    for (int64_t ch = 1; ch < c; ++ch) mx = std::max(mx, in[ch * hw + i]);
    double sum = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) {
      const double e = std::exp(in[ch * hw + i] - mx);
      o[ch * hw + i] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int64_t ch = 0; ch < c; ++ch) o[ch * hw + i] *= inv;
  }
  return make_node(std::move(out), {x}, [c, hw](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const double* y = self.val.data();
    const double* dy = self.grad.data();
    double* dx = p->grad.data();
    for (int64_t i = 0; i < hw; ++i) {
      double dot = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) dot += y[ch * hw + i] * dy[ch * hw + i];
      for (int64_t ch = 0; ch < c; ++ch)
        dx[ch * hw + i] += y[ch * hw + i] * (dy[ch * hw + i] - dot);
    }
  });
}

namespace {
struct LerpPlan {
  std::vector<int64_t> i0, i1;
  std::vector<double> w0, w1;
};

LerpPlan lerp_plan(int64_t in_n, int64_t out_n) {
  LerpPlan p;
  p.i0.resize(static_cast<size_t>(out_n));
  p.i1.resize(static_cast<size_t>(out_n));
  p.w0.resize(static_cast<size_t>(out_n));
  p.w1.resize(static_cast<size_t>(out_n));
  const double s = static_cast<double>(in_n) / static_cast<double>(out_n);
  for (int64_t o = 0; o < out_n; ++o) {
    double src = (static_cast<double>(o) + 0.5) * s - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
    const int64_t lo = static_cast<int64_t>(std::floor(src));
    const int64_t hi = std::min(lo + 1, in_n - 1);
    const double f = src - static_cast<double>(lo);
    p.i0[static_cast<size_t>(o)] = lo;
    p.i1[static_cast<size_t>(o)] = hi;
    p.w0[static_cast<size_t>(o)] = 1.0 - f;
    p.w1[static_cast<size_t>(o)] = f;
  }
  return p;
}
}  // namespace

Var upsample_bilinear(const Var& x, int64_t out_h, int64_t out_w) {
  if (x->val.ndim() != 3) throw std::invalid_argument("upsample_bilinear: expects (C,H,W)");
  const int64_t c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  auto py = lerp_plan(h, out_h);
  auto pxp = lerp_plan(w, out_w);
  Tensor out({c, out_h, out_w});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t oy = 0; oy < out_h; ++oy)
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const auto yi = static_cast<size_t>(oy);
        const auto xi = static_cast<size_t>(ox);
        out.at3(ch, oy, ox) =
            py.w0[yi] * (pxp.w0[xi] * x->val.at3(ch, py.i0[yi], pxp.i0[xi]) +
                         pxp.w1[xi] * x->val.at3(ch, py.i0[yi], pxp.i1[xi])) +
            py.w1[yi] * (pxp.w0[xi] * x->val.at3(ch, py.i1[yi], pxp.i0[xi]) +
                         pxp.w1[xi] * x->val.at3(ch, py.i1[yi], pxp.i1[xi]));
      }
  return make_node(std::move(out), {x}, [c, h, w, out_h, out_w, py, pxp](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t oy = 0; oy < out_h; ++oy)
        for (int64_t ox = 0; ox < out_w; ++ox) {
          const auto yi = static_cast<size_t>(oy);
          const auto xi = static_cast<size_t>(ox);
          const double g = self.grad.at3(ch, oy, ox);
          p->grad[(ch * h + py.i0[yi]) * w + pxp.i0[xi]] += g * py.w0[yi] * pxp.w0[xi];
          p->grad[(ch * h + py.i0[yi]) * w + pxp.i1[xi]] += g * py.w0[yi] * pxp.w1[xi];
          p->grad[(ch * h + py.i1[yi]) * w + pxp.i0[xi]] += g * py.w1[yi] * pxp.w0[xi];
          p->grad[(ch * h + py.i1[yi]) * w + pxp.i1[xi]] += g * py.w1[yi] * pxp.w1[xi];
        }
  });
}

Var upsample_nearest(const Var& x, int64_t out_h, int64_t out_w) {
  if (x->val.ndim() != 3) throw std::invalid_argument("upsample_nearest: expects (C,H,W)");
  const int64_t c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  std::vector<int64_t> ys(static_cast<size_t>(out_h)), xs(static_cast<size_t>(out_w));
  for (int64_t oy = 0; oy < out_h; ++oy)
    ys[static_cast<size_t>(oy)] =
        std::min<int64_t>(h - 1, static_cast<int64_t>((oy + 0.5) * h / out_h));
  for (int64_t ox = 0; ox < out_w; ++ox)
    xs[static_cast<size_t>(ox)] =
        std::min<int64_t>(w - 1, static_cast<int64_t>((ox + 0.5) * w / out_w));
  Tensor out({c, out_h, out_w});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t oy = 0; oy < out_h; ++oy)
      for (int64_t ox = 0; ox < out_w; ++ox)
        out.at3(ch, oy, ox) = x->val.at3(ch, ys[static_cast<size_t>(oy)], xs[static_cast<size_t>(ox)]);
  return make_node(std::move(out), {x}, [c, h, w, out_h, out_w, ys, xs](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t oy = 0; oy < out_h; ++oy)
        for (int64_t ox = 0; ox < out_w; ++ox)
          p->grad[(ch * h + ys[static_cast<size_t>(oy)]) * w + xs[static_cast<size_t>(ox)]] +=
              self.grad.at3(ch, oy, ox);
  });
}

Var combine_depth(const Var& probs, const Var& centers) {
  if (probs->val.ndim() != 3 || centers->val.ndim() != 1)
    throw std::invalid_argument("combine_depth: expects probs (N,H,W), centers (N)");
  const int64_t n = probs->val.dim(0), h = probs->val.dim(1), w = probs->val.dim(2);
  if (centers->val.numel() != n)
    throw std::invalid_argument("combine_depth: channel count does not match centers");
  const int64_t hw = h * w;
  Tensor out({h, w});
  for (int64_t ch = 0; ch < n; ++ch) {
    const double cv = centers->val[ch];
    const double* p = probs->val.data() + ch * hw;
    for (int64_t i = 0; i < hw; ++i) out[i] += cv * p[i];
  }
  return make_node(std::move(out), {probs, centers}, [n, hw](Node& self) {
    auto& pp = self.parents[0];
    auto& pc = self.parents[1];
    const double* dy = self.grad.data();
    if (pp->requires_grad) {
      pp->ensure_grad();
      for (int64_t ch = 0; ch < n; ++ch) {
        const double cv = pc->val[ch];
        double* dp = pp->grad.data() + ch * hw;
        for (int64_t i = 0; i < hw; ++i) dp[i] += cv * dy[i];
      }
    }
    if (pc->requires_grad) {
      pc->ensure_grad();
      for (int64_t ch = 0; ch < n; ++ch) {
        const double* p = pp->val.data() + ch * hw;
        double s = 0.0;
        for (int64_t i = 0; i < hw; ++i) s += p[i] * dy[i];
        pc->grad[ch] += s;
      }
    }
  });
}

Var silog_loss(const Var& pred, const Tensor& gt, const std::vector<unsigned char>& valid,
               double alpha, double lambda, double clamp_min) {
  if (!pred->val.same_shape(gt))
    throw std::invalid_argument("silog_loss: pred/gt shape mismatch");
  const int64_t n = pred->val.numel();
  if (static_cast<int64_t>(valid.size()) != n)
    throw std::invalid_argument("silog_loss: bad validity mask");
  int64_t m = 0;
  double sum_g = 0.0, sum_g2 = 0.0;
  std::vector<double> g(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    if (!valid[static_cast<size_t>(i)]) continue;
    const double p = std::max(pred->val[i], clamp_min);
    g[static_cast<size_t>(i)] = std::log(p) - std::log(gt[i]);
    sum_g += g[static_cast<size_t>(i)];
    sum_g2 += g[static_cast<size_t>(i)] * g[static_cast<size_t>(i)];
    ++m;
  }
  if (m == 0) throw std::invalid_argument("silog_loss: no valid pixels");
  const double inv_m = 1.0 / static_cast<double>(m);
  const double arg = sum_g2 * inv_m - lambda * (sum_g * inv_m) * (sum_g * inv_m);
  const double root = std::sqrt(std::max(arg, 0.0));
  const double loss = alpha * root;
  auto g_keep = std::make_shared<std::vector<double>>(std::move(g));
  auto valid_keep = std::make_shared<std::vector<unsigned char>>(valid);
  return make_node(
      Tensor::scalar(loss), {pred},
      [g_keep, valid_keep, alpha, lambda, clamp_min, root, sum_g, inv_m, n](Node& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        if (root <= 1e-12) return;  // flat at the exact minimum
        const double gscale = self.grad[0] * alpha / (2.0 * root);
        const double mean_g = sum_g * inv_m;
        for (int64_t i = 0; i < n; ++i) {
          if (!(*valid_keep)[static_cast<size_t>(i)]) continue;
          const double pv = p->val[i];
          if (pv < clamp_min) continue;  // clamp region has zero gradient
          const double dgi = 2.0 * inv_m * ((*g_keep)[static_cast<size_t>(i)] - lambda * mean_g);
          p->grad[i] += gscale * dgi / std::max(pv, clamp_min);
        }
      });
}

Var cross_entropy_logits(const Var& logits, int target) {
  if (logits->val.ndim() != 1) throw std::invalid_argument("cross_entropy_logits: expects 1-D");
  const int64_t k = logits->val.numel();
  if (target < 0 || target >= k) throw std::invalid_argument("cross_entropy_logits: bad target");
  double mx = logits->val[0];
  for (int64_t i = 1; i < k; ++i) mx = std::max(mx, logits->val[i]);
  double lse = 0.0;
  for (int64_t i = 0; i < k; ++i) lse += std::exp(logits->val[i] - mx);
  lse = mx + std::log(lse);
  const double loss = lse - logits->val[target];
  return make_node(Tensor::scalar(loss), {logits}, [k, target, lse](Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    const double g = self.grad[0];
    for (int64_t i = 0; i < k; ++i) {
      double soft = std::exp(p->val[i] - lse);
      p->grad[i] += g * (soft - (i == target ? 1.0 : 0.0));
    }
  });
}

}  // namespace vbd::ag
