#include "vbdepth/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vbd::kernels {

namespace {
bool g_parallel = true;
int g_threads =
#ifdef _OPENMP
    omp_get_max_threads();
#else
    1;
#endif
}  // namespace

bool parallel_enabled() { return g_parallel && g_threads > 1; }
void set_parallel_enabled(bool on) { g_parallel = on; }
int thread_count() { return g_threads; }
void set_thread_count(int n) {
  g_threads = std::max(1, n);
#ifdef _OPENMP
  omp_set_num_threads(g_threads);
#endif
}

// ---------------------------------------------------------------------------
// matmul

void matmul_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                   bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    if (!accumulate) std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
            bool accumulate) {
  if (parallel_enabled() && m >= 4)
    matmul_omp(a, b, c, m, k, n, accumulate);
  else
    matmul_serial(a, b, c, m, k, n, accumulate);
}

void matmul_at(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
  // A stored [K,M]; C[i,j] = sum_p A[p,i] B[p,j].
  if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(m * n));
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_bt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
  // B stored [N,K]; C[i,j] = sum_p A[i,p] B[j,p].
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      if (accumulate)
        crow[j] += s;
      else
        crow[j] = s;
    }
  }
}

// ---------------------------------------------------------------------------
// chamfer

namespace {
inline void chamfer_nn_depths(const double* centers, int64_t n_centers, const double* depths,
                              int64_t n_depths, int* nn, double& term) {
  term = 0.0;
  for (int64_t j = 0; j < n_centers; ++j) {
    double best = std::numeric_limits<double>::infinity();
    int best_i = 0;
    for (int64_t i = 0; i < n_depths; ++i) {
      const double d = depths[i] - centers[j];
      const double q = d * d;
      if (q < best) {
        best = q;
        best_i = static_cast<int>(i);
      }
    }
    if (nn) nn[j] = best_i;
    term += best;
  }
}
}  // namespace

double chamfer_serial(const double* centers, int64_t n_centers, const double* depths,
                      int64_t n_depths, int* nn_centers, int* nn_depths) {
  double loss = 0.0;
  for (int64_t i = 0; i < n_depths; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (int64_t j = 0; j < n_centers; ++j) {
      const double d = depths[i] - centers[j];
      const double q = d * d;
      if (q < best) {
        best = q;
        best_j = static_cast<int>(j);
      }
    }
    if (nn_centers) nn_centers[i] = best_j;
    loss += best;
  }
  double term2;
  chamfer_nn_depths(centers, n_centers, depths, n_depths, nn_depths, term2);
  return loss + term2;
}

double chamfer_omp(const double* centers, int64_t n_centers, const double* depths,
                   int64_t n_depths, int* nn_centers, int* nn_depths) {
  std::vector<double> per_depth(static_cast<size_t>(n_depths));
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n_depths; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (int64_t j = 0; j < n_centers; ++j) {
      const double d = depths[i] - centers[j];
      const double q = d * d;
      if (q < best) {
        best = q;
        best_j = static_cast<int>(j);
      }
    }
    if (nn_centers) nn_centers[i] = best_j;
    per_depth[static_cast<size_t>(i)] = best;
  }
  double loss = 0.0;  // fixed-order reduction
  for (double v : per_depth) loss += v;
  double term2;
  chamfer_nn_depths(centers, n_centers, depths, n_depths, nn_depths, term2);
  return loss + term2;
}

double chamfer(const double* centers, int64_t n_centers, const double* depths, int64_t n_depths,
               int* nn_centers, int* nn_depths) {
  if (parallel_enabled() && n_depths >= 256)
    return chamfer_omp(centers, n_centers, depths, n_depths, nn_centers, nn_depths);
  return chamfer_serial(centers, n_centers, depths, n_depths, nn_centers, nn_depths);
}

// ---------------------------------------------------------------------------
// softmax

namespace {
inline void softmax_row(const double* in, double* out, int64_t cols) {
  double mx = in[0];
  for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
  double sum = 0.0;
  for (int64_t j = 0; j < cols; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  const double inv = 1.0 / sum;
  for (int64_t j = 0; j < cols; ++j) out[j] *= inv;
}
}  // namespace

void softmax_rows_serial(const double* in, double* out, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) softmax_row(in + r * cols, out + r * cols, cols);
}

void softmax_rows_omp(const double* in, double* out, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) softmax_row(in + r * cols, out + r * cols, cols);
}

void softmax_rows(const double* in, double* out, int64_t rows, int64_t cols) {
  if (parallel_enabled() && rows >= 64)
    softmax_rows_omp(in, out, rows, cols);
  else
    softmax_rows_serial(in, out, rows, cols);
}

// ---------------------------------------------------------------------------
// metric accumulation

namespace {
inline void metric_pixel(double p, double g, double acc[7]) {
  acc[0] += 1.0;
  acc[1] += std::abs(p - g) / g;
  acc[2] += (p - g) * (p - g);
  acc[3] += std::abs(std::log10(p) - std::log10(g));
  const double ratio = std::max(p / g, g / p);
  if (ratio < 1.25) acc[4] += 1.0;
  if (ratio < 1.25 * 1.25) acc[5] += 1.0;
  if (ratio < 1.25 * 1.25 * 1.25) acc[6] += 1.0;
}
}  // namespace

void metric_accum_serial(const double* pred, const double* gt, const unsigned char* valid,
                         int64_t n, double acc[7]) {
  for (int j = 0; j < 7; ++j) acc[j] = 0.0;
  for (int64_t i = 0; i < n; ++i)
    if (valid[i]) metric_pixel(pred[i], gt[i], acc);
}

void metric_accum_omp(const double* pred, const double* gt, const unsigned char* valid, int64_t n,
                      double acc[7]) {
  for (int j = 0; j < 7; ++j) acc[j] = 0.0;
#ifdef _OPENMP
  const int nt = std::max(1, thread_count());
#else
  const int nt = 1;
#endif
  std::vector<double> partial(static_cast<size_t>(nt) * 7, 0.0);
#pragma omp parallel num_threads(nt)
  {
#ifdef _OPENMP
    const int tid = omp_get_thread_num();
#else
    const int tid = 0;
#endif
    double* mine = partial.data() + static_cast<size_t>(tid) * 7;
#pragma omp for schedule(static)
    for (int64_t i = 0; i < n; ++i)
      if (valid[i]) metric_pixel(pred[i], gt[i], mine);
  }
  for (int t = 0; t < nt; ++t)  // combine in thread order for reproducibility
    for (int j = 0; j < 7; ++j) acc[j] += partial[static_cast<size_t>(t) * 7 + j];
}

void metric_accum(const double* pred, const double* gt, const unsigned char* valid, int64_t n,
                  double acc[7]) {
  if (parallel_enabled() && n >= 4096)
    metric_accum_omp(pred, gt, valid, n, acc);
  else
    metric_accum_serial(pred, gt, valid, n, acc);
}

}  // namespace vbd::kernels
