#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace vbd::kernels {

// Hot numeric kernels. Each has a serial reference implementation and an
// OpenMP-parallel one; the unprefixed entry point dispatches on the global
// parallel switch. Tests assert the two variants agree and the bench target
// times them against each other.

bool parallel_enabled();
void set_parallel_enabled(bool on);
int thread_count();
void set_thread_count(int n);  // n <= 1 implies serial dispatch

// C[M,N] (+)= A[M,K] * B[K,N]; accumulate=false overwrites C.
void matmul_serial(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                   bool accumulate);
void matmul_omp(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                bool accumulate);
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
            bool accumulate = false);

// C[M,N] (+)= A^T[M,K] * B[K,N] with A stored [K,M].
void matmul_at(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate = false);
// C[M,N] (+)= A[M,K] * B^T[K,N] with B stored [N,K].
void matmul_bt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
               bool accumulate = false);

// Bi-directional Chamfer between a center vector and a depth sample set.
// Returns the loss; if nn_centers / nn_depths are non-null they receive the
// argmin index per depth (into centers) and per center (into depths), with
// ties resolved to the smallest index.
double chamfer_serial(const double* centers, int64_t n_centers, const double* depths,
                      int64_t n_depths, int* nn_centers, int* nn_depths);
double chamfer_omp(const double* centers, int64_t n_centers, const double* depths,
                   int64_t n_depths, int* nn_centers, int* nn_depths);
double chamfer(const double* centers, int64_t n_centers, const double* depths, int64_t n_depths,
               int* nn_centers = nullptr, int* nn_depths = nullptr);

// Per-row softmax over `cols` entries, numerically stabilized.
void softmax_rows_serial(const double* in, double* out, int64_t rows, int64_t cols);
void softmax_rows_omp(const double* in, double* out, int64_t rows, int64_t cols);
void softmax_rows(const double* in, double* out, int64_t rows, int64_t cols);

// Depth-metric accumulator over jointly valid pixels: returns
// {count, sum_abs_rel, sum_sq_err, sum_abs_log10, d1, d2, d3} in `acc[7]`.
void metric_accum_serial(const double* pred, const double* gt, const unsigned char* valid,
                         int64_t n, double acc[7]);
void metric_accum_omp(const double* pred, const double* gt, const unsigned char* valid, int64_t n,
                      double acc[7]);
void metric_accum(const double* pred, const double* gt, const unsigned char* valid, int64_t n,
                  double acc[7]);

}  // namespace vbd::kernels
