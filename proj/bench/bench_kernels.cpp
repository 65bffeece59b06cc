#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "vbdepth/kernels.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double omp_ms) {
  std::printf("%-14s serial %8.3f ms   omp %8.3f ms   speedup %.2fx\n", name, serial_ms, omp_ms,
              serial_ms / omp_ms);
}

std::vector<double> randu(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

int main() {
  using namespace vbd;
  std::printf("threads available: %d\n", kernels::thread_count());

  {
    const int64_t m = 256, k = 256, n = 256;
    auto a = randu(static_cast<size_t>(m * k), 1);
    auto b = randu(static_cast<size_t>(k * n), 2);
    std::vector<double> c(static_cast<size_t>(m * n));
    report("matmul",
           time_ms([&] { kernels::matmul_serial(a.data(), b.data(), c.data(), m, k, n, false); }, 5),
           time_ms([&] { kernels::matmul_omp(a.data(), b.data(), c.data(), m, k, n, false); }, 5));
  }
  {
    const int64_t nc = 256, nd = 10000;
    auto centers = randu(static_cast<size_t>(nc), 3);
    auto depths = randu(static_cast<size_t>(nd), 4);
    report("chamfer",
           time_ms([&] { kernels::chamfer_serial(centers.data(), nc, depths.data(), nd, nullptr,
                                                 nullptr); }, 20),
           time_ms([&] { kernels::chamfer_omp(centers.data(), nc, depths.data(), nd, nullptr,
                                              nullptr); }, 20));
  }
  {
    const int64_t rows = 20000, cols = 256;
    auto in = randu(static_cast<size_t>(rows * cols), 5);
    std::vector<double> out(in.size());
    report("softmax_rows",
           time_ms([&] { kernels::softmax_rows_serial(in.data(), out.data(), rows, cols); }, 10),
           time_ms([&] { kernels::softmax_rows_omp(in.data(), out.data(), rows, cols); }, 10));
  }
  {
    const int64_t n = 2000000;
    auto pred = randu(static_cast<size_t>(n), 6);
    auto gt = randu(static_cast<size_t>(n), 7);
    std::vector<unsigned char> valid(static_cast<size_t>(n), 1);
    double acc[7];
    report("metric_accum",
           time_ms([&] { kernels::metric_accum_serial(pred.data(), gt.data(), valid.data(), n,
                                                      acc); }, 10),
           time_ms([&] { kernels::metric_accum_omp(pred.data(), gt.data(), valid.data(), n, acc); },
                   10));
  }
  return 0;
}
