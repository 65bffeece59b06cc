#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "vbdepth/bincore.hpp"

using namespace vbd;
using namespace vbd::bincore;

TEST_CASE("normalize_widths") {
  auto b = normalize_widths({1, 1, 1, 1});
  for (double v : b.normalized) CHECK(v == doctest::Approx(0.25));
  auto z = normalize_widths({0, 0});
  CHECK(z.normalized[0] == doctest::Approx(0.5));
  CHECK(z.normalized[1] == doctest::Approx(0.5));
  auto u = normalize_widths({3, 1});
  CHECK(u.normalized[0] == doctest::Approx(3.001 / 4.002));
  CHECK(u.normalized[1] == doctest::Approx(1.001 / 4.002));
  CHECK_THROWS(normalize_widths({-1.0, 2.0}));
  CHECK_THROWS(normalize_widths({}));

  // sums to 1, strictly positive, for random inputs
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(0.0, 5.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> raw(1 + rng() % 32);
    for (auto& x : raw) x = d(rng);
    auto nb = normalize_widths(raw);
    double sum = 0;
    for (double v : nb.normalized) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("width_bin_centers") {
  auto c = width_bin_centers(normalize_widths({1, 1, 1, 1}, 1e-12), 0, 8);
  CHECK(c.centers[0] == doctest::Approx(1.0));
  CHECK(c.centers[1] == doctest::Approx(3.0));
  CHECK(c.centers[2] == doctest::Approx(5.0));
  CHECK(c.centers[3] == doctest::Approx(7.0));
  auto single = width_bin_centers(normalize_widths({5.0}, 1e-12), 0, 10);
  CHECK(single.centers[0] == doctest::Approx(5.0));
  auto two = width_bin_centers(normalize_widths({1, 1}, 1e-12), 2, 4);
  CHECK(two.centers[0] == doctest::Approx(2.5));
  CHECK(two.centers[1] == doctest::Approx(3.5));
  CHECK_THROWS(width_bin_centers(normalize_widths({1, 1}), 4, 4));

  // strictly increasing and bounded for random widths
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(0.0, 3.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> raw(2 + rng() % 24);
    for (auto& x : raw) x = d(rng);
    auto cc = width_bin_centers(normalize_widths(raw), 0.5, 12.0);
    for (size_t i = 0; i < cc.centers.size(); ++i) {
      CHECK(cc.centers[i] > 0.5);
      CHECK(cc.centers[i] < 12.0);
      if (i) CHECK(cc.centers[i] > cc.centers[i - 1]);
    }
  }
}

TEST_CASE("variation_bin_centers") {
  auto z = variation_bin_centers({{0, 0, 0}});
  for (double v : z.centers) CHECK(v == doctest::Approx(0.001));
  auto c = variation_bin_centers({{2, 2, -1}});
  CHECK(c.centers[0] == doctest::Approx(1.001));
  CHECK(c.centers[1] == doctest::Approx(3.001));
  CHECK(c.centers[2] == doctest::Approx(3.501));
  auto peak = variation_bin_centers({{2, -2}});
  CHECK(peak.centers[0] == doctest::Approx(1.001));
  CHECK(peak.centers[1] == doctest::Approx(1.001));
  CHECK(c.kind == CenterKind::variation_based);
  CHECK_THROWS(variation_bin_centers({{1.0, std::nan("")}}));
}

TEST_CASE("variation centers: gradient and Jacobian structure") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 1.0);
  const int64_t n = 9;
  Tensor v0({n});
  for (int64_t i = 0; i < n; ++i) v0[i] = d(rng);
  ag::Var v = ag::param(v0);

  // exact Jacobian: dc_i/dv_j = 1 (j<i), 1/2 (j==i), 0 (j>i)
  for (int64_t i = 0; i < n; ++i) {
    v->grad.fill(0.0);
    ag::Var c = bincore::ag_variation_centers(v);
    Tensor pick({n});
    pick[i] = 1.0;
    ag::backward(ag::sum(ag::mul(c, ag::constant(pick))));
    for (int64_t j = 0; j < n; ++j) {
      const double expect = j < i ? 1.0 : (j == i ? 0.5 : 0.0);
      CHECK(v->grad[j] == doctest::Approx(expect));
    }
  }

  // finite-difference check through a scalar head
  auto loss = [&]() {
    ag::Var c = bincore::ag_variation_centers(v);
    return ag::sum(ag::mul(c, c));
  };
  v->grad.fill(0.0);
  ag::backward(loss());
  for (int64_t j = 0; j < n; ++j) {
    const double keep = v->val[j];
    v->val[j] = keep + 1e-5;
    const double up = loss()->val[0];
    v->val[j] = keep - 1e-5;
    const double dn = loss()->val[0];
    v->val[j] = keep;
    const double fd = (up - dn) / 2e-5;
    CHECK(std::abs(fd - v->grad[j]) / std::max(std::abs(fd), 1e-9) < 1e-4);
  }
}

TEST_CASE("width centers: forward matches the two-step pipeline, gradient matches FD") {
  Tensor r0({4}, {1.0, 1.0, 1.0, 1.0});
  ag::Var r = ag::param(r0);
  ag::Var c = bincore::ag_width_centers(r, 0.0, 8.0, 1e-12);
  CHECK(c->val[0] == doctest::Approx(1.0));
  CHECK(c->val[3] == doctest::Approx(7.0));

  std::mt19937_64 rng(7);
  std::normal_distribution<double> d(0.5, 1.0);
  const int64_t n = 7;
  Tensor v0({n});
  for (int64_t i = 0; i < n; ++i) v0[i] = d(rng);
  ag::Var v = ag::param(v0);
  auto loss = [&]() {
    ag::Var cc = bincore::ag_width_centers(v, 1.0, 9.0);
    return ag::sum(ag::mul(cc, cc));
  };
  ag::backward(loss());
  for (int64_t j = 0; j < n; ++j) {
    if (std::abs(v->val[j]) < 1e-3) continue;  // skip the relu kink
    const double keep = v->val[j];
    v->val[j] = keep + 1e-6;
    const double up = loss()->val[0];
    v->val[j] = keep - 1e-6;
    const double dn = loss()->val[0];
    v->val[j] = keep;
    const double fd = (up - dn) / 2e-6;
    CHECK(std::abs(fd - v->grad[j]) / std::max(std::abs(fd), 1e-9) < 1e-4);
  }
  // monotone increasing within range regardless of sign of the raw input
  Tensor chk = bincore::ag_width_centers(v, 1.0, 9.0)->val;
  for (int64_t i = 0; i < n; ++i) {
    CHECK(chk[i] > 1.0);
    CHECK(chk[i] < 9.0);
    if (i) CHECK(chk[i] > chk[i - 1]);
  }
}

TEST_CASE("combine_depth") {
  ProbabilityVolume p;
  p.probs = Tensor({4, 1, 1}, {0.25, 0.25, 0.25, 0.25});
  BinCenterVector c{{1, 3, 5, 7}, CenterKind::width_based};
  auto d = combine_depth(p, c);
  CHECK(d.at(0, 0) == doctest::Approx(4.0));
  CHECK(d.is_valid(0, 0));

  ProbabilityVolume onehot;
  onehot.probs = Tensor({4, 1, 1}, {0, 0, 1, 0});
  CHECK(combine_depth(onehot, c).at(0, 0) == doctest::Approx(5.0));

  ProbabilityVolume two;
  two.probs = Tensor({2, 1, 1}, {0.5, 0.5});
  BinCenterVector c2{{2, 6}, CenterKind::width_based};
  CHECK(combine_depth(two, c2).at(0, 0) == doctest::Approx(4.0));

  CHECK_THROWS(combine_depth(two, c));

  // convexity bound over random distributions
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor probs({4, 3, 3});
  for (int64_t i = 0; i < 9; ++i) {
    double sum = 0;
    for (int64_t ch = 0; ch < 4; ++ch) sum += (probs.data()[ch * 9 + i] = u(rng));
    for (int64_t ch = 0; ch < 4; ++ch) probs.data()[ch * 9 + i] /= sum;
  }
  auto dd = combine_depth({probs}, c);
  for (double v : dd.depth) {
    CHECK(v >= 1.0);
    CHECK(v <= 7.0);
  }
}

TEST_CASE("chamfer_bin_loss values and oracle equivalence") {
  CHECK(chamfer_bin_loss({{1, 3}, CenterKind::fused}, {1, 3}) == doctest::Approx(0.0));
  CHECK(chamfer_bin_loss({{1}, CenterKind::fused}, {2}) == doctest::Approx(2.0));
  CHECK(chamfer_bin_loss({{1, 3}, CenterKind::fused}, {2}) == doctest::Approx(3.0));
  CHECK_THROWS(chamfer_bin_loss({{1}, CenterKind::fused}, {}));

  // subsample determinism
  std::vector<double> big(5000);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 40.0);
  for (auto& x : big) x = u(rng);
  const double a = chamfer_bin_loss({{1, 5, 9}, CenterKind::fused}, big, 512, 42);
  const double b = chamfer_bin_loss({{1, 5, 9}, CenterKind::fused}, big, 512, 42);
  CHECK(a == b);
}

TEST_CASE("chamfer gradient matches finite differences away from ties") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int t = 0; t < 20; ++t) {
    const int64_t n = 3 + static_cast<int64_t>(rng() % 6);
    std::vector<double> depths(5 + rng() % 20);
    for (auto& d : depths) d = u(rng);
    Tensor c0({n});
    for (int64_t i = 0; i < n; ++i) c0[i] = u(rng);
    ag::Var c = ag::param(c0);
    auto loss = [&]() { return bincore::ag_chamfer_loss(c, depths); };
    ag::backward(loss());
    for (int64_t j = 0; j < n; ++j) {
      const double keep = c->val[j];
      c->val[j] = keep + 1e-6;
      const double up = loss()->val[0];
      c->val[j] = keep - 1e-6;
      const double dn = loss()->val[0];
      c->val[j] = keep;
      const double fd = (up - dn) / 2e-6;
      const double an = c->grad[j];
      // random instances sit away from ties with probability 1
      CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) < 1e-4);
    }
  }
}

TEST_CASE("peak_bin_index") {
  CHECK(peak_bin_index({{1.001, 3.001, 3.501}, CenterKind::variation_based}) == 3);
  CHECK(peak_bin_index({{1, 2, 3, 4, 5}, CenterKind::width_based}) == 5);
  CHECK(peak_bin_index({{1.001, 1.001}, CenterKind::variation_based}) == 1);
}

TEST_CASE("bin_occupancy_histogram") {
  BinCenterVector c{{1, 2, 3, 4}, CenterKind::fused};
  // single pixel, one-hot on bin 2 (0-based), depth in bucket 0
  ProbabilityVolume p;
  p.probs = Tensor({4, 1, 1}, {0, 0, 1, 0});
  DepthMap gt(1, 1, 0.5);
  auto h = bin_occupancy_histogram(c, p, gt, 3, 10.0);
  CHECK(h.at2(0, 2) == doctest::Approx(1.0));
  CHECK(h.at2(0, 0) == doctest::Approx(0.0));

  // two pixels same bucket, one-hot on bins 1 and 3
  ProbabilityVolume p2;
  p2.probs = Tensor({4, 1, 2});
  p2.probs.at3(1, 0, 0) = 1.0;  // pixel 0 one-hot bin 1
  p2.probs.at3(3, 0, 1) = 1.0;  // pixel 1 one-hot bin 3
  DepthMap gt2(1, 2, 0.5);
  auto h2 = bin_occupancy_histogram(c, p2, gt2, 3, 10.0);
  CHECK(h2.at2(0, 1) == doctest::Approx(0.5));
  CHECK(h2.at2(0, 3) == doctest::Approx(0.5));

  // uniform probabilities give uniform occupied rows
  ProbabilityVolume pu;
  pu.probs = Tensor({4, 2, 2}, 0.25);
  DepthMap gt3(2, 2, 3.0);
  auto h3 = bin_occupancy_histogram(c, pu, gt3, 2, 10.0);
  for (int ch = 0; ch < 4; ++ch) CHECK(h3.at2(0, ch) == doctest::Approx(0.25));

  DepthMap none(2, 2, 0.0, false);
  CHECK_THROWS(bin_occupancy_histogram(c, pu, none, 2));
}

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  CHECK(std::abs(spearman({1, 2, 3, 4, 5, 6, 7, 8}, {1, -1, 2, -2, 3, -3, 4, -4})) < 0.5);
}
