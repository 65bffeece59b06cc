#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "vbdepth/evalmetrics.hpp"

using namespace vbd;
using namespace vbd::evalmetrics;

TEST_CASE("compute_metrics: identity, hand case, strict boundary") {
  bincore::DepthMap gt(2, 2, 3.0);
  auto r = compute_metrics(gt, gt, 80.0);
  CHECK(r.delta1 == 1.0);
  CHECK(r.delta3 == 1.0);
  CHECK(r.rel == 0.0);
  CHECK(r.rmse == 0.0);
  CHECK(r.log10 == 0.0);
  CHECK(r.n_pixels == 4);

  bincore::DepthMap p(1, 3), g(1, 3);
  p.depth = {1, 2, 4};
  g.depth = {1, 2, 2};
  auto h = compute_metrics(p, g, 80.0);
  CHECK(h.delta1 == doctest::Approx(2.0 / 3.0));
  CHECK(h.rel == doctest::Approx(1.0 / 3.0));
  CHECK(h.rmse == doctest::Approx(2.0 / std::sqrt(3.0)));
  CHECK(h.log10 == doctest::Approx(std::log10(2.0) / 3.0));

  // exactly on the 1.25 boundary fails delta1, passes delta2
  bincore::DepthMap pb(1, 1, 1.25), gb(1, 1, 1.0);
  auto rb = compute_metrics(pb, gb, 80.0);
  CHECK(rb.delta1 == 0.0);
  CHECK(rb.delta2 == 1.0);

  // cap and validity produce errors when nothing remains
  bincore::DepthMap none(2, 2, 1.0, false);
  CHECK_THROWS(compute_metrics(gt, none, 80.0));
  CHECK_THROWS(compute_metrics(gt, gt, 0.5));
  bincore::DepthMap wrong(3, 3, 1.0);
  CHECK_THROWS(compute_metrics(wrong, gt, 80.0));
}

TEST_CASE("compute_metrics agrees with a naive pixel loop to 1e-9") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.2, 20.0);
  for (int t = 0; t < 30; ++t) {
    bincore::DepthMap pred(8, 8), gt(8, 8);
    for (int64_t i = 0; i < 64; ++i) {
      pred.depth[static_cast<size_t>(i)] = u(rng);
      gt.depth[static_cast<size_t>(i)] = u(rng);
      gt.valid[static_cast<size_t>(i)] = rng() % 4 != 0;
    }
    const double cap = 15.0;
    auto r = compute_metrics(pred, gt, cap);

    double n = 0, rel = 0, sq = 0, l10 = 0, d1 = 0, d2 = 0, d3 = 0;
    for (int64_t i = 0; i < 64; ++i) {
      if (!gt.valid[static_cast<size_t>(i)] || gt.depth[static_cast<size_t>(i)] > cap) continue;
      const double p = std::max(pred.depth[static_cast<size_t>(i)], 1e-3);
      const double g = gt.depth[static_cast<size_t>(i)];
      n += 1;
      rel += std::abs(p - g) / g;
      sq += (p - g) * (p - g);
      l10 += std::abs(std::log10(p) - std::log10(g));
      const double ratio = std::max(p / g, g / p);
      if (ratio < 1.25) d1 += 1;
      if (ratio < 1.5625) d2 += 1;
      if (ratio < 1.953125) d3 += 1;
    }
    CHECK(std::abs(r.rel - rel / n) < 1e-9);
    CHECK(std::abs(r.rmse - std::sqrt(sq / n)) < 1e-9);
    CHECK(std::abs(r.log10 - l10 / n) < 1e-9);
    CHECK(std::abs(r.delta1 - d1 / n) < 1e-9);
    CHECK(std::abs(r.delta2 - d2 / n) < 1e-9);
    CHECK(std::abs(r.delta3 - d3 / n) < 1e-9);
    CHECK(r.delta1 <= r.delta2);
    CHECK(r.delta2 <= r.delta3);
  }
}

TEST_CASE("mri_theta reference anchors") {
  CHECK(std::abs(mri_theta({0.850, 0.125, 0.357}, {0.844, 0.147, 0.341}) - 3.66) < 0.01);
  CHECK(std::abs(mri_theta({0.897, 0.107, 0.272}, {0.844, 0.147, 0.341}) - 17.90) < 0.01);
  CHECK(mri_theta({0.8, 0.1, 0.3}, {0.8, 0.1, 0.3}) == doctest::Approx(0.0));
  CHECK_THROWS(mri_theta({0.8, 0.1, 0.3}, {0.0, 0.1, 0.3}));
}

TEST_CASE("mri_eta reference anchors") {
  const std::vector<double> base{0.695, 2.695, 6.107, 6.767};
  CHECK(std::abs(mri_eta({0.673, 2.373, 5.605, 5.390}, base) - 10.92) < 0.01);
  CHECK(std::abs(mri_eta({0.692, 2.504, 6.033, 5.726}, base) - 6.03) < 0.01);
  CHECK(mri_eta(base, base) == doctest::Approx(0.0));
  CHECK_THROWS(mri_eta({1.0}, base));
  CHECK_THROWS(mri_eta({1.0, 1.0, 1.0, 1.0}, {1.0, 0.0, 1.0, 1.0}));
}

TEST_CASE("per_frame_series: missing frames and CSV round trip") {
  std::vector<EvalFrame> frames(3);
  frames[0].gt = bincore::DepthMap(2, 2, 4.0);
  frames[0].indoor_flag = true;
  frames[1].gt = bincore::DepthMap(2, 2, 0.0, false);  // nothing evaluable
  frames[2].gt = bincore::DepthMap(2, 2, 6.0);

  auto series = per_frame_series(
      frames, [&](int64_t i) { return bincore::DepthMap(2, 2, 5.0); }, 80.0);
  REQUIRE(series.size() == 2);  // frame 1 is missing, not zero
  CHECK(series[0].frame_index == 0);
  CHECK(series[1].frame_index == 2);
  CHECK(series[0].rmse == doctest::Approx(1.0));
  CHECK(series[0].indoor_flag);
  CHECK_FALSE(series[1].indoor_flag);

  // perfect model on constant scenes: flat zero series
  auto flat = per_frame_series(
      frames, [&](int64_t i) { return frames[static_cast<size_t>(i)].gt; }, 80.0);
  for (const auto& s : flat) CHECK(s.rmse == 0.0);

  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "vbd_series.csv").string();
  write_series_csv(path, series);
  auto back = read_series_csv(path);
  REQUIRE(back.size() == series.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].frame_index == series[i].frame_index);
    CHECK(back[i].rmse == series[i].rmse);
    CHECK(back[i].indoor_flag == series[i].indoor_flag);
  }
  fs::remove(path);
}
