// Acceptance suite, fast half: formula anchors, oracles, gradient checks, and
// the FOV round trip. Each criterion prints one [PASS]/[FAIL] line.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <random>

#include "doctest.h"
#include "vbdepth/bincore.hpp"
#include "vbdepth/datakit.hpp"
#include "vbdepth/domains.hpp"
#include "vbdepth/evalmetrics.hpp"
#include "vbdepth/fovalign.hpp"
#include "vbdepth/model.hpp"
#include "vbdepth/objectives.hpp"

using namespace vbd;

namespace {

void report(int n, const char* what, bool ok) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", n, what);
  std::fflush(stdout);
  CHECK_MESSAGE(ok, "criterion ", n, ": ", what);
}

// max relative error between analytic grad and central finite differences
double fd_rel_error(const ag::Var& x, const std::function<ag::Var()>& loss, double h,
                    double floor = 1e-9) {
  x->ensure_grad();
  for (int64_t j = 0; j < x->grad.numel(); ++j) x->grad[j] = 0.0;  // backward accumulates
  ag::backward(loss());
  double worst = 0.0;
  for (int64_t j = 0; j < x->val.numel(); ++j) {
    const double keep = x->val[j];
    x->val[j] = keep + h;
    const double up = loss()->val[0];
    x->val[j] = keep - h;
    const double dn = loss()->val[0];
    x->val[j] = keep;
    const double fd = (up - dn) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - x->grad[j]) / std::max(std::abs(fd), floor));
  }
  return worst;
}

}  // namespace

TEST_CASE("criterion 1: mean relative improvement over (delta1, REL, RMSE)") {
  const double a = evalmetrics::mri_theta({0.850, 0.125, 0.357}, {0.844, 0.147, 0.341});
  const double b = evalmetrics::mri_theta({0.897, 0.107, 0.272}, {0.844, 0.147, 0.341});
  report(1, "reference triplets give 3.66% and 17.90% within 0.01pp",
         std::abs(a - 3.66) <= 0.01 && std::abs(b - 17.90) <= 0.01);
}

TEST_CASE("criterion 2: mean relative RMSE improvement across datasets") {
  const std::vector<double> base = {0.695, 2.695, 6.107, 6.767};
  const double a = evalmetrics::mri_eta({0.673, 2.373, 5.605, 5.390}, base);
  const double b = evalmetrics::mri_eta({0.692, 2.504, 6.033, 5.726}, base);
  report(2, "reference RMSE rows give 10.92% and 6.03% within 0.01pp",
         std::abs(a - 10.92) <= 0.01 && std::abs(b - 6.03) <= 0.01);
}

TEST_CASE("criterion 3: space-increasing range partition") {
  const auto a = domains::partition_range(0.0, 80.0, 4);
  const auto b = domains::partition_range(1.0, 13.0, 3);
  bool ok = a.uppers.size() == 4 && b.uppers.size() == 3;
  const double ea[4] = {8.0, 24.0, 48.0, 80.0};
  const double eb[3] = {3.0, 7.0, 13.0};
  for (size_t i = 0; ok && i < 4; ++i) ok = std::abs(a.uppers[i] - ea[i]) < 1e-12;
  for (size_t i = 0; ok && i < 3; ++i) ok = std::abs(b.uppers[i] - eb[i]) < 1e-12;
  report(3, "(0,80,K=4) -> [8,24,48,80] and (1,13,K=3) -> [3,7,13]", ok);
}

TEST_CASE("criterion 4: chamfer loss equals the double-loop oracle") {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.01, 80.0);
  bool ok = true;
  for (int inst = 0; inst < 100 && ok; ++inst) {
    const int nc = 1 + static_cast<int>(rng() % 16);
    const int nd = 1 + static_cast<int>(rng() % 64);
    bincore::BinCenterVector c;
    for (int i = 0; i < nc; ++i) c.centers.push_back(u(rng));
    std::vector<double> d(static_cast<size_t>(nd));
    for (auto& v : d) v = u(rng);

    double oracle = 0.0;
    for (double x : c.centers) {
      double best = 1e300;
      for (double y : d) best = std::min(best, (x - y) * (x - y));
      oracle += best;
    }
    for (double y : d) {
      double best = 1e300;
      for (double x : c.centers) best = std::min(best, (x - y) * (x - y));
      oracle += best;
    }
    ok = std::abs(bincore::chamfer_bin_loss(c, d) - oracle) <= 1e-9;
  }
  report(4, "100 random instances match the double-loop oracle to 1e-9", ok);
}

TEST_CASE("criterion 5: gradient suite against central finite differences") {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.2, 5.0);
  bool ok = true;

  {  // variation centers through a random linear functional
    Tensor v({8});
    std::vector<double> w(8);
    for (int i = 0; i < 8; ++i) {
      v[i] = u(rng) - 2.5;
      w[i] = u(rng);
    }
    ag::Var x = ag::param(v);
    auto loss = [&] {
      ag::Var c = bincore::ag_variation_centers(x);
      return ag::sum(ag::mul(c, ag::constant(Tensor({8}, w))));
    };
    ok = ok && fd_rel_error(x, loss, 1e-6) < 1e-4;
  }
  {  // chamfer loss wrt the centers
    Tensor c0({6});
    std::vector<double> d(40);
    for (int64_t i = 0; i < 6; ++i) c0[i] = u(rng);
    for (auto& x : d) x = u(rng);
    ag::Var c = ag::param(c0);
    // keep clear of argmin ties so the FD step stays in one linear region
    auto loss = [&] { return bincore::ag_chamfer_loss(c, d); };
    ok = ok && fd_rel_error(c, loss, 1e-7) < 1e-4;
  }
  {  // fused centers wrt both the bank rows and the mixture
    const int64_t n = 5;
    std::vector<ag::Var> bank;
    std::vector<double> w(static_cast<size_t>(n));
    for (auto& x : w) x = u(rng);
    for (int k = 0; k < 3; ++k) {
      Tensor row({1, n});
      for (int64_t i = 0; i < n; ++i) row[i] = u(rng);
      bank.push_back(ag::param(row));
    }
    Tensor y0({1, 3});
    double s = 0.0;
    for (int64_t i = 0; i < 3; ++i) s += (y0[i] = 0.2 + u(rng));
    for (int64_t i = 0; i < 3; ++i) y0[i] /= s;
    ag::Var y = ag::param(y0);
    auto loss = [&] {
      ag::Var c = domains::ag_fuse_bins(bank, y);
      return ag::sum(ag::mul(c, ag::constant(Tensor({n}, w))));
    };
    ok = ok && fd_rel_error(y, loss, 1e-6) < 1e-4;
    ok = ok && fd_rel_error(bank[1], loss, 1e-6) < 1e-4;
  }
  {  // total loss wrt the shared center vector (probe bundle)
    bincore::DepthMap gt(16, 16);
    for (int64_t i = 0; i < gt.numel(); ++i) gt.depth[static_cast<size_t>(i)] = u(rng);
    const int64_t n = 6;
    std::vector<Tensor> probs;
    const int64_t sizes[5] = {1, 2, 4, 8, 8};
    for (int s = 0; s < 5; ++s) {
      Tensor p({n, sizes[s], sizes[s]});
      for (int64_t px = 0; px < sizes[s] * sizes[s]; ++px) {
        double sum = 0.0;
        for (int64_t c = 0; c < n; ++c) sum += (p.data()[c * sizes[s] * sizes[s] + px] = 0.1 + u(rng));
        for (int64_t c = 0; c < n; ++c) p.data()[c * sizes[s] * sizes[s] + px] /= sum;
      }
      probs.push_back(p);
    }
    Tensor c0({n});
    for (int64_t i = 0; i < n; ++i) c0[i] = u(rng);
    ag::Var centers = ag::param(c0);
    ag::Var logits = ag::param(Tensor({1, 3}, {0.4, -0.1, 0.6}));
    auto bundle = [&] {
      model::PredictionBundle b;
      for (const auto& p : probs)
        b.stage_depths.push_back(ag::combine_depth(ag::constant(p), centers));
      b.domain_logits = logits;
      Tensor sm = ag::softmax_rows(logits)->val;
      b.domain_probs.y.assign(sm.data(), sm.data() + 3);
      b.fused_centers_var = centers;
      b.fused_centers.kind = bincore::CenterKind::fused;
      b.fused_centers.centers.assign(centers->val.data(), centers->val.data() + n);
      return b;
    };
    auto loss = [&] { return objectives::total_loss(bundle(), gt, 2).total; };
    ok = ok && fd_rel_error(centers, loss, 1e-6) < 1e-4;
    ok = ok && fd_rel_error(logits, loss, 1e-6, 1e-6) < 1e-4;
  }

  // end-to-end probe: spot-check parameters of the full model on a 2-sample batch
  bool ok_model = true;
  {
    model::ModelConfig cfg;
    cfg.n_bins = 8;
    cfg.k_domains = 4;
    cfg.base_channels = 2;
    cfg.pst_patch_sizes = {1};
    cfg.pst_depth = 1;
    cfg.pst_heads = 2;
    cfg.pst_dim = 8;
    cfg.input_h = cfg.input_w = 32;
    model::DepthModel m(cfg, 99);

    std::vector<fovalign::AlignedSample> batch;
    std::vector<bincore::DepthMap> gts;
    std::vector<int> labels;
    const auto rds = domains::partition_range(0.0, 80.0, 4);
    for (int i = 0; i < 2; ++i) {
      datakit::SynthConfig sc;
      sc.seed = 700 + static_cast<uint64_t>(i);
      sc.rd_index = 2 * i + 1;
      sc.dropout_prob = 0.0;
      auto s = datakit::synth_scene(sc);
      fovalign::AlignedSample a;
      a.image = s.rgb;
      batch.push_back(a);
      gts.push_back(s.depth);
      labels.push_back(domains::rd_label(s.depth, rds, 0.99));
    }
    auto batch_loss = [&] {
      ag::Var total;
      for (size_t i = 0; i < batch.size(); ++i) {
        auto tl = objectives::total_loss(m.forward(batch[i]), gts[i], labels[i]);
        total = total ? ag::add(total, tl.total) : tl.total;
      }
      return total;
    };
    for (auto& [name, p] : m.params().entries()) p->ensure_grad();
    ag::backward(batch_loss());

    std::vector<ag::Var> params;
    for (auto& [name, p] : m.params().entries()) params.push_back(p);
    std::mt19937_64 pick(7);
    int checked = 0;
    for (int t = 0; t < 12 && ok_model; ++t) {
      ag::Var p = params[pick() % params.size()];
      const int64_t j = static_cast<int64_t>(pick() % static_cast<uint64_t>(p->val.numel()));
      const double keep = p->val[j];
      const double h = 1e-5;
      p->val[j] = keep + h;
      const double up = batch_loss()->val[0];
      p->val[j] = keep - h;
      const double dn = batch_loss()->val[0];
      p->val[j] = keep;
      const double fd = (up - dn) / (2.0 * h);
      if (std::abs(fd) < 1e-7 && std::abs(p->grad[j]) < 1e-7) continue;  // dead relu path
      ok_model = std::abs(fd - p->grad[j]) / std::max(std::abs(fd), 1e-7) < 1e-2;
      ++checked;
    }
    ok_model = ok_model && checked >= 5;
  }
  report(5, "analytic gradients match finite differences (<1e-4 unit, <1e-2 end to end)",
         ok && ok_model);
}

TEST_CASE("criterion 6: field-of-view alignment") {
  fovalign::CameraIntrinsics intr;
  intr.fx = intr.fy = 1091.517;
  intr.width = 1400;
  intr.height = 1000;
  fovalign::FovSpec fov{fovalign::deg2rad(58.0), fovalign::deg2rad(45.0), 564, 424};
  auto [cw, chh] = fovalign::target_crop_size(intr, fov);
  bool ok = std::llabs(cw - 1210) <= 1 && std::llabs(chh - 904) <= 1;

  // round trip on FOV-matched synthetic samples: align then inverse-align
  for (uint64_t seed = 1; seed <= 3 && ok; ++seed) {
    datakit::SynthConfig sc;
    sc.seed = seed;
    sc.rd_index = 3;
    sc.fx_jitter = 0.0;
    sc.dropout_prob = 0.0;
    auto s = datakit::synth_scene(sc);
    fovalign::FovSpec target{fovalign::deg2rad(58.0), fovalign::deg2rad(45.0), 64, 48};
    // make the source FOV match the target exactly so cropping is lossless
    fovalign::CameraIntrinsics ci = s.intrinsics;
    ci.fx = static_cast<double>(ci.width) / (2.0 * std::tan(target.omega_x / 2.0));
    ci.fy = static_cast<double>(ci.height) / (2.0 * std::tan(target.omega_y / 2.0));
    auto a = fovalign::align_fov(s.rgb, &s.depth, ci, target);
    auto restored = fovalign::inverse_align(a.depth, a, ci);
    for (int64_t i = 0; i < s.depth.numel() && ok; ++i) {
      if (!s.depth.valid[static_cast<size_t>(i)] || !restored.valid[static_cast<size_t>(i)])
        continue;
      const double g = s.depth.depth[static_cast<size_t>(i)];
      ok = std::abs(restored.depth[static_cast<size_t>(i)] - g) / std::max(g, 1e-9) < 1e-3;
    }
  }
  report(6, "crop formula hits (1210,904) +-1px and the round trip is <1e-3 relative", ok);
}

TEST_CASE("criterion 10: metric oracle and strict delta boundary") {
  std::mt19937_64 rng(1010);
  std::uniform_real_distribution<double> u(0.05, 12.0);
  bool ok = true;
  for (int inst = 0; inst < 50 && ok; ++inst) {
    bincore::DepthMap pred(8, 8), gt(8, 8);
    for (int64_t i = 0; i < 64; ++i) {
      pred.depth[static_cast<size_t>(i)] = u(rng);
      gt.depth[static_cast<size_t>(i)] = u(rng);
      gt.valid[static_cast<size_t>(i)] = rng() % 5 != 0;
    }
    const double cap = 10.0;
    double n = 0, rel = 0, sq = 0, l10 = 0, d1 = 0, d2 = 0, d3 = 0;
    for (int64_t i = 0; i < 64; ++i) {
      const double g = gt.depth[static_cast<size_t>(i)];
      if (!gt.valid[static_cast<size_t>(i)] || g > cap) continue;
      const double p = std::max(pred.depth[static_cast<size_t>(i)], 1e-3);
      n += 1;
      rel += std::abs(p - g) / g;
      sq += (p - g) * (p - g);
      l10 += std::abs(std::log10(p) - std::log10(g));
      const double r = std::max(p / g, g / p);
      d1 += r < 1.25;
      d2 += r < 1.25 * 1.25;
      d3 += r < 1.25 * 1.25 * 1.25;
    }
    if (n == 0) continue;
    auto m = evalmetrics::compute_metrics(pred, gt, cap);
    ok = std::abs(m.rel - rel / n) <= 1e-9 && std::abs(m.rmse - std::sqrt(sq / n)) <= 1e-9 &&
         std::abs(m.log10 - l10 / n) <= 1e-9 && std::abs(m.delta1 - d1 / n) <= 1e-9 &&
         std::abs(m.delta2 - d2 / n) <= 1e-9 && std::abs(m.delta3 - d3 / n) <= 1e-9 &&
         m.n_pixels == static_cast<int64_t>(n);
  }
  // strict inequality: pred exactly 1.25x gt fails delta1
  bincore::DepthMap gt1(2, 2, 4.0), p1(2, 2, 5.0);
  auto m1 = evalmetrics::compute_metrics(p1, gt1, 80.0);
  ok = ok && m1.delta1 == 0.0 && m1.delta2 == 1.0;
  report(10, "metrics match the per-pixel oracle to 1e-9; delta thresholds are strict", ok);
}
