#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "vbdepth/datakit.hpp"
#include "vbdepth/image_io.hpp"
#include "vbdepth/nn.hpp"

using namespace vbd;
using namespace vbd::datakit;

TEST_CASE("synth_scene: determinism and RD depth bound") {
  SynthConfig cfg;
  cfg.seed = 7;
  cfg.rd_index = 1;
  auto a = synth_scene(cfg);
  auto b = synth_scene(cfg);
  CHECK(a.rgb.rgb == b.rgb.rgb);
  CHECK(a.depth.depth == b.depth.depth);
  CHECK(a.depth.valid == b.depth.valid);
  CHECK(a.intrinsics.fx == b.intrinsics.fx);

  for (double d : a.depth.valid_depths()) CHECK(d <= 8.0);

  SynthConfig bad = cfg;
  bad.rd_index = 5;
  CHECK_THROWS(synth_scene(bad));
  bad.rd_index = 0;
  CHECK_THROWS(synth_scene(bad));
}

TEST_CASE("synth_scene: rd_label self-check over 1000 seeds") {
  auto rds = domains::partition_range(0.0, 80.0, 4);
  int agree = 0, total = 0;
  for (uint64_t seed = 0; seed < 250; ++seed)
    for (int rd = 1; rd <= 4; ++rd) {
      SynthConfig cfg;
      cfg.seed = hash_seed(99, seed * 4 + static_cast<uint64_t>(rd));
      cfg.rd_index = rd;
      auto s = synth_scene(cfg);
      ++total;
      if (domains::rd_label(s.depth, rds, 0.99) == rd) ++agree;
    }
  CHECK(total == 1000);
  CHECK(agree >= 990);
}

TEST_CASE("make_dataset: proportions, determinism, split") {
  SynthConfig base;
  base.seed = 11;
  auto ds = make_dataset(base, 10000, {0.25, 0.25, 0.25, 0.25});
  int counts[5] = {0, 0, 0, 0, 0};
  for (int rd : ds.rd) counts[rd]++;
  for (int k = 1; k <= 4; ++k) {
    CHECK(counts[k] >= 2300);  // within 2% of the uniform share
    CHECK(counts[k] <= 2700);
  }

  auto ds2 = make_dataset(base, 10000, {0.25, 0.25, 0.25, 0.25});
  CHECK(ds.seeds == ds2.seeds);
  CHECK(ds.train_idx == ds2.train_idx);
  CHECK(ds.test_idx == ds2.test_idx);

  CHECK(static_cast<int64_t>(ds.train_idx.size() + ds.test_idx.size()) == ds.size());
  CHECK(ds.test_idx.size() > 700);
  CHECK(ds.test_idx.size() < 1300);
  // split disjointness
  std::vector<char> seen(10000, 0);
  for (auto i : ds.train_idx) seen[static_cast<size_t>(i)] = 1;
  for (auto i : ds.test_idx) CHECK(seen[static_cast<size_t>(i)] == 0);

  // every RD label occurs
  auto small = make_dataset(base, 100, {0.25, 0.25, 0.25, 0.25});
  bool have[5] = {};
  for (int rd : small.rd) have[rd] = true;
  for (int k = 1; k <= 4; ++k) CHECK(have[k]);

  CHECK_THROWS(make_dataset(base, 0, {0.25, 0.25, 0.25, 0.25}));
  CHECK_THROWS(make_dataset(base, 10, {1.0}));
  CHECK_THROWS(make_dataset(base, 10, {0.0, 0.0, 0.0, 0.0}));
}

TEST_CASE("augment: involution, depth untouched, reproducible") {
  SynthConfig cfg;
  cfg.seed = 3;
  cfg.rd_index = 2;
  auto s = synth_scene(cfg);

  auto flipped = hflip_sample(hflip_sample(s));
  CHECK(flipped.rgb.rgb == s.rgb.rgb);
  CHECK(flipped.depth.depth == s.depth.depth);

  auto a1 = augment(s, 17);
  auto a2 = augment(s, 17);
  CHECK(a1.rgb.rgb == a2.rgb.rgb);
  CHECK(a1.depth.depth == a2.depth.depth);
  // photometric jitter never touches depth; only order may change via flip
  auto sorted_depth = s.depth.depth;
  auto sorted_aug = a1.depth.depth;
  std::sort(sorted_depth.begin(), sorted_depth.end());
  std::sort(sorted_aug.begin(), sorted_aug.end());
  CHECK(sorted_depth == sorted_aug);
}

TEST_CASE("rgbd sample save/load round trip and error kinds") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "vbd_datakit_test").string();
  fs::remove_all(dir);

  SynthConfig cfg;
  cfg.seed = 5;
  cfg.rd_index = 3;
  cfg.dropout_prob = 1.0;  // force invalid pixels so the zero convention is exercised
  auto s = synth_scene(cfg);
  save_rgbd_sample(dir, "0001", s, 2e-3);

  auto loaded = load_rgbd_sample(dir + "/rgb/0001.png", dir + "/depth/0001.png",
                                 dir + "/intrinsics/0001.json");
  CHECK(loaded.rgb.rgb == s.rgb.rgb);
  CHECK(loaded.depth.valid == s.depth.valid);
  CHECK(loaded.intrinsics.fx == doctest::Approx(s.intrinsics.fx));
  CHECK(loaded.meta.max_range == doctest::Approx(80.0));
  for (int64_t i = 0; i < s.depth.numel(); ++i) {
    if (!s.depth.valid[static_cast<size_t>(i)]) continue;
    CHECK(std::abs(loaded.depth.depth[static_cast<size_t>(i)] -
                   s.depth.depth[static_cast<size_t>(i)]) <= 2e-3);
  }

  CHECK_THROWS_AS(load_rgbd_sample(dir + "/rgb/none.png", dir + "/depth/0001.png",
                                   dir + "/intrinsics/0001.json"),
                  io::MissingFileError);
  CHECK_THROWS_AS(load_rgbd_sample(dir + "/rgb/0001.png", dir + "/depth/0001.png",
                                   dir + "/intrinsics/none.json"),
                  io::IntrinsicsError);

  // registration mismatch: pair the rgb with a smaller depth raster
  bincore::DepthMap small(8, 8, 1.0);
  io::save_depth_png(dir + "/depth/small.png", small, 1e-3);
  CHECK_THROWS_AS(load_rgbd_sample(dir + "/rgb/0001.png", dir + "/depth/small.png",
                                   dir + "/intrinsics/0001.json"),
                  io::RasterError);
  fs::remove_all(dir);
}

TEST_CASE("depth unit conversion and zero-is-invalid convention") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "vbd_depth_unit.png").string();
  bincore::DepthMap d(2, 2, 0.0, false);
  d.at(0, 0) = 1.0;
  d.valid[0] = 1;
  io::save_depth_png(path, d, 0.001);
  auto back = io::load_depth_png(path, 0.001);
  CHECK(back.at(0, 0) == doctest::Approx(1.0));  // raw 1000 at scale 0.001
  CHECK_FALSE(back.is_valid(0, 1));
  CHECK_FALSE(back.is_valid(1, 1));
  fs::remove(path);
}

TEST_CASE("generator learnability: per-pixel regressor reaches REL < 0.15") {
  // pixels from 500 train scenes, held-out scenes for evaluation
  nn::Rng rng(123);
  auto collect = [&](uint64_t base_seed, int n_scenes, int px_per_scene, Tensor& x, Tensor& y) {
    x = Tensor({static_cast<int64_t>(n_scenes) * px_per_scene, 3});
    y = Tensor({static_cast<int64_t>(n_scenes) * px_per_scene, 1});
    int64_t row = 0;
    for (int i = 0; i < n_scenes; ++i) {
      SynthConfig cfg;
      cfg.seed = hash_seed(base_seed, static_cast<uint64_t>(i));
      cfg.rd_index = 1 + i % 4;
      cfg.dropout_prob = 0.0;
      auto s = synth_scene(cfg);
      for (int p = 0; p < px_per_scene; ++p) {
        const int64_t idx = static_cast<int64_t>(rng() % static_cast<uint64_t>(s.depth.numel()));
        for (int c = 0; c < 3; ++c)
          x.at2(row, c) = static_cast<double>(s.rgb.rgb[static_cast<size_t>(idx * 3 + c)]) / 255.0;
        y.at2(row, 0) = std::log1p(s.depth.depth[static_cast<size_t>(idx)]);
        ++row;
      }
    }
  };
  Tensor xtr, ytr, xte, yte;
  collect(1, 500, 32, xtr, ytr);
  collect(2, 50, 32, xte, yte);

  nn::ParamStore ps;
  nn::Linear l1(ps, "l1", 3, 16, rng), l2(ps, "l2", 16, 16, rng), l3(ps, "l3", 16, 1, rng);
  nn::Adam opt(ps);
  ag::Var xin = ag::constant(xtr);
  Tensor& target = ytr;
  for (int step = 0; step < 400; ++step) {
    ag::Var h = ag::relu(l1(xin));
    h = ag::relu(l2(h));
    ag::Var pred = l3(h);
    ag::Var diff = ag::sub(pred, ag::constant(target));
    ag::Var loss = ag::mean(ag::mul(diff, diff));
    ag::backward(loss);
    opt.step(0.01);
  }

  ag::Var h = ag::relu(l1(ag::constant(xte)));
  h = ag::relu(l2(h));
  Tensor pred = l3(h)->val;
  double rel = 0.0;
  for (int64_t i = 0; i < pred.dim(0); ++i) {
    const double p = std::expm1(pred.at2(i, 0));
    const double g = std::expm1(yte.at2(i, 0));
    rel += std::abs(p - g) / std::max(g, 1e-6);
  }
  rel /= static_cast<double>(pred.dim(0));
  CHECK(rel < 0.15);
}
