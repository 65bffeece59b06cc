#include "vbdepth/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "vbdepth/image_io.hpp"

namespace vbd::datakit {

namespace {

constexpr double kSourceFovXDeg = 66.0;
constexpr double kSourceFovYDeg = 52.0;

uint8_t to_u8(double v) {
  return static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

double log_fraction(double d, double z_max) { return std::log1p(d) / std::log1p(z_max); }

}  // namespace

uint64_t hash_seed(uint64_t base, uint64_t index) {
  uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double synth_depth_from_rgb(uint8_t r, uint8_t g, uint8_t b, double z_max) {
  (void)g;
  const double denom = static_cast<double>(r) + static_cast<double>(b);
  if (denom <= 0.0) return 0.0;
  const double t = static_cast<double>(r) / denom;
  return std::expm1(t * std::log1p(z_max));
}

DepthSample synth_scene(const SynthConfig& cfg) {
  const auto& rds = cfg.range_set;
  if (cfg.rd_index < 1 || cfg.rd_index > rds.k_count)
    throw std::invalid_argument("synth_scene: rd_index out of range");
  if (cfg.image_h < 8 || cfg.image_w < 8)
    throw std::invalid_argument("synth_scene: image too small");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  const int64_t H = cfg.image_h, W = cfg.image_w;
  const double lower = cfg.rd_index > 1 ? rds.uppers[static_cast<size_t>(cfg.rd_index - 2)]
                                        : rds.z_min;
  const double upper = rds.uppers[static_cast<size_t>(cfg.rd_index - 1)];
  const double d_far = lower + (0.55 + 0.35 * u01(rng)) * (upper - lower);
  const double d_near = std::max(rds.z_min + 0.05 * (upper - rds.z_min), 0.12 * d_far);

  // flat far band at the top keeps the 99th depth percentile pinned to d_far
  const int64_t band = std::max<int64_t>(2, H / 8);
  bincore::DepthMap depth(H, W);
  for (int64_t y = 0; y < H; ++y) {
    const double d = y < band
                         ? d_far
                         : d_far - (d_far - d_near) * static_cast<double>(y - band) /
                               static_cast<double>(H - 1 - band);
    for (int64_t x = 0; x < W; ++x) depth.at(y, x) = d;
  }

  const int n_shapes = cfg.shape_count_min +
                       static_cast<int>(rng() % static_cast<uint64_t>(
                                            cfg.shape_count_max - cfg.shape_count_min + 1));
  for (int s = 0; s < n_shapes; ++s) {
    const double ds = d_near + u01(rng) * (0.8 * d_far - d_near);
    const bool ellipse = u01(rng) < 0.5;
    const int64_t cx = static_cast<int64_t>(u01(rng) * static_cast<double>(W));
    const int64_t cy = band + static_cast<int64_t>(u01(rng) * static_cast<double>(H - band));
    const int64_t rx = 2 + static_cast<int64_t>(u01(rng) * static_cast<double>(W / 3));
    const int64_t ry = 2 + static_cast<int64_t>(u01(rng) * static_cast<double>(H / 3));
    for (int64_t y = std::max(band, cy - ry); y <= std::min(H - 1, cy + ry); ++y)
      for (int64_t x = std::max<int64_t>(0, cx - rx); x <= std::min(W - 1, cx + rx); ++x) {
        if (ellipse) {
          const double nx = static_cast<double>(x - cx) / static_cast<double>(rx);
          const double ny = static_cast<double>(y - cy) / static_cast<double>(ry);
          if (nx * nx + ny * ny > 1.0) continue;
        }
        depth.at(y, x) = std::min(depth.at(y, x), ds);  // nearer shape wins
      }
  }

  // color encodes depth: hue ramp times a seeded texture whose modulation
  // cancels in the R/(R+B) ratio
  const double phase_x = 2.0 * M_PI * u01(rng);
  const double phase_y = 2.0 * M_PI * u01(rng);
  fovalign::Image rgb(H, W);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      const double t = log_fraction(depth.at(y, x), rds.z_max);
      const double tex =
          std::sin(2.0 * M_PI * cfg.texture_freq * static_cast<double>(x) /
                       static_cast<double>(W) +
                   phase_x) *
          std::sin(2.0 * M_PI * cfg.texture_freq * static_cast<double>(y) /
                       static_cast<double>(H) +
                   phase_y);
      const double m = 0.7 + 0.3 * (0.5 + 0.5 * tex);
      rgb.at(y, x, 0) = to_u8(m * 255.0 * t);
      rgb.at(y, x, 1) = to_u8(m * 127.5);
      rgb.at(y, x, 2) = to_u8(m * 255.0 * (1.0 - t));
    }

  // occasional invalid rectangle below the far band (sensor-dropout stand-in)
  if (u01(rng) < cfg.dropout_prob) {
    const int64_t dw = 2 + static_cast<int64_t>(u01(rng) * static_cast<double>(W / 5));
    const int64_t dh = 2 + static_cast<int64_t>(u01(rng) * static_cast<double>(H / 5));
    const int64_t x0 = static_cast<int64_t>(u01(rng) * static_cast<double>(W - dw));
    const int64_t y0 = band + static_cast<int64_t>(u01(rng) * static_cast<double>(H - band - dh));
    for (int64_t y = y0; y < y0 + dh; ++y)
      for (int64_t x = x0; x < x0 + dw; ++x) {
        depth.at(y, x) = 0.0;
        depth.valid[static_cast<size_t>(y * W + x)] = 0;
      }
  }

  DepthSample out;
  out.rgb = std::move(rgb);
  out.depth = std::move(depth);
  const double fx_nom =
      static_cast<double>(W) / (2.0 * std::tan(fovalign::deg2rad(kSourceFovXDeg) / 2.0));
  const double fy_nom =
      static_cast<double>(H) / (2.0 * std::tan(fovalign::deg2rad(kSourceFovYDeg) / 2.0));
  const double jit = 1.0 + cfg.fx_jitter * (2.0 * u01(rng) - 1.0);
  out.intrinsics.fx = fx_nom * jit;
  out.intrinsics.fy = fy_nom * jit;
  out.intrinsics.width = W;
  out.intrinsics.height = H;
  out.meta.dataset_id = "synth";
  out.meta.frame_id = static_cast<int64_t>(cfg.seed);
  out.meta.indoor_flag = cfg.rd_index <= (rds.k_count + 1) / 2;
  out.meta.max_range = rds.z_max;
  return out;
}

DepthSample SyntheticDataset::sample(int64_t index) const {
  SynthConfig cfg = base;
  cfg.seed = seeds[static_cast<size_t>(index)];
  cfg.rd_index = rd[static_cast<size_t>(index)];
  return synth_scene(cfg);
}

SyntheticDataset make_dataset(const SynthConfig& base, int64_t count,
                              const std::vector<double>& rd_mix) {
  if (count < 1) throw std::invalid_argument("make_dataset: count must be >= 1");
  if (static_cast<int>(rd_mix.size()) != base.range_set.k_count)
    throw std::invalid_argument("make_dataset: rd_mix length must equal K");
  double sum = 0.0;
  for (double p : rd_mix) {
    if (p < 0.0 || !std::isfinite(p)) throw std::invalid_argument("make_dataset: bad rd_mix entry");
    sum += p;
  }
  if (sum <= 0.0) throw std::invalid_argument("make_dataset: degenerate rd_mix");

  std::vector<double> cdf(rd_mix.size());
  double acc = 0.0;
  for (size_t k = 0; k < rd_mix.size(); ++k) {
    acc += rd_mix[k] / sum;
    cdf[k] = acc;
  }
  cdf.back() = 1.0;

  SyntheticDataset ds;
  ds.base = base;
  ds.seeds.reserve(static_cast<size_t>(count));
  ds.rd.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    ds.seeds.push_back(hash_seed(base.seed, static_cast<uint64_t>(i)));
    const double u =
        static_cast<double>(hash_seed(base.seed ^ 0xa5a5a5a5a5a5a5a5ULL, static_cast<uint64_t>(i))) /
        18446744073709551616.0;
    int label = 1;
    while (label < static_cast<int>(cdf.size()) && u >= cdf[static_cast<size_t>(label - 1)])
      ++label;
    ds.rd.push_back(label);
    const bool test = hash_seed(base.seed ^ 0x5c5c5c5c5c5c5c5cULL, static_cast<uint64_t>(i)) % 10 == 0;
    (test ? ds.test_idx : ds.train_idx).push_back(i);
  }
  return ds;
}

fovalign::Image hflip_image(const fovalign::Image& img) {
  fovalign::Image out(img.h, img.w);
  for (int64_t y = 0; y < img.h; ++y)
    for (int64_t x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.w - 1 - x, c);
  return out;
}

bincore::DepthMap hflip_depth(const bincore::DepthMap& d) {
  bincore::DepthMap out(d.h, d.w);
  for (int64_t y = 0; y < d.h; ++y)
    for (int64_t x = 0; x < d.w; ++x) {
      out.at(y, x) = d.at(y, d.w - 1 - x);
      out.valid[static_cast<size_t>(y * d.w + x)] = d.valid[static_cast<size_t>(y * d.w + d.w - 1 - x)];
    }
  return out;
}

DepthSample hflip_sample(const DepthSample& s) {
  DepthSample out = s;
  out.rgb = hflip_image(s.rgb);
  if (s.depth.h > 0) out.depth = hflip_depth(s.depth);
  if (s.intrinsics.cx)
    out.intrinsics.cx = static_cast<double>(s.intrinsics.width - 1) - *s.intrinsics.cx;
  return out;
}

DepthSample augment(const DepthSample& sample, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  DepthSample out = u01(rng) < 0.5 ? hflip_sample(sample) : sample;
  const double contrast = 0.9 + 0.2 * u01(rng);
  const double brightness = 0.9 + 0.2 * u01(rng);
  for (auto& v : out.rgb.rgb) {
    const double adjusted = ((static_cast<double>(v) - 127.5) * contrast + 127.5) * brightness;
    v = to_u8(adjusted);
  }
  return out;
}

DepthSample load_rgbd_sample(const std::string& image_path, const std::string& depth_path,
                             const std::string& intrinsics_path) {
  DepthSample s;
  s.rgb = io::load_rgb_png(image_path);

  std::ifstream f(intrinsics_path);
  if (!f) throw io::IntrinsicsError("missing intrinsics sidecar: " + intrinsics_path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw io::IntrinsicsError("unparseable intrinsics sidecar: " + intrinsics_path + ": " +
                              e.what());
  }
  if (!j.contains("fx") || !j.contains("fy") || !j.contains("depth_scale"))
    throw io::IntrinsicsError("intrinsics sidecar needs fx, fy, depth_scale: " + intrinsics_path);
  s.intrinsics.fx = j["fx"].get<double>();
  s.intrinsics.fy = j["fy"].get<double>();
  if (j.contains("cx")) s.intrinsics.cx = j["cx"].get<double>();
  if (j.contains("cy")) s.intrinsics.cy = j["cy"].get<double>();
  const double scale = j["depth_scale"].get<double>();
  s.meta.max_range = j.value("max_range", 80.0);
  s.meta.indoor_flag = j.value("indoor_flag", false);
  s.meta.dataset_id = j.value("dataset_id", "file");
  s.meta.frame_id = j.value("frame_id", static_cast<int64_t>(0));

  s.depth = io::load_depth_png(depth_path, scale);
  if (s.depth.h != s.rgb.h || s.depth.w != s.rgb.w)
    throw io::RasterError("rgb/depth registration mismatch: " + image_path);
  s.intrinsics.width = s.rgb.w;
  s.intrinsics.height = s.rgb.h;
  for (int64_t i = 0; i < s.depth.numel(); ++i)
    if (s.depth.depth[static_cast<size_t>(i)] > s.meta.max_range)
      s.depth.valid[static_cast<size_t>(i)] = 0;
  return s;
}

void save_rgbd_sample(const std::string& dir, const std::string& id, const DepthSample& sample,
                      double depth_scale) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "rgb");
  fs::create_directories(fs::path(dir) / "depth");
  fs::create_directories(fs::path(dir) / "intrinsics");
  io::save_rgb_png((fs::path(dir) / "rgb" / (id + ".png")).string(), sample.rgb);
  io::save_depth_png((fs::path(dir) / "depth" / (id + ".png")).string(), sample.depth, depth_scale);
  nlohmann::json j;
  j["fx"] = sample.intrinsics.fx;
  j["fy"] = sample.intrinsics.fy;
  if (sample.intrinsics.cx) j["cx"] = *sample.intrinsics.cx;
  if (sample.intrinsics.cy) j["cy"] = *sample.intrinsics.cy;
  j["depth_scale"] = depth_scale;
  j["max_range"] = sample.meta.max_range;
  j["indoor_flag"] = sample.meta.indoor_flag;
  j["dataset_id"] = sample.meta.dataset_id;
  j["frame_id"] = sample.meta.frame_id;
  std::ofstream f((fs::path(dir) / "intrinsics" / (id + ".json")).string());
  f << j.dump(2) << "\n";
}

}  // namespace vbd::datakit
