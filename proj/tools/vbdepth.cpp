#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vbdepth/config.hpp"
#include "vbdepth/datakit.hpp"
#include "vbdepth/figures.hpp"
#include "vbdepth/image_io.hpp"
#include "vbdepth/kernels.hpp"
#include "vbdepth/objectives.hpp"
#include "vbdepth/trainer.hpp"

namespace {

using namespace vbd;

config::RunConfig load_run_config(const std::string& path, int64_t seed_override) {
  config::RunConfig cfg = config::load_config(path);
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
  return cfg;
}

void print_report(std::ostream& os, const trainer::EvalReport& rep) {
  const auto& m = rep.overall;
  os << "frames = " << rep.frames << "\n";
  os << "n_pixels = " << m.n_pixels << "\n";
  os << "delta1 = " << m.delta1 << "\n";
  os << "delta2 = " << m.delta2 << "\n";
  os << "delta3 = " << m.delta3 << "\n";
  os << "rel = " << m.rel << "\n";
  os << "rmse = " << m.rmse << "\n";
  os << "log10 = " << m.log10 << "\n";
  os << "rd_accuracy = " << rep.rd_accuracy << "\n";
  for (const auto& row : rep.per_rd)
    os << "rd" << row.rd << ".n_pixels = " << row.rec.n_pixels << "\nrd" << row.rd
       << ".delta1 = " << row.rec.delta1 << "\nrd" << row.rd << ".rel = " << row.rec.rel
       << "\nrd" << row.rd << ".rmse = " << row.rec.rmse << "\n";
}

int cmd_train(const std::string& config_path, const std::string& out,
              const std::string& log_path, const std::string& resume, int64_t seed_override) {
  config::RunConfig cfg = load_run_config(config_path, seed_override);
  auto result = trainer::train(cfg, out, log_path, resume);
  for (const auto& e : result.epochs)
    std::cout << "epoch " << e.epoch << ": train_total=" << e.train_total
              << " val_total=" << e.val_total << " val_rd_acc=" << e.val_rd_accuracy
              << " lr=" << e.lr << "\n";
  std::cout << "checkpoint written to " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt, const std::string& split,
             const std::vector<double>& baseline, const std::string& baseline_name,
             const std::string& report_path, int64_t seed_override) {
  config::RunConfig cfg = load_run_config(config_path, seed_override);
  model::DepthModel m = model::load_checkpoint(ckpt);
  auto ds = trainer::dataset_from_config(cfg);
  const auto& idx = split == "train" ? ds.train_idx : ds.test_idx;
  auto rep = trainer::evaluate_split(m, cfg, ds, idx);

  std::ostringstream os;
  print_report(os, rep);
  if (!baseline.empty()) {
    if (baseline.size() != 3)
      throw std::invalid_argument("baseline must be three values: delta1,rel,rmse");
    const double mri = evalmetrics::mri_theta({rep.overall.delta1, rep.overall.rel,
                                               rep.overall.rmse},
                                              {baseline[0], baseline[1], baseline[2]});
    os << "mri_theta_vs_" << (baseline_name.empty() ? "baseline" : baseline_name) << " = " << mri
       << "\n";
  }
  std::cout << os.str();
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    if (!f) throw std::runtime_error("cannot open report output: " + report_path);
    f << os.str();
  }
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& image_path, double fx, double fy,
                const std::string& out_path, const std::string& preview_path, double fov_x,
                double fov_y) {
  if (fx <= 0.0 || fy <= 0.0)
    throw std::invalid_argument(
        "focal lengths are required: the aligned crop is 2*fx*tan(fov_x/2) by "
        "2*fy*tan(fov_y/2), so prediction cannot proceed without fx and fy");
  model::DepthModel m = model::load_checkpoint(ckpt);
  fovalign::Image img = io::load_rgb_png(image_path);
  fovalign::CameraIntrinsics intr;
  intr.fx = fx;
  intr.fy = fy;
  intr.width = img.w;
  intr.height = img.h;
  fovalign::FovSpec fov{fovalign::deg2rad(fov_x), fovalign::deg2rad(fov_y),
                        m.config().input_w, m.config().input_h};
  fovalign::AlignedSample a = fovalign::align_fov(img, nullptr, intr, fov);
  bincore::DepthMap pred = m.predict_with_mirror(a);

  io::save_depth_png(out_path, pred, 1e-3);
  std::cout << "depth raster (16-bit, 0.001 m per unit): " << out_path << "\n";

  if (!preview_path.empty()) {
    const double z_max = m.config().z_max;
    fovalign::Image prev(pred.h, pred.w);
    for (int64_t y = 0; y < pred.h; ++y)
      for (int64_t x = 0; x < pred.w; ++x) {
        const double t = std::clamp(pred.at(y, x) / z_max, 0.0, 1.0);
        prev.at(y, x, 0) = static_cast<uint8_t>(std::lround(255.0 * t));
        prev.at(y, x, 1) = static_cast<uint8_t>(std::lround(96.0 + 64.0 * t));
        prev.at(y, x, 2) = static_cast<uint8_t>(std::lround(255.0 * (1.0 - t)));
      }
    io::save_rgb_png(preview_path, prev);
    std::cout << "preview: " << preview_path << "\n";
  }

  auto y = m.forward(a).domain_probs;
  std::cout << "range-domain probabilities:";
  for (double p : y.y) std::cout << " " << p;
  std::cout << "\n";
  return 0;
}

int cmd_partition(double z_min, double z_max, int k) {
  auto space = domains::partition_range(z_min, z_max, k);
  auto uni = domains::uniform_partition(z_min, z_max, k);
  std::cout << "space-increasing partition of [" << z_min << ", " << z_max << "], K=" << k
            << "\n";
  std::cout << "k\tlower\tupper\n";
  for (int i = 0; i < k; ++i)
    std::cout << i + 1 << "\t" << z_min << "\t" << space.uppers[static_cast<size_t>(i)] << "\n";
  std::cout << "uniform partition (ablation comparator)\n";
  std::cout << "k\tlower\tupper\n";
  for (int i = 0; i < k; ++i)
    std::cout << i + 1 << "\t" << z_min << "\t" << uni.uppers[static_cast<size_t>(i)] << "\n";
  return 0;
}

Tensor pooled_occupancy(const model::DepthModel& m, const config::RunConfig& cfg,
                        const datakit::SyntheticDataset& ds, const std::vector<int64_t>& idx,
                        int buckets, int frames) {
  Tensor sum;
  int used = 0;
  for (int i = 0; i < frames && i < static_cast<int>(idx.size()); ++i) {
    auto s = ds.sample(idx[static_cast<size_t>(i)]);
    auto a = fovalign::align_fov(s.rgb, &s.depth, s.intrinsics, cfg.fov_spec());
    auto b = m.forward(a);
    bincore::ProbabilityVolume pv;
    pv.probs = b.finest_probs->val;
    auto gt5 = objectives::downsample_gt(a.depth, pv.probs.dim(1), pv.probs.dim(2));
    bool any = false;
    for (auto v : gt5.valid) any = any || v != 0;
    if (!any) continue;
    Tensor h = bincore::bin_occupancy_histogram(b.fused_centers, pv, gt5, buckets, cfg.z_max);
    if (sum.numel() == 0) sum = Tensor(h.shape());
    for (int64_t j = 0; j < h.numel(); ++j) sum[j] += h[j];
    ++used;
  }
  if (used == 0) throw std::runtime_error("occupancy: no evaluable frames");
  for (int64_t r = 0; r < sum.dim(0); ++r) {
    double row = 0.0;
    for (int64_t c = 0; c < sum.dim(1); ++c) row += sum.at2(r, c);
    if (row > 0.0)
      for (int64_t c = 0; c < sum.dim(1); ++c) sum.at2(r, c) /= row;
  }
  return sum;
}

int cmd_figures(const std::string& config_path, const std::string& ckpt,
                const std::string& out_dir, const std::string& width_ckpt,
                const std::string& sweep_dir, int64_t seed_override) {
  namespace fs = std::filesystem;
  config::RunConfig cfg = load_run_config(config_path, seed_override);
  model::DepthModel m = model::load_checkpoint(ckpt);
  fs::create_directories(out_dir);
  auto ds = trainer::dataset_from_config(cfg);

  // bin-center curves for one short-range and one long-range test image
  std::vector<std::pair<std::string, std::vector<double>>> curves;
  for (int want : {1, cfg.k_domains}) {
    for (int64_t idx : ds.test_idx) {
      if (ds.rd[static_cast<size_t>(idx)] != want) continue;
      auto s = ds.sample(idx);
      auto a = fovalign::align_fov(s.rgb, &s.depth, s.intrinsics, cfg.fov_spec());
      curves.emplace_back("rd" + std::to_string(want),
                          m.forward(a).fused_centers.centers);
      break;
    }
  }
  figures::bin_center_curves((fs::path(out_dir) / "bin_centers").string(), curves);

  figures::occupancy_heatmap((fs::path(out_dir) / "occupancy_variation").string(),
                             pooled_occupancy(m, cfg, ds, ds.test_idx, 24, 10));
  if (!width_ckpt.empty()) {
    model::DepthModel mw = model::load_checkpoint(width_ckpt);
    figures::occupancy_heatmap((fs::path(out_dir) / "occupancy_width").string(),
                               pooled_occupancy(mw, cfg, ds, ds.test_idx, 24, 10));
  } else {
    std::cerr << "warning: no width-based checkpoint given, skipping its occupancy heatmap\n";
  }

  // per-frame RMSE over the test split
  std::vector<evalmetrics::EvalFrame> frames;
  std::vector<fovalign::AlignedSample> aligned;
  std::vector<fovalign::CameraIntrinsics> intrs;
  for (int64_t idx : ds.test_idx) {
    auto s = ds.sample(idx);
    evalmetrics::EvalFrame fr;
    fr.gt = s.depth;
    fr.indoor_flag = s.meta.indoor_flag;
    frames.push_back(fr);
    aligned.push_back(fovalign::align_fov(s.rgb, &s.depth, s.intrinsics, cfg.fov_spec()));
    intrs.push_back(s.intrinsics);
  }
  auto series = evalmetrics::per_frame_series(
      frames,
      [&](int64_t i) {
        return fovalign::inverse_align(m.predict_with_mirror(aligned[static_cast<size_t>(i)]),
                                       aligned[static_cast<size_t>(i)],
                                       intrs[static_cast<size_t>(i)]);
      },
      cfg.z_max);
  figures::rmse_series((fs::path(out_dir) / "rmse_per_frame").string(), series);

  // K sweep from a directory of k<k>.bin checkpoints
  if (!sweep_dir.empty()) {
    std::vector<int> ks;
    std::vector<double> d1s, rmses;
    for (int k = 1; k <= 8; ++k) {
      const std::string path = (fs::path(sweep_dir) / ("k" + std::to_string(k) + ".bin")).string();
      if (!fs::exists(path)) continue;
      config::RunConfig ck = cfg;
      ck.k_domains = k;
      model::DepthModel mk = model::load_checkpoint(path);
      auto dsk = trainer::dataset_from_config(ck);
      auto rep = trainer::evaluate_split(mk, ck, dsk, dsk.test_idx);
      ks.push_back(k);
      d1s.push_back(rep.overall.delta1);
      rmses.push_back(rep.overall.rmse);
    }
    if (ks.empty())
      std::cerr << "warning: no sweep checkpoints found in " << sweep_dir
                << ", skipping the K-sweep figure\n";
    else
      figures::k_sweep((fs::path(out_dir) / "k_sweep").string(), ks, d1s, rmses);
  }
  std::cout << "figures written to " << out_dir << "\n";
  return 0;
}

int cmd_sweep_k(const std::string& config_path, const std::string& out_dir,
                const std::vector<int>& ks, int64_t seed_override) {
  namespace fs = std::filesystem;
  config::RunConfig cfg = load_run_config(config_path, seed_override);
  fs::create_directories(out_dir);
  std::vector<int> done;
  std::vector<double> d1s, rmses;
  for (int k : ks) {
    config::RunConfig ck = cfg;
    ck.k_domains = k;
    ck.validate();
    const std::string ckpt = (fs::path(out_dir) / ("k" + std::to_string(k) + ".bin")).string();
    trainer::train(ck, ckpt, (fs::path(out_dir) / ("k" + std::to_string(k) + ".log")).string());
    model::DepthModel mk = model::load_checkpoint(ckpt);
    auto dsk = trainer::dataset_from_config(ck);
    auto rep = trainer::evaluate_split(mk, ck, dsk, dsk.test_idx);
    std::cout << "K=" << k << ": delta1=" << rep.overall.delta1 << " rmse=" << rep.overall.rmse
              << "\n";
    done.push_back(k);
    d1s.push_back(rep.overall.delta1);
    rmses.push_back(rep.overall.rmse);
  }
  figures::k_sweep((fs::path(out_dir) / "k_sweep").string(), done, d1s, rmses);
  return 0;
}

bool is_user_error(const std::exception& e) {
  if (dynamic_cast<const std::invalid_argument*>(&e)) return true;
  const std::string msg = e.what();
  return msg.find("cannot open") != std::string::npos ||
         msg.find("missing") != std::string::npos || msg.find("checkpoint:") == 0 ||
         msg.find("config") != std::string::npos;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metric depth estimation with variation-based adaptive bins"};
  app.require_subcommand(1);
  int64_t seed_override = -1;
  app.add_option("--seed", seed_override, "override the config seed everywhere");

  std::string config_path, out, log_path, resume, ckpt, split = "test", baseline_name;
  std::string image_path, preview_path, width_ckpt, sweep_dir, report_path;
  std::vector<double> baseline;
  double fx = 0.0, fy = 0.0, fov_x = 58.0, fov_y = 45.0, z_min = 0.0, z_max = 80.0;
  int k = 4;
  std::vector<int> k_values = {1, 2, 3, 4};

  auto* train = app.add_subcommand("train", "train on the procedural dataset");
  train->add_option("--config", config_path)->required();
  train->add_option("--out", out)->required();
  train->add_option("--log", log_path);
  train->add_option("--resume", resume);

  auto* eval = app.add_subcommand("eval", "metrics over a dataset split");
  eval->add_option("--config", config_path)->required();
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--baseline", baseline, "baseline delta1 rel rmse for mRI");
  eval->add_option("--baseline-name", baseline_name);
  eval->add_option("--report", report_path);

  auto* predict = app.add_subcommand("predict", "single-image metric depth");
  predict->add_option("--checkpoint", ckpt)->required();
  predict->add_option("--image", image_path)->required();
  predict->add_option("--fx", fx);
  predict->add_option("--fy", fy);
  predict->add_option("--out", out)->required();
  predict->add_option("--preview", preview_path);
  predict->add_option("--fov-x", fov_x);
  predict->add_option("--fov-y", fov_y);

  auto* partition = app.add_subcommand("partition", "print the range-domain tables");
  partition->add_option("--z-min", z_min);
  partition->add_option("--z-max", z_max);
  partition->add_option("--k", k);

  auto* figures_cmd = app.add_subcommand("figures", "emit figures with CSV twins");
  figures_cmd->add_option("--config", config_path)->required();
  figures_cmd->add_option("--checkpoint", ckpt)->required();
  figures_cmd->add_option("--out-dir", out)->required();
  figures_cmd->add_option("--width-checkpoint", width_ckpt);
  figures_cmd->add_option("--sweep-dir", sweep_dir);

  auto* sweep = app.add_subcommand("sweep-k", "train and evaluate across domain counts");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--out-dir", out)->required();
  sweep->add_option("--k-values", k_values);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train) return cmd_train(config_path, out, log_path, resume, seed_override);
    if (*eval) return cmd_eval(config_path, ckpt, split, baseline, baseline_name, report_path,
                               seed_override);
    if (*predict)
      return cmd_predict(ckpt, image_path, fx, fy, out, preview_path, fov_x, fov_y);
    if (*partition) return cmd_partition(z_min, z_max, k);
    if (*figures_cmd)
      return cmd_figures(config_path, ckpt, out, width_ckpt, sweep_dir, seed_override);
    if (*sweep) return cmd_sweep_k(config_path, out, k_values, seed_override);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_user_error(e) ? 1 : 2;
  }
  return 2;
}
