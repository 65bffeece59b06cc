#include "vbdepth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "vbdepth/kernels.hpp"
#include "vbdepth/objectives.hpp"

namespace vbd::trainer {

namespace {

struct PreparedSample {
  fovalign::AlignedSample aligned;
  int label = 0;
};

PreparedSample prepare(const datakit::DepthSample& s, const config::RunConfig& cfg,
                       const domains::RangeDomainSet& rds) {
  PreparedSample out;
  out.aligned = fovalign::align_fov(s.rgb, &s.depth, s.intrinsics, cfg.fov_spec());
  out.label = domains::rd_label(out.aligned.depth, rds, 0.99);
  return out;
}

void append_log(const std::string& path, const EpochLog& e) {
  if (path.empty()) return;
  std::ofstream f(path, std::ios::app);
  nlohmann::json j;
  j["epoch"] = e.epoch;
  j["lr"] = e.lr;
  j["train_pixel"] = e.train_pixel;
  j["train_chamfer"] = e.train_chamfer;
  j["train_ce"] = e.train_ce;
  j["train_total"] = e.train_total;
  j["val_total"] = e.val_total;
  j["val_rd_accuracy"] = e.val_rd_accuracy;
  f << j.dump() << "\n";
}

evalmetrics::MetricRecord record_from_acc(const double acc[7]) {
  evalmetrics::MetricRecord r;
  r.n_pixels = static_cast<int64_t>(acc[0]);
  const double inv = 1.0 / acc[0];
  r.rel = acc[1] * inv;
  r.rmse = std::sqrt(acc[2] * inv);
  r.log10 = acc[3] * inv;
  r.delta1 = acc[4] * inv;
  r.delta2 = acc[5] * inv;
  r.delta3 = acc[6] * inv;
  return r;
}

int argmax_label(const domains::DomainProbability& y) {
  int best = 1;
  for (size_t k = 1; k < y.y.size(); ++k)
    if (y.y[k] > y.y[static_cast<size_t>(best - 1)]) best = static_cast<int>(k) + 1;
  return best;
}

}  // namespace

datakit::SyntheticDataset dataset_from_config(const config::RunConfig& cfg) {
  datakit::SynthConfig sc;
  sc.seed = cfg.seed;
  sc.range_set = cfg.range_set();
  sc.image_h = cfg.input_h;
  sc.image_w = cfg.input_w;
  const std::vector<double> uniform(static_cast<size_t>(cfg.k_domains),
                                    1.0 / static_cast<double>(cfg.k_domains));
  return datakit::make_dataset(sc, cfg.dataset_count, uniform);
}

TrainResult train(const config::RunConfig& cfg, const std::string& checkpoint_out,
                  const std::string& log_path, const std::string& resume_from) {
  cfg.validate();
  if (cfg.threads <= 1) {
    kernels::set_parallel_enabled(false);
  } else {
    kernels::set_parallel_enabled(true);
    kernels::set_thread_count(cfg.threads);
  }

  const auto rds = cfg.range_set();
  auto ds = dataset_from_config(cfg);
  if (ds.train_idx.empty() || ds.test_idx.empty())
    throw std::runtime_error("train: dataset too small for a train/test split");

  model::TrainState state;
  model::DepthModel m = resume_from.empty()
                            ? model::DepthModel(cfg.model_config(), cfg.seed)
                            : model::load_checkpoint(resume_from, &state);
  nn::Adam opt(m.params());
  if (!resume_from.empty()) {
    opt.moments_m() = state.adam_m;
    opt.moments_v() = state.adam_v;
    opt.set_step_count(state.adam_step);
  }
  const int64_t start_epoch = resume_from.empty() ? 0 : state.epoch;

  const int64_t n_train = static_cast<int64_t>(ds.train_idx.size());
  const int64_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;

  TrainResult result;
  int64_t global_step = start_epoch * steps_per_epoch;
  for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order = ds.train_idx;
    std::mt19937_64 shuffle_rng(datakit::hash_seed(cfg.seed, 0xe90cull + static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog log;
    log.epoch = epoch + 1;
    double lr_last = cfg.lr_start;
    for (int64_t b = 0; b < steps_per_epoch; ++b) {
      const int64_t lo = b * cfg.batch_size;
      const int64_t hi = std::min<int64_t>(lo + cfg.batch_size, n_train);
      const double inv_batch = 1.0 / static_cast<double>(hi - lo);
      for (int64_t i = lo; i < hi; ++i) {
        const int64_t idx = order[static_cast<size_t>(i)];
        datakit::DepthSample raw = ds.sample(idx);
        raw = datakit::augment(
            raw, datakit::hash_seed(cfg.seed ^ 0xa9u, static_cast<uint64_t>(epoch * 1000003 + idx)));
        PreparedSample ps = prepare(raw, cfg, rds);
        auto tl = objectives::total_loss(m.forward(ps.aligned), ps.aligned.depth, ps.label,
                                         cfg.loss_weights(), cfg.chamfer_cap,
                                         datakit::hash_seed(cfg.seed, static_cast<uint64_t>(idx)));
        if (!std::isfinite(tl.breakdown.total))
          throw std::runtime_error("train: non-finite loss at epoch " +
                                   std::to_string(epoch + 1) + ", sample " + std::to_string(idx));
        log.train_pixel += tl.breakdown.pixel;
        log.train_chamfer += tl.breakdown.chamfer;
        log.train_ce += tl.breakdown.domain_ce;
        log.train_total += tl.breakdown.total;
        ag::backward(ag::scale(tl.total, inv_batch));
      }
      const double progress = static_cast<double>(global_step) / static_cast<double>(total_steps);
      lr_last = cfg.lr_start + (cfg.lr_end - cfg.lr_start) * progress;
      opt.step(lr_last);
      ++global_step;
    }
    const double inv_n = 1.0 / static_cast<double>(n_train);
    log.train_pixel *= inv_n;
    log.train_chamfer *= inv_n;
    log.train_ce *= inv_n;
    log.train_total *= inv_n;
    log.lr = lr_last;

    int correct = 0;
    double val_total = 0.0;
    for (int64_t idx : ds.test_idx) {
      PreparedSample ps = prepare(ds.sample(idx), cfg, rds);
      auto bundle = m.forward(ps.aligned);
      auto tl = objectives::total_loss(bundle, ps.aligned.depth, ps.label, cfg.loss_weights(),
                                       cfg.chamfer_cap,
                                       datakit::hash_seed(cfg.seed, static_cast<uint64_t>(idx)));
      val_total += tl.breakdown.total;
      if (argmax_label(bundle.domain_probs) == ps.label) ++correct;
    }
    log.val_total = val_total / static_cast<double>(ds.test_idx.size());
    log.val_rd_accuracy = static_cast<double>(correct) / static_cast<double>(ds.test_idx.size());

    append_log(log_path, log);
    result.epochs.push_back(log);
    result.final_train_loss = log.train_total;

    if (!checkpoint_out.empty()) {
      model::TrainState out_state;
      out_state.epoch = epoch + 1;
      out_state.adam_step = opt.step_count();
      out_state.adam_m = opt.moments_m();
      out_state.adam_v = opt.moments_v();
      model::save_checkpoint(checkpoint_out, m, &out_state);
    }
  }
  return result;
}

EvalReport evaluate_split(const model::DepthModel& m, const config::RunConfig& cfg,
                          const datakit::SyntheticDataset& ds,
                          const std::vector<int64_t>& indices) {
  const auto rds = cfg.range_set();
  std::vector<std::array<double, 7>> per_rd(static_cast<size_t>(cfg.k_domains + 1));
  for (auto& a : per_rd) a.fill(0.0);
  int correct = 0;
  int64_t frames = 0;

  for (int64_t idx : indices) {
    datakit::DepthSample s = ds.sample(idx);
    fovalign::AlignedSample a = fovalign::align_fov(s.rgb, &s.depth, s.intrinsics, cfg.fov_spec());
    bincore::DepthMap pred = m.predict_with_mirror(a);
    bincore::DepthMap restored = fovalign::inverse_align(pred, a, s.intrinsics);

    const int label = domains::rd_label(s.depth, rds, 0.99);
    if (argmax_label(m.forward(a).domain_probs) == label) ++correct;
    ++frames;

    const int64_t n = s.depth.numel();
    std::vector<double> p(static_cast<size_t>(n));
    std::vector<unsigned char> joint(static_cast<size_t>(n), 0);
    for (int64_t i = 0; i < n; ++i) {
      p[static_cast<size_t>(i)] = std::max(restored.depth[static_cast<size_t>(i)], 1e-3);
      joint[static_cast<size_t>(i)] = s.depth.valid[static_cast<size_t>(i)] &&
                                      restored.valid[static_cast<size_t>(i)] &&
                                      s.depth.depth[static_cast<size_t>(i)] <= s.meta.max_range;
    }
    double acc[7];
    kernels::metric_accum(p.data(), s.depth.depth.data(), joint.data(), n, acc);
    for (int j = 0; j < 7; ++j) {
      per_rd[static_cast<size_t>(label)][static_cast<size_t>(j)] += acc[j];
      per_rd[0][static_cast<size_t>(j)] += acc[j];  // slot 0 pools everything
    }
  }

  EvalReport report;
  report.frames = frames;
  report.rd_accuracy = frames ? static_cast<double>(correct) / static_cast<double>(frames) : 0.0;
  if (per_rd[0][0] < 1.0) throw std::runtime_error("evaluate_split: no evaluable pixels");
  report.overall = record_from_acc(per_rd[0].data());
  for (int k = 1; k <= cfg.k_domains; ++k)
    if (per_rd[static_cast<size_t>(k)][0] >= 1.0)
      report.per_rd.push_back({k, record_from_acc(per_rd[static_cast<size_t>(k)].data())});
  return report;
}

}  // namespace vbd::trainer
