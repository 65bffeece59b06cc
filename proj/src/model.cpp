#include "vbdepth/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace vbd::model {

HeadVariant head_variant_from_string(const std::string& s) {
  if (s == "shared_ffn") return HeadVariant::shared_ffn;
  if (s == "one_query_k_ffn") return HeadVariant::one_query_k_ffn;
  if (s == "k_query_k_ffn") return HeadVariant::k_query_k_ffn;
  throw std::invalid_argument("unknown head variant: " + s);
}

std::string to_string(HeadVariant v) {
  switch (v) {
    case HeadVariant::shared_ffn: return "shared_ffn";
    case HeadVariant::one_query_k_ffn: return "one_query_k_ffn";
    case HeadVariant::k_query_k_ffn: return "k_query_k_ffn";
  }
  throw std::logic_error("bad head variant");
}

void ModelConfig::validate() const {
  if (n_bins < 2) throw std::invalid_argument("config: n_bins must be >= 2");
  if (k_domains < 1) throw std::invalid_argument("config: k_domains must be >= 1");
  if (base_channels < 1) throw std::invalid_argument("config: base_channels must be >= 1");
  if (input_h < 32 || input_w < 32) throw std::invalid_argument("config: input must be >= 32");
  if (pst_patch_sizes.empty()) throw std::invalid_argument("config: need at least one patch size");
  for (int p : pst_patch_sizes)
    if (p < 1) throw std::invalid_argument("config: patch sizes must be positive");
  if (pst_dim % pst_heads != 0)
    throw std::invalid_argument("config: pst_dim must be divisible by pst_heads");
  if (!(z_max > z_min)) throw std::invalid_argument("config: z_max must exceed z_min");
  if (pst_depth < 1) throw std::invalid_argument("config: pst_depth must be >= 1");
}

Tensor image_to_tensor(const fovalign::Image& img) {
  Tensor t({3, img.h, img.w});
  for (int64_t y = 0; y < img.h; ++y)
    for (int64_t x = 0; x < img.w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        t.at3(c, y, x) = static_cast<double>(img.at(y, x, static_cast<int>(c))) / 255.0;
  return t;
}

namespace {

// gather: out[i] = x[idx[i]]; a bijective idx makes this an exact permutation
ag::Var gather_reshape(const ag::Var& x, std::shared_ptr<std::vector<int64_t>> idx,
                       std::vector<int64_t> shape) {
  Tensor out(shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->val[(*idx)[static_cast<size_t>(i)]];
  return ag::make_node(std::move(out), {x}, [idx](ag::Node& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (int64_t i = 0; i < self.val.numel(); ++i)
      p->grad[(*idx)[static_cast<size_t>(i)]] += self.grad[i];
  });
}

struct PatchPlan {
  int p = 1;
  int64_t tokens = 0, token_dim = 0;
  std::shared_ptr<std::vector<int64_t>> fwd, inv;  // patchify and unpatchify orders
};

PatchPlan make_patch_plan(int p, int64_t c, int64_t h, int64_t w) {
  if (h % p != 0 || w % p != 0)
    throw std::invalid_argument("pst: patch size does not divide the feature dims");
  PatchPlan plan;
  plan.p = p;
  plan.tokens = (h / p) * (w / p);
  plan.token_dim = c * p * p;
  plan.fwd = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(plan.tokens * plan.token_dim));
  plan.inv = std::make_shared<std::vector<int64_t>>(plan.fwd->size());
  int64_t i = 0;
  for (int64_t ty = 0; ty < h / p; ++ty)
    for (int64_t tx = 0; tx < w / p; ++tx)
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t dy = 0; dy < p; ++dy)
          for (int64_t dx = 0; dx < p; ++dx) {
            const int64_t src = ch * h * w + (ty * p + dy) * w + (tx * p + dx);
            (*plan.fwd)[static_cast<size_t>(i)] = src;
            (*plan.inv)[static_cast<size_t>(src)] = i;
            ++i;
          }
  return plan;
}

struct ResBlock {
  nn::Conv2d c1, c2;
  ResBlock() = default;
  ResBlock(nn::ParamStore& ps, const std::string& name, int64_t ch, nn::Rng& rng)
      : c1(ps, name + ".c1", ch, ch, 3, 1, 1, rng), c2(ps, name + ".c2", ch, ch, 3, 1, 1, rng) {}
  ag::Var operator()(const ag::Var& x) const {
    return ag::relu(ag::add(x, c2(ag::relu(c1(x)))));
  }
};

struct PstEncoder {
  nn::Linear proj_in, proj_out;
  std::vector<nn::TransformerLayer> layers;
};

}  // namespace

struct DepthModel::Layers {
  std::vector<nn::Conv2d> backbone;      // 5 strided convs
  std::vector<PstEncoder> encoders;      // one per patch size
  size_t smallest_encoder = 0;
  ag::Var queries;                       // (n_bin_queries + 1, pst_dim)
  int n_bin_queries = 0;
  std::vector<std::pair<nn::Linear, nn::Linear>> bin_ffns;  // two-layer maps, no activation
  nn::Linear domain;
  ResBlock dec_res1;
  nn::Conv2d dec_head1;
  std::vector<nn::Conv2d> dec_fuse;      // stages 2..5
  std::vector<ResBlock> dec_res;
  std::vector<nn::Conv2d> dec_head;
};

DepthModel::DepthModel(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  nn::Rng rng(seed);
  layers_ = std::make_shared<Layers>();
  auto& L = *layers_;

  const int64_t b = cfg_.base_channels;
  const int64_t ch[6] = {3, b, 2 * b, 4 * b, 8 * b, 16 * b};
  for (int s = 0; s < 5; ++s)
    L.backbone.emplace_back(ps_, "backbone." + std::to_string(s), ch[s], ch[s + 1], 4, 2, 1, rng);

  const int64_t c1 = 16 * b;
  int smallest = cfg_.pst_patch_sizes[0];
  for (size_t i = 0; i < cfg_.pst_patch_sizes.size(); ++i) {
    const int p = cfg_.pst_patch_sizes[i];
    if (p < smallest) {
      smallest = p;
      L.smallest_encoder = i;
    }
    PstEncoder enc;
    const std::string name = "pst." + std::to_string(p);
    enc.proj_in = nn::Linear(ps_, name + ".in", c1 * p * p, cfg_.pst_dim, rng);
    enc.proj_out = nn::Linear(ps_, name + ".out", cfg_.pst_dim, c1 * p * p, rng);
    for (int l = 0; l < cfg_.pst_depth; ++l)
      enc.layers.emplace_back(ps_, name + ".layer" + std::to_string(l), cfg_.pst_dim,
                              cfg_.pst_heads, 4 * cfg_.pst_dim, rng);
    L.encoders.push_back(std::move(enc));
  }

  L.n_bin_queries = cfg_.head_variant == HeadVariant::one_query_k_ffn ? 1 : cfg_.k_domains;
  L.queries = ps_.create("queries",
                         nn::randn(rng, {L.n_bin_queries + 1, cfg_.pst_dim}, 0.02));

  const int n_ffns = cfg_.head_variant == HeadVariant::shared_ffn ? 1 : cfg_.k_domains;
  for (int k = 0; k < n_ffns; ++k) {
    const std::string name = "bin_ffn." + std::to_string(k);
    nn::Linear l1(ps_, name + ".l1", cfg_.pst_dim, cfg_.pst_dim, rng);
    nn::Linear l2(ps_, name + ".l2", cfg_.pst_dim, cfg_.n_bins, rng);
    // bias seeds an even ramp over the depth range at initialization
    if (!cfg_.width_based_bins)
      l2.b->val.fill(cfg_.z_max / static_cast<double>(cfg_.n_bins));
    L.bin_ffns.emplace_back(std::move(l1), std::move(l2));
  }
  L.domain = nn::Linear(ps_, "domain_head", cfg_.pst_dim, cfg_.k_domains, rng);

  L.dec_res1 = ResBlock(ps_, "dec.1.res", c1, rng);
  L.dec_head1 = nn::Conv2d(ps_, "dec.1.head", c1, cfg_.n_bins, 1, 1, 0, rng);
  for (int s = 2; s <= 5; ++s) {
    const int64_t cs = ch[6 - s];  // F_s channel count
    const std::string name = "dec." + std::to_string(s);
    L.dec_fuse.emplace_back(ps_, name + ".fuse", cs + 1, cs, 3, 1, 1, rng);
    L.dec_res.emplace_back(ps_, name + ".res", cs, rng);
    L.dec_head.emplace_back(ps_, name + ".head", cs, cfg_.n_bins, 1, 1, 0, rng);
  }
}

FeaturePyramid DepthModel::backbone_forward(const ag::Var& image) const {
  if (image->val.dim(0) != 3 || image->val.dim(1) != cfg_.input_h ||
      image->val.dim(2) != cfg_.input_w)
    throw std::invalid_argument("backbone: wrong input size " + Tensor::shape_str(image->val.shape()));
  std::vector<ag::Var> feats;  // shallow (h/2) first
  ag::Var x = image;
  for (const auto& conv : layers_->backbone) {
    x = ag::relu(conv(x));
    feats.push_back(x);
  }
  FeaturePyramid pyr;
  // f[0] deepest (h/32) .. f[4] shallowest (h/2)
  for (int i = 4; i >= 0; --i) pyr.f.push_back(feats[static_cast<size_t>(i)]);
  return pyr;
}

std::pair<ag::Var, QueryBundle> DepthModel::pst_forward(const ag::Var& f1) const {
  const auto& L = *layers_;
  const int64_t c = f1->val.dim(0), h = f1->val.dim(1), w = f1->val.dim(2);
  const int64_t nq = L.n_bin_queries + 1;

  std::vector<ag::Var> recons;
  ag::Var query_out;
  for (size_t i = 0; i < L.encoders.size(); ++i) {
    const auto plan = make_patch_plan(cfg_.pst_patch_sizes[i], c, h, w);
    ag::Var tokens = gather_reshape(f1, plan.fwd, {plan.tokens, plan.token_dim});
    tokens = L.encoders[i].proj_in(tokens);
    const bool carries_queries = i == L.smallest_encoder;
    if (carries_queries) tokens = ag::concat_rows({tokens, L.queries});
    for (const auto& layer : L.encoders[i].layers) tokens = layer(tokens);
    ag::Var body = carries_queries ? ag::slice_rows(tokens, 0, plan.tokens) : tokens;
    if (carries_queries) query_out = ag::slice_rows(tokens, plan.tokens, plan.tokens + nq);
    recons.push_back(gather_reshape(L.encoders[i].proj_out(body), plan.inv, {c, h, w}));
  }

  ag::Var mixed = recons[0];
  for (size_t i = 1; i < recons.size(); ++i) mixed = ag::add(mixed, recons[i]);
  ag::Var context = ag::add(f1, ag::scale(mixed, 1.0 / static_cast<double>(recons.size())));

  QueryBundle q;
  for (int64_t i = 0; i < nq - 1; ++i)
    q.bin_query_outputs.push_back(ag::slice_rows(query_out, i, i + 1));
  q.domain_query_output = ag::slice_rows(query_out, nq - 1, nq);
  return {context, q};
}

std::pair<std::vector<ag::Var>, domains::BinBank> DepthModel::bin_head(const QueryBundle& q) const {
  const auto& L = *layers_;
  auto centers_from = [&](const ag::Var& query, const std::pair<nn::Linear, nn::Linear>& ffn) {
    ag::Var vec = ag::reshape(ffn.second(ffn.first(query)), {cfg_.n_bins});
    return cfg_.width_based_bins ? bincore::ag_width_centers(vec, cfg_.z_min, cfg_.z_max)
                                 : bincore::ag_variation_centers(vec);
  };
  std::vector<ag::Var> bank_vars;
  for (int k = 0; k < cfg_.k_domains; ++k) {
    const ag::Var& query = cfg_.head_variant == HeadVariant::one_query_k_ffn
                               ? q.bin_query_outputs[0]
                               : q.bin_query_outputs[static_cast<size_t>(k)];
    const auto& ffn = cfg_.head_variant == HeadVariant::shared_ffn
                          ? L.bin_ffns[0]
                          : L.bin_ffns[static_cast<size_t>(k)];
    bank_vars.push_back(centers_from(query, ffn));
  }
  domains::BinBank bank;
  const auto kind = cfg_.width_based_bins ? bincore::CenterKind::width_based
                                          : bincore::CenterKind::variation_based;
  for (const auto& v : bank_vars) {
    bincore::BinCenterVector cv;
    cv.kind = kind;
    cv.centers.assign(v->val.data(), v->val.data() + v->val.numel());
    bank.per_domain_centers.push_back(std::move(cv));
  }
  return {bank_vars, bank};
}

std::pair<ag::Var, domains::DomainProbability> DepthModel::domain_head(
    const ag::Var& domain_out) const {
  ag::Var logits = layers_->domain(domain_out);  // (1, K)
  ag::Var probs = ag::softmax_rows(logits);
  domains::DomainProbability y;
  y.y.assign(probs->val.data(), probs->val.data() + probs->val.numel());
  return {logits, y};
}

std::vector<ag::Var> DepthModel::hsc_decode(const FeaturePyramid& pyr, const ag::Var& context,
                                            const ag::Var& centers,
                                            ag::Var* finest_probs) const {
  const auto& L = *layers_;
  if (pyr.f.size() != 5) throw std::invalid_argument("hsc_decode: pyramid must have 5 stages");
  // the schedule halves the input resolution once per stage from the shallow end
  int64_t eh = cfg_.input_h, ew = cfg_.input_w;
  std::vector<std::pair<int64_t, int64_t>> expect(5);
  for (int s = 4; s >= 0; --s) {
    eh /= 2;
    ew /= 2;
    expect[static_cast<size_t>(s)] = {eh, ew};
  }
  for (int s = 0; s < 5; ++s)
    if (pyr.f[static_cast<size_t>(s)]->val.dim(1) != expect[static_cast<size_t>(s)].first ||
        pyr.f[static_cast<size_t>(s)]->val.dim(2) != expect[static_cast<size_t>(s)].second)
      throw std::invalid_argument("hsc_decode: stage resolution schedule violated");

  std::vector<ag::Var> out;
  ag::Var x = L.dec_res1(context);
  ag::Var probs = ag::softmax_channels(L.dec_head1(x));
  out.push_back(ag::combine_depth(probs, centers));
  if (finest_probs) *finest_probs = probs;

  for (int s = 2; s <= 5; ++s) {
    const auto& feat = pyr.f[static_cast<size_t>(s - 1)];
    const int64_t hs = feat->val.dim(1), ws = feat->val.dim(2);
    const ag::Var& prev = out.back();
    ag::Var up = ag::upsample_bilinear(
        ag::reshape(prev, {1, prev->val.dim(0), prev->val.dim(1)}), hs, ws);
    ag::Var fused = ag::relu(L.dec_fuse[static_cast<size_t>(s - 2)](
        ag::concat_channels({feat, up})));
    fused = L.dec_res[static_cast<size_t>(s - 2)](fused);
    ag::Var p = ag::softmax_channels(L.dec_head[static_cast<size_t>(s - 2)](fused));
    out.push_back(ag::combine_depth(p, centers));
    if (finest_probs) *finest_probs = p;
  }
  return out;
}

PredictionBundle DepthModel::forward(const fovalign::AlignedSample& sample) const {
  ag::Var image = ag::constant(image_to_tensor(sample.image));
  FeaturePyramid pyr = backbone_forward(image);
  auto [context, queries] = pst_forward(pyr.f[0]);
  auto [bank_vars, bank] = bin_head(queries);
  auto [logits, y] = domain_head(queries.domain_query_output);

  PredictionBundle out;
  out.domain_logits = logits;
  out.domain_probs = y;
  out.bank_vars = bank_vars;
  out.bin_bank = bank;
  ag::Var y_vec = ag::reshape(ag::softmax_rows(logits), {cfg_.k_domains});
  out.fused_centers_var = domains::ag_fuse_bins(bank_vars, y_vec);
  out.fused_centers.kind = bincore::CenterKind::fused;
  out.fused_centers.centers.assign(out.fused_centers_var->val.data(),
                                   out.fused_centers_var->val.data() + cfg_.n_bins);

  out.stage_depths = hsc_decode(pyr, context, out.fused_centers_var, &out.finest_probs);
  const ag::Var& d5 = out.stage_depths.back();
  out.full_depth_var = ag::reshape(
      ag::upsample_bilinear(ag::reshape(d5, {1, d5->val.dim(0), d5->val.dim(1)}), cfg_.input_h,
                            cfg_.input_w),
      {cfg_.input_h, cfg_.input_w});
  out.full_depth = bincore::DepthMap(cfg_.input_h, cfg_.input_w);
  std::copy(out.full_depth_var->val.data(),
            out.full_depth_var->val.data() + out.full_depth_var->val.numel(),
            out.full_depth.depth.begin());
  return out;
}

bincore::DepthMap DepthModel::predict_with_mirror(const fovalign::AlignedSample& sample) const {
  bincore::DepthMap a = forward(sample).full_depth;
  fovalign::AlignedSample mirrored = sample;
  for (int64_t y = 0; y < sample.image.h; ++y)
    for (int64_t x = 0; x < sample.image.w; ++x)
      for (int c = 0; c < 3; ++c)
        mirrored.image.at(y, x, c) = sample.image.at(y, sample.image.w - 1 - x, c);
  bincore::DepthMap b = forward(mirrored).full_depth;
  bincore::DepthMap out(a.h, a.w);
  for (int64_t y = 0; y < a.h; ++y)
    for (int64_t x = 0; x < a.w; ++x)
      out.at(y, x) = 0.5 * (a.at(y, x) + b.at(y, a.w - 1 - x));
  return out;
}

namespace {

constexpr char kMagic[8] = {'V', 'B', 'D', 'C', 'K', 'P', 'T', '1'};

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["n_bins"] = c.n_bins;
  j["k_domains"] = c.k_domains;
  j["base_channels"] = c.base_channels;
  j["pst_patch_sizes"] = c.pst_patch_sizes;
  j["pst_depth"] = c.pst_depth;
  j["pst_heads"] = c.pst_heads;
  j["pst_dim"] = c.pst_dim;
  j["input_h"] = c.input_h;
  j["input_w"] = c.input_w;
  j["head_variant"] = to_string(c.head_variant);
  j["width_based_bins"] = c.width_based_bins;
  j["z_min"] = c.z_min;
  j["z_max"] = c.z_max;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_bins = j.at("n_bins").get<int64_t>();
  c.k_domains = j.at("k_domains").get<int>();
  c.base_channels = j.at("base_channels").get<int64_t>();
  c.pst_patch_sizes = j.at("pst_patch_sizes").get<std::vector<int>>();
  c.pst_depth = j.at("pst_depth").get<int>();
  c.pst_heads = j.at("pst_heads").get<int>();
  c.pst_dim = j.at("pst_dim").get<int64_t>();
  c.input_h = j.at("input_h").get<int64_t>();
  c.input_w = j.at("input_w").get<int64_t>();
  c.head_variant = head_variant_from_string(j.at("head_variant").get<std::string>());
  c.width_based_bins = j.at("width_based_bins").get<bool>();
  c.z_min = j.at("z_min").get<double>();
  c.z_max = j.at("z_max").get<double>();
  return c;
}

void write_tensor(std::ofstream& f, const Tensor& t) {
  f.write(reinterpret_cast<const char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

void read_tensor(std::ifstream& f, Tensor& t) {
  f.read(reinterpret_cast<char*>(t.data()),
         static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint: truncated tensor data");
}

}  // namespace

void save_checkpoint(const std::string& path, const DepthModel& model, const TrainState* state) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);

  nlohmann::json j;
  j["config"] = config_to_json(model.config());
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& [name, var] : model.params().entries()) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = var->val.shape();
    plist.push_back(e);
  }
  j["params"] = plist;
  j["has_state"] = state != nullptr;
  if (state) {
    j["epoch"] = state->epoch;
    j["adam_step"] = state->adam_step;
  }
  const std::string header = j.dump();

  f.write(kMagic, 8);
  const uint64_t len = header.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, var] : model.params().entries()) write_tensor(f, var->val);
  if (state) {
    for (const auto& t : state->adam_m) write_tensor(f, t);
    for (const auto& t : state->adam_v) write_tensor(f, t);
  }
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

DepthModel load_checkpoint(const std::string& path, TrainState* state) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic (not a checkpoint or wrong version): " + path);
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header(len, '\0');
  f.read(header.data(), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error("checkpoint: truncated header: " + path);
  nlohmann::json j = nlohmann::json::parse(header);

  DepthModel model(config_from_json(j.at("config")), 0);
  const auto& entries = model.params().entries();
  const auto& plist = j.at("params");
  if (plist.size() != entries.size())
    throw std::runtime_error("checkpoint: parameter count mismatch: " + path);
  for (size_t i = 0; i < entries.size(); ++i) {
    if (plist[i].at("name").get<std::string>() != entries[i].first ||
        plist[i].at("shape").get<std::vector<int64_t>>() != entries[i].second->val.shape())
      throw std::runtime_error("checkpoint: parameter layout mismatch at " + entries[i].first);
  }
  for (const auto& [name, var] : entries) read_tensor(f, var->val);

  const bool has_state = j.at("has_state").get<bool>();
  if (state) {
    if (!has_state) throw std::runtime_error("checkpoint: no optimizer state present: " + path);
    state->epoch = j.at("epoch").get<int64_t>();
    state->adam_step = j.at("adam_step").get<int64_t>();
    state->adam_m.clear();
    state->adam_v.clear();
    for (const auto& [name, var] : entries) {
      state->adam_m.emplace_back(var->val.shape());
      read_tensor(f, state->adam_m.back());
    }
    for (const auto& [name, var] : entries) {
      state->adam_v.emplace_back(var->val.shape());
      read_tensor(f, state->adam_v.back());
    }
  }
  return model;
}

}  // namespace vbd::model
