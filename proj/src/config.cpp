#include "vbdepth/config.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace vbd::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    size_t used = 0;
    out.push_back(std::stoi(tok, &used));
    if (used != tok.size()) throw std::invalid_argument("bad integer list entry: " + tok);
  }
  if (out.empty()) throw std::invalid_argument("empty integer list");
  return out;
}

std::string join_int_list(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  size_t used = 0;
  double d;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": " + v);
  }
  if (used != v.size()) throw std::invalid_argument("config: bad number for " + key + ": " + v);
  return d;
}

int64_t to_int(const std::string& key, const std::string& v) {
  size_t used = 0;
  int64_t i;
  try {
    i = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  }
  if (used != v.size()) throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

void RunConfig::validate() const {
  model_config().validate();  // covers the architecture fields
  if (partition != "space_increasing" && partition != "uniform")
    throw std::invalid_argument("config: partition must be space_increasing or uniform");
  if (fov_x_deg <= 0.0 || fov_x_deg >= 180.0 || fov_y_deg <= 0.0 || fov_y_deg >= 180.0)
    throw std::invalid_argument("config: FOV must lie in (0, 180) degrees");
  if (lr_start <= 0.0 || lr_end <= 0.0) throw std::invalid_argument("config: lr must be positive");
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (lambda_pixel < 0.0 || lambda_chamfer < 0.0 || lambda_ce < 0.0)
    throw std::invalid_argument("config: loss weights must be non-negative");
  if (chamfer_cap < 1) throw std::invalid_argument("config: chamfer_cap must be >= 1");
  if (dataset_count < 1) throw std::invalid_argument("config: dataset_count must be >= 1");
  if (threads < 0) throw std::invalid_argument("config: threads must be >= 0");
}

model::ModelConfig RunConfig::model_config() const {
  model::ModelConfig m;
  m.n_bins = n_bins;
  m.k_domains = k_domains;
  m.base_channels = base_channels;
  m.pst_patch_sizes = pst_patch_sizes;
  m.pst_depth = pst_depth;
  m.pst_heads = pst_heads;
  m.pst_dim = pst_dim;
  m.input_h = input_h;
  m.input_w = input_w;
  m.head_variant = model::head_variant_from_string(head_variant);
  m.width_based_bins = width_based_bins;
  m.z_min = z_min;
  m.z_max = z_max;
  return m;
}

fovalign::FovSpec RunConfig::fov_spec() const {
  return {fovalign::deg2rad(fov_x_deg), fovalign::deg2rad(fov_y_deg), input_w, input_h};
}

domains::RangeDomainSet RunConfig::range_set() const {
  return partition == "uniform" ? domains::uniform_partition(z_min, z_max, k_domains)
                                : domains::partition_range(z_min, z_max, k_domains);
}

objectives::LossWeights RunConfig::loss_weights() const {
  return {lambda_pixel, lambda_chamfer, lambda_ce};
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "n_bins") c.n_bins = to_int(key, val);
    else if (key == "k_domains") c.k_domains = static_cast<int>(to_int(key, val));
    else if (key == "base_channels") c.base_channels = to_int(key, val);
    else if (key == "pst_patch_sizes") c.pst_patch_sizes = parse_int_list(val);
    else if (key == "pst_depth") c.pst_depth = static_cast<int>(to_int(key, val));
    else if (key == "pst_heads") c.pst_heads = static_cast<int>(to_int(key, val));
    else if (key == "pst_dim") c.pst_dim = to_int(key, val);
    else if (key == "head_variant") c.head_variant = val;
    else if (key == "width_based_bins") c.width_based_bins = to_bool(key, val);
    else if (key == "z_min") c.z_min = to_double(key, val);
    else if (key == "z_max") c.z_max = to_double(key, val);
    else if (key == "partition") c.partition = val;
    else if (key == "fov_x_deg") c.fov_x_deg = to_double(key, val);
    else if (key == "fov_y_deg") c.fov_y_deg = to_double(key, val);
    else if (key == "input_w") c.input_w = to_int(key, val);
    else if (key == "input_h") c.input_h = to_int(key, val);
    else if (key == "lr_start") c.lr_start = to_double(key, val);
    else if (key == "lr_end") c.lr_end = to_double(key, val);
    else if (key == "epochs") c.epochs = to_int(key, val);
    else if (key == "batch_size") c.batch_size = to_int(key, val);
    else if (key == "lambda_pixel") c.lambda_pixel = to_double(key, val);
    else if (key == "lambda_chamfer") c.lambda_chamfer = to_double(key, val);
    else if (key == "lambda_ce") c.lambda_ce = to_double(key, val);
    else if (key == "chamfer_cap") c.chamfer_cap = to_int(key, val);
    else if (key == "dataset_count") c.dataset_count = to_int(key, val);
    else if (key == "seed") c.seed = static_cast<uint64_t>(to_int(key, val));
    else if (key == "threads") c.threads = static_cast<int>(to_int(key, val));
    else throw std::invalid_argument("config: unknown key: " + key);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  out << "n_bins = " << c.n_bins << "\n";
  out << "k_domains = " << c.k_domains << "\n";
  out << "base_channels = " << c.base_channels << "\n";
  out << "pst_patch_sizes = " << join_int_list(c.pst_patch_sizes) << "\n";
  out << "pst_depth = " << c.pst_depth << "\n";
  out << "pst_heads = " << c.pst_heads << "\n";
  out << "pst_dim = " << c.pst_dim << "\n";
  out << "head_variant = " << c.head_variant << "\n";
  out << "width_based_bins = " << (c.width_based_bins ? "true" : "false") << "\n";
  out << "z_min = " << fmt(c.z_min) << "\n";
  out << "z_max = " << fmt(c.z_max) << "\n";
  out << "partition = " << c.partition << "\n";
  out << "fov_x_deg = " << fmt(c.fov_x_deg) << "\n";
  out << "fov_y_deg = " << fmt(c.fov_y_deg) << "\n";
  out << "input_w = " << c.input_w << "\n";
  out << "input_h = " << c.input_h << "\n";
  out << "lr_start = " << fmt(c.lr_start) << "\n";
  out << "lr_end = " << fmt(c.lr_end) << "\n";
  out << "epochs = " << c.epochs << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "lambda_pixel = " << fmt(c.lambda_pixel) << "\n";
  out << "lambda_chamfer = " << fmt(c.lambda_chamfer) << "\n";
  out << "lambda_ce = " << fmt(c.lambda_ce) << "\n";
  out << "chamfer_cap = " << c.chamfer_cap << "\n";
  out << "dataset_count = " << c.dataset_count << "\n";
  out << "seed = " << c.seed << "\n";
  out << "threads = " << c.threads << "\n";
  return out.str();
}

}  // namespace vbd::config
