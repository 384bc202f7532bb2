#include "cli/config_file.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "unidg/error.hpp"

namespace unidg::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string tok;
  for (char c : s) {
    if (c == ',' || c == ' ') {
      if (!tok.empty()) out.push_back(tok);
      tok.clear();
    } else {
      tok += c;
    }
  }
  if (!tok.empty()) out.push_back(tok);
  return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split_list(s)) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (*end != '\0') throw ConfigError("config: '" + key + "' has a bad number '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys{
      // adaptation
      "sigma", "lambda_weight", "top_k", "capacity", "lr", "batch_size", "steps", "seed",
      "enable_lm", "enable_le", "enable_li", "enable_bank", "enable_refresh", "method",
      // source training
      "weight_decay", "epochs", "holdout_fraction",
      // model shape
      "hidden_dims", "feature_dim", "with_norm",
      // synthetic data
      "num_classes", "input_dim", "separation", "covariance_scale", "kind", "angle_deg",
      "translation_std", "translation", "affine", "num_sources", "samples_per_domain",
      "target_samples", "source_max_angle_deg",
      // command knobs
      "threads", "pairs", "trials"};
  return keys;
}

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  const auto& keys = known_config_keys();
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected key=value", lineno);
    const std::string key = trim(line.substr(0, eq));
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ParseError("config: unknown key '" + key + "'", lineno);
    }
    if (cfg.values_.count(key)) throw ParseError("config: duplicate key '" + key + "'", lineno);
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void ConfigFile::set(const std::string& key, const std::string& value) {
  const auto& keys = known_config_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw ConfigError("config: unknown key '" + key + "'");
  }
  values_[key] = value;
}

double ConfigFile::get_double(const std::string& key) const {
  const auto v = to_doubles(key, get_string(key));
  if (v.size() != 1) throw ConfigError("config: '" + key + "' expects one number");
  return v.front();
}

std::size_t ConfigFile::get_size(const std::string& key) const {
  const std::string& s = get_string(key);
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || v < 0) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + s + "'");
  }
  return static_cast<std::size_t>(v);
}

bool ConfigFile::get_bool(const std::string& key) const {
  const std::string& s = get_string(key);
  if (s == "1" || s == "true" || s == "on") return true;
  if (s == "0" || s == "false" || s == "off") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + s + "'");
}

const std::string& ConfigFile::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: missing key '" + key + "'");
  return it->second;
}

void ConfigFile::apply(AdaptConfig& cfg) const {
  if (has("sigma")) cfg.sigma = get_double("sigma");
  if (has("lambda_weight")) cfg.lambda_weight = get_double("lambda_weight");
  if (has("top_k")) cfg.top_k = get_size("top_k");
  if (has("capacity")) cfg.capacity = get_size("capacity");
  if (has("lr")) cfg.lr = get_double("lr");
  if (has("batch_size")) cfg.batch_size = get_size("batch_size");
  if (has("steps")) cfg.steps = get_size("steps");
  if (has("seed")) cfg.seed = get_size("seed");
  if (has("enable_lm")) cfg.enable_lm = get_bool("enable_lm");
  if (has("enable_le")) cfg.enable_le = get_bool("enable_le");
  if (has("enable_li")) cfg.enable_li = get_bool("enable_li");
  if (has("enable_bank")) cfg.enable_bank = get_bool("enable_bank");
  if (has("enable_refresh")) cfg.enable_refresh = get_bool("enable_refresh");
  if (has("method")) cfg.method = parse_method(get_string("method"));
}

void ConfigFile::apply(TrainConfig& cfg) const {
  if (has("lr")) cfg.lr = get_double("lr");
  if (has("weight_decay")) cfg.weight_decay = get_double("weight_decay");
  if (has("batch_size")) cfg.batch_size = get_size("batch_size");
  if (has("epochs")) cfg.epochs = get_size("epochs");
  if (has("holdout_fraction")) cfg.holdout_fraction = get_double("holdout_fraction");
  if (has("seed")) cfg.seed = get_size("seed");
}

void ConfigFile::apply(ShiftSpec& spec) const {
  if (has("num_classes")) spec.num_classes = get_size("num_classes");
  if (has("input_dim")) spec.input_dim = get_size("input_dim");
  if (has("separation")) spec.separation = get_double("separation");
  if (has("covariance_scale")) spec.covariance_scale = get_double("covariance_scale");
  if (has("kind")) spec.kind = parse_shift_kind(get_string("kind"));
  if (has("angle_deg")) spec.angle_deg = get_double("angle_deg");
  if (has("translation_std")) spec.translation_std = get_double("translation_std");
  if (has("translation")) spec.translation = to_doubles("translation", get_string("translation"));
  if (has("affine")) spec.affine = to_doubles("affine", get_string("affine"));
  if (has("num_sources")) spec.num_sources = get_size("num_sources");
  if (has("samples_per_domain")) spec.samples_per_domain = get_size("samples_per_domain");
  if (has("target_samples")) spec.target_samples = get_size("target_samples");
  if (has("source_max_angle_deg")) spec.source_max_angle_deg = get_double("source_max_angle_deg");
  if (has("seed")) spec.seed = get_size("seed");
}

void ConfigFile::apply(ModelShape& shape) const {
  if (has("hidden_dims")) {
    shape.hidden_dims.clear();
    for (double v : to_doubles("hidden_dims", get_string("hidden_dims"))) {
      if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) {
        throw ConfigError("config: hidden_dims must be positive integers");
      }
      shape.hidden_dims.push_back(static_cast<std::size_t>(v));
    }
  }
  if (has("feature_dim")) shape.feature_dim = get_size("feature_dim");
  if (has("with_norm")) shape.with_norm = get_bool("with_norm");
}

}  // namespace unidg::cli
