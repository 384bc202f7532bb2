#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "unidg/adapt.hpp"
#include "unidg/data.hpp"
#include "unidg/train.hpp"

namespace unidg::cli {

/// Encoder/classifier shape used when a command builds a fresh model.
struct ModelShape {
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t feature_dim = 32;
  bool with_norm = false;
};

/// Flat key=value file. Keys are the field names of AdaptConfig, TrainConfig,
/// ShiftSpec and ModelShape plus a few command knobs; '#' starts a comment.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::filesystem::path& path);

  /// Sets or replaces one key; used to layer command-line flags over a file.
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  void apply(AdaptConfig& cfg) const;
  void apply(TrainConfig& cfg) const;
  void apply(ShiftSpec& spec) const;
  void apply(ModelShape& shape) const;

  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
};

/// Every key the file format accepts.
const std::vector<std::string>& known_config_keys();

}  // namespace unidg::cli
