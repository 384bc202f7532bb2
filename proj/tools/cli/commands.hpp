#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cli/config_file.hpp"
#include "cli/results.hpp"
#include "unidg/adapt.hpp"
#include "unidg/data.hpp"
#include "unidg/train.hpp"

namespace unidg::cli {

/// Name of the environment variable holding the default output root.
inline constexpr const char* kOutputRootEnv = "UNIDG_OUT";

/// $UNIDG_OUT when set and non-empty, otherwise ./unidg_out.
std::filesystem::path default_output_root();

inline constexpr const char* kResultsFile = "results.jsonl";
inline constexpr const char* kCheckpointFile = "source.ckpt";
inline constexpr const char* kHoldoutFile = "holdout.csv";
inline constexpr const char* kTargetFile = "target.csv";
inline constexpr const char* kShiftMetaFile = "shift.meta";

struct GenDataOptions {
  ShiftSpec spec;
  std::filesystem::path out;
  bool force = false;
};

struct TrainOptions {
  std::filesystem::path data_dir;  // source*.csv, optional shift.meta
  std::filesystem::path out;
  TrainConfig train;
  ModelShape shape;
  std::optional<std::size_t> num_classes;
  bool force = false;
};

struct AdaptOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path target;
  std::optional<std::filesystem::path> source_eval;
  std::filesystem::path out;
  AdaptConfig cfg;
};

struct AblateOptions {
  AdaptOptions base;
  std::size_t threads = 1;
};

struct DiagnoseOptions {
  std::optional<std::filesystem::path> checkpoint;
  ModelShape shape{{64, 64}, 32, true};
  std::size_t input_dim = 16;
  std::optional<std::filesystem::path> source_csv;
  std::optional<std::filesystem::path> target_csv;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t pairs = 100;
  std::size_t trials = 20;
};

struct AblationRow {
  std::string name;
  bool lm = false, le = false, bank = false, refresh = false;
};

/// The eight on/off rows over {L_m, L_e, bank, refresh}.
const std::vector<AblationRow>& ablation_grid();

std::vector<std::filesystem::path> cmd_gen_data(const GenDataOptions& opts, std::ostream& report);
TrainResult cmd_train_source(const TrainOptions& opts, std::ostream& report);
AdaptResult cmd_adapt(const AdaptOptions& opts, std::ostream& report);
std::vector<AdaptResult> cmd_ablate(const AblateOptions& opts, std::ostream& report);
Json cmd_diagnose(const DiagnoseOptions& opts, std::ostream& report);

}  // namespace unidg::cli
