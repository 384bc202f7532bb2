#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli/config_file.hpp"
#include "unidg/adapt.hpp"
#include "unidg/diagnostics.hpp"
#include "unidg/memory_bank.hpp"
#include "unidg/train.hpp"

namespace unidg::cli {

using Json = nlohmann::ordered_json;

/// Version of the results-record layout. Readers reject any other value.
inline constexpr int kResultsSchemaVersion = 1;

/// The only field allowed to differ between reruns of the same command.
inline constexpr const char* kTimingField = "wall_clock_seconds";

std::string hex64(std::uint64_t v);

Json to_json(const AdaptConfig& cfg);
Json to_json(const TrainConfig& cfg);
Json to_json(const ShiftSpec& spec);
Json to_json(const ModelShape& shape);
Json to_json(const MemoryBank& bank);
Json to_json(const AccuracyCurve& curve);
Json to_json(const std::vector<LossReport>& losses);
Json to_json(const KernelStats& stats);

/// Header shared by every record: schema version, record kind, artifact versions.
Json record_header(const std::string& kind);

Json adapt_record(const AdaptConfig& cfg, const AdaptResult& result, const Json& inputs);

/// Appends one line to `path` (created if absent), with the timing field last.
void append_record(const std::filesystem::path& path, Json record, double wall_clock_seconds);

/// Reads every record, rejecting unknown schema versions.
std::vector<Json> read_records(const std::filesystem::path& path);

/// Copy of `record` without the timing field.
Json without_timing(const Json& record);

}  // namespace unidg::cli
