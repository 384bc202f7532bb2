#include "cli/results.hpp"

#include <cstdio>
#include <fstream>

#include "unidg/checkpoint.hpp"
#include "unidg/error.hpp"

namespace unidg::cli {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json to_json(const AdaptConfig& cfg) {
  Json j;
  j["method"] = to_string(cfg.method);
  j["sigma"] = cfg.sigma;
  j["lambda_weight"] = cfg.lambda_weight;
  j["top_k"] = cfg.top_k;
  j["capacity"] = cfg.capacity;
  j["lr"] = cfg.lr;
  j["batch_size"] = cfg.batch_size;
  j["steps"] = cfg.steps ? Json(*cfg.steps) : Json(nullptr);
  j["seed"] = cfg.seed;
  j["enable_lm"] = cfg.enable_lm;
  j["enable_le"] = cfg.enable_le;
  j["enable_li"] = cfg.enable_li;
  j["enable_bank"] = cfg.enable_bank;
  j["enable_refresh"] = cfg.enable_refresh;
  return j;
}

Json to_json(const TrainConfig& cfg) {
  Json j;
  j["lr"] = cfg.lr;
  j["weight_decay"] = cfg.weight_decay;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["holdout_fraction"] = cfg.holdout_fraction;
  j["seed"] = cfg.seed;
  return j;
}

Json to_json(const ShiftSpec& spec) {
  Json j;
  j["num_classes"] = spec.num_classes;
  j["input_dim"] = spec.input_dim;
  j["separation"] = spec.separation;
  j["covariance_scale"] = spec.covariance_scale;
  j["kind"] = to_string(spec.kind);
  j["angle_deg"] = spec.angle_deg;
  j["translation_std"] = spec.translation_std;
  j["translation"] = spec.translation;
  j["affine"] = spec.affine;
  j["num_sources"] = spec.num_sources;
  j["samples_per_domain"] = spec.samples_per_domain;
  j["target_samples"] = spec.target_samples;
  j["source_max_angle_deg"] = spec.source_max_angle_deg;
  j["seed"] = spec.seed;
  return j;
}

Json to_json(const ModelShape& shape) {
  Json j;
  j["hidden_dims"] = shape.hidden_dims;
  j["feature_dim"] = shape.feature_dim;
  j["with_norm"] = shape.with_norm;
  return j;
}

Json to_json(const MemoryBank& bank) {
  Json classes = Json::array();
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    Json entry;
    entry["class"] = c;
    entry["observed"] = bank.observed(c);
    entry["support_count"] = bank.supports(c).size();
    std::vector<double> ent;
    for (const auto& r : bank.supports(c)) ent.push_back(r.entropy);
    entry["entropies"] = ent;
    entry["prototype"] = bank.prototypes()[c];
    classes.push_back(std::move(entry));
  }
  Json j;
  j["capacity_per_class"] = bank.capacity_per_class();
  j["top_k"] = bank.top_k();
  j["classes"] = std::move(classes);
  return j;
}

Json to_json(const AccuracyCurve& curve) {
  Json j;
  j["final_accuracy"] = curve.final_accuracy;
  j["source_accuracy_before"] = curve.source_before ? Json(*curve.source_before) : Json(nullptr);
  j["source_accuracy_after"] = curve.source_after ? Json(*curve.source_after) : Json(nullptr);
  j["per_domain"] = curve.per_domain;
  j["source_before_by_domain"] = curve.source_before_by_domain;
  j["source_after_by_domain"] = curve.source_after_by_domain;
  j["cumulative_accuracy"] = curve.cumulative;
  return j;
}

Json to_json(const std::vector<LossReport>& losses) {
  std::vector<double> lm, le, li, lce, total;
  for (const auto& r : losses) {
    lm.push_back(r.l_m);
    le.push_back(r.l_e);
    li.push_back(r.l_i);
    lce.push_back(r.l_ce);
    total.push_back(r.total);
  }
  Json j;
  j["l_m"] = lm;
  j["l_e"] = le;
  j["l_i"] = li;
  j["l_ce"] = lce;
  j["total"] = total;
  return j;
}

Json to_json(const KernelStats& st) {
  Json j;
  j["subset"] = st.subset == ParamSubset::all ? "all" : "norm_only";
  j["pairs"] = st.pairs;
  j["skipped"] = st.skipped;
  j["cosine_mean"] = st.cosine_mean;
  j["cosine_min"] = st.cosine_min;
  j["cosine_max"] = st.cosine_max;
  j["raw_mean"] = st.raw_mean;
  j["raw_min"] = st.raw_min;
  j["raw_max"] = st.raw_max;
  j["self_source_mean"] = st.self_source_mean;
  j["self_target_mean"] = st.self_target_mean;
  j["max_symmetry_error"] = st.max_symmetry_error;
  j["max_cauchy_schwarz_excess"] = st.max_cauchy_schwarz_excess;
  return j;
}

Json record_header(const std::string& kind) {
  Json j;
  j["schema_version"] = kResultsSchemaVersion;
  j["kind"] = kind;
  Json art;
  art["unidg_version"] = "0.1.0";
  art["checkpoint_version"] = kCheckpointVersion;
  j["artifact_versions"] = std::move(art);
  return j;
}

Json adapt_record(const AdaptConfig& cfg, const AdaptResult& result, const Json& inputs) {
  Json j = record_header("adapt");
  j["method"] = to_string(cfg.method);
  j["config"] = to_json(cfg);
  j["inputs"] = inputs;
  j["steps_taken"] = result.steps_taken;
  j["accuracy"] = to_json(result.curve);
  j["losses"] = to_json(result.losses);
  j["adapted_fingerprint"] =
      hex64(fingerprint(result.pair.adapted_encoder(), result.pair.adapted_classifier()));
  j["bank"] = result.bank ? to_json(*result.bank) : Json(nullptr);
  return j;
}

void append_record(const std::filesystem::path& path, Json record, double wall_clock_seconds) {
  record[kTimingField] = wall_clock_seconds;
  std::ofstream f(path, std::ios::app | std::ios::binary);
  if (!f) throw DataError("cannot open results file '" + path.string() + "'");
  f << record.dump() << '\n';
  if (!f) throw DataError("failed writing results file '" + path.string() + "'");
}

std::vector<Json> read_records(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open results file '" + path.string() + "'");
  std::vector<Json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("results: ") + e.what(), lineno);
    }
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != kResultsSchemaVersion) {
      throw SchemaError("results line " + std::to_string(lineno) + ": unsupported schema_version");
    }
    out.push_back(std::move(j));
  }
  return out;
}

Json without_timing(const Json& record) {
  Json j = record;
  j.erase(kTimingField);
  return j;
}

}  // namespace unidg::cli
