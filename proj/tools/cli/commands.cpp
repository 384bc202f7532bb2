#include "cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include "unidg/checkpoint.hpp"
#include "unidg/diagnostics.hpp"
#include "unidg/error.hpp"

namespace unidg::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void refuse_overwrite(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) {
    throw DataError("'" + path.string() + "' already exists (pass --force to overwrite)");
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

std::vector<fs::path> source_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("data directory '" + dir.string() + "' not found");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("source", 0) == 0 && e.path().extension() == ".csv") {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no source*.csv files in '" + dir.string() + "'");
  return out;
}

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v;
  return s.str();
}

std::string pct(const std::optional<double>& v) { return v ? pct(*v) : "n/a"; }

struct LoadedRun {
  Checkpoint ckpt;
  DomainDataset target;
  std::vector<DomainDataset> source_eval;
};

LoadedRun load_run(const AdaptOptions& opts) {
  LoadedRun run{load_checkpoint(opts.checkpoint), load_csv(opts.target), {}};
  if (run.target.input_dim() != run.ckpt.encoder.input_dim()) {
    throw SchemaError("checkpoint expects " + std::to_string(run.ckpt.encoder.input_dim()) +
                      " input features but '" + opts.target.string() + "' has " +
                      std::to_string(run.target.input_dim()));
  }
  if (opts.source_eval) {
    run.source_eval = load_csv_by_domain(*opts.source_eval);
    for (const auto& s : run.source_eval) {
      if (s.input_dim() != run.ckpt.encoder.input_dim()) {
        throw SchemaError("source evaluation data width does not match the checkpoint");
      }
    }
  }
  return run;
}

Json run_inputs(const AdaptOptions& opts, const Checkpoint& ckpt) {
  Json j;
  j["checkpoint"] = opts.checkpoint.string();
  j["checkpoint_fingerprint"] = hex64(fingerprint(ckpt.encoder, ckpt.classifier));
  j["target"] = opts.target.string();
  j["source_eval"] = opts.source_eval ? Json(opts.source_eval->string()) : Json(nullptr);
  return j;
}

}  // namespace

fs::path default_output_root() {
  if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') return env;
  return "unidg_out";
}

const std::vector<AblationRow>& ablation_grid() {
  static const std::vector<AblationRow> rows{
      {"none", false, false, false, false},        {"L_m", true, false, false, false},
      {"L_e", false, true, false, false},          {"bank", false, false, true, false},
      {"refresh", false, false, false, true},      {"L_m+L_e", true, true, false, false},
      {"bank+refresh", false, false, true, true},  {"all", true, true, true, true},
  };
  return rows;
}

std::vector<fs::path> cmd_gen_data(const GenDataOptions& opts, std::ostream& report) {
  const auto t0 = Clock::now();
  opts.spec.validate();
  ensure_dir(opts.out);
  std::vector<fs::path> files;
  for (std::size_t s = 0; s < opts.spec.num_sources; ++s)
    files.push_back(opts.out / ("source" + std::to_string(s) + ".csv"));
  files.push_back(opts.out / kTargetFile);
  files.push_back(opts.out / kShiftMetaFile);
  for (const auto& f : files) refuse_overwrite(f, opts.force);

  const SyntheticShift shift = gen_synthetic_shift(opts.spec);
  for (std::size_t s = 0; s < shift.sources.size(); ++s)
    write_csv(files[s], std::span<const DomainDataset>(&shift.sources[s], 1));
  write_csv(files[shift.sources.size()], std::span<const DomainDataset>(&shift.target, 1));
  write_text(files.back(), serialize_shift_spec(opts.spec));

  Json rec = record_header("gen-data");
  rec["config"] = to_json(opts.spec);
  Json names = Json::array();
  for (const auto& f : files) names.push_back(f.filename().string());
  rec["files"] = names;
  append_record(opts.out / kResultsFile, rec, seconds_since(t0));

  for (const auto& f : files) report << "wrote " << f.string() << '\n';
  return files;
}

TrainResult cmd_train_source(const TrainOptions& opts, std::ostream& report) {
  const auto t0 = Clock::now();
  opts.train.validate();
  const auto files = source_files(opts.data_dir);
  std::vector<DomainDataset> sources;
  for (const auto& f : files) sources.push_back(load_csv(f));

  std::size_t classes = 0;
  if (opts.num_classes) {
    classes = *opts.num_classes;
  } else if (fs::exists(opts.data_dir / kShiftMetaFile)) {
    classes = parse_shift_spec(read_text(opts.data_dir / kShiftMetaFile)).num_classes;
  } else {
    for (const auto& s : sources) classes = std::max(classes, s.label_span());
  }
  if (classes < 2) throw DataError("training data must contain at least 2 classes");

  ensure_dir(opts.out);
  const fs::path ckpt_path = opts.out / kCheckpointFile;
  const fs::path holdout_path = opts.out / kHoldoutFile;
  refuse_overwrite(ckpt_path, opts.force);
  refuse_overwrite(holdout_path, opts.force);

  std::vector<std::size_t> dims{sources.front().input_dim()};
  dims.insert(dims.end(), opts.shape.hidden_dims.begin(), opts.shape.hidden_dims.end());
  dims.push_back(opts.shape.feature_dim);
  const MlpEncoder enc = MlpEncoder::initialized(dims, opts.shape.with_norm, opts.train.seed);
  const LinearClassifier cls =
      LinearClassifier::initialized(opts.shape.feature_dim, classes, opts.train.seed + 7);
  TrainResult result = train_source_erm(enc, cls, sources, opts.train);

  save_checkpoint(ckpt_path, Checkpoint{result.encoder, result.classifier, opts.train.seed});
  write_csv(holdout_path, result.validation);

  Json rec = record_header("train-source");
  rec["config"] = to_json(opts.train);
  rec["model"] = to_json(opts.shape);
  rec["num_classes"] = classes;
  Json names = Json::array();
  for (const auto& f : files) names.push_back(f.string());
  rec["sources"] = names;
  rec["val_accuracy"] = result.val_accuracy;
  rec["best_epoch"] = result.best_epoch;
  rec["val_trace"] = result.val_trace;
  rec["loss_trace"] = result.loss_trace;
  rec["checkpoint_fingerprint"] = hex64(fingerprint(result.encoder, result.classifier));
  append_record(opts.out / kResultsFile, rec, seconds_since(t0));

  report << "checkpoint: " << ckpt_path.string() << '\n'
         << "holdout: " << holdout_path.string() << '\n'
         << "val_accuracy: " << pct(result.val_accuracy) << "%\n"
         << "best_epoch: " << result.best_epoch << '\n';
  return result;
}

AdaptResult cmd_adapt(const AdaptOptions& opts, std::ostream& report) {
  const auto t0 = Clock::now();
  opts.cfg.validate();
  const LoadedRun run = load_run(opts);
  ensure_dir(opts.out);
  AdaptResult result = run_adaptation(ModelPair::clone_for_adaptation(run.ckpt.encoder, run.ckpt.classifier),
                                      run.target, opts.cfg, run.source_eval);
  append_record(opts.out / kResultsFile, adapt_record(opts.cfg, result, run_inputs(opts, run.ckpt)),
                seconds_since(t0));

  report << "method: " << to_string(opts.cfg.method) << '\n'
         << "steps: " << result.steps_taken << '\n'
         << "target_accuracy: " << pct(result.curve.final_accuracy) << "%\n"
         << "source_accuracy_before: " << pct(result.curve.source_before) << "%\n"
         << "source_accuracy_after: " << pct(result.curve.source_after) << "%\n";
  return result;
}

std::vector<AdaptResult> cmd_ablate(const AblateOptions& opts, std::ostream& report) {
  opts.base.cfg.validate();
  const LoadedRun run = load_run(opts.base);
  ensure_dir(opts.base.out);
  const auto& grid = ablation_grid();
  const ModelPair pair = ModelPair::clone_for_adaptation(run.ckpt.encoder, run.ckpt.classifier);

  std::vector<AdaptConfig> cfgs;
  for (const auto& row : grid) {
    AdaptConfig c = opts.base.cfg;
    c.method = Method::unidg;
    c.enable_lm = row.lm;
    c.enable_le = row.le;
    c.enable_bank = row.bank;
    c.enable_refresh = row.refresh;
    c.enable_li = opts.base.cfg.enable_li && row.name == "all";
    cfgs.push_back(c);
  }

  std::vector<std::optional<AdaptResult>> results(grid.size());
  std::vector<double> seconds(grid.size(), 0.0);
  std::vector<std::exception_ptr> errors(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      try {
        const auto t0 = Clock::now();
        results[i] = run_adaptation(pair, run.target, cfgs[i], run.source_eval);
        seconds[i] = seconds_since(t0);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(opts.threads, 1, grid.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const Json inputs = run_inputs(opts.base, run.ckpt);
  std::vector<AdaptResult> out;
  report << std::left << std::setw(14) << "row" << " L_m L_e bank refresh  target%  source_after%\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Json rec = adapt_record(cfgs[i], *results[i], inputs);
    rec["ablation_row"] = grid[i].name;
    append_record(opts.base.out / kResultsFile, rec, seconds[i]);
    const auto& r = grid[i];
    report << std::left << std::setw(14) << r.name << ' ' << std::setw(3) << (r.lm ? "x" : "-") << ' '
           << std::setw(3) << (r.le ? "x" : "-") << ' ' << std::setw(4) << (r.bank ? "x" : "-") << ' '
           << std::setw(7) << (r.refresh ? "x" : "-") << "  " << std::setw(7)
           << pct(results[i]->curve.final_accuracy) << "  " << pct(results[i]->curve.source_after) << '\n';
    out.push_back(std::move(*results[i]));
  }
  return out;
}

Json cmd_diagnose(const DiagnoseOptions& opts, std::ostream& report) {
  const auto t0 = Clock::now();
  MlpEncoder model;
  Json model_info;
  if (opts.checkpoint) {
    model = load_checkpoint(*opts.checkpoint).encoder;
    model_info["checkpoint"] = opts.checkpoint->string();
  } else {
    std::vector<std::size_t> dims{opts.input_dim};
    dims.insert(dims.end(), opts.shape.hidden_dims.begin(), opts.shape.hidden_dims.end());
    dims.push_back(opts.shape.feature_dim);
    model = MlpEncoder::initialized(dims, opts.shape.with_norm, opts.seed);
    model_info["random"] = to_json(opts.shape);
    model_info["input_dim"] = opts.input_dim;
  }
  model_info["fingerprint"] = hex64(fingerprint(model));

  // Samples: the given CSVs, or a small synthetic shift task.
  Tensor2 source, target;
  if (opts.source_csv && opts.target_csv) {
    source = load_csv(*opts.source_csv).features;
    target = load_csv(*opts.target_csv).features;
  } else {
    ShiftSpec spec;
    spec.input_dim = model.input_dim();
    spec.num_sources = 1;
    spec.samples_per_domain = 200;
    spec.target_samples = 200;
    spec.seed = opts.seed;
    const SyntheticShift shift = gen_synthetic_shift(spec);
    source = shift.sources.front().features;
    target = shift.target.features;
  }
  if (source.cols() != model.input_dim() || target.cols() != model.input_dim()) {
    throw SchemaError("diagnostic samples do not match the model input width");
  }

  // Batch-norm gradient check on a fresh batch of the first norm width.
  std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  NormLayerState state;
  if (model.has_norm()) {
    state = model.norms().front();
  } else {
    state = NormLayerState::identity(8);
    for (double& g : state.gamma) g = 1.0 + 0.5 * unif(rng);
    for (double& b : state.beta) b = 0.5 * unif(rng);
  }
  state.cache.reset();
  Tensor2 batch(8, state.width());
  for (double& v : batch.values()) v = unif(rng);
  const double bn_err = verify_bn_gradient(batch, state, opts.trials, opts.seed);

  const KernelSweep sweep = kernel_comparison_sweep(model, source, target, opts.pairs, opts.seed);

  // Gram matrix over a mixed sample set.
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < std::min<std::size_t>(10, source.rows()); ++i) idx.push_back(i);
  Tensor2 mixed = gather_rows(source, idx);
  const Tensor2 tpart = gather_rows(target, idx);
  std::vector<double> both(mixed.values().begin(), mixed.values().end());
  both.insert(both.end(), tpart.values().begin(), tpart.values().end());
  mixed = Tensor2(2 * idx.size(), source.cols(), std::move(both));

  Json rec = record_header("diagnose");
  rec["model"] = model_info;
  rec["seed"] = opts.seed;
  rec["bn_trials"] = opts.trials;
  rec["bn_max_relative_error"] = bn_err;
  Json kernels = Json::array();
  Json gram = Json::object();
  for (const auto& st : sweep.subsets) {
    kernels.push_back(to_json(st));
    const std::string name = st.subset == ParamSubset::all ? "all" : "norm_only";
    gram[name] = min_eigenvalue(kernel_gram(model, mixed, st.subset));
  }
  rec["kernels"] = kernels;
  rec["gram_min_eigenvalue"] = gram;
  if (!opts.out.empty()) {
    ensure_dir(opts.out);
    append_record(opts.out / kResultsFile, rec, seconds_since(t0));
  }

  report << "bn_max_relative_error: " << std::scientific << std::setprecision(3) << bn_err << '\n';
  for (const auto& st : sweep.subsets) {
    const std::string name = st.subset == ParamSubset::all ? "all" : "norm_only";
    report << "kernel[" << name << "]: pairs=" << st.pairs << " skipped=" << st.skipped
           << " cosine_mean=" << st.cosine_mean << " cosine_min=" << st.cosine_min
           << " cosine_max=" << st.cosine_max << " raw_mean=" << st.raw_mean
           << " gram_min_eig=" << gram[name].get<double>() << '\n';
  }
  report << std::defaultfloat;
  return rec;
}

}  // namespace unidg::cli
