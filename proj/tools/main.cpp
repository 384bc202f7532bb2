#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "unidg/error.hpp"

namespace fs = std::filesystem;
using namespace unidg;
using namespace unidg::cli;

namespace {

// Values collected from flags; applied on top of the config file.
struct Flags {
  std::string config;
  std::string out;
  bool force = false;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> sets;
};

template <typename T>
void bind(CLI::App* app, Flags& flags, const std::string& name, const std::string& key,
          const std::string& help) {
  app->add_option_function<T>(
      name, [&flags, key](const T& v) {
        std::ostringstream s;
        s.precision(17);
        s << v;
        flags.overrides[key] = s.str();
      },
      help);
}

void add_common(CLI::App* app, Flags& flags) {
  app->add_option("--config", flags.config, "key=value config file; flags override it");
  app->add_option("--out", flags.out,
                  std::string("output directory (default: $") + kOutputRootEnv + " or ./unidg_out)");
  bind<unsigned long long>(app, flags, "--seed", "seed", "random seed");
  app->add_option("--set", flags.sets, "extra key=value override, repeatable");
}

void add_adapt_flags(CLI::App* app, Flags& flags) {
  bind<double>(app, flags, "--sigma", "sigma", "margin sigma of the marginal loss");
  bind<double>(app, flags, "--lambda", "lambda_weight", "weight of the marginal loss");
  bind<std::size_t>(app, flags, "--top-k", "top_k", "supports per class used for prototypes");
  bind<double>(app, flags, "--lr", "lr", "Adam learning rate");
  bind<std::size_t>(app, flags, "--batch-size", "batch_size", "batch size");
  bind<std::string>(app, flags, "--method", "method", "none|entropy_norm|pseudo_label|unidg");
  bind<std::size_t>(app, flags, "--steps", "steps", "optimizer steps (default: one pass)");
}

ConfigFile resolve(const Flags& flags) {
  ConfigFile cfg = flags.config.empty() ? ConfigFile{} : ConfigFile::load(flags.config);
  for (const auto& [k, v] : flags.overrides) cfg.set(k, v);
  for (const auto& kv : flags.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

fs::path out_dir(const Flags& flags) {
  return flags.out.empty() ? default_output_root() : fs::path(flags.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unidg: test-time adaptation toolkit"};
  app.require_subcommand(1);

  Flags gen_f, train_f, adapt_f, ablate_f, diag_f;
  std::string data_dir, checkpoint, target, source_eval, diag_source, diag_target;
  bool no_source_eval = false;

  auto* gen = app.add_subcommand("gen-data", "write synthetic source/target CSVs and a shift.meta sidecar");
  add_common(gen, gen_f);
  bind<double>(gen, gen_f, "--angle", "angle_deg", "target rotation in degrees, within [0, 180]");
  gen->add_flag("--force", gen_f.force, "overwrite existing files");

  auto* train = app.add_subcommand("train-source", "train the source model with ERM");
  add_common(train, train_f);
  train->add_option("--data", data_dir, "directory with source*.csv (default: --out)");
  bind<double>(train, train_f, "--lr", "lr", "Adam learning rate");
  bind<std::size_t>(train, train_f, "--batch-size", "batch_size", "batch size");
  bind<std::size_t>(train, train_f, "--epochs", "epochs", "training epochs");
  train->add_flag_function(
      "--with-norm", [&](std::int64_t) { train_f.overrides["with_norm"] = "1"; },
      "insert batch norm after each hidden layer");
  train->add_flag("--force", train_f.force, "overwrite an existing checkpoint");

  auto add_run_inputs = [&](CLI::App* sub, Flags& f) {
    add_common(sub, f);
    add_adapt_flags(sub, f);
    sub->add_option("--checkpoint", checkpoint, "checkpoint (default: <out>/source.ckpt)");
    sub->add_option("--target", target, "target CSV (default: <out>/target.csv)");
    sub->add_option("--source-eval", source_eval, "source holdout CSV (default: <out>/holdout.csv if present)");
    sub->add_flag("--no-source-eval", no_source_eval, "skip source accuracy");
  };
  auto* adapt = app.add_subcommand("adapt", "run one adaptation method over the target stream");
  add_run_inputs(adapt, adapt_f);
  auto* ablate = app.add_subcommand("ablate", "run the 8-row component ablation grid");
  add_run_inputs(ablate, ablate_f);
  bind<std::size_t>(ablate, ablate_f, "--threads", "threads", "worker threads for independent rows");

  auto* diag = app.add_subcommand("diagnose", "batch-norm gradient check and NTK kernel sweep");
  add_common(diag, diag_f);
  diag->add_option("--checkpoint", checkpoint, "checkpoint to analyse (default: a random model)");
  diag->add_option("--source", diag_source, "source CSV for kernel samples");
  diag->add_option("--target", diag_target, "target CSV for kernel samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      GenDataOptions o;
      resolve(gen_f).apply(o.spec);
      o.out = out_dir(gen_f);
      o.force = gen_f.force;
      cmd_gen_data(o, std::cout);
    } else if (*train) {
      const ConfigFile cfg = resolve(train_f);
      TrainOptions o;
      cfg.apply(o.train);
      cfg.apply(o.shape);
      if (cfg.has("num_classes")) o.num_classes = cfg.get_size("num_classes");
      o.out = out_dir(train_f);
      o.data_dir = data_dir.empty() ? o.out : fs::path(data_dir);
      o.force = train_f.force;
      cmd_train_source(o, std::cout);
    } else if (*adapt || *ablate) {
      const Flags& f = *adapt ? adapt_f : ablate_f;
      const ConfigFile cfg = resolve(f);
      AdaptOptions o;
      cfg.apply(o.cfg);
      o.out = out_dir(f);
      o.checkpoint = checkpoint.empty() ? o.out / kCheckpointFile : fs::path(checkpoint);
      o.target = target.empty() ? o.out / kTargetFile : fs::path(target);
      if (!source_eval.empty()) {
        o.source_eval = source_eval;
      } else if (!no_source_eval && fs::exists(o.out / kHoldoutFile)) {
        o.source_eval = o.out / kHoldoutFile;
      }
      if (*adapt) {
        cmd_adapt(o, std::cout);
      } else {
        AblateOptions a{o, cfg.has("threads") ? cfg.get_size("threads") : 1};
        cmd_ablate(a, std::cout);
      }
    } else if (*diag) {
      const ConfigFile cfg = resolve(diag_f);
      DiagnoseOptions o;
      cfg.apply(o.shape);
      if (cfg.has("input_dim")) o.input_dim = cfg.get_size("input_dim");
      if (cfg.has("seed")) o.seed = cfg.get_size("seed");
      if (cfg.has("pairs")) o.pairs = cfg.get_size("pairs");
      if (cfg.has("trials")) o.trials = cfg.get_size("trials");
      if (!checkpoint.empty()) o.checkpoint = checkpoint;
      if (!diag_source.empty()) o.source_csv = diag_source;
      if (!diag_target.empty()) o.target_csv = diag_target;
      o.out = out_dir(diag_f);
      cmd_diagnose(o, std::cout);
    }
  } catch (const unidg::Error& e) {
    std::cerr << "unidg: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unidg: unexpected error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
