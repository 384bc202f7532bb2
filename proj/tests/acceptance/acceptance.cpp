// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any selected criterion fails. `--only N` runs a single one.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "oracles.hpp"
#include "unidg/adapt.hpp"
#include "unidg/checkpoint.hpp"
#include "unidg/diagnostics.hpp"
#include "unidg/layers.hpp"
#include "unidg/losses.hpp"
#include "unidg/memory_bank.hpp"
#include "unidg/train.hpp"

namespace fs = std::filesystem;
using namespace unidg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double weighted_sum(const Tensor2& out, const Tensor2& r) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * r.values()[i];
  return s;
}

constexpr int kSeeds = 10;
const std::vector<std::size_t> kDims{16, 64, 64, 32};

// ---------------------------------------------------------------------------
// 1. Gradient suite

Verdict gradient_suite() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::map<std::string, double> worst;
  auto track = [&](const std::string& name, double e) { worst[name] = std::max(worst[name], e); };

  for (int t = 0; t < 100; ++t) {
    {  // linear
      Tensor2 x = oracle::random_tensor(rng, 4, 5), w = oracle::random_tensor(rng, 5, 3);
      auto b = oracle::random_vector(rng, 3);
      const Tensor2 r = oracle::random_tensor(rng, 4, 3);
      auto f = [&] { return weighted_sum(linear_forward(x, w, b), r); };
      const auto g = linear_backward(x, w, r);
      track("linear", oracle::rel_err(oracle::flat(g.input), oracle::finite_diff(f, oracle::pointers(x))));
      track("linear", oracle::rel_err(oracle::flat(g.weight), oracle::finite_diff(f, oracle::pointers(w))));
      track("linear", oracle::rel_err(g.bias, oracle::finite_diff(f, oracle::pointers(b))));
    }
    {  // relu, away from the kink
      Tensor2 x = oracle::random_tensor(rng, 4, 5);
      for (double& e : x.values())
        if (std::abs(e) < 1e-3) e = 0.5;
      const Tensor2 r = oracle::random_tensor(rng, 4, 5);
      auto f = [&] { return weighted_sum(relu_forward(x), r); };
      track("relu", oracle::rel_err(oracle::flat(relu_backward(x, r)), oracle::finite_diff(f, oracle::pointers(x))));
    }
    {  // batch norm closed form, batch statistics and running statistics
      const std::size_t m = 3 + t % 6;
      Tensor2 x = oracle::random_tensor(rng, m, 4);
      NormLayerState st = NormLayerState::identity(4);
      st.gamma = oracle::random_vector(rng, 4, 0.5, 2.0);
      st.beta = oracle::random_vector(rng, 4);
      st.running_mean = oracle::random_vector(rng, 4);
      st.running_var = oracle::random_vector(rng, 4, 0.3, 2.0);
      const Tensor2 r = oracle::random_tensor(rng, m, 4);
      for (NormMode mode : {NormMode::batch, NormMode::running}) {
        auto f = [&] { return weighted_sum(batchnorm_apply(x, st, mode, nullptr), r); };
        NormCache cache;
        batchnorm_apply(x, st, mode, &cache);
        const auto g = batchnorm_backward(st, cache, r);
        track("batchnorm", oracle::rel_err(oracle::flat(g.input), oracle::finite_diff(f, oracle::pointers(x))));
        track("batchnorm", oracle::rel_err(g.gamma, oracle::finite_diff(f, oracle::pointers(st.gamma))));
        track("batchnorm", oracle::rel_err(g.beta, oracle::finite_diff(f, oracle::pointers(st.beta))));
      }
    }
    {  // frobenius distance
      Tensor2 a = oracle::random_tensor(rng, 3, 4);
      const Tensor2 b = oracle::random_tensor(rng, 3, 4);
      auto f = [&] { return frobenius_distance_sq(a, b); };
      track("frobenius", oracle::rel_err(oracle::flat(frobenius_distance_sq_grad(a, b)), oracle::finite_diff(f, oracle::pointers(a))));
    }
    {  // L_m, rows kept off the hinge
      Tensor2 a = oracle::random_tensor(rng, 6, 4);
      const Tensor2 s = oracle::random_tensor(rng, 6, 4);
      for (std::size_t i = 0; i < 6; ++i) {
        double d = 0;
        for (std::size_t k = 0; k < 4; ++k) d += (a(i, k) - s(i, k)) * (a(i, k) - s(i, k));
        if (std::abs(d - 0.15) < 1e-3) a(i, 0) += 0.1;
      }
      auto f = [&] { return marginal_loss(a, s, 0.15).value; };
      track("L_m", oracle::rel_err(oracle::flat(marginal_loss(a, s, 0.15).grad), oracle::finite_diff(f, oracle::pointers(a))));
    }
    {  // L_e w.r.t. logits
      Tensor2 z = oracle::random_tensor(rng, 5, 4, -3, 3);
      auto f = [&] { return entropy_loss(softmax_rows(z)).value; };
      track("L_e", oracle::rel_err(oracle::flat(entropy_loss(softmax_rows(z)).grad), oracle::finite_diff(f, oracle::pointers(z))));
    }
    {  // L_i w.r.t. features and prototypes
      const std::size_t n = 4 + t % 5;
      Tensor2 z = oracle::random_tensor(rng, n, 4);
      std::vector<std::vector<double>> protos{oracle::random_vector(rng, 4), oracle::random_vector(rng, 4),
                                              oracle::random_vector(rng, 4)};
      std::vector<std::size_t> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = (i + t) % 3;
      auto f = [&] { return memory_term_loss(z, protos, labels).value; };
      const auto r = memory_term_loss(z, protos, labels);
      track("L_i", oracle::rel_err(oracle::flat(r.grad_features), oracle::finite_diff(f, oracle::pointers(z))));
      std::vector<double> analytic;
      std::vector<double*> ptrs;
      for (std::size_t c = 0; c < 3; ++c) {
        auto gc = r.grad_prototypes[c];
        if (gc.empty()) gc.assign(4, 0.0);
        analytic.insert(analytic.end(), gc.begin(), gc.end());
        for (double& e : protos[c]) ptrs.push_back(&e);
      }
      track("L_i", oracle::rel_err(analytic, oracle::finite_diff(f, ptrs)));
    }
    {  // cross-entropy w.r.t. logits
      Tensor2 z = oracle::random_tensor(rng, 5, 4, -3, 3);
      std::vector<std::size_t> y(5);
      for (std::size_t i = 0; i < 5; ++i) y[i] = (i + t) % 4;
      auto f = [&] { return cross_entropy_loss(softmax_rows(z), y).value; };
      track("cross_entropy", oracle::rel_err(oracle::flat(cross_entropy_loss(softmax_rows(z), y).grad), oracle::finite_diff(f, oracle::pointers(z))));
    }
  }

  const std::map<std::string, double> bound{{"linear", 1e-6},   {"batchnorm", 1e-6}, {"relu", 1e-4},
                                            {"frobenius", 1e-4}, {"L_m", 1e-4},       {"L_e", 1e-4},
                                            {"L_i", 1e-4},       {"cross_entropy", 1e-4}};
  for (const auto& [name, e] : worst) {
    v.require(e <= bound.at(name), name + " " + fmt("%.2e", e) + " > " + fmt("%.0e", bound.at(name)));
    v.note(name + " " + fmt("%.1e", e));
  }
  const double secs = seconds_since(t0);
  v.require(secs < 120.0, "runtime " + fmt("%.1fs", secs));
  v.note("100 trials each, " + fmt("%.1fs", secs));
  return v;
}

// ---------------------------------------------------------------------------
// Shared source models for the task-level criteria

struct SeedModel {
  SyntheticShift shift;
  TrainResult trained;
};

SeedModel train_seed(int s, bool with_norm) {
  ShiftSpec spec;
  spec.seed = s;
  SeedModel m{gen_synthetic_shift(spec), {}};
  TrainConfig tc;
  tc.seed = s;
  m.trained = train_source_erm(MlpEncoder::initialized(kDims, with_norm, s), LinearClassifier::initialized(32, 4, s + 7),
                               m.shift.sources, tc);
  return m;
}

// Trained on first use; criteria share seeds within one process.
const SeedModel& seed_model(int s, bool with_norm) {
  static std::map<std::pair<int, bool>, SeedModel> cache;
  auto it = cache.find({s, with_norm});
  if (it == cache.end()) it = cache.emplace(std::pair{s, with_norm}, train_seed(s, with_norm)).first;
  return it->second;
}

AdaptResult run_on(const SeedModel& m, AdaptConfig cfg, int seed) {
  cfg.seed = seed;
  return run_adaptation(ModelPair::clone_for_adaptation(m.trained.encoder, m.trained.classifier), m.shift.target,
                        cfg, m.trained.validation);
}

// ---------------------------------------------------------------------------
// 2. Margin contract

Verdict margin_contract() {
  Verdict v;
  std::mt19937_64 rng(2002);
  bool exact = true;
  for (int t = 0; t < 1000; ++t) {
    const Tensor2 src = oracle::random_tensor(rng, 8, 6);
    Tensor2 ada = src;
    const double sigma = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    for (std::size_t i = 0; i < 8; ++i) {
      // scale a random direction so its squared length is at most sigma
      auto dir = oracle::random_vector(rng, 6);
      double n2 = 0;
      for (double e : dir) n2 += e * e;
      const double len = std::sqrt(sigma * std::uniform_real_distribution<double>(0.0, 0.999)(rng) / n2);
      for (std::size_t k = 0; k < 6; ++k) ada(i, k) += dir[k] * len;
    }
    const auto lm = marginal_loss(ada, src, sigma);
    exact = exact && lm.value == 0.0 && lm.grad == Tensor2(8, 6);
  }
  v.require(exact, "L_m or its gradient nonzero inside the margin");
  v.note("1000 in-margin batches give exact zeros");

  const auto& m = seed_model(0, false);
  AdaptConfig huge;
  huge.sigma = std::numeric_limits<double>::max();
  AdaptConfig ref = huge;
  ref.enable_lm = false;
  const auto a = run_on(m, huge, 0);
  const auto b = run_on(m, ref, 0);
  bool zero_trace = true, same = a.losses.size() == b.losses.size();
  for (std::size_t i = 0; i < a.losses.size(); ++i) {
    zero_trace = zero_trace && a.losses[i].l_m == 0.0;
    same = same && i < b.losses.size() && a.losses[i].total == b.losses[i].total && a.losses[i].l_e == b.losses[i].l_e;
  }
  same = same && a.curve.cumulative == b.curve.cumulative &&
         fingerprint(a.pair.adapted_encoder(), a.pair.adapted_classifier()) ==
             fingerprint(b.pair.adapted_encoder(), b.pair.adapted_classifier());
  v.require(zero_trace, "L_m trace not identically zero for huge sigma");
  v.require(same, "huge-sigma run differs from the entropy+bank run");
  v.note(std::to_string(a.losses.size()) + "-step huge-sigma run matches entropy+bank step for step");
  return v;
}

// ---------------------------------------------------------------------------
// 3. Memory-bank oracle

Verdict memory_bank_oracle() {
  Verdict v;
  struct Rec {
    std::vector<double> f;
    double h;
    std::size_t arrival;
  };
  std::mt19937_64 rng(3003);
  const std::size_t C = 4, d = 3, cap = 24, K = 6;
  const auto cls = LinearClassifier::initialized(d, C, 3);
  auto bank = MemoryBank::init_from_classifier(cls, cap, K);
  std::vector<std::vector<Rec>> kept(C);
  std::vector<std::vector<double>> expected_proto = bank.prototypes();
  std::size_t arrival = 0, inserted = 0;
  bool selection_ok = true, proto_ok = true, capacity_ok = true;
  while (inserted < 1000) {
    const std::size_t n = 1 + rng() % 12;
    const Tensor2 f = oracle::random_tensor(rng, n, d);
    std::vector<std::size_t> labels(n);
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = rng() % C;
      h[i] = (rng() % 2) ? 0.1 * static_cast<double>(rng() % 8) : std::uniform_real_distribution<double>(0, 1.38)(rng);
      kept[labels[i]].push_back({{f(i, 0), f(i, 1), f(i, 2)}, h[i], arrival++});
    }
    inserted += n;
    bank.insert(f, labels, h);
    const auto protos = bank.compute_prototypes();
    for (std::size_t c = 0; c < C; ++c) {
      auto& recs = kept[c];
      std::stable_sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) {
        return a.h != b.h ? a.h < b.h : a.arrival > b.arrival;
      });
      if (recs.size() > cap) recs.resize(cap);
      capacity_ok = capacity_ok && bank.supports(c).size() <= cap;
      const auto sel = bank.selected(c);
      const std::size_t k = std::min(K, recs.size());
      selection_ok = selection_ok && sel.size() == k;
      for (std::size_t i = 0; i < k && i < sel.size(); ++i)
        selection_ok = selection_ok && sel[i].feature == recs[i].f && sel[i].entropy == recs[i].h;
      if (k > 0) {
        std::vector<double> mean(d, 0.0);
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < d; ++j) mean[j] += recs[i].f[j];
        for (double& e : mean) e /= static_cast<double>(k);
        expected_proto[c] = mean;
      }
      for (std::size_t j = 0; j < d; ++j)
        proto_ok = proto_ok && std::abs(protos[c][j] - expected_proto[c][j]) <= 1e-15;
    }
  }
  v.require(selection_ok, "Top-K selection differs from the full-sort oracle");
  v.require(proto_ok, "prototype means differ from the oracle");
  v.require(capacity_ok, "capacity exceeded");
  v.note(std::to_string(inserted) + " inserts agree with the full-sort oracle");

  LinearClassifier once = cls;
  bank.refresh(once);
  LinearClassifier twice = once;
  bank.refresh(twice);
  v.require(once == twice, "refresh not idempotent");
  LinearClassifier fixed = cls;
  MemoryBank::init_from_classifier(cls, cap, K).refresh(fixed);
  v.require(fixed == cls, "refresh after init changed the classifier");
  v.note("refresh idempotent, init is a fixed point");
  return v;
}

// ---------------------------------------------------------------------------
// 4. No-op contracts

Verdict noop_contracts() {
  Verdict v;
  const fs::path dir = fs::temp_directory_path() / "unidg_acceptance_noop";
  fs::remove_all(dir);
  fs::create_directories(dir);
  int checked = 0;
  for (int s = 0; s < 3; ++s) {
    const auto& m = seed_model(s, false);
    // round-trip through a checkpoint so the comparison is against the stored file
    save_checkpoint(dir / "ckpt", Checkpoint{m.trained.encoder, m.trained.classifier, static_cast<std::uint64_t>(s)});
    const Checkpoint ck = load_checkpoint(dir / "ckpt");
    const auto frozen = fingerprint(ck.encoder, ck.classifier);
    const double frozen_acc = accuracy(ck.encoder, ck.classifier, m.shift.target);

    AdaptConfig t0;
    t0.steps = 0;
    AdaptConfig off;
    off.enable_lm = off.enable_le = off.enable_li = off.enable_bank = off.enable_refresh = false;
    for (const AdaptConfig& c : {t0, off}) {
      const auto r = run_adaptation(ModelPair::clone_for_adaptation(ck.encoder, ck.classifier), m.shift.target, c);
      v.require(fingerprint(r.pair.adapted_encoder(), r.pair.adapted_classifier()) == frozen,
                "parameters changed (seed " + std::to_string(s) + ")");
      v.require(r.curve.final_accuracy == frozen_acc, "accuracy differs from frozen (seed " + std::to_string(s) + ")");
      ++checked;
    }
  }
  fs::remove_all(dir);
  v.note(std::to_string(checked) + " runs (T=0 and all switches off) bit-identical to the checkpoint");
  return v;
}

// ---------------------------------------------------------------------------
// 5. Directional improvement

constexpr double kPinnedGainPp = 14.50;

Verdict directional_improvement() {
  Verdict v;
  const auto t0 = Clock::now();
  double frozen = 0, adapted = 0;
  for (int s = 0; s < kSeeds; ++s) {
    const auto& m = seed_model(s, false);
    AdaptConfig none;
    none.method = Method::none;
    frozen += run_on(m, none, s).curve.final_accuracy / kSeeds;
    adapted += run_on(m, AdaptConfig{}, s).curve.final_accuracy / kSeeds;
  }
  const double gain = 100.0 * (adapted - frozen);
  const double secs = seconds_since(t0);
  v.require(gain >= 5.0, "gain below 5pp");
  v.require(std::abs(gain - kPinnedGainPp) <= 2.0, "gain outside pinned " + fmt("%.2f", kPinnedGainPp) + " ± 2pp");
  v.require(secs < 300.0, "runtime " + fmt("%.1fs", secs));
  v.note("frozen " + fmt("%.4f", frozen) + ", UniDG " + fmt("%.4f", adapted) + ", gain " + fmt("%.2fpp", gain) +
         " (pinned " + fmt("%.2f", kPinnedGainPp) + " ± 2), " + fmt("%.1fs", secs));
  return v;
}

// ---------------------------------------------------------------------------
// 6. Source preservation

Verdict source_preservation() {
  Verdict v;
  double drop_unidg = 0, drop_en = 0;
  for (int s = 0; s < kSeeds; ++s) {
    const auto& m = seed_model(s, true);
    const auto u = run_on(m, AdaptConfig{}, s);
    AdaptConfig en;
    en.method = Method::entropy_norm;
    const auto e = run_on(m, en, s);
    drop_unidg += 100.0 * (*u.curve.source_before - *u.curve.source_after) / kSeeds;
    drop_en += 100.0 * (*e.curve.source_before - *e.curve.source_after) / kSeeds;
  }
  v.require(drop_unidg <= drop_en, "UniDG source drop exceeds the entropy-only drop");
  v.note("source drop UniDG " + fmt("%.2fpp", drop_unidg) + ", entropy-only " + fmt("%.2fpp", drop_en) +
         " (norm-layer encoder, paired seeds)");
  return v;
}

// ---------------------------------------------------------------------------
// 7. Ablation monotonicity

Verdict ablation_monotonicity() {
  Verdict v;
  std::vector<double> mean(cli::ablation_grid().size(), 0.0);
  for (int s = 0; s < kSeeds; ++s) {
    const auto& m = seed_model(s, false);
    for (std::size_t r = 0; r < mean.size(); ++r) {
      const auto& row = cli::ablation_grid()[r];
      AdaptConfig c;
      c.enable_lm = row.lm;
      c.enable_le = row.le;
      c.enable_bank = row.bank;
      c.enable_refresh = row.refresh;
      mean[r] += run_on(m, c, s).curve.final_accuracy / kSeeds;
    }
  }
  std::size_t all_on = 0;
  for (std::size_t r = 0; r < mean.size(); ++r) {
    const auto& row = cli::ablation_grid()[r];
    if (row.lm && row.le && row.bank && row.refresh) all_on = r;
  }
  std::string table;
  for (std::size_t r = 0; r < mean.size(); ++r) {
    const auto& row = cli::ablation_grid()[r];
    table += (table.empty() ? "" : ", ") + row.name + " " + fmt("%.4f", mean[r]);
    const int on = row.lm + row.le + row.bank + row.refresh;
    if (on == 1)
      v.require(mean[all_on] >= mean[r] - 0.01, "all-on below " + row.name + " by " +
                                                    fmt("%.2fpp", 100.0 * (mean[r] - mean[all_on])));
  }
  v.note(table);
  return v;
}

// ---------------------------------------------------------------------------
// 8. Diagnostics

Verdict diagnostics() {
  Verdict v;
  std::mt19937_64 rng(8008);
  double bn = 0;
  for (int t = 0; t < 10; ++t) {
    NormLayerState st = NormLayerState::identity(16);
    st.gamma = oracle::random_vector(rng, 16, 0.5, 2.0);
    st.beta = oracle::random_vector(rng, 16);
    bn = std::max(bn, verify_bn_gradient(oracle::random_tensor(rng, 32, 16, -2, 2), st, 10, t));
  }
  v.require(bn <= 1e-6, "BN gradient error " + fmt("%.2e", bn));

  const auto& m = seed_model(0, true);
  const auto sweep = kernel_comparison_sweep(m.trained.encoder, m.shift.sources[0].features, m.shift.target.features, 100, 8);
  double sym = 0, cs = 0;
  bool cos_ok = true;
  for (const auto& st : sweep.subsets) {
    sym = std::max(sym, st.max_symmetry_error);
    cs = std::max(cs, st.max_cauchy_schwarz_excess);
    cos_ok = cos_ok && st.pairs == 100;
    for (double c : st.cosines) cos_ok = cos_ok && c >= -1.0 && c <= 1.0;
  }
  v.require(sym <= 1e-12, "kernel symmetry error " + fmt("%.2e", sym));
  v.require(cs <= 1e-9, "Cauchy-Schwarz excess " + fmt("%.2e", cs));
  v.require(cos_ok, "cosine outside [-1, 1]");

  const Tensor2 samples = gather_rows(m.shift.target.features, std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
  double min_eig = std::numeric_limits<double>::max();
  for (ParamSubset s : {ParamSubset::all, ParamSubset::norm_only})
    min_eig = std::min(min_eig, min_eigenvalue(kernel_gram(m.trained.encoder, samples, s)) /
                                    std::max(1.0, kernel_gram(m.trained.encoder, samples, s)(0, 0)));
  v.require(min_eig >= -1e-8, "Gram matrix min eigenvalue " + fmt("%.2e", min_eig));
  v.note("BN err " + fmt("%.1e", bn) + ", symmetry " + fmt("%.1e", sym) + ", CS excess " + fmt("%.1e", cs) +
         ", min eig " + fmt("%.1e", min_eig) + ", 100-pair sweep for all and norm_only");
  return v;
}

// ---------------------------------------------------------------------------
// 9. Determinism

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

// Runs every command into `dir` and returns the non-timing content of every
// produced file, keyed by file name.
std::map<std::string, std::string> run_all_commands(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ostringstream sink;
  cli::GenDataOptions g;
  g.spec.samples_per_domain = 400;
  g.spec.target_samples = 400;
  g.spec.seed = 9;
  g.out = dir;
  cli::cmd_gen_data(g, sink);
  cli::TrainOptions t;
  t.data_dir = dir;
  t.out = dir;
  t.train.epochs = 3;
  t.train.seed = 9;
  cli::cmd_train_source(t, sink);
  cli::AdaptOptions a;
  a.checkpoint = dir / cli::kCheckpointFile;
  a.target = dir / cli::kTargetFile;
  a.source_eval = dir / cli::kHoldoutFile;
  a.out = dir;
  a.cfg.seed = 9;
  a.cfg.enable_li = true;
  cli::cmd_adapt(a, sink);
  a.cfg.method = Method::pseudo_label;
  cli::cmd_adapt(a, sink);
  a.cfg.method = Method::unidg;
  cli::cmd_ablate(cli::AblateOptions{a, 4}, sink);
  cli::DiagnoseOptions d;
  d.out = dir;
  d.seed = 9;
  d.pairs = 30;
  d.trials = 3;
  cli::cmd_diagnose(d, sink);

  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name == cli::kResultsFile) {
      std::string body;
      for (const auto& r : cli::read_records(e.path())) body += cli::without_timing(r).dump() + "\n";
      out[name] = body;
    } else {
      out[name] = slurp(e.path());
    }
  }
  out["<report>"] = sink.str();
  return out;
}

Verdict determinism() {
  Verdict v;
  // same directory both times: records carry their input paths
  const fs::path base = fs::temp_directory_path() / "unidg_acceptance_det";
  const auto a = run_all_commands(base);
  const auto b = run_all_commands(base);
  v.require(a.size() == b.size(), "different file sets");
  std::size_t records = 0;
  for (const auto& [name, body] : a) {
    const auto it = b.find(name);
    v.require(it != b.end() && it->second == body, name + " differs");
    if (name == cli::kResultsFile) records = std::count(body.begin(), body.end(), '\n');
  }
  fs::remove_all(base);
  v.note(std::to_string(a.size() - 1) + " files and " + std::to_string(records) +
         " result records byte-identical across reruns (timing field excluded)");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient suite", gradient_suite},
      {"margin contract", margin_contract},
      {"memory-bank oracle", memory_bank_oracle},
      {"no-op contracts", noop_contracts},
      {"directional improvement", directional_improvement},
      {"source preservation", source_preservation},
      {"ablation monotonicity", ablation_monotonicity},
      {"diagnostics", diagnostics},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && only != static_cast<int>(i + 1)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s criterion %zu (%s): %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
