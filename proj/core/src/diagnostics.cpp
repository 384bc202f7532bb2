#include "unidg/diagnostics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include "unidg/error.hpp"
#include "unidg/gradcheck.hpp"

namespace unidg {

namespace {

std::uint64_t sample_fingerprint(std::span<const double> x) {
  std::uint64_t h = 1469598103934665603ull;
  for (double v : x) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

double frob_dot(const Tensor2& a, const Tensor2& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

}  // namespace

Tensor2 output_jacobian(const MlpEncoder& model, std::span<const double> x, ParamSubset subset) {
  if (subset == ParamSubset::norm_only && !model.has_norm()) {
    throw ConfigError("norm_only kernel requested for an encoder without norm layers");
  }
  if (x.size() != model.input_dim()) throw DimensionError("output_jacobian: input width mismatch");
  const Tensor2 input(1, x.size(), std::vector<double>(x.begin(), x.end()));
  EncoderTrace trace;
  model.forward(input, NormMode::running, &trace);

  const std::size_t d = model.output_dim();
  const std::size_t p = model.parameter_count(subset);
  Tensor2 jac(d, p);
  for (std::size_t k = 0; k < d; ++k) {
    Tensor2 up(1, d);
    up(0, k) = 1.0;
    const EncoderGrads g = model.backward(trace, up);
    std::size_t off = 0;
    for (auto v : g.views(subset)) {
      std::copy(v.begin(), v.end(), jac.row(k).begin() + static_cast<std::ptrdiff_t>(off));
      off += v.size();
    }
  }
  return jac;
}

KernelReport empirical_ntk(const MlpEncoder& model, std::span<const double> x_a,
                           std::span<const double> x_b, ParamSubset subset) {
  const Tensor2 ja = output_jacobian(model, x_a, subset);
  const Tensor2 jb = output_jacobian(model, x_b, subset);
  KernelReport r;
  r.subset = subset;
  r.raw = frob_dot(ja, jb);
  r.self_a = frob_dot(ja, ja);
  r.self_b = frob_dot(jb, jb);
  r.model_fingerprint = fingerprint(model);
  r.sample_a_fingerprint = sample_fingerprint(x_a);
  r.sample_b_fingerprint = sample_fingerprint(x_b);
  if (!(r.self_a > 0.0) || !(r.self_b > 0.0)) {
    r.degenerate = true;
    r.cosine = 0.0;
  } else {
    r.cosine = std::clamp(r.raw / std::sqrt(r.self_a * r.self_b), -1.0, 1.0);
  }
  return r;
}

ExpectedKernel expected_ntk(const std::vector<std::size_t>& dims, bool with_norm,
                            std::span<const double> x_a, std::span<const double> x_b,
                            ParamSubset subset, std::size_t trials, std::uint64_t seed) {
  ExpectedKernel e;
  for (std::size_t t = 0; t < trials; ++t) {
    const MlpEncoder m = MlpEncoder::initialized(dims, with_norm, seed + t);
    const KernelReport r = empirical_ntk(m, x_a, x_b, subset);
    if (r.degenerate) {
      ++e.skipped;
      continue;
    }
    e.raw += r.raw;
    e.cosine += r.cosine;
    ++e.used;
  }
  if (e.used > 0) {
    e.raw /= static_cast<double>(e.used);
    e.cosine /= static_cast<double>(e.used);
  }
  return e;
}

KernelSweep kernel_comparison_sweep(const MlpEncoder& model, const Tensor2& source_samples,
                                    const Tensor2& target_samples, std::size_t trials,
                                    std::uint64_t seed) {
  if (source_samples.rows() == 0 || target_samples.rows() == 0) {
    throw DataError("kernel sweep: empty sample set");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_s(0, source_samples.rows() - 1);
  std::uniform_int_distribution<std::size_t> pick_t(0, target_samples.rows() - 1);
  std::vector<std::pair<std::size_t, std::size_t>> pairs(trials);
  for (auto& p : pairs) p = {pick_s(rng), pick_t(rng)};

  std::vector<ParamSubset> subsets{ParamSubset::all};
  if (model.has_norm()) subsets.push_back(ParamSubset::norm_only);

  KernelSweep sweep;
  for (ParamSubset subset : subsets) {
    KernelStats st;
    st.subset = subset;
    st.cosine_min = st.raw_min = std::numeric_limits<double>::infinity();
    st.cosine_max = st.raw_max = -std::numeric_limits<double>::infinity();
    for (const auto& [si, ti] : pairs) {
      const auto a = source_samples.row(si);
      const auto b = target_samples.row(ti);
      const KernelReport ab = empirical_ntk(model, a, b, subset);
      if (ab.degenerate) {
        ++st.skipped;
        continue;
      }
      const KernelReport ba = empirical_ntk(model, b, a, subset);
      ++st.pairs;
      st.cosines.push_back(ab.cosine);
      st.cosine_mean += ab.cosine;
      st.raw_mean += ab.raw;
      st.self_source_mean += ab.self_a;
      st.self_target_mean += ab.self_b;
      st.cosine_min = std::min(st.cosine_min, ab.cosine);
      st.cosine_max = std::max(st.cosine_max, ab.cosine);
      st.raw_min = std::min(st.raw_min, ab.raw);
      st.raw_max = std::max(st.raw_max, ab.raw);
      st.max_symmetry_error = std::max(st.max_symmetry_error, std::abs(ab.raw - ba.raw));
      const double bound = ab.self_a * ab.self_b;
      st.max_cauchy_schwarz_excess =
          std::max(st.max_cauchy_schwarz_excess, std::max(ab.raw * ab.raw - bound, 0.0) / bound);
    }
    if (st.pairs > 0) {
      const double n = static_cast<double>(st.pairs);
      st.cosine_mean /= n;
      st.raw_mean /= n;
      st.self_source_mean /= n;
      st.self_target_mean /= n;
    } else {
      st.cosine_min = st.cosine_max = st.raw_min = st.raw_max = 0.0;
    }
    sweep.subsets.push_back(std::move(st));
  }
  return sweep;
}

Tensor2 kernel_gram(const MlpEncoder& model, const Tensor2& samples, ParamSubset subset) {
  const std::size_t n = samples.rows();
  std::vector<Tensor2> jac;
  jac.reserve(n);
  for (std::size_t i = 0; i < n; ++i) jac.push_back(output_jacobian(model, samples.row(i), subset));
  Tensor2 g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) g(i, j) = g(j, i) = frob_dot(jac[i], jac[j]);
  return g;
}

double min_eigenvalue(const Tensor2& symmetric) {
  if (symmetric.rows() != symmetric.cols()) throw DimensionError("min_eigenvalue: matrix not square");
  const auto n = static_cast<Eigen::Index>(symmetric.rows());
  if (n == 0) throw DimensionError("min_eigenvalue: empty matrix");
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      m(i, j) = symmetric(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

double verify_bn_gradient(const Tensor2& batch, const NormLayerState& state, std::size_t trials,
                          std::uint64_t seed) {
  if (batch.rows() < 2) throw BatchTooSmallError("verify_bn_gradient: needs at least 2 rows");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0xb17du};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Tensor2 upstream(batch.rows(), batch.cols());
    for (double& v : upstream.values()) v = unif(rng);

    NormCache cache;
    batchnorm_apply(batch, state, NormMode::batch, &cache);
    const BatchNormGrads analytic = batchnorm_backward(state, cache, upstream);

    Tensor2 x = batch;
    const auto objective = [&]() {
      const Tensor2 out = batchnorm_apply(x, state, NormMode::batch, nullptr);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * upstream.values()[i];
      return s;
    };
    const std::vector<double> numeric = central_difference(objective, x.values(), 1e-6);
    worst = std::max(worst, relative_error(analytic.input.values(), numeric));
  }
  return worst;
}

}  // namespace unidg
