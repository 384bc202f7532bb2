#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "unidg/diagnostics.hpp"
#include "unidg/error.hpp"

using namespace unidg;

namespace {

MlpEncoder norm_model(std::uint64_t seed) {
  MlpEncoder enc = MlpEncoder::initialized({4, 6, 5, 3}, true, seed);
  std::mt19937_64 rng(seed + 100);
  for (auto& n : enc.norms()) {
    n.gamma = oracle::random_vector(rng, n.width(), 0.5, 1.5);
    n.beta = oracle::random_vector(rng, n.width(), -0.5, 0.5);
    n.running_mean = oracle::random_vector(rng, n.width(), -0.3, 0.3);
    n.running_var = oracle::random_vector(rng, n.width(), 0.5, 1.5);
  }
  return enc;
}

// Kernel from finite-difference parameter Jacobians, one output dimension at a time.
double fd_kernel(MlpEncoder model, const std::vector<double>& a, const std::vector<double>& b, ParamSubset subset) {
  auto jac = [&](const std::vector<double>& x) {
    const Tensor2 in(1, x.size(), x);
    std::vector<std::vector<double>> rows(model.output_dim());
    for (auto s : model.parameters(subset))
      for (double& p : s) {
        const double keep = p;
        p = keep + 1e-6;
        const Tensor2 up = model.forward(in);
        p = keep - 1e-6;
        const Tensor2 dn = model.forward(in);
        p = keep;
        for (std::size_t k = 0; k < rows.size(); ++k) rows[k].push_back((up(0, k) - dn(0, k)) / 2e-6);
      }
    return rows;
  };
  const auto ja = jac(a), jb = jac(b);
  double k = 0;
  for (std::size_t o = 0; o < ja.size(); ++o)
    for (std::size_t i = 0; i < ja[o].size(); ++i) k += ja[o][i] * jb[o][i];
  return k;
}

}  // namespace

TEST_CASE("kernel of a sample with itself") {
  const MlpEncoder m = norm_model(1);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto x = oracle::random_vector(rng, 4);
    for (ParamSubset s : {ParamSubset::all, ParamSubset::norm_only}) {
      const auto r = empirical_ntk(m, x, x, s);
      CHECK(r.cosine == 1.0);
      CHECK(r.raw >= 0.0);
      CHECK(r.raw == r.self_a);
      const Tensor2 j = output_jacobian(m, x, s);
      double sq = 0;
      for (double v : j.values()) sq += v * v;
      CHECK(std::abs(r.raw - sq) <= 1e-12 * std::max(1.0, sq));
    }
  }
}

TEST_CASE("analytic kernel matches the finite-difference kernel") {
  std::mt19937_64 rng(2);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const MlpEncoder m = norm_model(10 + t);
    const auto a = oracle::random_vector(rng, 4), b = oracle::random_vector(rng, 4);
    for (ParamSubset s : {ParamSubset::all, ParamSubset::norm_only}) {
      const double k = empirical_ntk(m, a, b, s).raw;
      const double fd = fd_kernel(m, a, b, s);
      worst = std::max(worst, std::abs(k - fd) / std::max({std::abs(k), std::abs(fd), 1e-8}));
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("kernel symmetry and Cauchy-Schwarz") {
  std::mt19937_64 rng(3);
  const MlpEncoder m = norm_model(3);
  for (int t = 0; t < 100; ++t) {
    const auto a = oracle::random_vector(rng, 4), b = oracle::random_vector(rng, 4);
    for (ParamSubset s : {ParamSubset::all, ParamSubset::norm_only}) {
      const auto ab = empirical_ntk(m, a, b, s);
      const auto ba = empirical_ntk(m, b, a, s);
      CHECK(std::abs(ab.raw - ba.raw) <= 1e-12 * std::max(1.0, std::abs(ab.raw)));
      CHECK(ab.raw * ab.raw <= ab.self_a * ab.self_b * (1 + 1e-9));
      CHECK(ab.cosine >= -1.0);
      CHECK(ab.cosine <= 1.0);
    }
  }
}

TEST_CASE("norm_only Jacobian width equals the affine parameter count") {
  const MlpEncoder m = norm_model(4);
  const std::vector<double> x{0.1, 0.2, 0.3, 0.4};
  const Tensor2 j = output_jacobian(m, x, ParamSubset::norm_only);
  CHECK(j.rows() == 3);
  CHECK(j.cols() == 2 * (6 + 5));
  CHECK(output_jacobian(m, x, ParamSubset::all).cols() == m.parameter_count());
  const MlpEncoder plain = MlpEncoder::initialized({4, 6, 3}, false, 4);
  CHECK_THROWS_AS(empirical_ntk(plain, x, x, ParamSubset::norm_only), ConfigError);
  CHECK_THROWS_AS(output_jacobian(plain, std::vector<double>{1.0}, ParamSubset::all), DimensionError);
}

TEST_CASE("gram matrix is numerically PSD") {
  std::mt19937_64 rng(5);
  const MlpEncoder m = norm_model(5);
  const Tensor2 samples = oracle::random_tensor(rng, 12, 4);
  for (ParamSubset s : {ParamSubset::all, ParamSubset::norm_only}) {
    const Tensor2 g = kernel_gram(m, samples, s);
    CHECK(g.rows() == 12);
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 12; ++j) CHECK(g(i, j) == g(j, i));
    CHECK(min_eigenvalue(g) >= -1e-8);
  }
  CHECK(min_eigenvalue(Tensor2::from_rows({{2, 1}, {1, 2}})) == doctest::Approx(1.0));
  CHECK(min_eigenvalue(Tensor2::from_rows({{1, 2}, {2, 1}})) == doctest::Approx(-1.0));
}

TEST_CASE("sweep over identical sets concentrates the cosine at 1") {
  std::mt19937_64 rng(6);
  const MlpEncoder m = norm_model(6);
  const Tensor2 s = oracle::random_tensor(rng, 1, 4);
  const auto sweep = kernel_comparison_sweep(m, s, s, 30, 6);
  REQUIRE(sweep.subsets.size() == 2);
  for (const auto& st : sweep.subsets) {
    CHECK(st.pairs == 30);
    CHECK(st.skipped == 0);
    CHECK(st.cosine_min == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("100-pair sweep keeps every cosine in range") {
  std::mt19937_64 rng(7);
  const MlpEncoder m = norm_model(7);
  const auto sweep = kernel_comparison_sweep(m, oracle::random_tensor(rng, 40, 4), oracle::random_tensor(rng, 40, 4, -2, 2), 100, 7);
  for (const auto& st : sweep.subsets) {
    CHECK(st.pairs == 100);
    CHECK(st.cosines.size() + st.skipped == 100);
    for (double c : st.cosines) {
      CHECK(c >= -1.0);
      CHECK(c <= 1.0);
    }
    CHECK(st.max_symmetry_error <= 1e-12);
    CHECK(st.max_cauchy_schwarz_excess <= 1e-9);
  }
  const auto again = kernel_comparison_sweep(m, oracle::random_tensor(rng, 1, 4), oracle::random_tensor(rng, 1, 4), 5, 8);
  CHECK(again.subsets[0].pairs == 5);
}

TEST_CASE("zero final layer makes the norm-only gradients degenerate") {
  MlpEncoder m = norm_model(8);
  auto& last = m.layers().back();
  std::fill(last.weight.values().begin(), last.weight.values().end(), 0.0);
  std::fill(last.bias.begin(), last.bias.end(), 0.0);
  std::mt19937_64 rng(8);
  const auto r = empirical_ntk(m, oracle::random_vector(rng, 4), oracle::random_vector(rng, 4), ParamSubset::norm_only);
  CHECK(r.degenerate);
  CHECK(r.cosine == 0.0);
  const auto sweep = kernel_comparison_sweep(m, oracle::random_tensor(rng, 10, 4), oracle::random_tensor(rng, 10, 4), 25, 8);
  CHECK(sweep.subsets[1].skipped == 25);
  CHECK(sweep.subsets[1].cosines.empty());
  CHECK(sweep.subsets[0].skipped == 0);
}

TEST_CASE("expected kernel over re-initialisations") {
  const std::vector<double> a{0.5, -0.5, 1.0, 0.0}, b{0.4, -0.2, 0.8, 0.1};
  const auto e = expected_ntk({4, 6, 5, 3}, true, a, b, ParamSubset::norm_only, 8, 9);
  CHECK(e.used + e.skipped == 8);
  CHECK(e.cosine <= 1.0);
  CHECK(e.cosine >= -1.0);
  const auto same = expected_ntk({4, 6, 5, 3}, true, a, a, ParamSubset::all, 8, 9);
  CHECK(same.cosine == doctest::Approx(1.0));
  const auto again = expected_ntk({4, 6, 5, 3}, true, a, b, ParamSubset::norm_only, 8, 9);
  CHECK(again.raw == e.raw);
}

TEST_CASE("verify_bn_gradient") {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 10; ++t) {
    NormLayerState st = NormLayerState::identity(5);
    st.gamma = oracle::random_vector(rng, 5, 0.5, 2.0);
    const Tensor2 batch = oracle::random_tensor(rng, 8 + t, 5);
    CHECK(verify_bn_gradient(batch, st, 10, t) <= 1e-6);
  }
  const double two = verify_bn_gradient(oracle::random_tensor(rng, 2, 5), NormLayerState::identity(5), 10, 1);
  CHECK(std::isfinite(two));
  CHECK(two <= 1e-5);
  CHECK_THROWS_AS(verify_bn_gradient(Tensor2(1, 5), NormLayerState::identity(5), 1), BatchTooSmallError);
}

TEST_CASE("constant upstream: closed form is exactly zero and finite differences agree") {
  std::mt19937_64 rng(11);
  NormLayerState st = NormLayerState::identity(3);
  st.gamma = {1.3, 0.7, 2.0};
  Tensor2 x = oracle::random_tensor(rng, 6, 3);
  NormCache cache;
  batchnorm_apply(x, st, NormMode::batch, &cache);
  const Tensor2 up(6, 3, 0.8);
  const auto g = batchnorm_backward(st, cache, up);
  for (double v : g.input.values()) CHECK(v == 0.0);
  auto f = [&] {
    const Tensor2 out = batchnorm_apply(x, st, NormMode::batch, nullptr);
    double s = 0;
    for (double v : out.values()) s += 0.8 * v;
    return s;
  };
  for (double v : oracle::finite_diff(f, oracle::pointers(x))) CHECK(std::abs(v) <= 1e-8);
}
