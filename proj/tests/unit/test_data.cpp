#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "oracles.hpp"
#include "unidg/error.hpp"
#include "unidg/data.hpp"

using namespace unidg;

namespace {

ShiftSpec small_spec(std::uint64_t seed) {
  ShiftSpec s;
  s.samples_per_domain = 200;
  s.target_samples = 200;
  s.seed = seed;
  return s;
}

// Maximum of |AᵀA − I| over all entries.
double orthogonality_error(const Tensor2& a) {
  double worst = 0;
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.rows(); ++k) s += a(k, i) * a(k, j);
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

std::map<std::size_t, std::size_t> label_counts(const DomainDataset& ds) {
  std::map<std::size_t, std::size_t> m;
  for (auto y : ds.labels) ++m[y];
  return m;
}

bool bit_equal(const Tensor2& a, const Tensor2& b) {
  return a.same_shape(b) && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << content;
  return p;
}

}  // namespace

TEST_CASE("default spec produces the documented layout") {
  const auto shift = gen_synthetic_shift(ShiftSpec{});
  REQUIRE(shift.sources.size() == 3);
  for (const auto& s : shift.sources) {
    CHECK(s.size() == 2000);
    CHECK(s.input_dim() == 16);
    CHECK(label_counts(s) == label_counts(shift.target));
  }
  CHECK(shift.target.size() == 2000);
  CHECK(label_counts(shift.target).size() == 4);
  for (auto [c, n] : label_counts(shift.target)) CHECK(n == 500);
}

TEST_CASE("transforms are orthogonal and the rotation preserves distances") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto shift = gen_synthetic_shift(small_spec(seed));
    CHECK(orthogonality_error(shift.target_transform) <= 1e-12);
    for (const auto& t : shift.source_transforms) CHECK(orthogonality_error(t) <= 1e-12);
  }
  std::mt19937_64 rng(4);
  std::vector<double> u{1, 0, 0, 0}, v{0, 0, 1, 0};
  const Tensor2 r = plane_rotation(u, v, 0.7);
  CHECK(orthogonality_error(r) <= 1e-12);
  const Tensor2 x = oracle::random_tensor(rng, 2, 4);
  const Tensor2 y = matmul_transpose_b(x, r);
  double dx = 0, dy = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    dx += (x(0, k) - x(1, k)) * (x(0, k) - x(1, k));
    dy += (y(0, k) - y(1, k)) * (y(0, k) - y(1, k));
  }
  CHECK(std::abs(dx - dy) <= 1e-12);
  // coordinates outside the plane are untouched
  CHECK(std::abs(y(0, 1) - x(0, 1)) <= 1e-15);
  CHECK(std::abs(y(0, 3) - x(0, 3)) <= 1e-15);
}

TEST_CASE("zero shifts leave the target at the base distribution") {
  ShiftSpec rot = small_spec(5);
  rot.angle_deg = 0.0;
  rot.translation_std = 0.0;
  const auto a = gen_synthetic_shift(rot);
  CHECK(oracle::max_abs_diff(a.target_transform, Tensor2::identity(16)) == 0.0);
  for (double v : a.target_offset) CHECK(v == 0.0);

  ShiftSpec tr = small_spec(5);
  tr.kind = ShiftKind::mean_translation;
  tr.translation.assign(16, 0.0);
  const auto b = gen_synthetic_shift(tr);
  CHECK(oracle::max_abs_diff(b.target_transform, Tensor2::identity(16)) == 0.0);
  for (double v : b.target_offset) CHECK(v == 0.0);
  CHECK(oracle::max_abs_diff(a.class_means, b.class_means) == 0.0);
}

TEST_CASE("Bayes accuracy of the binary task matches the Gaussian overlap") {
  // Two classes at distance `sep` with unit noise: Bayes accuracy Φ(sep/2).
  ShiftSpec s;
  s.num_classes = 2;
  s.input_dim = 3;
  s.separation = 2.0;
  s.angle_deg = 0.0;
  s.translation_std = 0.0;
  s.num_sources = 1;
  s.samples_per_domain = 10;
  s.target_samples = 1000000;
  s.seed = 6;
  const auto shift = gen_synthetic_shift(s);
  std::size_t correct = 0;
  const auto& x = shift.target.features;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double d0 = 0, d1 = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      d0 += (x(i, k) - shift.class_means(0, k)) * (x(i, k) - shift.class_means(0, k));
      d1 += (x(i, k) - shift.class_means(1, k)) * (x(i, k) - shift.class_means(1, k));
    }
    correct += (d0 <= d1 ? 0u : 1u) == shift.target.labels[i];
  }
  const double mc = static_cast<double>(correct) / x.rows();
  CHECK(std::abs(mc - oracle::normal_cdf(1.0)) <= 0.01);
}

TEST_CASE("generation is seed-deterministic") {
  const auto a = gen_synthetic_shift(small_spec(7));
  const auto b = gen_synthetic_shift(small_spec(7));
  const auto c = gen_synthetic_shift(small_spec(8));
  CHECK(bit_equal(a.target.features, b.target.features));
  CHECK(a.target.labels == b.target.labels);
  for (std::size_t s = 0; s < a.sources.size(); ++s) CHECK(bit_equal(a.sources[s].features, b.sources[s].features));
  CHECK_FALSE(bit_equal(a.target.features, c.target.features));
}

TEST_CASE("invalid specs are rejected") {
  ShiftSpec s;
  s.angle_deg = 200;
  CHECK_THROWS_AS(gen_synthetic_shift(s), ConfigError);
  s = {};
  s.covariance_scale = 0;
  CHECK_THROWS_AS(gen_synthetic_shift(s), ConfigError);
  s = {};
  s.num_classes = 1;
  CHECK_THROWS_AS(gen_synthetic_shift(s), ConfigError);
  s = {};
  s.kind = ShiftKind::mean_translation;
  s.translation = {1.0};
  CHECK_THROWS_AS(gen_synthetic_shift(s), ConfigError);
  CHECK_THROWS_AS(parse_shift_kind("shear"), ConfigError);
}

TEST_CASE("shift spec serialization round-trips") {
  ShiftSpec s = small_spec(9);
  s.kind = ShiftKind::affine;
  s.affine.assign(16 * 16, 0.0);
  for (std::size_t i = 0; i < 16; ++i) s.affine[i * 17] = 1.0 + 0.1 * i;
  s.translation.assign(16, 0.3);
  s.angle_deg = 12.5;
  const ShiftSpec back = parse_shift_spec(serialize_shift_spec(s));
  CHECK(serialize_shift_spec(back) == serialize_shift_spec(s));
  CHECK(back.affine == s.affine);
  CHECK(back.kind == ShiftKind::affine);
  CHECK_THROWS_AS(parse_shift_spec("nonsense=1\n"), ParseError);
}

TEST_CASE("csv: two-row file") {
  const auto p = temp_file("unidg_two_rows.csv", "f0,f1,label,domain\n0.5,-1.25,0,a\n3,4,1,a\n");
  const DomainDataset ds = load_csv(p);
  CHECK(ds.size() == 2);
  CHECK(ds.features == Tensor2::from_rows({{0.5, -1.25}, {3, 4}}));
  CHECK(ds.labels == std::vector<std::size_t>{0, 1});
  CHECK(ds.domain_id == "a");
  std::filesystem::remove(p);
}

TEST_CASE("csv: errors carry line numbers") {
  CHECK_THROWS_AS(parse_csv("f0,f1,label,domain\n1,2,3,a\n", 3), DataError);
  CHECK_NOTHROW(parse_csv("f0,f1,label,domain\n1,2,2,a\n", 3));
  CHECK_THROWS_AS(parse_csv("f0,f1,label,domain\n1,2,0,a\n1,2,a\n"), SchemaError);
  CHECK_THROWS_AS(parse_csv("x0,f1,label,domain\n1,2,0,a\n"), ParseError);
  try {
    parse_csv("f0,f1,label,domain\n1,2,0,a\n1,abc,0,a\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  try {
    parse_csv("f0,label,domain\n1,0,a\n1,-1,a\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), DataError);
}

TEST_CASE("csv: write-then-read is bit-exact and splits by domain") {
  const auto shift = gen_synthetic_shift(small_spec(10));
  const auto p = std::filesystem::temp_directory_path() / "unidg_roundtrip.csv";
  write_csv(p, shift.sources);
  const auto parts = load_csv_by_domain(p, 4);
  REQUIRE(parts.size() == shift.sources.size());
  for (std::size_t s = 0; s < parts.size(); ++s) {
    CHECK(parts[s].domain_id == shift.sources[s].domain_id);
    CHECK(bit_equal(parts[s].features, shift.sources[s].features));
    CHECK(parts[s].labels == shift.sources[s].labels);
  }
  const auto pooled = load_csv(p);
  CHECK(pooled.size() == 600);
  CHECK(pooled.domain_id.find('+') != std::string::npos);
  std::filesystem::remove(p);
}

TEST_CASE("split_holdout") {
  DomainDataset ds{Tensor2(10, 1), std::vector<std::size_t>(10), "d", {}};
  for (std::size_t i = 0; i < 10; ++i) {
    ds.features(i, 0) = static_cast<double>(i);
    ds.labels[i] = i % 2;
  }
  const auto a = split_holdout(ds, 0.2, 3);
  CHECK(a.train.size() == 8);
  CHECK(a.val.size() == 2);
  CHECK(label_counts(a.val) == std::map<std::size_t, std::size_t>{{0, 1}, {1, 1}});

  const auto b = split_holdout(ds, 0.2, 3);
  CHECK(a.val.features == b.val.features);
  CHECK(a.train.features == b.train.features);

  std::vector<double> all;
  for (double v : a.train.features.values()) all.push_back(v);
  for (double v : a.val.features.values()) all.push_back(v);
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == static_cast<double>(i));

  CHECK_THROWS_AS(split_holdout(ds, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_holdout(ds, 1.0, 1), ConfigError);
  DomainDataset one{Tensor2(1, 1), {0}, "x", {}};
  CHECK_THROWS_AS(split_holdout(one, 0.2, 1), DataError);

  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 5 + t * 7;
    DomainDataset r{oracle::random_tensor(rng, n, 2), std::vector<std::size_t>(n), "r", {}};
    for (std::size_t i = 0; i < n; ++i) r.labels[i] = rng() % 3;
    const double frac = 0.1 + 0.04 * t;
    const auto s = split_holdout(r, frac, t);
    CHECK(s.val.size() == static_cast<std::size_t>(std::llround(frac * n)));
    CHECK(s.val.size() + s.train.size() == n);
  }
}

TEST_CASE("validate") {
  DomainDataset ds{Tensor2::from_rows({{1.0}, {NAN}}), {0, 1}, "x", {}};
  CHECK_THROWS_AS(validate(ds), DataError);
  ds.features(1, 0) = 0.0;
  CHECK_NOTHROW(validate(ds, 2));
  CHECK_THROWS_AS(validate(ds, 1), DataError);
  CHECK_THROWS_AS(validate(DomainDataset{}), DataError);
}
