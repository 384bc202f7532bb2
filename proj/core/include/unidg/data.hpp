#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unidg/tensor.hpp"

namespace unidg {

struct DomainDataset {
  Tensor2 features;
  std::vector<std::size_t> labels;
  std::string domain_id;
  std::map<std::string, std::string> metadata;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t input_dim() const noexcept { return features.cols(); }
  /// Largest label + 1 (0 for an empty set).
  std::size_t label_span() const noexcept;
};

/// Checks the dataset invariants: one label per row, labels below
/// `num_classes` when given, finite features, at least one row.
void validate(const DomainDataset& ds, std::optional<std::size_t> num_classes = std::nullopt);

/// Stacks several datasets; the result takes `domain_id`.
DomainDataset concatenate(std::span<const DomainDataset> parts, std::string domain_id);
DomainDataset subset(const DomainDataset& ds, std::span<const std::size_t> indices);

enum class ShiftKind { rotation, mean_translation, affine };

const char* to_string(ShiftKind kind) noexcept;
ShiftKind parse_shift_kind(const std::string& text);

/// Parameters of the synthetic covariate-shift task. Class means sit on a
/// circle in a random 2-D plane with adjacent means `separation` apart; each
/// class is isotropic Gaussian with standard deviation `covariance_scale`.
struct ShiftSpec {
  std::size_t num_classes = 4;
  std::size_t input_dim = 16;
  double separation = 4.0;
  double covariance_scale = 1.0;
  ShiftKind kind = ShiftKind::rotation;
  double angle_deg = 30.0;              // rotation: angle within the class-mean plane
  double translation_std = 1.0;         // rotation: offset length in units of covariance_scale
  std::vector<double> translation;      // mean_translation / affine offset
  std::vector<double> affine;           // affine: row-major input_dim × input_dim
  std::size_t num_sources = 3;
  std::size_t samples_per_domain = 2000;
  std::size_t target_samples = 2000;
  double source_max_angle_deg = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticShift {
  std::vector<DomainDataset> sources;
  DomainDataset target;
  Tensor2 class_means;                  // C × d₀, before any domain transform
  std::vector<Tensor2> source_transforms;
  Tensor2 target_transform;             // x ↦ x·Aᵀ + t
  std::vector<double> target_offset;
};

SyntheticShift gen_synthetic_shift(const ShiftSpec& spec);

/// Rotation by `angle_rad` inside the plane spanned by orthonormal `u`, `v`.
Tensor2 plane_rotation(std::span<const double> u, std::span<const double> v, double angle_rad);

std::string serialize_shift_spec(const ShiftSpec& spec);
ShiftSpec parse_shift_spec(const std::string& text);

// CSV with header f0,…,f{d0-1},label,domain. Values are written with 17
// significant digits so a round trip is bit-exact.
void write_csv(const std::filesystem::path& path, std::span<const DomainDataset> datasets);
std::string to_csv(std::span<const DomainDataset> datasets);

/// Reads every row into one dataset. When the file holds several domains the
/// resulting domain_id lists them joined by '+'.
DomainDataset load_csv(const std::filesystem::path& path,
                       std::optional<std::size_t> num_classes = std::nullopt);
/// One dataset per distinct domain value, in order of first appearance.
std::vector<DomainDataset> load_csv_by_domain(const std::filesystem::path& path,
                                              std::optional<std::size_t> num_classes = std::nullopt);
std::vector<DomainDataset> parse_csv(const std::string& text,
                                     std::optional<std::size_t> num_classes = std::nullopt);

struct HoldoutSplit {
  DomainDataset train;
  DomainDataset val;
};

/// Label-stratified, seed-deterministic split with |val| = round(fraction·N).
/// Per-class validation counts are apportioned by largest remainder.
HoldoutSplit split_holdout(const DomainDataset& ds, double fraction, std::uint64_t seed);

}  // namespace unidg
