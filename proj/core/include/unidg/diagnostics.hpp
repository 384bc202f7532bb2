#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "unidg/layers.hpp"
#include "unidg/model.hpp"
#include "unidg/tensor.hpp"

namespace unidg {

/// Empirical neural-tangent-kernel values for one pair of inputs. For a
/// d-dimensional output the kernel is the sum over output dimensions of the
/// per-dimension gradient inner products (the trace convention).
struct KernelReport {
  double raw = 0.0;     // K(a, b)
  double self_a = 0.0;  // K(a, a)
  double self_b = 0.0;  // K(b, b)
  double cosine = 0.0;  // K(a, b) / √(K(a, a)·K(b, b)), clamped to [−1, 1]
  bool degenerate = false;  // a self-kernel is zero, cosine undefined (reported as 0)
  ParamSubset subset = ParamSubset::all;
  std::uint64_t model_fingerprint = 0;
  std::uint64_t sample_a_fingerprint = 0;
  std::uint64_t sample_b_fingerprint = 0;
};

/// Parameter gradients of every output dimension at `x`, evaluated with
/// running statistics. Row k is ∂f_k(x)/∂θ flattened in parameter order.
Tensor2 output_jacobian(const MlpEncoder& model, std::span<const double> x, ParamSubset subset);

KernelReport empirical_ntk(const MlpEncoder& model, std::span<const double> x_a,
                           std::span<const double> x_b, ParamSubset subset = ParamSubset::all);

/// Averages raw and cosine kernels over `trials` freshly initialised models
/// with the given shape, standing in for the expectation over initialisations.
struct ExpectedKernel {
  double raw = 0.0;
  double cosine = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};
ExpectedKernel expected_ntk(const std::vector<std::size_t>& dims, bool with_norm,
                            std::span<const double> x_a, std::span<const double> x_b,
                            ParamSubset subset, std::size_t trials, std::uint64_t seed);

struct KernelStats {
  ParamSubset subset = ParamSubset::all;
  std::size_t pairs = 0;
  std::size_t skipped = 0;  // degenerate pairs
  double cosine_mean = 0.0;
  double cosine_min = 0.0;
  double cosine_max = 0.0;
  double raw_mean = 0.0;
  double raw_min = 0.0;
  double raw_max = 0.0;
  double self_source_mean = 0.0;
  double self_target_mean = 0.0;
  double max_symmetry_error = 0.0;        // |K(a,b) − K(b,a)|
  double max_cauchy_schwarz_excess = 0.0;  // max(K(a,b)² − K(a,a)K(b,b), 0) relative to K(a,a)K(b,b)
  std::vector<double> cosines;             // one per non-degenerate pair
};

struct KernelSweep {
  std::vector<KernelStats> subsets;  // `all`, then `norm_only` when the model has norm layers
};

/// Draws `trials` random (source row, target row) pairs and summarises the
/// kernels for each parameter subset.
KernelSweep kernel_comparison_sweep(const MlpEncoder& model, const Tensor2& source_samples,
                                    const Tensor2& target_samples, std::size_t trials,
                                    std::uint64_t seed);

/// Gram matrix of raw kernels over the rows of `samples`.
Tensor2 kernel_gram(const MlpEncoder& model, const Tensor2& samples, ParamSubset subset);
/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Tensor2& symmetric);

/// Closed-form batch-norm input gradient versus central differences (step
/// 1e-6) of Σ out·R for random upstream R in [−1, 1]. Returns the largest
/// relative error over `trials`.
double verify_bn_gradient(const Tensor2& batch, const NormLayerState& state, std::size_t trials,
                          std::uint64_t seed = 0);

}  // namespace unidg
