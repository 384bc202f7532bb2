#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "unidg/tensor.hpp"

namespace unidg {

// ---------------------------------------------------------------------------
// Affine map: out = x·W + b
// ---------------------------------------------------------------------------

Tensor2 linear_forward(const Tensor2& x, const Tensor2& weight, std::span<const double> bias);

struct LinearGrads {
  Tensor2 input;
  Tensor2 weight;
  std::vector<double> bias;
};

LinearGrads linear_backward(const Tensor2& x, const Tensor2& weight, const Tensor2& upstream);

// ---------------------------------------------------------------------------
// ReLU. The subgradient at exactly zero is taken as 0.
// ---------------------------------------------------------------------------

Tensor2 relu_forward(const Tensor2& x);
Tensor2 relu_backward(const Tensor2& x, const Tensor2& upstream);

/// Row-wise softmax with per-row max subtraction.
Tensor2 softmax_rows(const Tensor2& logits);
/// Row-wise log-softmax, same stabilisation.
Tensor2 log_softmax_rows(const Tensor2& logits);

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

enum class NormMode {
  batch,    // statistics of the current batch (training / norm adaptation)
  running,  // exponential-moving-average statistics (inference)
};

/// What the backward pass needs from one forward call.
struct NormCache {
  NormMode mode = NormMode::batch;
  std::size_t batch = 0;
  std::vector<double> mean;  // statistics actually used for normalisation
  std::vector<double> var;
  Tensor2 x_hat;
};

struct NormLayerState {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.1;
  std::optional<NormCache> cache;

  static NormLayerState identity(std::size_t width, double eps = 1e-5);
  std::size_t width() const noexcept { return gamma.size(); }
};

/// Normalises `x` with `state`'s parameters without touching the state. When
/// `cache` is non-null it receives what batchnorm_backward needs.
Tensor2 batchnorm_apply(const Tensor2& x, const NormLayerState& state, NormMode mode,
                        NormCache* cache);

/// Stateful form: stores the cache in `state.cache`; in batch mode also folds
/// the batch statistics into the running averages.
Tensor2 batchnorm_forward(const Tensor2& x, NormLayerState& state, NormMode mode);

/// EMA update of running statistics from a batch-mode cache. The running
/// variance uses the unbiased batch variance.
void absorb_batch_statistics(NormLayerState& state, const NormCache& cache);

struct BatchNormGrads {
  Tensor2 input;
  std::vector<double> gamma;
  std::vector<double> beta;
};

/// Batch mode uses the closed form
///   ∂f/∂x_i = [m·g_i − Σ_j g_j − x̂_i Σ_j g_j·x̂_j] / (m·√(σ²+ε)),  g = γ·upstream.
/// Running mode is a per-feature affine map.
BatchNormGrads batchnorm_backward(const NormLayerState& state, const NormCache& cache,
                                  const Tensor2& upstream);
BatchNormGrads batchnorm_backward(const NormLayerState& state, const Tensor2& upstream);

// ---------------------------------------------------------------------------
// Squared Frobenius distance
// ---------------------------------------------------------------------------

double frobenius_distance_sq(const Tensor2& a, const Tensor2& b);
/// Gradient of frobenius_distance_sq with respect to `a`: 2(a − b).
Tensor2 frobenius_distance_sq_grad(const Tensor2& a, const Tensor2& b);

}  // namespace unidg
