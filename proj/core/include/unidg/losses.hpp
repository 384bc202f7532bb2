#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "unidg/tensor.hpp"

namespace unidg {

struct LossValue {
  double value = 0.0;
  Tensor2 grad;
};

/// Hinge on the per-sample squared feature distance:
///   (1/N) Σ_i max(‖f′(x_i) − f(x_i)‖² − σ, 0).
/// The gradient is taken with respect to the adapted features only; the
/// source features are constants.
LossValue marginal_loss(const Tensor2& adapted_feats, const Tensor2& source_feats, double sigma);

/// Mean Shannon entropy of the probability rows, with 0·log 0 = 0. The gradient
/// is with respect to the logits that produced `probs` (fused softmax backward).
LossValue entropy_loss(const Tensor2& probs);

struct MemoryTermValue {
  double value = 0.0;
  Tensor2 grad_features;                         // N × d
  std::vector<std::vector<double>> grad_prototypes;  // per class, empty if unused
};

/// Learnable memory term. For each sample, γ_i is the dot product of its
/// feature with the unit-normalised prototype of its pseudo-class; γ is
/// standardised over the batch (mean 0, variance var/(var+eps)) and the loss is
///   −(1/N) Σ_i s_i · log softmax(s)_i   with the softmax over the batch.
MemoryTermValue memory_term_loss(const Tensor2& adapted_feats,
                                 std::span<const std::vector<double>> prototypes,
                                 std::span<const std::size_t> pseudo_labels, double eps = 1e-5);

double combined_loss(double l_e, double l_m, double l_i, double lambda_weight, bool enable_li);

struct LossReport {
  double l_m = 0.0;
  double l_e = 0.0;
  double l_i = 0.0;
  double l_ce = 0.0;  // pseudo-label baseline only
  double total = 0.0;
  double sigma = 0.0;
  double lambda_weight = 0.0;
};

}  // namespace unidg
