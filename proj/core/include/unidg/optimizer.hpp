#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace unidg {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update. Moments are allocated on the first call and
/// the parameter shapes are fixed from then on.
void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state, double lr);

}  // namespace unidg
