#pragma once

#include <functional>
#include <span>
#include <vector>

namespace unidg {

/// ‖a − b‖ / max(‖a‖, ‖b‖, 1e-8).
double relative_error(std::span<const double> a, std::span<const double> b);

/// Central differences of `objective` with respect to every entry of `x`.
/// `x` is perturbed in place and restored before returning.
std::vector<double> central_difference(const std::function<double()>& objective,
                                       std::span<double> x, double step = 1e-6);

}  // namespace unidg
