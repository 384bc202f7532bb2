#include "unidg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "unidg/error.hpp"

namespace unidg {

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

std::vector<double> central_difference(const std::function<double()>& objective,
                                       std::span<double> x, double step) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = objective();
    x[i] = keep - step;
    const double down = objective();
    x[i] = keep;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace unidg
