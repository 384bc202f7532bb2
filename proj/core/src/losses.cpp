#include "unidg/losses.hpp"

#include <cmath>
#include <string>

#include "unidg/error.hpp"
#include "unidg/layers.hpp"

namespace unidg {

LossValue marginal_loss(const Tensor2& adapted_feats, const Tensor2& source_feats, double sigma) {
  if (!adapted_feats.same_shape(source_feats)) {
    throw DimensionError("marginal_loss: adapted and source features differ in shape");
  }
  if (!(sigma >= 0.0)) throw ConfigError("marginal_loss: sigma must be >= 0");
  const std::size_t n = adapted_feats.rows();
  LossValue out{0.0, Tensor2(n, adapted_feats.cols())};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = adapted_feats.row(i);
    const auto s = source_feats.row(i);
    double dist = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - s[k];
      dist += d * d;
    }
    const double excess = dist - sigma;
    if (excess > 0.0) {
      out.value += excess;
      auto g = out.grad.row(i);
      for (std::size_t k = 0; k < a.size(); ++k) g[k] = 2.0 * inv_n * (a[k] - s[k]);
    }
  }
  out.value *= inv_n;
  return out;
}

LossValue entropy_loss(const Tensor2& probs) {
  const std::size_t n = probs.rows();
  const std::size_t c = probs.cols();
  LossValue out{0.0, Tensor2(n, c)};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = probs.row(i);
    double sum = 0.0;
    double h = 0.0;
    for (double v : p) {
      if (v < 0.0) throw DataError("entropy_loss: negative probability in row " + std::to_string(i));
      sum += v;
      if (v > 0.0) h -= v * std::log(v);
    }
    if (!(std::abs(sum - 1.0) <= 1e-6)) {
      throw DataError("entropy_loss: row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
    out.value += h;
    // ∂H/∂z_j = −p_j (log p_j + H)
    auto g = out.grad.row(i);
    for (std::size_t j = 0; j < c; ++j)
      g[j] = p[j] > 0.0 ? -inv_n * p[j] * (std::log(p[j]) + h) : 0.0;
  }
  out.value *= inv_n;
  return out;
}

MemoryTermValue memory_term_loss(const Tensor2& adapted_feats,
                                 std::span<const std::vector<double>> prototypes,
                                 std::span<const std::size_t> pseudo_labels, double eps) {
  const std::size_t n = adapted_feats.rows();
  const std::size_t d = adapted_feats.cols();
  if (pseudo_labels.size() != n) throw DimensionError("memory_term_loss: one label per row required");
  if (n < 2) {
    throw BatchTooSmallError("memory_term_loss: batch standardisation needs at least 2 rows");
  }

  std::vector<std::vector<double>> unit(prototypes.size());
  std::vector<double> norms(prototypes.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = pseudo_labels[i];
    if (c >= prototypes.size() || prototypes[c].empty()) {
      throw StateError("memory_term_loss: no prototype for class " + std::to_string(c));
    }
    if (prototypes[c].size() != d) throw DimensionError("memory_term_loss: prototype width mismatch");
    if (!unit[c].empty()) continue;
    double nn = 0.0;
    for (double v : prototypes[c]) nn += v * v;
    nn = std::sqrt(nn);
    if (!(nn > 0.0)) throw StateError("memory_term_loss: zero prototype for class " + std::to_string(c));
    norms[c] = nn;
    unit[c] = prototypes[c];
    for (double& v : unit[c]) v /= nn;
  }

  std::vector<double> gamma(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = adapted_feats.row(i);
    const auto& u = unit[pseudo_labels[i]];
    for (std::size_t k = 0; k < d; ++k) gamma[i] += z[k] * u[k];
  }

  const double nd = static_cast<double>(n);
  double mean = 0.0;
  for (double g : gamma) mean += g;
  mean /= nd;
  double var = 0.0;
  for (double g : gamma) var += (g - mean) * (g - mean);
  var /= nd;
  const double inv_std = 1.0 / std::sqrt(var + eps);

  Tensor2 s(1, n);
  for (std::size_t i = 0; i < n; ++i) s(0, i) = (gamma[i] - mean) * inv_std;
  const Tensor2 ls = log_softmax_rows(s);
  const Tensor2 sm = softmax_rows(s);

  MemoryTermValue out;
  double sum_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.value -= s(0, i) * ls(0, i);
    sum_s += s(0, i);
  }
  out.value /= nd;

  // dL/ds_j = −(1/N)[log softmax_j + s_j − softmax_j Σ_i s_i]
  std::vector<double> gs(n);
  for (std::size_t j = 0; j < n; ++j) gs[j] = -(ls(0, j) + s(0, j) - sm(0, j) * sum_s) / nd;

  // Standardisation backward (closed form with unit scale).
  double sum_g = 0.0;
  double sum_gs = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    sum_g += gs[j];
    sum_gs += gs[j] * s(0, j);
  }
  std::vector<double> dgamma(n);
  for (std::size_t i = 0; i < n; ++i)
    dgamma[i] = inv_std / nd * (nd * gs[i] - sum_g - s(0, i) * sum_gs);

  out.grad_features = Tensor2(n, d);
  out.grad_prototypes.assign(prototypes.size(), {});
  std::vector<std::vector<double>> grad_unit(prototypes.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = pseudo_labels[i];
    const auto& u = unit[c];
    auto gz = out.grad_features.row(i);
    const auto z = adapted_feats.row(i);
    if (grad_unit[c].empty()) grad_unit[c].assign(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      gz[k] = dgamma[i] * u[k];
      grad_unit[c][k] += dgamma[i] * z[k];
    }
  }
  // p̂ = p/|p|  ⇒  dp = (dp̂ − p̂ (p̂·dp̂)) / |p|
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    if (grad_unit[c].empty()) continue;
    double dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) dot += unit[c][k] * grad_unit[c][k];
    auto& gp = out.grad_prototypes[c];
    gp.resize(d);
    for (std::size_t k = 0; k < d; ++k) gp[k] = (grad_unit[c][k] - unit[c][k] * dot) / norms[c];
  }
  return out;
}

double combined_loss(double l_e, double l_m, double l_i, double lambda_weight, bool enable_li) {
  double total = l_e + lambda_weight * l_m;
  if (enable_li) total += l_i;
  return total;
}

}  // namespace unidg
