#include "unidg/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "unidg/error.hpp"

namespace unidg {

Tensor2 linear_forward(const Tensor2& x, const Tensor2& weight, std::span<const double> bias) {
  if (x.cols() != weight.rows() || bias.size() != weight.cols()) {
    throw DimensionError("linear_forward: input " + std::to_string(x.cols()) + " cols, weight " +
                         std::to_string(weight.rows()) + "x" + std::to_string(weight.cols()) +
                         ", bias " + std::to_string(bias.size()));
  }
  Tensor2 out = matmul(x, weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
  return out;
}

LinearGrads linear_backward(const Tensor2& x, const Tensor2& weight, const Tensor2& upstream) {
  if (x.cols() != weight.rows() || upstream.cols() != weight.cols() ||
      upstream.rows() != x.rows()) {
    throw DimensionError("linear_backward: inconsistent shapes");
  }
  return {matmul_transpose_b(upstream, weight), matmul_transpose_a(x, upstream),
          column_sums(upstream)};
}

Tensor2 relu_forward(const Tensor2& x) {
  Tensor2 out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor2 relu_backward(const Tensor2& x, const Tensor2& upstream) {
  if (!x.same_shape(upstream)) throw DimensionError("relu_backward: shape mismatch");
  Tensor2 out = upstream;
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i)
    if (!(xv[i] > 0.0)) ov[i] = 0.0;
  return out;
}

Tensor2 softmax_rows(const Tensor2& logits) {
  Tensor2 out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    auto p = out.row(i);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      p[j] = std::exp(z[j] - m);
      s += p[j];
    }
    for (double& v : p) v /= s;
  }
  return out;
}

Tensor2 log_softmax_rows(const Tensor2& logits) {
  Tensor2 out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    auto o = out.row(i);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < z.size(); ++j) o[j] = z[j] - lse;
  }
  return out;
}

NormLayerState NormLayerState::identity(std::size_t width, double eps) {
  NormLayerState s;
  s.gamma.assign(width, 1.0);
  s.beta.assign(width, 0.0);
  s.running_mean.assign(width, 0.0);
  s.running_var.assign(width, 1.0);
  s.eps = eps;
  return s;
}

Tensor2 batchnorm_apply(const Tensor2& x, const NormLayerState& state, NormMode mode,
                        NormCache* cache) {
  const std::size_t m = x.rows();
  const std::size_t d = x.cols();
  if (state.gamma.size() != d || state.beta.size() != d) {
    throw DimensionError("batchnorm: expected width " + std::to_string(state.gamma.size()) +
                         ", got " + std::to_string(d));
  }
  if (!(state.eps > 0.0)) throw ConfigError("batchnorm: eps must be > 0");

  std::vector<double> mean(d, 0.0);
  std::vector<double> var(d, 0.0);
  if (mode == NormMode::batch) {
    if (m < 2) {
      throw BatchTooSmallError("batchnorm: batch-statistics mode needs at least 2 rows, got " +
                               std::to_string(m));
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
    for (double& v : mean) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = x(i, j) - mean[j];
        var[j] += c * c;
      }
    for (double& v : var) v /= static_cast<double>(m);
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  Tensor2 x_hat(m, d);
  Tensor2 out(m, d);
  for (std::size_t j = 0; j < d; ++j) {
    const double inv_std = 1.0 / std::sqrt(var[j] + state.eps);
    for (std::size_t i = 0; i < m; ++i) {
      const double h = (x(i, j) - mean[j]) * inv_std;
      x_hat(i, j) = h;
      out(i, j) = state.gamma[j] * h + state.beta[j];
    }
  }
  if (cache != nullptr) {
    cache->mode = mode;
    cache->batch = m;
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->x_hat = std::move(x_hat);
  }
  return out;
}

void absorb_batch_statistics(NormLayerState& state, const NormCache& cache) {
  if (cache.mode != NormMode::batch) return;
  const double mom = state.momentum;
  const double m = static_cast<double>(cache.batch);
  for (std::size_t j = 0; j < state.width(); ++j) {
    const double unbiased = cache.var[j] * m / (m - 1.0);
    state.running_mean[j] = (1.0 - mom) * state.running_mean[j] + mom * cache.mean[j];
    state.running_var[j] = (1.0 - mom) * state.running_var[j] + mom * unbiased;
  }
}

Tensor2 batchnorm_forward(const Tensor2& x, NormLayerState& state, NormMode mode) {
  NormCache cache;
  Tensor2 out = batchnorm_apply(x, state, mode, &cache);
  absorb_batch_statistics(state, cache);
  state.cache = std::move(cache);
  return out;
}

BatchNormGrads batchnorm_backward(const NormLayerState& state, const NormCache& cache,
                                  const Tensor2& upstream) {
  const std::size_t m = cache.batch;
  const std::size_t d = state.width();
  if (upstream.rows() != m || upstream.cols() != d || !cache.x_hat.same_shape(upstream)) {
    throw DimensionError("batchnorm_backward: upstream shape does not match cached forward");
  }

  BatchNormGrads g{Tensor2(m, d), std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      g.gamma[j] += upstream(i, j) * cache.x_hat(i, j);
      g.beta[j] += upstream(i, j);
    }

  const double md = static_cast<double>(m);
  for (std::size_t j = 0; j < d; ++j) {
    const double inv_std = 1.0 / std::sqrt(cache.var[j] + state.eps);
    if (cache.mode == NormMode::running) {
      for (std::size_t i = 0; i < m; ++i) g.input(i, j) = upstream(i, j) * state.gamma[j] * inv_std;
      continue;
    }
    // g_i = ∂f/∂x̂_i = γ·upstream_i. Written with centred g (Σ x̂ = 0), so a
    // constant upstream yields exactly zero; the mean is shifted by g_0 so it
    // is exact for constant input.
    const double g0 = state.gamma[j] * upstream(0, j);
    double shift_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) shift_sum += state.gamma[j] * upstream(i, j) - g0;
    const double g_mean = g0 + shift_sum / md;
    double sum_gx = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      sum_gx += (state.gamma[j] * upstream(i, j) - g_mean) * cache.x_hat(i, j);
    const double scale = inv_std / md;
    for (std::size_t i = 0; i < m; ++i) {
      const double centred = state.gamma[j] * upstream(i, j) - g_mean;
      g.input(i, j) = scale * (md * centred - cache.x_hat(i, j) * sum_gx);
    }
  }
  return g;
}

BatchNormGrads batchnorm_backward(const NormLayerState& state, const Tensor2& upstream) {
  if (!state.cache) throw StateError("batchnorm_backward: no cached forward pass");
  return batchnorm_backward(state, *state.cache, upstream);
}

double frobenius_distance_sq(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) throw DimensionError("frobenius_distance_sq: shape mismatch");
  auto av = a.values();
  auto bv = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  return s;
}

Tensor2 frobenius_distance_sq_grad(const Tensor2& a, const Tensor2& b) {
  return 2.0 * (a - b);
}

}  // namespace unidg
