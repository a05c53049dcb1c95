#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "qpi/hermite.hpp"

namespace qpi {

/// Basis-wise normalized Hermite activation. Per channel c the layer computes
///   out = gamma_c * sum_i fhat_i * (h_i(x) - mu_{i,c}) / sqrt(var_{i,c} + eps) + beta_c
/// where the statistics are per (basis, channel), aggregated over batch and
/// spatial axes. The constant basis h_0 has zero batch variance; its normalized
/// contribution is defined as exactly 0 in training (beta absorbs the shift)
/// rather than leaning on eps. Inference uses frozen running statistics, where
/// the general formula keeps the h_0 term.
struct HerPNParams {
  unsigned channels = 0;
  unsigned degree = 2;  // 2 default; 3 and 4 supported
  std::vector<double> coeffs;             // fhat_0..fhat_degree
  std::vector<double> gamma, beta;        // [C]
  std::vector<double> run_mean, run_var;  // [(degree+1) * C], basis-major
  double eps = 1e-5;
  double momentum = 0.1;
  bool training = true;
  bool stats_populated = false;

  double& mean_at(unsigned basis, unsigned c) { return run_mean[basis * channels + c]; }
  double& var_at(unsigned basis, unsigned c) { return run_var[basis * channels + c]; }
  double mean_at(unsigned basis, unsigned c) const { return run_mean[basis * channels + c]; }
  double var_at(unsigned basis, unsigned c) const { return run_var[basis * channels + c]; }
};

inline HerPNParams make_herpn(unsigned channels, unsigned degree = 2) {
  if (channels == 0) throw std::invalid_argument("herpn: zero channels");
  if (degree < 2 || degree > 4) throw std::invalid_argument("herpn: degree must be 2, 3, or 4");
  HerPNParams p;
  p.channels = channels;
  p.degree = degree;
  p.coeffs = relu_hermite_coeffs(degree);
  p.gamma.assign(channels, 1.0);
  p.beta.assign(channels, 0.0);
  p.run_mean.assign((degree + 1) * channels, 0.0);
  p.run_var.assign((degree + 1) * channels, 1.0);
  return p;
}

/// Forward state kept for the backward pass. Layout of per-basis arrays matches
/// the input: index (b * C + c) * inner + j.
struct HerPNCache {
  size_t batch = 0, inner = 0;
  std::vector<double> x;
  std::vector<std::vector<double>> zhat;     // [basis][elements], normalized
  std::vector<std::vector<double>> inv_std;  // [basis][C]
  std::vector<double> presum;                // sum_i fhat_i zhat_i, before gamma/beta
};

namespace detail {

inline void check_herpn_shape(const HerPNParams& p, size_t n, size_t batch, size_t inner) {
  if (p.channels == 0 || p.coeffs.size() != p.degree + 1)
    throw std::logic_error("herpn: params not initialized");
  if (batch * p.channels * inner != n) throw std::invalid_argument("herpn: shape mismatch");
}

}  // namespace detail

inline std::vector<double> herpn_forward_train(const std::vector<double>& x, size_t batch,
                                               size_t inner, HerPNParams& p, HerPNCache* cache) {
  detail::check_herpn_shape(p, x.size(), batch, inner);
  if (!p.training) throw std::logic_error("herpn: train forward on frozen layer");
  if (batch < 2) throw std::invalid_argument("herpn: batch of one has undefined variance");
  const size_t C = p.channels;
  const size_t group = batch * inner;  // elements per channel
  std::vector<double> out(x.size(), 0.0);
  if (cache) {
    cache->batch = batch;
    cache->inner = inner;
    cache->x = x;
    cache->zhat.assign(p.degree + 1, {});
    cache->inv_std.assign(p.degree + 1, std::vector<double>(C, 0.0));
    cache->presum.assign(x.size(), 0.0);
  }
  std::vector<double> z(x.size());
  std::vector<double> mean(C), var(C);
  for (unsigned i = 0; i <= p.degree; ++i) {
    for (size_t k = 0; k < x.size(); ++k) z[k] = hermite_h(i, x[k]);
    for (size_t c = 0; c < C; ++c) mean[c] = var[c] = 0.0;
    for (size_t b = 0; b < batch; ++b)
      for (size_t c = 0; c < C; ++c)
        for (size_t j = 0; j < inner; ++j) mean[c] += z[(b * C + c) * inner + j];
    for (size_t c = 0; c < C; ++c) mean[c] /= static_cast<double>(group);
    for (size_t b = 0; b < batch; ++b)
      for (size_t c = 0; c < C; ++c)
        for (size_t j = 0; j < inner; ++j) {
          double d = z[(b * C + c) * inner + j] - mean[c];
          var[c] += d * d;
        }
    for (size_t c = 0; c < C; ++c) var[c] /= static_cast<double>(group);
    for (size_t c = 0; c < C; ++c) {
      p.mean_at(i, c) = (1.0 - p.momentum) * p.mean_at(i, c) + p.momentum * mean[c];
      p.var_at(i, c) = (1.0 - p.momentum) * p.var_at(i, c) + p.momentum * var[c];
    }
    if (i == 0) {
      // Constant basis: zero variance by construction, contribution defined 0.
      if (cache) cache->zhat[0].assign(x.size(), 0.0);
      continue;
    }
    std::vector<double>* zh = nullptr;
    if (cache) {
      cache->zhat[i].assign(x.size(), 0.0);
      zh = &cache->zhat[i];
    }
    for (size_t b = 0; b < batch; ++b)
      for (size_t c = 0; c < C; ++c) {
        double inv = 1.0 / std::sqrt(var[c] + p.eps);
        if (cache) cache->inv_std[i][c] = inv;
        for (size_t j = 0; j < inner; ++j) {
          size_t k = (b * C + c) * inner + j;
          double n = (z[k] - mean[c]) * inv;
          if (zh) (*zh)[k] = n;
          out[k] += p.coeffs[i] * n;
        }
      }
  }
  p.stats_populated = true;
  for (size_t b = 0; b < batch; ++b)
    for (size_t c = 0; c < C; ++c)
      for (size_t j = 0; j < inner; ++j) {
        size_t k = (b * C + c) * inner + j;
        if (cache) cache->presum[k] = out[k];
        out[k] = p.gamma[c] * out[k] + p.beta[c];
      }
  return out;
}

inline std::vector<double> herpn_forward_infer(const std::vector<double>& x, size_t batch,
                                               size_t inner, const HerPNParams& p) {
  detail::check_herpn_shape(p, x.size(), batch, inner);
  if (p.training) throw std::logic_error("herpn: infer forward on training-mode layer");
  if (!p.stats_populated) throw std::logic_error("herpn: running statistics not populated");
  const size_t C = p.channels;
  std::vector<double> out(x.size());
  for (size_t b = 0; b < batch; ++b)
    for (size_t c = 0; c < C; ++c)
      for (size_t j = 0; j < inner; ++j) {
        size_t k = (b * C + c) * inner + j;
        double acc = 0.0;
        for (unsigned i = 0; i <= p.degree; ++i) {
          double s = std::sqrt(p.var_at(i, c) + p.eps);
          acc += p.coeffs[i] * (hermite_h(i, x[k]) - p.mean_at(i, c)) / s;
        }
        out[k] = p.gamma[c] * acc + p.beta[c];
      }
  return out;
}

struct HerPNGrads {
  std::vector<double> x;
  std::vector<double> gamma, beta;
};

/// Exact gradients of the batch-statistics forward: each basis runs the full
/// batch-norm backward (statistics depend on x), then chains through
/// dh_i/dx = sqrt(i) h_{i-1}.
inline HerPNGrads herpn_backward(const std::vector<double>& grad_out, const HerPNCache& cache,
                                 const HerPNParams& p) {
  if (cache.x.empty() || cache.zhat.size() != p.degree + 1)
    throw std::logic_error("herpn: backward without cached forward");
  if (grad_out.size() != cache.x.size()) throw std::invalid_argument("herpn: gradient shape mismatch");
  const size_t C = p.channels;
  const size_t batch = cache.batch, inner = cache.inner;
  const double group = static_cast<double>(batch * inner);
  HerPNGrads g;
  g.x.assign(cache.x.size(), 0.0);
  g.gamma.assign(C, 0.0);
  g.beta.assign(C, 0.0);
  for (size_t b = 0; b < batch; ++b)
    for (size_t c = 0; c < C; ++c)
      for (size_t j = 0; j < inner; ++j) {
        size_t k = (b * C + c) * inner + j;
        g.beta[c] += grad_out[k];
        g.gamma[c] += grad_out[k] * cache.presum[k];
      }
  std::vector<double> sum_d(C), sum_dz(C);
  for (unsigned i = 1; i <= p.degree; ++i) {
    const std::vector<double>& zh = cache.zhat[i];
    for (size_t c = 0; c < C; ++c) sum_d[c] = sum_dz[c] = 0.0;
    // d zhat_i = gamma_c fhat_i * upstream
    for (size_t b = 0; b < batch; ++b)
      for (size_t c = 0; c < C; ++c)
        for (size_t j = 0; j < inner; ++j) {
          size_t k = (b * C + c) * inner + j;
          double dz = p.gamma[c] * p.coeffs[i] * grad_out[k];
          sum_d[c] += dz;
          sum_dz[c] += dz * zh[k];
        }
    for (size_t b = 0; b < batch; ++b)
      for (size_t c = 0; c < C; ++c)
        for (size_t j = 0; j < inner; ++j) {
          size_t k = (b * C + c) * inner + j;
          double dz = p.gamma[c] * p.coeffs[i] * grad_out[k];
          double dzi = cache.inv_std[i][c] * (dz - sum_d[c] / group - zh[k] * sum_dz[c] / group);
          g.x[k] += dzi * hermite_h_derivative(i, cache.x[k]);
        }
  }
  return g;
}

struct FoldedQuadratic {
  std::vector<double> c2, c1, c0;  // per channel
};

/// Degree-2 inference forward collapsed to a per-channel quadratic:
///   c2 = gamma fhat_2 / (sqrt(2) s_2), c1 = gamma fhat_1 / s_1,
///   c0 = beta + gamma [fhat_0 (1 - mu_0)/s_0 - fhat_1 mu_1/s_1 - fhat_2 (1/sqrt(2) + mu_2)/s_2]
/// with s_i = sqrt(var_i + eps).
inline FoldedQuadratic fold_to_quadratic(const HerPNParams& p) {
  if (p.degree != 2) throw std::invalid_argument("herpn: fold requires degree 2");
  if (p.training) throw std::logic_error("herpn: fold requires a frozen layer");
  if (!p.stats_populated) throw std::logic_error("herpn: running statistics not populated");
  const double sqrt2 = 1.4142135623730950488016887242097;
  FoldedQuadratic f;
  f.c2.resize(p.channels);
  f.c1.resize(p.channels);
  f.c0.resize(p.channels);
  for (unsigned c = 0; c < p.channels; ++c) {
    double s0 = std::sqrt(p.var_at(0, c) + p.eps);
    double s1 = std::sqrt(p.var_at(1, c) + p.eps);
    double s2 = std::sqrt(p.var_at(2, c) + p.eps);
    f.c2[c] = p.gamma[c] * p.coeffs[2] / (sqrt2 * s2);
    f.c1[c] = p.gamma[c] * p.coeffs[1] / s1;
    f.c0[c] = p.beta[c] + p.gamma[c] * (p.coeffs[0] * (1.0 - p.mean_at(0, c)) / s0 -
                                        p.coeffs[1] * p.mean_at(1, c) / s1 -
                                        p.coeffs[2] * (1.0 / sqrt2 + p.mean_at(2, c)) / s2);
  }
  return f;
}

/// Plain batch normalization, the baseline the ablation compares against.
/// Same statistic conventions as HerPN: biased variance, EMA momentum 0.1.
struct BatchNormParams {
  unsigned channels = 0;
  std::vector<double> gamma, beta, run_mean, run_var;  // [C]
  double eps = 1e-5;
  double momentum = 0.1;
  bool training = true;
  bool stats_populated = false;
};

inline BatchNormParams make_batchnorm(unsigned channels) {
  if (channels == 0) throw std::invalid_argument("batchnorm: zero channels");
  BatchNormParams p;
  p.channels = channels;
  p.gamma.assign(channels, 1.0);
  p.beta.assign(channels, 0.0);
  p.run_mean.assign(channels, 0.0);
  p.run_var.assign(channels, 1.0);
  return p;
}

struct BatchNormCache {
  size_t batch = 0, inner = 0;
  std::vector<double> xhat;
  std::vector<double> inv_std;  // [C]
};

inline std::vector<double> batchnorm_forward_train(const std::vector<double>& x, size_t batch,
                                                   size_t inner, BatchNormParams& p,
                                                   BatchNormCache* cache) {
  if (batch * p.channels * inner != x.size()) throw std::invalid_argument("batchnorm: shape mismatch");
  if (!p.training) throw std::logic_error("batchnorm: train forward on frozen layer");
  if (batch < 2) throw std::invalid_argument("batchnorm: batch of one has undefined variance");
  const size_t C = p.channels;
  const double group = static_cast<double>(batch * inner);
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  for (size_t b = 0; b < batch; ++b)
    for (size_t c = 0; c < C; ++c)
      for (size_t j = 0; j < inner; ++j) mean[c] += x[(b * C + c) * inner + j];
  for (size_t c = 0; c < C; ++c) mean[c] /= group;
  for (size_t b = 0; b < batch; ++b)
    for (size_t c = 0; c < C; ++c)
      for (size_t j = 0; j < inner; ++j) {
        double d = x[(b * C + c) * inner + j] - mean[c];
        var[c] += d * d;
      }
  for (size_t c = 0; c < C; ++c) var[c] /= group;
  for (size_t c = 0; c < C; ++c) {
    p.run_mean[c] = (1.0 - p.momentum) * p.run_mean[c] + p.momentum * mean[c];
    p.run_var[c] = (1.0 - p.momentum) * p.run_var[c] + p.momentum * var[c];
  }
  p.stats_populated = true;
  std::vector<double> out(x.size());
  if (cache) {
    cache->batch = batch;
    cache->inner = inner;
    cache->xhat.assign(x.size(), 0.0);
    cache->inv_std.assign(C, 0.0);
  }
  for (size_t b = 0; b < batch; ++b)
    for (size_t c = 0; c < C; ++c) {
      double inv = 1.0 / std::sqrt(var[c] + p.eps);
      if (cache) cache->inv_std[c] = inv;
      for (size_t j = 0; j < inner; ++j) {
        size_t k = (b * C + c) * inner + j;
        double xh = (x[k] - mean[c]) * inv;
        if (cache) cache->xhat[k] = xh;
        out[k] = p.gamma[c] * xh + p.beta[c];
      }
    }
  return out;
}

inline std::vector<double> batchnorm_forward_infer(const std::vector<double>& x, size_t batch,
                                                   size_t inner, const BatchNormParams& p) {
  if (batch * p.channels * inner != x.size()) throw std::invalid_argument("batchnorm: shape mismatch");
  if (p.training) throw std::logic_error("batchnorm: infer forward on training-mode layer");
  if (!p.stats_populated) throw std::logic_error("batchnorm: running statistics not populated");
  std::vector<double> out(x.size());
  for (size_t b = 0; b < batch; ++b)
    for (size_t c = 0; c < p.channels; ++c) {
      double inv = 1.0 / std::sqrt(p.run_var[c] + p.eps);
      for (size_t j = 0; j < inner; ++j) {
        size_t k = (b * p.channels + c) * inner + j;
        out[k] = p.gamma[c] * (x[k] - p.run_mean[c]) * inv + p.beta[c];
      }
    }
  return out;
}

struct BatchNormGrads {
  std::vector<double> x;
  std::vector<double> gamma, beta;
};

inline BatchNormGrads batchnorm_backward(const std::vector<double>& grad_out,
                                         const BatchNormCache& cache, const BatchNormParams& p) {
  if (cache.xhat.empty()) throw std::logic_error("batchnorm: backward without cached forward");
  if (grad_out.size() != cache.xhat.size())
    throw std::invalid_argument("batchnorm: gradient shape mismatch");
  const size_t C = p.channels;
  const size_t batch = cache.batch, inner = cache.inner;
  const double group = static_cast<double>(batch * inner);
  BatchNormGrads g;
  g.x.assign(grad_out.size(), 0.0);
  g.gamma.assign(C, 0.0);
  g.beta.assign(C, 0.0);
  std::vector<double> sum_d(C, 0.0), sum_dx(C, 0.0);
  for (size_t b = 0; b < batch; ++b)
    for (size_t c = 0; c < C; ++c)
      for (size_t j = 0; j < inner; ++j) {
        size_t k = (b * C + c) * inner + j;
        g.beta[c] += grad_out[k];
        g.gamma[c] += grad_out[k] * cache.xhat[k];
        sum_d[c] += grad_out[k];
        sum_dx[c] += grad_out[k] * cache.xhat[k];
      }
  for (size_t b = 0; b < batch; ++b)
    for (size_t c = 0; c < C; ++c)
      for (size_t j = 0; j < inner; ++j) {
        size_t k = (b * C + c) * inner + j;
        g.x[k] = p.gamma[c] * cache.inv_std[c] *
                 (grad_out[k] - sum_d[c] / group - cache.xhat[k] * sum_dx[c] / group);
      }
  return g;
}

}  // namespace qpi
