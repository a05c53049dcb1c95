#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace qpi {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Hermite rule for the physicists' weight exp(-x^2) on (-inf, inf).
/// Nodes are roots of the degree-n Hermite polynomial, located by Newton
/// iteration on the orthonormal recurrence; exact for polynomials of degree
/// <= 2n-1 under the weight.
inline QuadratureRule gauss_hermite(unsigned n) {
  if (n == 0) throw std::invalid_argument("quadrature: empty rule");
  constexpr double kEps = 3e-14;
  constexpr int kMaxIt = 64;
  const double pi_m4 = 0.7511255444649424828587030047762;  // pi^(-1/4)
  QuadratureRule r;
  r.nodes.assign(n, 0.0);
  r.weights.assign(n, 0.0);
  unsigned m = (n + 1) / 2;
  double z = 0.0;
  for (unsigned i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * r.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * r.nodes[1];
    } else {
      z = 2.0 * z - r.nodes[i - 2];
    }
    double pp = 0.0;
    int it = 0;
    for (; it < kMaxIt; ++it) {
      double p1 = pi_m4, p2 = 0.0;
      for (unsigned j = 1; j <= n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= kEps) break;
    }
    if (it == kMaxIt) throw std::runtime_error("quadrature: Hermite node failed to converge");
    r.nodes[i] = z;
    r.nodes[n - 1 - i] = -z;
    r.weights[i] = 2.0 / (pp * pp);
    r.weights[n - 1 - i] = r.weights[i];
  }
  return r;
}

/// Gauss-Legendre rule on [-1, 1]; exact for polynomials of degree <= 2n-1.
inline QuadratureRule gauss_legendre(unsigned n) {
  if (n == 0) throw std::invalid_argument("quadrature: empty rule");
  constexpr double kEps = 1e-15;
  constexpr int kMaxIt = 64;
  const double pi = 3.1415926535897932384626433832795;
  QuadratureRule r;
  r.nodes.assign(n, 0.0);
  r.weights.assign(n, 0.0);
  unsigned m = (n + 1) / 2;
  for (unsigned i = 0; i < m; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    int it = 0;
    for (; it < kMaxIt; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (unsigned j = 1; j <= n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= kEps) break;
    }
    if (it == kMaxIt) throw std::runtime_error("quadrature: Legendre node failed to converge");
    r.nodes[i] = -z;
    r.nodes[n - 1 - i] = z;
    r.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    r.weights[n - 1 - i] = r.weights[i];
  }
  return r;
}

/// E[f(X)] for X ~ N(0,1) using a Gauss-Hermite rule: substitute x = sqrt(2) t
/// so the integral becomes (1/sqrt(pi)) sum w_i f(sqrt(2) t_i). Spectrally
/// accurate only for smooth f; an integrand with a kink converges like O(1/n),
/// so this serves as a cross-check, not the primary oracle.
inline double gaussian_expect_gh(const QuadratureRule& gh, const std::function<double(double)>& f) {
  const double inv_sqrt_pi = 0.56418958354775628694807945156077;
  double s = 0.0;
  for (size_t i = 0; i < gh.nodes.size(); ++i) s += gh.weights[i] * f(std::sqrt(2.0) * gh.nodes[i]);
  return inv_sqrt_pi * s;
}

/// Half-line integral int_0^inf f(x) phi(x) dx with phi the standard normal
/// density, by composite Gauss-Legendre over [0, cut]. Any f that is smooth on
/// [0, inf) integrates to machine precision: each panel is analytic, and the
/// discarded tail is below phi(cut) ~ 2e-32 for cut = 12 against polynomially
/// bounded f. This is the primary oracle for expectations of piecewise-smooth
/// integrands: split at the kink and call once per side.
inline double gaussian_expect_half(const std::function<double(double)>& f, unsigned panels = 8,
                                   unsigned points = 64, double cut = 12.0) {
  if (panels == 0 || cut <= 0.0) throw std::invalid_argument("quadrature: bad panel layout");
  const double inv_sqrt_2pi = 0.39894228040143267793994605993438;
  QuadratureRule gl = gauss_legendre(points);
  double total = 0.0;
  double width = cut / panels;
  for (unsigned k = 0; k < panels; ++k) {
    double a = k * width, b = a + width;
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (size_t i = 0; i < gl.nodes.size(); ++i) {
      double x = mid + half * gl.nodes[i];
      s += gl.weights[i] * f(x) * std::exp(-0.5 * x * x);
    }
    total += half * s * inv_sqrt_2pi;
  }
  return total;
}

}  // namespace qpi
