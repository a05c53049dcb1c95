#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace qpi {

inline constexpr unsigned kHermiteDegreeCap = 8;

/// Probabilist Hermite polynomial H_n via H_{n+1} = x H_n - n H_{n-1}.
inline double hermite_H(unsigned n, double x) {
  if (n > kHermiteDegreeCap) throw std::invalid_argument("hermite: degree above cap 8");
  double hm = 1.0, hc = x;
  if (n == 0) return hm;
  for (unsigned k = 1; k < n; ++k) {
    double hn = x * hc - static_cast<double>(k) * hm;
    hm = hc;
    hc = hn;
  }
  return hc;
}

namespace detail {

inline double factorial(unsigned n) {
  double f = 1.0;
  for (unsigned k = 2; k <= n; ++k) f *= k;
  return f;
}

}  // namespace detail

/// Orthonormal basis under the standard Gaussian: h_n = H_n / sqrt(n!).
inline double hermite_h(unsigned n, double x) {
  return hermite_H(n, x) / std::sqrt(detail::factorial(n));
}

/// d/dx h_n = sqrt(n) h_{n-1}.
inline double hermite_h_derivative(unsigned n, double x) {
  if (n == 0) return 0.0;
  return std::sqrt(static_cast<double>(n)) * hermite_h(n - 1, x);
}

/// Coefficients of ReLU in the orthonormal Hermite basis:
///   n = 0: 1/sqrt(2 pi)
///   n = 1: 1/2
///   odd n >= 3: 0
///   even n >= 2: (-1)^((n-2)/2) (n-3)!! / sqrt(2 pi n!), with (-1)!! = 1.
/// The even-n sign alternates; magnitudes decay like n^(-5/4). Computed in
/// log space so the series is usable far beyond the polynomial degree cap.
inline double relu_hermite_coeff(unsigned n) {
  if (n == 0) return 0.3989422804014326779399460599344;  // 1/sqrt(2 pi)
  if (n == 1) return 0.5;
  if (n % 2 == 1) return 0.0;
  double log_df = 0.0;  // log (n-3)!!, zero for n = 2 and n = 4
  if (n >= 5)
    for (unsigned k = n - 3; k > 1; k -= 2) log_df += std::log(static_cast<double>(k));
  double log_mag = log_df - 0.5 * (std::log(6.283185307179586476925286766559) + std::lgamma(static_cast<double>(n) + 1.0));
  double sign = ((n - 2) / 2) % 2 == 0 ? 1.0 : -1.0;
  return sign * std::exp(log_mag);
}

inline std::vector<double> relu_hermite_coeffs(unsigned degree) {
  std::vector<double> c;
  c.reserve(degree + 1);
  for (unsigned n = 0; n <= degree; ++n) c.push_back(relu_hermite_coeff(n));
  return c;
}

/// Finite expansion g(x) = sum_i c_i h_i(x) for a caller-supplied coefficient
/// vector; the ReLU closed form above is the only one shipped.
struct HermiteSeries {
  std::vector<double> coeffs;

  static HermiteSeries relu(unsigned degree) { return HermiteSeries{relu_hermite_coeffs(degree)}; }

  unsigned degree() const {
    if (coeffs.empty()) throw std::logic_error("hermite: empty series");
    return static_cast<unsigned>(coeffs.size() - 1);
  }

  double eval(double x) const {
    double s = 0.0;
    for (unsigned n = 0; n < coeffs.size(); ++n) s += coeffs[n] * hermite_h(n, x);
    return s;
  }

  double derivative(double x) const {
    double s = 0.0;
    for (unsigned n = 1; n < coeffs.size(); ++n) s += coeffs[n] * hermite_h_derivative(n, x);
    return s;
  }
};

}  // namespace qpi
