#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpi/field.hpp"

namespace qpi {

/// Seeded deterministic randomness. mt19937_64 output is fixed by the
/// standard, and every derived draw below is built from raw engine words, so
/// equal seeds replay bit-identically across builds.
class Rng {
 public:
  explicit Rng(u64 seed) : eng_(seed) {}

  u64 next_u64() { return eng_(); }

  /// Unbiased draw from [0, n) by rejection.
  u64 uniform_below(u64 n) {
    if (n == 0) throw std::invalid_argument("rng: uniform_below(0)");
    u64 limit = ~0ULL - (~0ULL % n);  // multiple of n
    u64 x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  FieldElement field_element(const FieldParams& fp) {
    return FieldElement::from_raw(uniform_below(fp.p), fp.p);
  }

  std::vector<FieldElement> field_vector(const FieldParams& fp, std::size_t n) {
    std::vector<FieldElement> v;
    v.reserve(n);
    for (std::size_t i = 0; i < n; ++i) v.push_back(field_element(fp));
    return v;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  /// Standard normal via Box-Muller on own uniforms.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = unit();
    while (u1 <= 0.0) u1 = unit();
    double u2 = unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform_below(n)); }

  /// Fisher-Yates with own draws; std::shuffle is implementation-defined.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Accepts decimal or 0x-prefixed hex seeds.
inline u64 parse_seed(const std::string& s) {
  if (s.empty()) throw std::invalid_argument("rng: empty seed string");
  int base = 10;
  std::size_t off = 0;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    off = 2;
  }
  std::size_t used = 0;
  u64 v = std::stoull(s.substr(off), &used, base);
  if (used != s.size() - off) throw std::invalid_argument("rng: bad seed '" + s + "'");
  return v;
}

}  // namespace qpi
