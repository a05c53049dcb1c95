#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "qpi/serialize.hpp"

namespace qpi {

using u128 = unsigned __int128;
using i128 = __int128;

namespace detail {

inline u64 mulmod_u64(u64 a, u64 b, u64 m) {
  return static_cast<u64>((static_cast<u128>(a) * b) % m);
}

inline u64 powmod_u64(u64 base, u64 exp, u64 m) {
  u64 r = 1 % m;
  base %= m;
  while (exp) {
    if (exp & 1) r = mulmod_u64(r, base, m);
    base = mulmod_u64(base, base, m);
    exp >>= 1;
  }
  return r;
}

}  // namespace detail

/// Deterministic Miller-Rabin. The fixed base set decides correctly for all
/// n < 3.3e24, far beyond the supported 2^48 modulus ceiling.
inline bool is_prime_u64(u64 n) {
  if (n < 2) return false;
  for (u64 q : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    if (n == q) return true;
    if (n % q == 0) return false;
  }
  u64 d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (u64 a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    u64 x = detail::powmod_u64(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool witness = true;
    for (int i = 1; i < s; ++i) {
      x = detail::mulmod_u64(x, x, n);
      if (x == n - 1) {
        witness = false;
        break;
      }
    }
    if (witness) return false;
  }
  return true;
}

/// Prime modulus and fixed-point precision shared by every protocol object.
/// Defaults: the 41-bit prime 2061584302081 with 11 fractional bits.
struct FieldParams {
  u64 p = 2061584302081ULL;
  u32 frac_bits = 11;

  // p must leave headroom for one product (scale 2f) plus accumulation
  // before truncation: p > 2^(2f+4).
  void validate() const {
    if (frac_bits < 1 || frac_bits > 20)
      throw std::invalid_argument("field: frac_bits out of range [1,20]");
    if (p >> 48)
      throw std::invalid_argument("field: modulus above 2^48 is unsupported");
    if (2 * frac_bits + 4 >= 48 || p <= (1ULL << (2 * frac_bits + 4)))
      throw std::invalid_argument("field: modulus too small for 2^(2f+4) headroom");
    if (!is_prime_u64(p))
      throw std::invalid_argument("field: modulus " + std::to_string(p) + " is not prime");
  }

  bool operator==(const FieldParams& o) const = default;
};

/// Element of Z_p. Carries its modulus so cross-field mixing is caught at the
/// operation site rather than corrupting a computation silently.
class FieldElement {
 public:
  FieldElement() = default;

  FieldElement(u64 v, const FieldParams& fp) : v_(v % fp.p), p_(fp.p) {}

  static FieldElement from_raw(u64 v, u64 p) {
    FieldElement e;
    e.v_ = v % p;
    e.p_ = p;
    return e;
  }

  u64 raw() const { return v_; }
  u64 modulus() const { return p_; }

  FieldElement& operator+=(const FieldElement& o) {
    check_same(o);
    v_ += o.v_;
    if (v_ >= p_) v_ -= p_;
    return *this;
  }

  FieldElement& operator-=(const FieldElement& o) {
    check_same(o);
    v_ = v_ >= o.v_ ? v_ - o.v_ : v_ + p_ - o.v_;
    return *this;
  }

  FieldElement& operator*=(const FieldElement& o) {
    check_same(o);
    v_ = detail::mulmod_u64(v_, o.v_, p_);
    return *this;
  }

  friend FieldElement operator+(FieldElement a, const FieldElement& b) { return a += b; }
  friend FieldElement operator-(FieldElement a, const FieldElement& b) { return a -= b; }
  friend FieldElement operator*(FieldElement a, const FieldElement& b) { return a *= b; }

  FieldElement operator-() const {
    FieldElement e = *this;
    e.v_ = v_ == 0 ? 0 : p_ - v_;
    return e;
  }

  /// Multiply by a public integer scalar.
  FieldElement scaled(u64 k) const {
    FieldElement e = *this;
    e.v_ = detail::mulmod_u64(v_, k % p_, p_);
    return e;
  }

  bool operator==(const FieldElement& o) const { return v_ == o.v_ && p_ == o.p_; }

  /// Centered representative in (-p/2, p/2].
  i64 to_signed() const {
    return v_ <= (p_ - 1) / 2 ? static_cast<i64>(v_) : static_cast<i64>(v_) - static_cast<i64>(p_);
  }

 private:
  void check_same(const FieldElement& o) const {
    if (p_ == 0 || p_ != o.p_) throw std::logic_error("field: modulus mismatch between operands");
  }

  u64 v_ = 0;
  u64 p_ = 0;
};

inline FieldElement from_signed(i64 m, const FieldParams& fp) {
  i64 r = m % static_cast<i64>(fp.p);
  if (r < 0) r += static_cast<i64>(fp.p);
  return FieldElement::from_raw(static_cast<u64>(r), fp.p);
}

inline std::array<u8, 8> field_to_bytes(const FieldElement& e) {
  std::array<u8, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<u8>(e.raw() >> (8 * i));
  return b;
}

inline FieldElement field_from_bytes(const u8* b, const FieldParams& fp) {
  u64 v = get_u64_le(b);
  if (v >= fp.p) throw std::runtime_error("field: serialized value exceeds modulus");
  return FieldElement::from_raw(v, fp.p);
}

/// Maps reals to scale-2^f field elements and back.
///
/// encode(x) = round(x * 2^f) mod p, ties away from zero. Negative reals land
/// in the upper half of the field. The safe range keeps one product plus a
/// batched accumulation below p/2, so overflow cannot wrap silently.
class FixedPointCodec {
 public:
  explicit FixedPointCodec(const FieldParams& fp, double safe_abs = double(1ULL << 20))
      : fp_(fp), safe_abs_(safe_abs) {
    fp.validate();
  }

  const FieldParams& params() const { return fp_; }
  double safe_abs() const { return safe_abs_; }
  u64 scale_unit() const { return 1ULL << fp_.frac_bits; }

  FieldElement encode(double x) const { return encode_scale(x, 1); }

  /// Encode at scale 2^(f*steps). Biases and constant terms that join a
  /// product before truncation are encoded at steps = 2.
  FieldElement encode_scale(double x, int steps) const {
    if (!std::isfinite(x) || std::abs(x) >= safe_abs_)
      throw std::range_error("fixed: value " + std::to_string(x) + " outside safe range");
    long double scaled = static_cast<long double>(x);
    for (int i = 0; i < steps; ++i) scaled *= static_cast<long double>(scale_unit());
    i64 m = static_cast<i64>(llroundl(scaled));
    return from_signed(m, fp_);
  }

  double decode(const FieldElement& e) const { return decode_scale(e, 1); }

  double decode_scale(const FieldElement& e, int steps) const {
    check(e);
    long double x = static_cast<long double>(e.to_signed());
    for (int i = 0; i < steps; ++i) x /= static_cast<long double>(scale_unit());
    return static_cast<double>(x);
  }

  /// Plaintext rescale of a scale-2f element back to scale f: signed floor
  /// division by 2^f. The share-local counterpart lives with the triples.
  FieldElement truncate(const FieldElement& e) const {
    check(e);
    i64 m = e.to_signed();
    i64 q = m >> fp_.frac_bits;  // arithmetic shift: floor division
    return from_signed(q, fp_);
  }

 private:
  void check(const FieldElement& e) const {
    if (e.modulus() != fp_.p) throw std::logic_error("fixed: element from a different field");
  }

  FieldParams fp_;
  double safe_abs_;
};

}  // namespace qpi
