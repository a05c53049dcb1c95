#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "qpi/channel.hpp"
#include "qpi/sharing.hpp"
#include "qpi/triples.hpp"

namespace qpi {

// Online multiplication on additive shares. Each side masks its inputs with
// triple components, the masked differences are opened (the only traffic),
// and the product share is assembled locally. Public constants (e^2, e*d)
// enter on the server side only.

namespace detail {

inline void check_batch(PartyId role, const TripleBatch& tb, TripleKind kind) {
  if (tb.owner() != role) throw std::logic_error("beaver: triple batch owned by the other party");
  if (tb.kind() != kind) throw std::logic_error("beaver: wrong triple kind for this operation");
}

inline std::vector<FieldElement> exchange_openings(Channel& ch, std::span<const FieldElement> mine,
                                                   const FieldParams& fp) {
  send_frame(ch, MsgType::Open, mine);
  Frame f = expect_frame(ch, MsgType::Open);
  if (f.payload.size() != mine.size())
    throw ProtocolError("beaver: opening count mismatch with peer");
  auto theirs = payload_elements(f, fp);
  std::vector<FieldElement> opened;
  opened.reserve(mine.size());
  for (std::size_t i = 0; i < mine.size(); ++i) opened.push_back(mine[i] + theirs[i]);
  return opened;
}

}  // namespace detail

/// Batched x_i^2 on shares: one opening (e = x - a) per element, a single
/// Open frame each way for the whole batch.
inline std::vector<FieldElement> secure_square_batch(PartyId role,
                                                     std::span<const FieldElement> xs,
                                                     TripleBatch& triples, Channel& ch,
                                                     const FieldParams& fp) {
  detail::check_batch(role, triples, TripleKind::Square);
  std::vector<SquareTripleShare> ts;
  std::vector<FieldElement> e_shares;
  ts.reserve(xs.size());
  e_shares.reserve(xs.size());
  for (const auto& x : xs) {
    ts.push_back(triples.next_square());
    e_shares.push_back(x - ts.back().a);
  }
  auto e = detail::exchange_openings(ch, e_shares, fp);
  std::vector<FieldElement> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    // x^2 = e^2 + 2 e a + a^2 with e public
    FieldElement sh = (e[i] + e[i]) * ts[i].a + ts[i].a2;
    if (role == PartyId::Server) sh += e[i] * e[i];
    out.push_back(sh);
  }
  return out;
}

/// Batched x_i * y_i on shares: two openings (e = x - a, d = y - b) per
/// element, carried in one Open frame each way as [e..., d...].
inline std::vector<FieldElement> secure_mul_batch(PartyId role, std::span<const FieldElement> xs,
                                                  std::span<const FieldElement> ys,
                                                  TripleBatch& triples, Channel& ch,
                                                  const FieldParams& fp) {
  if (xs.size() != ys.size()) throw std::invalid_argument("beaver: operand length mismatch");
  detail::check_batch(role, triples, TripleKind::Mul);
  std::vector<MulTripleShare> ts;
  std::vector<FieldElement> open_shares;
  ts.reserve(xs.size());
  open_shares.reserve(2 * xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ts.push_back(triples.next_mul());
    open_shares.push_back(xs[i] - ts[i].a);
  }
  for (std::size_t i = 0; i < xs.size(); ++i) open_shares.push_back(ys[i] - ts[i].b);
  auto opened = detail::exchange_openings(ch, open_shares, fp);
  std::vector<FieldElement> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const FieldElement &e = opened[i], &d = opened[xs.size() + i];
    // x y = e d + d a + e b + a b with e, d public
    FieldElement sh = d * ts[i].a + e * ts[i].b + ts[i].ab;
    if (role == PartyId::Server) sh += e * d;
    out.push_back(sh);
  }
  return out;
}

inline Share secure_square(const Share& x, TripleBatch& triples, Channel& ch,
                           const FieldParams& fp) {
  auto r = secure_square_batch(x.owner, std::span<const FieldElement>(&x.value, 1), triples, ch, fp);
  return Share{x.owner, r[0]};
}

inline Share secure_mul(const Share& x, const Share& y, TripleBatch& triples, Channel& ch,
                        const FieldParams& fp) {
  if (x.owner != y.owner) throw std::logic_error("beaver: operands owned by different parties");
  auto r = secure_mul_batch(x.owner, std::span<const FieldElement>(&x.value, 1),
                            std::span<const FieldElement>(&y.value, 1), triples, ch, fp);
  return Share{x.owner, r[0]};
}

/// Share-local rescale from scale 2f to f, no interaction. Client floors its
/// share; the server floors the complement. The reconstruction lands within
/// one LSB of the plaintext truncation unless the uniform client share falls
/// in a wrap window of width |value|, probability (|m|+1)/p per element.
inline FieldElement truncate_share(PartyId role, const FieldElement& v, u32 frac_bits) {
  u64 p = v.modulus();
  if (role == PartyId::Client) return FieldElement::from_raw(v.raw() >> frac_bits, p);
  return FieldElement::from_raw(p - ((p - v.raw()) >> frac_bits), p);
}

inline void truncate_shares_inplace(PartyId role, std::vector<FieldElement>& vs, u32 frac_bits) {
  for (auto& v : vs) v = truncate_share(role, v, frac_bits);
}

}  // namespace qpi
