#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qpi/field.hpp"
#include "qpi/rng.hpp"

namespace qpi {

enum class PartyId : u8 { Client = 0, Server = 1 };

inline PartyId other_party(PartyId p) {
  return p == PartyId::Client ? PartyId::Server : PartyId::Client;
}

inline const char* party_name(PartyId p) { return p == PartyId::Client ? "client" : "server"; }

/// One party's additive share of a field element.
struct Share {
  PartyId owner;
  FieldElement value;
};

/// Additive 2-of-2 split: the client share is uniform, the server share is
/// the remainder. Either share alone is independent of x.
inline std::pair<Share, Share> share(const FieldElement& x, const FieldParams& fp, Rng& rng) {
  if (x.modulus() != fp.p) throw std::logic_error("sharing: element from a different field");
  FieldElement r = rng.field_element(fp);
  return {Share{PartyId::Client, r}, Share{PartyId::Server, x - r}};
}

inline FieldElement reconstruct(const Share& a, const Share& b) {
  if (a.owner == b.owner)
    throw std::logic_error("sharing: protocol misuse, both shares held by one party");
  return a.value + b.value;
}

/// Local linear combination sum(coeff_i * share_i) + constant. Public
/// constants enter exactly once: the server adds them, the client does not.
inline Share share_linear(std::span<const Share> shares, std::span<const FieldElement> coeffs,
                          const FieldElement& constant) {
  if (shares.empty()) throw std::invalid_argument("sharing: empty linear combination");
  if (shares.size() != coeffs.size())
    throw std::invalid_argument("sharing: coefficient count mismatch");
  PartyId owner = shares.front().owner;
  FieldElement acc = FieldElement::from_raw(0, shares.front().value.modulus());
  for (std::size_t i = 0; i < shares.size(); ++i) {
    if (shares[i].owner != owner)
      throw std::logic_error("sharing: mixed-owner shares in a local combination");
    acc += coeffs[i] * shares[i].value;
  }
  if (owner == PartyId::Server) acc += constant;
  return Share{owner, acc};
}

}  // namespace qpi
