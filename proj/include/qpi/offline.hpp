#pragma once

#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpi/beaver.hpp"
#include "qpi/fixed_forward.hpp"
#include "qpi/model_io.hpp"
#include "qpi/sharing.hpp"
#include "qpi/triples.hpp"

namespace qpi {

// Share-domain layer algebra: the linear layers act identically on a secret
// share and on the plaintext, so one set of mod-p routines serves the server's
// online step, the dealer's simulation of the client share, and the audit.
// No signed/overflow reading here: shares are uniform field elements.
namespace shareops {

inline std::vector<FieldElement> linear(const QLinear& l, std::span<const FieldElement> x) {
  if (x.size() != l.in) throw std::invalid_argument("shareops: linear input size mismatch");
  std::vector<FieldElement> out;
  out.reserve(l.out);
  for (size_t o = 0; o < l.out; ++o) {
    FieldElement acc = FieldElement::from_raw(0, l.W[0].modulus());
    for (size_t i = 0; i < l.in; ++i) acc = acc + l.W[o * l.in + i] * x[i];
    out.push_back(acc);
  }
  return out;
}

inline std::vector<FieldElement> conv(const QConv& c, const std::vector<size_t>& in_shape,
                                      std::span<const FieldElement> x) {
  size_t H = in_shape[1], W = in_shape[2];
  size_t Ho = (H + 2 * c.pad - c.k) / c.stride + 1;
  size_t Wo = (W + 2 * c.pad - c.k) / c.stride + 1;
  std::vector<FieldElement> out;
  out.reserve(c.out_ch * Ho * Wo);
  for (size_t oc = 0; oc < c.out_ch; ++oc)
    for (size_t oy = 0; oy < Ho; ++oy)
      for (size_t ox = 0; ox < Wo; ++ox) {
        FieldElement acc = FieldElement::from_raw(0, c.W[0].modulus());
        for (size_t ic = 0; ic < c.in_ch; ++ic)
          for (size_t ky = 0; ky < c.k; ++ky)
            for (size_t kx = 0; kx < c.k; ++kx) {
              long long iy = static_cast<long long>(oy * c.stride + ky) -
                             static_cast<long long>(c.pad);
              long long ix = static_cast<long long>(ox * c.stride + kx) -
                             static_cast<long long>(c.pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long long>(H) ||
                  ix >= static_cast<long long>(W))
                continue;
              acc = acc + c.W[((oc * c.in_ch + ic) * c.k + ky) * c.k + kx] *
                              x[(ic * H + iy) * W + ix];
            }
        out.push_back(acc);
      }
  return out;
}

inline std::vector<FieldElement> avgpool(const QAvgPool& a, const std::vector<size_t>& in_shape,
                                         std::span<const FieldElement> x) {
  size_t C = in_shape[0], H = in_shape[1], W = in_shape[2], k = a.k;
  std::vector<FieldElement> out;
  out.reserve(C * (H / k) * (W / k));
  for (size_t c = 0; c < C; ++c)
    for (size_t oy = 0; oy < H / k; ++oy)
      for (size_t ox = 0; ox < W / k; ++ox) {
        FieldElement sum = FieldElement::from_raw(0, a.inv_area.modulus());
        for (size_t dy = 0; dy < k; ++dy)
          for (size_t dx = 0; dx < k; ++dx)
            sum = sum + x[(c * H + oy * k + dy) * W + ox * k + dx];
        out.push_back(sum * a.inv_area);
      }
  return out;
}

}  // namespace shareops

// Offline material sections, in strict dealing order. The online walk consumes
// them with a cursor, so layer indices are a cross-check rather than a lookup
// key. Types: 0 input mask (client), 1 masked weight product W r - s (client),
// 2 linear mask s (server), 3 square-triple shares (both), 4 activation return
// mask (client).
enum class SectionType : u8 {
  input_mask = 0,
  linear_client = 1,
  linear_server = 2,
  act_triples = 3,
  act_return_mask = 4,
};

struct MaterialSection {
  SectionType type;
  i64 layer = -1;
  std::vector<FieldElement> elems;
};

struct OfflineMaterial {
  PartyId role = PartyId::Client;
  u64 hash = 0;  // model identity the material was dealt for
  FieldParams field;
  std::vector<MaterialSection> sections;
};

/// Strict-order reader over a party's sections; every mismatch is a protocol
/// bug or a material/model mixup, never recoverable.
class MaterialCursor {
 public:
  explicit MaterialCursor(const OfflineMaterial& m) : m_(m) {}

  const MaterialSection& next(SectionType want, i64 layer) {
    if (at_ >= m_.sections.size())
      throw std::runtime_error("material: exhausted at layer " + std::to_string(layer));
    const MaterialSection& s = m_.sections[at_++];
    if (s.type != want || s.layer != layer)
      throw std::runtime_error("material: section order mismatch at layer " +
                               std::to_string(layer));
    return s;
  }

  bool done() const { return at_ == m_.sections.size(); }

 private:
  const OfflineMaterial& m_;
  std::size_t at_ = 0;
};

struct DealerAuditEntry {
  i64 layer = 0;
  std::size_t elems = 0;
  bool ok = false;
};

struct DealtMaterial {
  OfflineMaterial client, server;
  std::vector<DealerAuditEntry> audit;
};

namespace detail {

struct DealerWalk {
  const FieldParams& fp;
  Rng& rng;
  DealtMaterial& out;
  i64 idx = 0;

  std::vector<FieldElement> uniform(std::size_t n) {
    std::vector<FieldElement> v;
    v.reserve(n);
    for (std::size_t i = 0; i < n; ++i) v.push_back(rng.field_element(fp));
    return v;
  }

  // sim is the client-held share, replayed exactly as the online client will
  // compute it; shape tracks the tensor layout for conv/pool.
  void walk(const std::vector<QLayer>& layers, std::vector<FieldElement>& sim,
            std::vector<size_t>& shape) {
    for (const QLayer& l : layers) {
      i64 here = idx++;
      if (const auto* lin = std::get_if<QLinear>(&l.node)) {
        std::vector<FieldElement> s = uniform(lin->out);
        std::vector<FieldElement> wr = shareops::linear(*lin, sim);
        std::vector<FieldElement> M(lin->out, FieldElement::from_raw(0, fp.p));
        for (size_t k = 0; k < lin->out; ++k) M[k] = wr[k] - s[k];
        // Audit the reconstruction identity (W r - s) + s = W r against an
        // independent recomputation.
        std::vector<FieldElement> wr2 = shareops::linear(*lin, sim);
        bool ok = true;
        for (size_t k = 0; k < lin->out; ++k)
          if (!((M[k] + s[k]) == wr2[k])) ok = false;
        out.audit.push_back({here, lin->out, ok});
        out.client.sections.push_back({SectionType::linear_client, here, M});
        out.server.sections.push_back({SectionType::linear_server, here, std::move(s)});
        sim = std::move(M);
        truncate_shares_inplace(PartyId::Client, sim, fp.frac_bits);
        shape = {lin->out};
      } else if (const auto* cv = std::get_if<QConv>(&l.node)) {
        std::vector<FieldElement> wr = shareops::conv(*cv, shape, sim);
        std::vector<FieldElement> s = uniform(wr.size());
        std::vector<FieldElement> M(wr.size(), FieldElement::from_raw(0, fp.p));
        for (size_t k = 0; k < wr.size(); ++k) M[k] = wr[k] - s[k];
        std::vector<FieldElement> wr2 = shareops::conv(*cv, shape, sim);
        bool ok = true;
        for (size_t k = 0; k < wr.size(); ++k)
          if (!((M[k] + s[k]) == wr2[k])) ok = false;
        out.audit.push_back({here, wr.size(), ok});
        out.client.sections.push_back({SectionType::linear_client, here, M});
        out.server.sections.push_back({SectionType::linear_server, here, std::move(s)});
        sim = std::move(M);
        truncate_shares_inplace(PartyId::Client, sim, fp.frac_bits);
        shape = qlayer_output_shape(l, shape, static_cast<size_t>(here));
      } else if (const auto* ap = std::get_if<QAvgPool>(&l.node)) {
        sim = shareops::avgpool(*ap, shape, sim);
        truncate_shares_inplace(PartyId::Client, sim, fp.frac_bits);
        shape = qlayer_output_shape(l, shape, static_cast<size_t>(here));
      } else if (std::holds_alternative<QFlatten>(l.node)) {
        shape = {shape_size(shape)};
      } else if (std::holds_alternative<QActivation>(l.node)) {
        std::size_t n = shape_size(shape);
        auto [tc, ts] = deal_triples(TripleKind::Square, n, fp, rng);
        out.client.sections.push_back({SectionType::act_triples, here, tc.elements()});
        out.server.sections.push_back({SectionType::act_triples, here, ts.elements()});
        std::vector<FieldElement> r_out = uniform(n);
        out.client.sections.push_back({SectionType::act_return_mask, here, r_out});
        // The client share mid-activation depends on the live input; the
        // return step replaces it with this dealer-chosen mask, so the
        // simulation resumes here.
        sim = std::move(r_out);
      } else {
        const auto& rb = std::get<QResidual>(l.node);
        std::vector<FieldElement> saved = sim;
        std::vector<size_t> branch_shape = shape;
        walk(rb.branch, sim, branch_shape);
        if (branch_shape != shape)
          throw std::invalid_argument("offline: residual branch changes shape");
        for (std::size_t k = 0; k < sim.size(); ++k) sim[k] = sim[k] + saved[k];
      }
    }
  }
};

}  // namespace detail

/// Trusted-dealer offline phase: samples every mask, computes the masked
/// weight products in the clear (the stand-in for the encrypted exchange), and
/// splits one square triple per activation element. Deterministic in the seed.
inline DealtMaterial deal_offline(const QuantizedModel& qm, u64 seed) {
  DealtMaterial out;
  const FieldParams& fp = qm.field;
  out.client.role = PartyId::Client;
  out.server.role = PartyId::Server;
  out.client.hash = out.server.hash = model_hash(qm);
  out.client.field = out.server.field = fp;

  Rng rng(seed);
  detail::DealerWalk walk{fp, rng, out};
  std::vector<FieldElement> sim = walk.uniform(shape_size(qm.input_shape));
  out.client.sections.push_back({SectionType::input_mask, -1, sim});
  std::vector<size_t> shape = qm.input_shape;
  walk.walk(qm.layers, sim, shape);
  return out;
}

// Material file: "AESP" | version u8 = 1 | kind u8 = 2 | role u8 | model hash
// u64 | p u64 | frac_bits u64 | section count u64 | sections, each type u8 |
// layer u64 (two's complement) | count u64 | count raw elements, all LE.
inline constexpr u8 kMaterialFileKind = 2;

inline std::vector<u8> serialize_material(const OfflineMaterial& m) {
  std::vector<u8> out;
  out.insert(out.end(), kTripleMagic, kTripleMagic + 4);
  out.push_back(kTripleFormatVersion);
  out.push_back(kMaterialFileKind);
  out.push_back(static_cast<u8>(m.role));
  put_u64_le(out, m.hash);
  put_u64_le(out, m.field.p);
  put_u64_le(out, m.field.frac_bits);
  put_u64_le(out, m.sections.size());
  for (const MaterialSection& s : m.sections) {
    out.push_back(static_cast<u8>(s.type));
    put_u64_le(out, static_cast<u64>(s.layer));
    put_u64_le(out, s.elems.size());
    for (const FieldElement& e : s.elems) put_u64_le(out, e.raw());
  }
  return out;
}

inline OfflineMaterial parse_material(std::span<const u8> buf) {
  ByteReader r(buf);
  char magic[4];
  r.read_bytes(reinterpret_cast<u8*>(magic), 4);
  if (std::memcmp(magic, kTripleMagic, 4) != 0)
    throw std::runtime_error("material: bad magic");
  if (r.read_u8() != kTripleFormatVersion) throw std::runtime_error("material: bad version");
  if (r.read_u8() != kMaterialFileKind) throw std::runtime_error("material: not a material file");
  OfflineMaterial m;
  u8 role = r.read_u8();
  if (role > 1) throw std::runtime_error("material: bad role byte");
  m.role = static_cast<PartyId>(role);
  m.hash = r.read_u64_le();
  m.field.p = r.read_u64_le();
  u64 fb = r.read_u64_le();
  if (fb > 0xffffffffULL) throw std::runtime_error("material: bad frac_bits");
  m.field.frac_bits = static_cast<u32>(fb);
  m.field.validate();
  u64 n_sections = r.read_u64_le();
  for (u64 i = 0; i < n_sections; ++i) {
    MaterialSection s;
    u8 t = r.read_u8();
    if (t > 4) throw std::runtime_error("material: unknown section type");
    s.type = static_cast<SectionType>(t);
    s.layer = static_cast<i64>(r.read_u64_le());
    u64 count = r.read_u64_le();
    s.elems.reserve(count);
    for (u64 k = 0; k < count; ++k) {
      u64 w = r.read_u64_le();
      if (w >= m.field.p) throw std::runtime_error("material: element exceeds modulus");
      s.elems.push_back(FieldElement::from_raw(w, m.field.p));
    }
    m.sections.push_back(std::move(s));
  }
  if (!r.done()) throw std::runtime_error("material: trailing bytes");
  return m;
}

inline void save_material(const std::string& path, const OfflineMaterial& m) {
  write_file_bytes(path, serialize_material(m));
}

inline OfflineMaterial load_material(const std::string& path) {
  std::vector<u8> bytes = read_file_bytes(path);
  return parse_material(bytes);
}

}  // namespace qpi
