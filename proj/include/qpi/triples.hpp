#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qpi/field.hpp"
#include "qpi/rng.hpp"
#include "qpi/sharing.hpp"

namespace qpi {

enum class TripleKind : u8 { Square = 0, Mul = 1 };

/// One party's share of (a, a^2).
struct SquareTripleShare {
  FieldElement a, a2;
};

/// One party's share of (a, b, ab).
struct MulTripleShare {
  FieldElement a, b, ab;
};

/// Ordered single-use pool of correlated randomness for one party. Consumers
/// take records strictly in dealing order; both parties advance in lockstep
/// because the protocol schedule is deterministic.
class TripleBatch {
 public:
  TripleBatch(TripleKind kind, PartyId owner, std::vector<FieldElement> elems)
      : kind_(kind), owner_(owner), elems_(std::move(elems)) {
    if (elems_.size() % record_width() != 0)
      throw std::invalid_argument("triples: element count not a multiple of record width");
  }

  TripleKind kind() const { return kind_; }
  PartyId owner() const { return owner_; }
  std::size_t size() const { return elems_.size() / record_width(); }
  std::size_t consumed() const { return next_; }
  std::size_t remaining() const { return size() - next_; }

  SquareTripleShare next_square() {
    if (kind_ != TripleKind::Square) throw std::logic_error("triples: batch holds mul records");
    std::size_t i = take();
    return {elems_[2 * i], elems_[2 * i + 1]};
  }

  MulTripleShare next_mul() {
    if (kind_ != TripleKind::Mul) throw std::logic_error("triples: batch holds square records");
    std::size_t i = take();
    return {elems_[3 * i], elems_[3 * i + 1], elems_[3 * i + 2]};
  }

  const std::vector<FieldElement>& elements() const { return elems_; }

 private:
  std::size_t record_width() const { return kind_ == TripleKind::Square ? 2 : 3; }

  std::size_t take() {
    if (next_ >= size()) throw std::out_of_range("triples: batch exhausted, material is single-use");
    return next_++;
  }

  TripleKind kind_;
  PartyId owner_;
  std::vector<FieldElement> elems_;
  std::size_t next_ = 0;
};

/// Trusted dealer: samples plain records, additively splits every element.
inline std::pair<TripleBatch, TripleBatch> deal_triples(TripleKind kind, std::size_t n,
                                                        const FieldParams& fp, Rng& rng) {
  std::vector<FieldElement> client, server;
  auto split = [&](const FieldElement& v) {
    auto [c, s] = share(v, fp, rng);
    client.push_back(c.value);
    server.push_back(s.value);
  };
  for (std::size_t i = 0; i < n; ++i) {
    FieldElement a = rng.field_element(fp);
    if (kind == TripleKind::Square) {
      split(a);
      split(a * a);
    } else {
      FieldElement b = rng.field_element(fp);
      split(a);
      split(b);
      split(a * b);
    }
  }
  return {TripleBatch(kind, PartyId::Client, std::move(client)),
          TripleBatch(kind, PartyId::Server, std::move(server))};
}

// Triple file: "AESP" | version u8 = 1 | kind u8 | count u64 LE | records,
// each record 2 (square) or 3 (mul) field elements, 8-byte little-endian.
inline constexpr char kTripleMagic[4] = {'A', 'E', 'S', 'P'};
inline constexpr u8 kTripleFormatVersion = 1;

inline std::vector<u8> serialize_triples(const TripleBatch& tb) {
  std::vector<u8> out;
  out.insert(out.end(), kTripleMagic, kTripleMagic + 4);
  out.push_back(kTripleFormatVersion);
  out.push_back(static_cast<u8>(tb.kind()));
  put_u64_le(out, tb.size());
  for (const auto& e : tb.elements()) put_u64_le(out, e.raw());
  return out;
}

inline TripleBatch parse_triples(std::span<const u8> buf, PartyId owner, const FieldParams& fp) {
  ByteReader r(buf);
  char magic[4];
  r.read_bytes(reinterpret_cast<u8*>(magic), 4);
  if (std::string(magic, 4) != std::string(kTripleMagic, 4))
    throw std::runtime_error("triples: bad magic");
  if (r.read_u8() != kTripleFormatVersion) throw std::runtime_error("triples: unsupported version");
  u8 kind_byte = r.read_u8();
  if (kind_byte > 1) throw std::runtime_error("triples: unknown kind byte");
  TripleKind kind = static_cast<TripleKind>(kind_byte);
  u64 count = r.read_u64_le();
  std::size_t width = kind == TripleKind::Square ? 2 : 3;
  if (r.remaining() != count * width * 8)
    throw std::runtime_error("triples: file size does not match count");
  std::vector<FieldElement> elems;
  elems.reserve(count * width);
  for (u64 i = 0; i < count * width; ++i) {
    u64 w = r.read_u64_le();
    if (w >= fp.p) throw std::runtime_error("triples: element exceeds modulus");
    elems.push_back(FieldElement::from_raw(w, fp.p));
  }
  return TripleBatch(kind, owner, std::move(elems));
}

inline void write_file_bytes(const std::string& path, const std::vector<u8>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("io: cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("io: short write to " + path);
}

inline std::vector<u8> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("io: cannot open " + path);
  std::vector<u8> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void save_triples(const std::string& path, const TripleBatch& tb) {
  write_file_bytes(path, serialize_triples(tb));
}

inline TripleBatch load_triples(const std::string& path, PartyId owner, const FieldParams& fp) {
  auto bytes = read_file_bytes(path);
  return parse_triples(bytes, owner, fp);
}

}  // namespace qpi
