#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "qpi/field.hpp"

namespace qpi {

inline size_t shape_size(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s) : shape(std::move(s)), data(shape_size(shape), 0.0) {}
  Tensor(std::vector<size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_size(shape)) throw std::invalid_argument("tensor: data/shape mismatch");
  }

  size_t size() const { return data.size(); }
};

/// Fixed-point tensor: every element shares one scale, expressed as the number
/// of 2^f factors it carries (1 after encode, 2 after a multiply, back to 1
/// after truncation).
struct FieldTensor {
  std::vector<size_t> shape;
  std::vector<FieldElement> data;
  unsigned scale_steps = 1;

  size_t size() const { return data.size(); }
};

inline FieldTensor encode_tensor(const Tensor& t, const FixedPointCodec& codec) {
  FieldTensor out;
  out.shape = t.shape;
  out.scale_steps = 1;
  out.data.reserve(t.size());
  for (double v : t.data) out.data.push_back(codec.encode(v));
  return out;
}

inline Tensor decode_tensor(const FieldTensor& t, const FixedPointCodec& codec) {
  Tensor out;
  out.shape = t.shape;
  out.data.reserve(t.size());
  for (const FieldElement& e : t.data) out.data.push_back(codec.decode_scale(e, t.scale_steps));
  return out;
}

}  // namespace qpi
