#pragma once

#include "qpi/forward.hpp"
#include "qpi/model.hpp"

namespace qpi {

/// Quantized graph: the layer set the two-party protocol can execute. Scales
/// follow the multiply-then-truncate schedule: weights and activation inputs
/// carry one 2^f factor, products and biases two, truncation restores one.
struct QLayer;

struct QLinear {
  size_t in = 0, out = 0;
  std::vector<FieldElement> W;  // scale 1
  std::vector<FieldElement> b;  // scale 2
};

struct QConv {
  size_t in_ch = 0, out_ch = 0, k = 0, stride = 1, pad = 0;
  std::vector<FieldElement> W;  // scale 1
  std::vector<FieldElement> b;  // scale 2
};

struct QAvgPool {
  size_t k = 2;
  FieldElement inv_area;  // encode(1/k^2), scale 1
};

struct QFlatten {};

/// Folded HerPN: per-channel quadratic c2 x^2 + c1 x + c0, one secure square
/// per element online.
struct QActivation {
  unsigned channels = 0;
  std::vector<FieldElement> c2, c1;  // scale 1
  std::vector<FieldElement> c0;      // scale 2
};

struct QResidual {
  std::vector<QLayer> branch;
  ResidualVariant variant = ResidualVariant::herpn;
};

struct QLayer {
  std::variant<QLinear, QConv, QAvgPool, QFlatten, QActivation, QResidual> node;
};

struct QuantizedModel {
  std::string name;
  std::vector<size_t> input_shape;
  FieldParams field;
  std::vector<QLayer> layers;
};

namespace detail {

inline std::vector<FieldElement> encode_all(const std::vector<double>& v,
                                            const FixedPointCodec& codec, unsigned steps) {
  std::vector<FieldElement> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(codec.encode_scale(x, steps));
  return out;
}

inline std::vector<QLayer> quantize_layers(const std::vector<LayerSpec>& layers,
                                           const FixedPointCodec& codec, bool top_level) {
  std::vector<QLayer> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    auto reject = [&](const std::string& what) {
      throw std::invalid_argument("quantize: layer " + std::to_string(i) + ": " + what +
                                  " is not protocol-executable");
    };
    if (const auto* lin = std::get_if<LinearLayer>(&l.node)) {
      out.push_back({QLinear{lin->in, lin->out, detail::encode_all(lin->W, codec, 1),
                             detail::encode_all(lin->b, codec, 2)}});
    } else if (const auto* cv = std::get_if<Conv2dLayer>(&l.node)) {
      out.push_back({QConv{cv->in_ch, cv->out_ch, cv->k, cv->stride, cv->pad,
                           detail::encode_all(cv->W, codec, 1), detail::encode_all(cv->b, codec, 2)}});
    } else if (const auto* ap = std::get_if<AvgPoolLayer>(&l.node)) {
      out.push_back({QAvgPool{ap->k, codec.encode(1.0 / static_cast<double>(ap->k * ap->k))}});
    } else if (std::holds_alternative<MaxPoolLayer>(l.node)) {
      reject("max pooling");
    } else if (std::holds_alternative<FlattenLayer>(l.node)) {
      out.push_back({QFlatten{}});
    } else if (std::holds_alternative<ReLULayer>(l.node)) {
      reject("ReLU");
    } else if (std::holds_alternative<BatchNormLayer>(l.node)) {
      reject("standalone BatchNorm");
    } else if (std::holds_alternative<HermiteActLayer>(l.node)) {
      reject("unnormalized Hermite activation");
    } else if (const auto* hp = std::get_if<HerPNLayer>(&l.node)) {
      FoldedQuadratic f = fold_to_quadratic(hp->params);
      out.push_back({QActivation{hp->params.channels, detail::encode_all(f.c2, codec, 1),
                                 detail::encode_all(f.c1, codec, 1),
                                 detail::encode_all(f.c0, codec, 2)}});
    } else {
      const auto& rb = std::get<ResidualBlock>(l.node);
      if (rb.post_add_relu) reject("activation after the skip-connection");
      QResidual qr;
      qr.variant = rb.variant;
      qr.branch = quantize_layers(rb.branch, codec, false);
      out.push_back({std::move(qr)});
    }
    (void)top_level;
  }
  return out;
}

}  // namespace detail

/// Encode a float graph for protocol execution. HerPN layers must be frozen
/// (they fold to per-channel quadratics); ReLU, standalone BatchNorm, and max
/// pooling have no protocol form and are rejected by name.
inline QuantizedModel quantize(const ModelGraph& m, const FixedPointCodec& codec) {
  infer_shapes(m);
  QuantizedModel q;
  q.name = m.name;
  q.input_shape = m.input_shape;
  q.field = codec.params();
  q.layers = detail::quantize_layers(m.layers, codec, true);
  return q;
}

namespace detail {

/// Signed accumulator bound: any intermediate at any scale must stay strictly
/// inside (-p/2, p/2) or the fixed-point reading of the field value is wrong.
inline i64 checked_narrow(i128 acc, const FieldParams& fp) {
  i128 half = static_cast<i128>(fp.p / 2);
  if (acc >= half || acc <= -half)
    throw std::overflow_error("fixed: accumulator left the safe signed range");
  return static_cast<i64>(acc);
}

inline FieldElement fixed_from_acc(i128 acc, const FieldParams& fp) {
  return from_signed(checked_narrow(acc, fp), fp);
}

}  // namespace detail

inline std::vector<size_t> qlayer_output_shape(const QLayer& layer, const std::vector<size_t>& in,
                                               size_t layer_index);

inline FieldTensor forward_fixed_layer(const QLayer& layer, const FieldTensor& x,
                                       const FixedPointCodec& codec, size_t layer_index) {
  const FieldParams fp = codec.params();
  if (const auto* lin = std::get_if<QLinear>(&layer.node)) {
    FieldTensor out;
    out.shape = {lin->out};
    out.scale_steps = 1;
    for (size_t o = 0; o < lin->out; ++o) {
      i128 acc = lin->b[o].to_signed();
      for (size_t i = 0; i < lin->in; ++i)
        acc += static_cast<i128>(lin->W[o * lin->in + i].to_signed()) *
               static_cast<i128>(x.data[i].to_signed());
      out.data.push_back(codec.truncate(detail::fixed_from_acc(acc, fp)));
    }
    return out;
  }
  if (const auto* cv = std::get_if<QConv>(&layer.node)) {
    size_t H = x.shape[1], W = x.shape[2];
    size_t Ho = (H + 2 * cv->pad - cv->k) / cv->stride + 1;
    size_t Wo = (W + 2 * cv->pad - cv->k) / cv->stride + 1;
    FieldTensor out;
    out.shape = {cv->out_ch, Ho, Wo};
    out.scale_steps = 1;
    for (size_t oc = 0; oc < cv->out_ch; ++oc)
      for (size_t oy = 0; oy < Ho; ++oy)
        for (size_t ox = 0; ox < Wo; ++ox) {
          i128 acc = cv->b[oc].to_signed();
          for (size_t ic = 0; ic < cv->in_ch; ++ic)
            for (size_t ky = 0; ky < cv->k; ++ky)
              for (size_t kx = 0; kx < cv->k; ++kx) {
                long long iy =
                    static_cast<long long>(oy * cv->stride + ky) - static_cast<long long>(cv->pad);
                long long ix =
                    static_cast<long long>(ox * cv->stride + kx) - static_cast<long long>(cv->pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long long>(H) ||
                    ix >= static_cast<long long>(W))
                  continue;
                acc += static_cast<i128>(
                           cv->W[((oc * cv->in_ch + ic) * cv->k + ky) * cv->k + kx].to_signed()) *
                       static_cast<i128>(x.data[(ic * H + iy) * W + ix].to_signed());
              }
          out.data.push_back(codec.truncate(detail::fixed_from_acc(acc, fp)));
        }
    return out;
  }
  if (const auto* ap = std::get_if<QAvgPool>(&layer.node)) {
    size_t C = x.shape[0], H = x.shape[1], W = x.shape[2], k = ap->k;
    FieldTensor out;
    out.shape = {C, H / k, W / k};
    out.scale_steps = 1;
    i128 inv = ap->inv_area.to_signed();
    for (size_t c = 0; c < C; ++c)
      for (size_t oy = 0; oy < H / k; ++oy)
        for (size_t ox = 0; ox < W / k; ++ox) {
          i128 sum = 0;
          for (size_t dy = 0; dy < k; ++dy)
            for (size_t dx = 0; dx < k; ++dx)
              sum += x.data[(c * H + oy * k + dy) * W + ox * k + dx].to_signed();
          out.data.push_back(codec.truncate(detail::fixed_from_acc(sum * inv, fp)));
        }
    return out;
  }
  if (std::holds_alternative<QFlatten>(layer.node)) {
    FieldTensor out = x;
    out.shape = {x.size()};
    return out;
  }
  if (const auto* act = std::get_if<QActivation>(&layer.node)) {
    size_t inner = 1;
    for (size_t i = 1; i < x.shape.size(); ++i) inner *= x.shape[i];
    FieldTensor out;
    out.shape = x.shape;
    out.scale_steps = 1;
    for (size_t c = 0; c < act->channels; ++c)
      for (size_t j = 0; j < inner; ++j) {
        const FieldElement& v = x.data[c * inner + j];
        i128 sv = v.to_signed();
        FieldElement sq = codec.truncate(detail::fixed_from_acc(sv * sv, fp));
        i128 aff = static_cast<i128>(act->c2[c].to_signed()) * sq.to_signed() +
                   static_cast<i128>(act->c1[c].to_signed()) * sv + act->c0[c].to_signed();
        out.data.push_back(codec.truncate(detail::fixed_from_acc(aff, fp)));
      }
    return out;
  }
  const auto& rb = std::get<QResidual>(layer.node);
  FieldTensor branch = x;
  for (const QLayer& bl : rb.branch) branch = forward_fixed_layer(bl, branch, codec, layer_index);
  if (branch.shape != x.shape)
    throw std::invalid_argument("fixed: residual branch shape mismatch at layer " +
                                std::to_string(layer_index));
  FieldTensor out = x;
  for (size_t k = 0; k < out.size(); ++k)
    out.data[k] = detail::fixed_from_acc(
        static_cast<i128>(x.data[k].to_signed()) + branch.data[k].to_signed(), fp);
  return out;
}

/// Plaintext twin of the protocol: identical operation order and truncation
/// schedule, so any protocol-vs-fixed difference is attributable to the ±1 LSB
/// of share-local truncation alone.
inline FieldTensor forward_fixed(const QuantizedModel& m, const FieldTensor& x,
                                 const FixedPointCodec& codec) {
  if (x.shape != m.input_shape) throw std::invalid_argument("fixed: input shape mismatch");
  if (x.scale_steps != 1) throw std::invalid_argument("fixed: input must carry scale 1");
  if (!(codec.params() == m.field)) throw std::invalid_argument("fixed: codec/model field mismatch");
  FieldTensor cur = x;
  for (size_t i = 0; i < m.layers.size(); ++i)
    cur = forward_fixed_layer(m.layers[i], cur, codec, i);
  return cur;
}

inline std::vector<size_t> qlayer_output_shape(const QLayer& layer, const std::vector<size_t>& in,
                                               size_t layer_index) {
  if (const auto* lin = std::get_if<QLinear>(&layer.node)) {
    if (in.size() != 1 || in[0] != lin->in)
      throw std::invalid_argument("fixed: linear shape mismatch at layer " +
                                  std::to_string(layer_index));
    return {lin->out};
  }
  if (const auto* cv = std::get_if<QConv>(&layer.node)) {
    size_t h = in[1] + 2 * cv->pad, w = in[2] + 2 * cv->pad;
    return {cv->out_ch, (h - cv->k) / cv->stride + 1, (w - cv->k) / cv->stride + 1};
  }
  if (const auto* ap = std::get_if<QAvgPool>(&layer.node)) return {in[0], in[1] / ap->k, in[2] / ap->k};
  if (std::holds_alternative<QFlatten>(layer.node)) return {shape_size(in)};
  if (std::holds_alternative<QActivation>(layer.node)) return in;
  const auto& rb = std::get<QResidual>(layer.node);
  std::vector<size_t> shape = in;
  for (const QLayer& bl : rb.branch) shape = qlayer_output_shape(bl, shape, layer_index);
  return shape;
}

namespace detail {

inline size_t count_trunc(const std::vector<QLayer>& layers, std::vector<size_t>& shape) {
  size_t events = 0;
  for (const QLayer& l : layers) {
    if (const auto* lin = std::get_if<QLinear>(&l.node)) {
      events += lin->out;
      shape = {lin->out};
    } else if (std::holds_alternative<QConv>(l.node) || std::holds_alternative<QAvgPool>(l.node)) {
      shape = qlayer_output_shape(l, shape, 0);
      events += shape_size(shape);
    } else if (std::holds_alternative<QFlatten>(l.node)) {
      shape = {shape_size(shape)};
    } else if (std::holds_alternative<QActivation>(l.node)) {
      events += 2 * shape_size(shape);  // one square, one affine per element
    } else {
      const auto& rb = std::get<QResidual>(l.node);
      std::vector<size_t> s = shape;
      events += count_trunc(rb.branch, s);
    }
  }
  return events;
}

}  // namespace detail

/// Total truncation events on a full forward pass: the protocol-vs-fixed error
/// budget is 1 LSB per event.
inline size_t count_truncation_events(const QuantizedModel& m) {
  std::vector<size_t> shape = m.input_shape;
  return detail::count_trunc(m.layers, shape);
}

}  // namespace qpi
