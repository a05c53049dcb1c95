#pragma once

#include <string>
#include <variant>
#include <vector>

#include "qpi/herpn.hpp"
#include "qpi/rng.hpp"
#include "qpi/tensor.hpp"

namespace qpi {

struct LayerSpec;

struct LinearLayer {
  size_t in = 0, out = 0;
  std::vector<double> W;  // [out][in] row-major
  std::vector<double> b;  // [out]
};

struct Conv2dLayer {
  size_t in_ch = 0, out_ch = 0, k = 0, stride = 1, pad = 0;
  std::vector<double> W;  // [out_ch][in_ch][k][k]
  std::vector<double> b;  // [out_ch]
};

struct AvgPoolLayer {
  size_t k = 2;
};

// Accepted in float graphs; quantize rejects it (non-polynomial, like ReLU).
struct MaxPoolLayer {
  size_t k = 2;
};

struct FlattenLayer {};

struct ReLULayer {};

struct BatchNormLayer {
  BatchNormParams params;
};

struct HerPNLayer {
  HerPNParams params;
};

/// Raw unnormalized Hermite expansion of ReLU, g(x) = sum_i fhat_i h_i(x).
/// Exists for the normalization ablation (pre/post-activation variants wrap it
/// with a single BatchNorm); float path only.
struct HermiteActLayer {
  unsigned degree = 2;
};

enum class ResidualVariant { standard, herpn, pa_herpn };

struct ResidualBlock {
  std::vector<LayerSpec> branch;
  ResidualVariant variant = ResidualVariant::standard;
  bool post_add_relu = false;  // standard post-activation blocks only
};

struct LayerSpec {
  std::variant<LinearLayer, Conv2dLayer, AvgPoolLayer, MaxPoolLayer, FlattenLayer, ReLULayer,
               BatchNormLayer, HerPNLayer, HermiteActLayer, ResidualBlock>
      node;
};

struct ModelGraph {
  std::string name;
  std::vector<size_t> input_shape;  // per sample, no batch axis
  std::vector<LayerSpec> layers;
};

/// Output shape of one layer given its input shape; throws on incompatibility.
inline std::vector<size_t> layer_output_shape(const LayerSpec& layer, const std::vector<size_t>& in,
                                              size_t layer_index) {
  auto fail = [layer_index](const std::string& why) {
    throw std::invalid_argument("model: layer " + std::to_string(layer_index) + ": " + why);
  };
  if (const auto* lin = std::get_if<LinearLayer>(&layer.node)) {
    if (in.size() != 1 || in[0] != lin->in) fail("linear input shape mismatch");
    if (lin->W.size() != lin->in * lin->out || lin->b.size() != lin->out)
      fail("linear parameter sizes inconsistent");
    return {lin->out};
  }
  if (const auto* cv = std::get_if<Conv2dLayer>(&layer.node)) {
    if (in.size() != 3 || in[0] != cv->in_ch) fail("conv input shape mismatch");
    if (cv->W.size() != cv->out_ch * cv->in_ch * cv->k * cv->k || cv->b.size() != cv->out_ch)
      fail("conv parameter sizes inconsistent");
    size_t h = in[1] + 2 * cv->pad, w = in[2] + 2 * cv->pad;
    if (h < cv->k || w < cv->k) fail("conv kernel larger than padded input");
    return {cv->out_ch, (h - cv->k) / cv->stride + 1, (w - cv->k) / cv->stride + 1};
  }
  if (const auto* ap = std::get_if<AvgPoolLayer>(&layer.node)) {
    if (in.size() != 3 || in[1] % ap->k != 0 || in[2] % ap->k != 0)
      fail("pool window must tile the input");
    return {in[0], in[1] / ap->k, in[2] / ap->k};
  }
  if (const auto* mp = std::get_if<MaxPoolLayer>(&layer.node)) {
    if (in.size() != 3 || in[1] % mp->k != 0 || in[2] % mp->k != 0)
      fail("pool window must tile the input");
    return {in[0], in[1] / mp->k, in[2] / mp->k};
  }
  if (std::holds_alternative<FlattenLayer>(layer.node)) return {shape_size(in)};
  if (std::holds_alternative<ReLULayer>(layer.node)) return in;
  if (const auto* bn = std::get_if<BatchNormLayer>(&layer.node)) {
    if (in.empty() || in[0] != bn->params.channels) fail("batchnorm channel mismatch");
    return in;
  }
  if (const auto* hp = std::get_if<HerPNLayer>(&layer.node)) {
    if (in.empty() || in[0] != hp->params.channels) fail("herpn channel mismatch");
    return in;
  }
  if (std::holds_alternative<HermiteActLayer>(layer.node)) return in;
  const auto& rb = std::get<ResidualBlock>(layer.node);
  std::vector<size_t> shape = in;
  for (size_t i = 0; i < rb.branch.size(); ++i)
    shape = layer_output_shape(rb.branch[i], shape, layer_index);
  if (shape != in) fail("residual branch must preserve shape");
  return shape;
}

/// Per-layer output shapes for the whole graph (index 0 = after layer 0).
inline std::vector<std::vector<size_t>> infer_shapes(const ModelGraph& m) {
  std::vector<std::vector<size_t>> shapes;
  std::vector<size_t> cur = m.input_shape;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    cur = layer_output_shape(m.layers[i], cur, i);
    shapes.push_back(cur);
  }
  return shapes;
}

inline void count_layer_kinds(const std::vector<LayerSpec>& layers, size_t& relu, size_t& bn) {
  for (const LayerSpec& l : layers) {
    if (std::holds_alternative<ReLULayer>(l.node)) ++relu;
    if (std::holds_alternative<BatchNormLayer>(l.node)) ++bn;
    if (const auto* rb = std::get_if<ResidualBlock>(&l.node)) {
      if (rb->post_add_relu) ++relu;
      count_layer_kinds(rb->branch, relu, bn);
    }
  }
}

inline size_t count_relu_layers(const ModelGraph& m) {
  size_t relu = 0, bn = 0;
  count_layer_kinds(m.layers, relu, bn);
  return relu;
}

inline size_t count_batchnorm_layers(const ModelGraph& m) {
  size_t relu = 0, bn = 0;
  count_layer_kinds(m.layers, relu, bn);
  return bn;
}

namespace detail {

inline std::vector<double> uniform_weights(size_t n, double bound, Rng& rng) {
  std::vector<double> w(n);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return w;
}

/// Frozen-but-plausible inference statistics: variances near 1, small means.
/// Keeps quantized magnitudes small so share truncation wrap events stay rare.
inline HerPNParams seeded_herpn(unsigned channels, Rng& rng) {
  HerPNParams p = make_herpn(channels);
  for (unsigned c = 0; c < channels; ++c) {
    p.gamma[c] = rng.uniform(0.8, 1.2);
    p.beta[c] = rng.uniform(-0.2, 0.2);
    for (unsigned i = 0; i <= 2; ++i) {
      p.mean_at(i, c) = rng.uniform(-0.3, 0.3);
      p.var_at(i, c) = rng.uniform(0.8, 1.5);
    }
  }
  p.training = false;
  p.stats_populated = true;
  return p;
}

inline LinearLayer seeded_linear(size_t in, size_t out, Rng& rng) {
  LinearLayer l;
  l.in = in;
  l.out = out;
  double bound = 0.5 / std::sqrt(static_cast<double>(in));
  l.W = uniform_weights(in * out, bound, rng);
  l.b = uniform_weights(out, 0.1, rng);
  return l;
}

inline Conv2dLayer seeded_conv(size_t in_ch, size_t out_ch, size_t k, size_t stride, size_t pad,
                               Rng& rng) {
  Conv2dLayer c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.k = k;
  c.stride = stride;
  c.pad = pad;
  double bound = 0.5 / std::sqrt(static_cast<double>(in_ch * k * k));
  c.W = uniform_weights(out_ch * in_ch * k * k, bound, rng);
  c.b = uniform_weights(out_ch, 0.1, rng);
  return c;
}

}  // namespace detail

/// Three linear layers with two HerPN activations; the smallest end-to-end
/// protocol-executable model.
inline ModelGraph build_mlp3(u64 seed = 1) {
  Rng rng(seed);
  ModelGraph m;
  m.name = "mlp3";
  m.input_shape = {2};
  m.layers.push_back({detail::seeded_linear(2, 16, rng)});
  m.layers.push_back({HerPNLayer{detail::seeded_herpn(16, rng)}});
  m.layers.push_back({detail::seeded_linear(16, 16, rng)});
  m.layers.push_back({HerPNLayer{detail::seeded_herpn(16, rng)}});
  m.layers.push_back({detail::seeded_linear(16, 2, rng)});
  return m;
}

/// Small VGG-style stack on an 8x8 single-channel input.
inline ModelGraph build_cnn6(u64 seed = 2) {
  Rng rng(seed);
  ModelGraph m;
  m.name = "cnn6";
  m.input_shape = {1, 8, 8};
  m.layers.push_back({detail::seeded_conv(1, 4, 3, 1, 1, rng)});
  m.layers.push_back({HerPNLayer{detail::seeded_herpn(4, rng)}});
  m.layers.push_back({AvgPoolLayer{2}});
  m.layers.push_back({detail::seeded_conv(4, 8, 3, 1, 1, rng)});
  m.layers.push_back({HerPNLayer{detail::seeded_herpn(8, rng)}});
  m.layers.push_back({AvgPoolLayer{2}});
  m.layers.push_back({FlattenLayer{}});
  m.layers.push_back({detail::seeded_linear(32, 4, rng)});
  return m;
}

/// One residual unit (4 channels, 6x6 spatial) in the requested variant:
/// standard post-activation, HerPN form, or pre-activation HerPN form.
inline ModelGraph build_residual_unit(ResidualVariant variant, u64 seed = 3) {
  Rng rng(seed);
  ModelGraph m;
  m.input_shape = {4, 6, 6};
  ResidualBlock rb;
  rb.variant = variant;
  switch (variant) {
    case ResidualVariant::standard: {
      m.name = "resunit-standard";
      rb.post_add_relu = true;
      rb.branch.push_back({detail::seeded_conv(4, 4, 3, 1, 1, rng)});
      BatchNormParams bn1 = make_batchnorm(4);
      bn1.training = false;
      bn1.stats_populated = true;
      rb.branch.push_back({BatchNormLayer{bn1}});
      rb.branch.push_back({ReLULayer{}});
      rb.branch.push_back({detail::seeded_conv(4, 4, 3, 1, 1, rng)});
      BatchNormParams bn2 = make_batchnorm(4);
      bn2.training = false;
      bn2.stats_populated = true;
      rb.branch.push_back({BatchNormLayer{bn2}});
      break;
    }
    case ResidualVariant::herpn:
      m.name = "resunit-herpn";
      rb.branch.push_back({detail::seeded_conv(4, 4, 3, 1, 1, rng)});
      rb.branch.push_back({HerPNLayer{detail::seeded_herpn(4, rng)}});
      rb.branch.push_back({detail::seeded_conv(4, 4, 3, 1, 1, rng)});
      rb.branch.push_back({HerPNLayer{detail::seeded_herpn(4, rng)}});
      break;
    case ResidualVariant::pa_herpn:
      m.name = "resunit-pa-herpn";
      rb.branch.push_back({HerPNLayer{detail::seeded_herpn(4, rng)}});
      rb.branch.push_back({detail::seeded_conv(4, 4, 3, 1, 1, rng)});
      rb.branch.push_back({HerPNLayer{detail::seeded_herpn(4, rng)}});
      rb.branch.push_back({detail::seeded_conv(4, 4, 3, 1, 1, rng)});
      break;
  }
  m.layers.push_back({rb});
  return m;
}

}  // namespace qpi
