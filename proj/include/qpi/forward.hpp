#pragma once

#include "qpi/model.hpp"

namespace qpi {

namespace detail {

inline Tensor linear_float(const LinearLayer& l, const Tensor& x) {
  Tensor out({l.out});
  for (size_t o = 0; o < l.out; ++o) {
    double acc = l.b[o];
    for (size_t i = 0; i < l.in; ++i) acc += l.W[o * l.in + i] * x.data[i];
    out.data[o] = acc;
  }
  return out;
}

inline Tensor conv_float(const Conv2dLayer& c, const Tensor& x) {
  size_t H = x.shape[1], W = x.shape[2];
  size_t Ho = (H + 2 * c.pad - c.k) / c.stride + 1;
  size_t Wo = (W + 2 * c.pad - c.k) / c.stride + 1;
  Tensor out({c.out_ch, Ho, Wo});
  for (size_t oc = 0; oc < c.out_ch; ++oc)
    for (size_t oy = 0; oy < Ho; ++oy)
      for (size_t ox = 0; ox < Wo; ++ox) {
        double acc = c.b[oc];
        for (size_t ic = 0; ic < c.in_ch; ++ic)
          for (size_t ky = 0; ky < c.k; ++ky)
            for (size_t kx = 0; kx < c.k; ++kx) {
              // Signed coordinates: padding reaches before index 0.
              long long iy = static_cast<long long>(oy * c.stride + ky) - static_cast<long long>(c.pad);
              long long ix = static_cast<long long>(ox * c.stride + kx) - static_cast<long long>(c.pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long long>(H) || ix >= static_cast<long long>(W))
                continue;
              acc += c.W[((oc * c.in_ch + ic) * c.k + ky) * c.k + kx] *
                     x.data[(ic * H + iy) * W + ix];
            }
        out.data[(oc * Ho + oy) * Wo + ox] = acc;
      }
  return out;
}

template <typename Reduce>
Tensor pool_float(size_t k, const Tensor& x, Reduce reduce) {
  size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
  Tensor out({C, H / k, W / k});
  for (size_t c = 0; c < C; ++c)
    for (size_t oy = 0; oy < H / k; ++oy)
      for (size_t ox = 0; ox < W / k; ++ox) {
        std::vector<double> window;
        window.reserve(k * k);
        for (size_t dy = 0; dy < k; ++dy)
          for (size_t dx = 0; dx < k; ++dx)
            window.push_back(x.data[(c * H + oy * k + dy) * W + ox * k + dx]);
        out.data[(c * (H / k) + oy) * (W / k) + ox] = reduce(window);
      }
  return out;
}

inline std::pair<size_t, size_t> channel_layout(const std::vector<size_t>& shape) {
  size_t inner = 1;
  for (size_t i = 1; i < shape.size(); ++i) inner *= shape[i];
  return {shape[0], inner};
}

}  // namespace detail

inline Tensor forward_float_layer(const LayerSpec& layer, const Tensor& x, size_t layer_index) {
  layer_output_shape(layer, x.shape, layer_index);  // shape/parameter validation
  if (const auto* lin = std::get_if<LinearLayer>(&layer.node)) return detail::linear_float(*lin, x);
  if (const auto* cv = std::get_if<Conv2dLayer>(&layer.node)) return detail::conv_float(*cv, x);
  if (const auto* ap = std::get_if<AvgPoolLayer>(&layer.node))
    return detail::pool_float(ap->k, x, [](const std::vector<double>& w) {
      double s = 0.0;
      for (double v : w) s += v;
      return s / static_cast<double>(w.size());
    });
  if (const auto* mp = std::get_if<MaxPoolLayer>(&layer.node))
    return detail::pool_float(mp->k, x, [](const std::vector<double>& w) {
      double m = w[0];
      for (double v : w) m = std::max(m, v);
      return m;
    });
  if (std::holds_alternative<FlattenLayer>(layer.node)) {
    Tensor out = x;
    out.shape = {x.size()};
    return out;
  }
  if (std::holds_alternative<ReLULayer>(layer.node)) {
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
  }
  if (const auto* bn = std::get_if<BatchNormLayer>(&layer.node)) {
    auto [C, inner] = detail::channel_layout(x.shape);
    (void)C;
    Tensor out = x;
    out.data = batchnorm_forward_infer(x.data, 1, inner, bn->params);
    return out;
  }
  if (const auto* hp = std::get_if<HerPNLayer>(&layer.node)) {
    auto [C, inner] = detail::channel_layout(x.shape);
    (void)C;
    Tensor out = x;
    out.data = herpn_forward_infer(x.data, 1, inner, hp->params);
    return out;
  }
  if (const auto* ha = std::get_if<HermiteActLayer>(&layer.node)) {
    HermiteSeries g = HermiteSeries::relu(ha->degree);
    Tensor out = x;
    for (double& v : out.data) v = g.eval(v);
    return out;
  }
  const auto& rb = std::get<ResidualBlock>(layer.node);
  Tensor branch = x;
  for (size_t i = 0; i < rb.branch.size(); ++i)
    branch = forward_float_layer(rb.branch[i], branch, layer_index);
  Tensor out = x;
  for (size_t k = 0; k < out.size(); ++k) out.data[k] += branch.data[k];
  if (rb.post_add_relu)
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Reference float inference for one sample; HerPN and BatchNorm layers run in
/// frozen inference mode.
inline Tensor forward_float(const ModelGraph& m, const Tensor& x) {
  if (x.shape != m.input_shape) throw std::invalid_argument("model: input shape mismatch");
  Tensor cur = x;
  for (size_t i = 0; i < m.layers.size(); ++i) cur = forward_float_layer(m.layers[i], cur, i);
  return cur;
}

}  // namespace qpi
