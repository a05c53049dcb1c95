#pragma once

#include "qpi/model.hpp"

namespace qpi {

enum class HerpnizeMode { strict, surgery };

namespace detail {

[[noreturn]] inline void herpnize_reject(size_t index, const std::string& why) {
  throw std::invalid_argument("herpnize: layer " + std::to_string(index) + ": " + why);
}

/// Fresh identity-form HerPN standing in for a removed BN+ReLU pair. The graph
/// structure is what surgery preserves; parameters are reinitialized and need
/// calibration or training afterwards.
inline HerPNLayer replacement_herpn(unsigned channels) {
  HerPNParams p = make_herpn(channels);
  p.training = false;
  p.stats_populated = true;
  return HerPNLayer{std::move(p)};
}

inline std::vector<LayerSpec> herpnize_sequence(const std::vector<LayerSpec>& layers,
                                                HerpnizeMode mode);

inline ResidualBlock herpnize_block(const ResidualBlock& rb, HerpnizeMode mode, size_t index) {
  if (rb.variant != ResidualVariant::standard) {
    // Already in a HerPN form; branches must carry no BN/ReLU idioms.
    size_t relu = 0, bn = 0;
    count_layer_kinds(rb.branch, relu, bn);
    if (relu + bn > 0) herpnize_reject(index, "herpn-form block still contains BN/ReLU");
    return rb;
  }
  const bool pre_activation = !rb.branch.empty() &&
                              std::holds_alternative<BatchNormLayer>(rb.branch.front().node);
  if (pre_activation) {
    // [BN, ReLU, Conv, BN, ReLU, Conv] -> [HerPN, Conv, HerPN, Conv]
    if (rb.post_add_relu) herpnize_reject(index, "pre-activation block with post-add ReLU");
    ResidualBlock out;
    out.variant = ResidualVariant::pa_herpn;
    out.post_add_relu = false;
    out.branch = herpnize_sequence(rb.branch, mode);
    return out;
  }
  // Post-activation: [Conv, BN, ReLU, Conv, BN] + post-add ReLU. The trailing
  // BN only pairs with the ReLU that sits after the skip-connection, so the
  // rewrite moves the activation before the addition.
  if (!rb.post_add_relu) herpnize_reject(index, "post-activation block without post-add ReLU");
  if (mode == HerpnizeMode::strict)
    herpnize_reject(index, "ReLU after the skip-connection (surgery mode rewrites it)");
  if (rb.branch.size() < 2 || !std::holds_alternative<BatchNormLayer>(rb.branch.back().node))
    herpnize_reject(index, "post-activation block must end in BatchNorm");
  std::vector<LayerSpec> inner(rb.branch.begin(), rb.branch.end() - 1);
  ResidualBlock out;
  out.variant = ResidualVariant::herpn;
  out.post_add_relu = false;
  out.branch = herpnize_sequence(inner, mode);
  unsigned ch = std::get<BatchNormLayer>(rb.branch.back().node).params.channels;
  out.branch.push_back({replacement_herpn(ch)});
  return out;
}

inline std::vector<LayerSpec> herpnize_sequence(const std::vector<LayerSpec>& layers,
                                                HerpnizeMode mode) {
  std::vector<LayerSpec> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (const auto* bn = std::get_if<BatchNormLayer>(&l.node)) {
      if (i + 1 < layers.size() && std::holds_alternative<ReLULayer>(layers[i + 1].node)) {
        out.push_back({replacement_herpn(bn->params.channels)});
        ++i;
        continue;
      }
      herpnize_reject(i, "BatchNorm without adjacent ReLU");
    }
    if (std::holds_alternative<ReLULayer>(l.node)) {
      if (i + 1 < layers.size()) {
        if (const auto* nbn = std::get_if<BatchNormLayer>(&layers[i + 1].node)) {
          out.push_back({replacement_herpn(nbn->params.channels)});
          ++i;
          continue;
        }
      }
      herpnize_reject(i, "ReLU without adjacent BatchNorm");
    }
    if (const auto* rb = std::get_if<ResidualBlock>(&l.node)) {
      out.push_back({herpnize_block(*rb, mode, i)});
      continue;
    }
    out.push_back(l);
  }
  return out;
}

}  // namespace detail

/// Rewrite BN/ReLU idioms into HerPN blocks: adjacent BN+ReLU (either order)
/// collapses to one HerPN; pre-activation residual blocks map to the
/// pre-activation HerPN form; post-activation residual blocks, whose ReLU sits
/// after the skip-connection, are rejected in strict mode and rewired in
/// surgery mode so no activation follows the addition. Anything else involving
/// ReLU or a lone BatchNorm is rejected with its layer index. The result
/// contains no ReLU and no standalone BatchNorm.
inline ModelGraph herpnize(const ModelGraph& m, HerpnizeMode mode = HerpnizeMode::strict) {
  ModelGraph out;
  out.name = m.name + "-herpn";
  out.input_shape = m.input_shape;
  out.layers = detail::herpnize_sequence(m.layers, mode);
  size_t relu = 0, bn = 0;
  count_layer_kinds(out.layers, relu, bn);
  if (relu + bn != 0) throw std::logic_error("herpnize: rewrite left BN/ReLU behind");
  return out;
}

}  // namespace qpi
