#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "qpi/fixed_forward.hpp"
#include "qpi/forward.hpp"
#include "qpi/model_io.hpp"
#include "qpi/surgery.hpp"

namespace {

using namespace qpi;

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TEST(Shapes, Mlp3AndCnn6) {
  auto s = infer_shapes(build_mlp3());
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[0], (std::vector<size_t>{16}));
  EXPECT_EQ(s[4], (std::vector<size_t>{2}));
  s = infer_shapes(build_cnn6());
  ASSERT_EQ(s.size(), 8u);
  EXPECT_EQ(s[0], (std::vector<size_t>{4, 8, 8}));
  EXPECT_EQ(s[2], (std::vector<size_t>{4, 4, 4}));
  EXPECT_EQ(s[3], (std::vector<size_t>{8, 4, 4}));
  EXPECT_EQ(s[6], (std::vector<size_t>{32}));
  EXPECT_EQ(s[7], (std::vector<size_t>{4}));
}

TEST(Shapes, RejectsIncompatibleGraphs) {
  ModelGraph m;
  m.input_shape = {3};
  LinearLayer l;
  l.in = 2;
  l.out = 2;
  l.W.assign(4, 0.0);
  l.b.assign(2, 0.0);
  m.layers.push_back({l});
  EXPECT_THROW(infer_shapes(m), std::invalid_argument);

  ModelGraph r = build_residual_unit(ResidualVariant::herpn);
  auto& rb = std::get<ResidualBlock>(r.layers[0].node);
  std::get<Conv2dLayer>(rb.branch[0].node).stride = 2;  // branch no longer preserves shape
  EXPECT_THROW(infer_shapes(r), std::invalid_argument);
}

TEST(ForwardFloat, FlattenAndIdentityLinear) {
  ModelGraph m;
  m.input_shape = {2, 2};
  m.layers.push_back({FlattenLayer{}});
  Tensor out = forward_float(m, Tensor({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(out.shape, (std::vector<size_t>{4}));
  EXPECT_EQ(out.data, (std::vector<double>{1, 2, 3, 4}));

  ModelGraph id;
  id.input_shape = {3};
  LinearLayer l;
  l.in = l.out = 3;
  l.W = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  l.b = {0, 0, 0};
  id.layers.push_back({l});
  out = forward_float(id, Tensor({3}, {0.5, -1.25, 2.0}));
  EXPECT_EQ(out.data, (std::vector<double>{0.5, -1.25, 2.0}));
}

// Independent re-computation: plain loops plus the normalization formula
// written out directly, no calls into the layer engine.
Tensor mlp3_oracle(const ModelGraph& m, const Tensor& x) {
  std::vector<double> cur = x.data;
  for (const LayerSpec& l : m.layers) {
    if (const auto* lin = std::get_if<LinearLayer>(&l.node)) {
      std::vector<double> next(lin->out);
      for (size_t o = 0; o < lin->out; ++o) {
        next[o] = lin->b[o];
        for (size_t i = 0; i < lin->in; ++i) next[o] += lin->W[o * lin->in + i] * cur[i];
      }
      cur = next;
    } else {
      const HerPNParams& p = std::get<HerPNLayer>(l.node).params;
      for (size_t c = 0; c < cur.size(); ++c) {
        double x1 = cur[c];
        double acc = 0.0;
        double h[3] = {1.0, x1, (x1 * x1 - 1.0) / std::sqrt(2.0)};
        for (unsigned i = 0; i <= 2; ++i)
          acc += p.coeffs[i] * (h[i] - p.mean_at(i, c)) / std::sqrt(p.var_at(i, c) + p.eps);
        cur[c] = p.gamma[c] * acc + p.beta[c];
      }
    }
  }
  return Tensor({cur.size()}, cur);
}

TEST(ForwardFloat, GoldenMlp3) {
  ModelGraph m = build_mlp3(1);
  Tensor in({2}, {0.35, -0.8});
  Tensor out = forward_float(m, in);
  Tensor oracle = mlp3_oracle(m, in);
  ASSERT_EQ(out.size(), 2u);
  for (size_t i = 0; i < 2; ++i) EXPECT_NEAR(out.data[i], oracle.data[i], 1e-12);
  // Frozen from this engine; guards regressions in any layer on the path.
  EXPECT_NEAR(out.data[0], 0.057609629512646567, 1e-15);
  EXPECT_NEAR(out.data[1], 0.10207837855152212, 1e-15);
}

TEST(ForwardFloat, GoldenCnn6) {
  ModelGraph c = build_cnn6(2);
  Tensor x({1, 8, 8});
  Rng rng(99);
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  Tensor out = forward_float(c, x);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_NEAR(out.data[0], 0.034965121185647735, 1e-15);
  EXPECT_NEAR(out.data[1], -0.0031507155799443375, 1e-15);
  EXPECT_NEAR(out.data[2], 0.08550472450165833, 1e-15);
  EXPECT_NEAR(out.data[3], 0.029341096134114442, 1e-15);
}

TEST(ForwardFloat, ConvMatchesPaddedOracle) {
  Rng rng(5);
  Conv2dLayer cv = detail::seeded_conv(2, 3, 3, 1, 1, rng);
  Tensor x({2, 5, 5});
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  ModelGraph m;
  m.input_shape = {2, 5, 5};
  m.layers.push_back({cv});
  Tensor got = forward_float(m, x);
  // Oracle: explicit zero-padded buffer, then valid correlation.
  size_t H = 7, W = 7;
  std::vector<double> padded(2 * H * W, 0.0);
  for (size_t c = 0; c < 2; ++c)
    for (size_t y = 0; y < 5; ++y)
      for (size_t xx = 0; xx < 5; ++xx)
        padded[(c * H + y + 1) * W + xx + 1] = x.data[(c * 5 + y) * 5 + xx];
  for (size_t oc = 0; oc < 3; ++oc)
    for (size_t oy = 0; oy < 5; ++oy)
      for (size_t ox = 0; ox < 5; ++ox) {
        double acc = cv.b[oc];
        for (size_t ic = 0; ic < 2; ++ic)
          for (size_t ky = 0; ky < 3; ++ky)
            for (size_t kx = 0; kx < 3; ++kx)
              acc += cv.W[((oc * 2 + ic) * 3 + ky) * 3 + kx] *
                     padded[(ic * H + oy + ky) * W + ox + kx];
        EXPECT_NEAR(got.data[(oc * 5 + oy) * 5 + ox], acc, 1e-12);
      }
}

TEST(ForwardFloat, Pooling) {
  ModelGraph m;
  m.input_shape = {1, 4, 4};
  m.layers.push_back({AvgPoolLayer{2}});
  Tensor x({1, 4, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
  Tensor out = forward_float(m, x);
  EXPECT_EQ(out.data, (std::vector<double>{3.5, 5.5, 11.5, 13.5}));
  m.layers[0] = {MaxPoolLayer{2}};
  out = forward_float(m, x);
  EXPECT_EQ(out.data, (std::vector<double>{6, 8, 14, 16}));
}

TEST(ForwardFloat, HermiteActIsRawSeries) {
  ModelGraph m;
  m.input_shape = {3};
  m.layers.push_back({HermiteActLayer{2}});
  Tensor out = forward_float(m, Tensor({3}, {0.0, 1.0, -1.0}));
  HermiteSeries g = HermiteSeries::relu(2);
  EXPECT_DOUBLE_EQ(out.data[0], g.eval(0.0));
  EXPECT_DOUBLE_EQ(out.data[1], g.eval(1.0));
  EXPECT_DOUBLE_EQ(out.data[2], g.eval(-1.0));
}

TEST(ForwardFloat, ResidualAddsBranch) {
  ModelGraph m = build_residual_unit(ResidualVariant::herpn, 3);
  const auto& rb = std::get<ResidualBlock>(m.layers[0].node);
  ModelGraph branch;
  branch.input_shape = m.input_shape;
  branch.layers = rb.branch;
  Tensor x({4, 6, 6});
  Rng rng(8);
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  Tensor whole = forward_float(m, x);
  Tensor br = forward_float(branch, x);
  for (size_t k = 0; k < whole.size(); ++k)
    EXPECT_NEAR(whole.data[k], x.data[k] + br.data[k], 1e-12);
}

TEST(ForwardFloat, StandardResidualAppliesPostAddRelu) {
  ModelGraph m = build_residual_unit(ResidualVariant::standard, 4);
  Tensor x({4, 6, 6});
  Rng rng(9);
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  Tensor out = forward_float(m, x);
  for (double v : out.data) EXPECT_GE(v, 0.0);
}

TEST(ForwardFloat, PaHerpnIdentityReducesToConvChain) {
  // Coefficient hook set to the identity map {0, 1, 0} with identity
  // statistics: the folded quadratic is (c2, c1, c0) = (0, 1, 0), so the block
  // must equal x + conv2(conv1(x)).
  ModelGraph m = build_residual_unit(ResidualVariant::pa_herpn, 11);
  auto& rb = std::get<ResidualBlock>(m.layers[0].node);
  for (LayerSpec& l : rb.branch)
    if (auto* hp = std::get_if<HerPNLayer>(&l.node)) {
      HerPNParams id = make_herpn(4);
      id.coeffs = {0.0, 1.0, 0.0};
      id.training = false;
      id.stats_populated = true;
      id.eps = 0.0;
      hp->params = id;
    }
  FoldedQuadratic f = fold_to_quadratic(std::get<HerPNLayer>(rb.branch[0].node).params);
  EXPECT_DOUBLE_EQ(f.c2[0], 0.0);
  EXPECT_DOUBLE_EQ(f.c1[0], 1.0);
  EXPECT_DOUBLE_EQ(f.c0[0], 0.0);
  ModelGraph convs;
  convs.input_shape = m.input_shape;
  convs.layers.push_back(rb.branch[1]);
  convs.layers.push_back(rb.branch[3]);
  Tensor x({4, 6, 6});
  Rng rng(12);
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  Tensor whole = forward_float(m, x);
  Tensor chain = forward_float(convs, x);
  for (size_t k = 0; k < whole.size(); ++k)
    EXPECT_NEAR(whole.data[k], x.data[k] + chain.data[k], 1e-12);
}

TEST(Quantize, FrozenEncodings) {
  ModelGraph m;
  m.input_shape = {1};
  LinearLayer l;
  l.in = l.out = 1;
  l.W = {1.5};
  l.b = {0.0};
  m.layers.push_back({l});
  HerPNParams hp = make_herpn(1);
  hp.training = false;
  hp.stats_populated = true;
  hp.eps = 0.0;
  m.layers.push_back({HerPNLayer{hp}});
  FixedPointCodec codec{FieldParams{}};
  QuantizedModel q = quantize(m, codec);
  EXPECT_EQ(std::get<QLinear>(q.layers[0].node).W[0].raw(), 3072u);  // 1.5 * 2^11
  EXPECT_EQ(std::get<QActivation>(q.layers[1].node).c1[0].raw(), 1024u);  // 0.5 * 2^11
}

TEST(Quantize, RejectsNonProtocolLayers) {
  auto expect_reject = [](LayerSpec layer, const char* needle, std::vector<size_t> shape) {
    ModelGraph m;
    m.input_shape = std::move(shape);
    m.layers.push_back(std::move(layer));
    FixedPointCodec codec{FieldParams{}};
    try {
      quantize(m, codec);
      FAIL() << "expected rejection for " << needle;
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos) << e.what();
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_reject({ReLULayer{}}, "ReLU", {4});
  BatchNormParams bn = make_batchnorm(4);
  bn.training = false;
  bn.stats_populated = true;
  expect_reject({BatchNormLayer{bn}}, "BatchNorm", {4});
  expect_reject({MaxPoolLayer{2}}, "max pooling", {1, 4, 4});
  expect_reject({HermiteActLayer{2}}, "Hermite", {4});
  ModelGraph res = build_residual_unit(ResidualVariant::standard);
  FixedPointCodec codec{FieldParams{}};
  EXPECT_THROW(quantize(res, codec), std::invalid_argument);
}

TEST(Quantize, RoundtripParameterError) {
  ModelGraph m = build_mlp3(21);
  FixedPointCodec codec{FieldParams{}};
  QuantizedModel q = quantize(m, codec);
  const auto& lf = std::get<LinearLayer>(m.layers[0].node);
  const auto& lq = std::get<QLinear>(q.layers[0].node);
  double worst = 0.0;
  for (size_t k = 0; k < lf.W.size(); ++k)
    worst = std::max(worst, std::abs(codec.decode(lq.W[k]) - lf.W[k]));
  for (size_t k = 0; k < lf.b.size(); ++k)
    worst = std::max(worst, std::abs(codec.decode_scale(lq.b[k], 2) - lf.b[k]));
  EXPECT_LE(worst, std::pow(2.0, -12.0));
}

TEST(Quantize, RejectsOutOfRangeParameters) {
  ModelGraph m;
  m.input_shape = {1};
  LinearLayer l;
  l.in = l.out = 1;
  l.W = {2.0e6};  // outside the 2^20 safe range
  l.b = {0.0};
  m.layers.push_back({l});
  FixedPointCodec codec{FieldParams{}};
  EXPECT_THROW(quantize(m, codec), std::range_error);
}

TEST(ForwardFixed, IdentityLinearRoundtrip) {
  ModelGraph m;
  m.input_shape = {3};
  LinearLayer l;
  l.in = l.out = 3;
  l.W = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  l.b = {0, 0, 0};
  m.layers.push_back({l});
  FixedPointCodec codec{FieldParams{}};
  QuantizedModel q = quantize(m, codec);
  Tensor x({3}, {0.123, -2.5, 3.75});
  FieldTensor out = forward_fixed(q, encode_tensor(x, codec), codec);
  Tensor dec = decode_tensor(out, codec);
  for (size_t k = 0; k < 3; ++k) EXPECT_NEAR(dec.data[k], x.data[k], std::pow(2.0, -11.0));
}

TEST(ForwardFixed, Mlp3WithinBudgetOfFloat) {
  ModelGraph m = build_mlp3(1);
  FixedPointCodec codec{FieldParams{}};
  QuantizedModel q = quantize(m, codec);
  Rng rng(77);
  for (int t = 0; t < 100; ++t) {
    Tensor x({2}, {rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)});
    Tensor ref = forward_float(m, x);
    Tensor got = decode_tensor(forward_fixed(q, encode_tensor(x, codec), codec), codec);
    for (size_t k = 0; k < ref.size(); ++k) ASSERT_NEAR(got.data[k], ref.data[k], 0.01);
  }
}

TEST(ForwardFixed, Cnn6WithinBudgetOfFloat) {
  ModelGraph m = build_cnn6(2);
  FixedPointCodec codec{FieldParams{}};
  QuantizedModel q = quantize(m, codec);
  Rng rng(78);
  for (int t = 0; t < 10; ++t) {
    Tensor x({1, 8, 8});
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
    Tensor ref = forward_float(m, x);
    Tensor got = decode_tensor(forward_fixed(q, encode_tensor(x, codec), codec), codec);
    for (size_t k = 0; k < ref.size(); ++k) ASSERT_NEAR(got.data[k], ref.data[k], 0.01);
  }
}

TEST(ForwardFixed, ResidualUnitWithinBudget) {
  ModelGraph m = build_residual_unit(ResidualVariant::herpn, 31);
  FixedPointCodec codec{FieldParams{}};
  QuantizedModel q = quantize(m, codec);
  Rng rng(32);
  Tensor x({4, 6, 6});
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  Tensor ref = forward_float(m, x);
  Tensor got = decode_tensor(forward_fixed(q, encode_tensor(x, codec), codec), codec);
  for (size_t k = 0; k < ref.size(); ++k) ASSERT_NEAR(got.data[k], ref.data[k], 0.01);
}

TEST(ForwardFixed, OverflowTrips) {
  ModelGraph m;
  m.input_shape = {1};
  LinearLayer l;
  l.in = l.out = 1;
  l.W = {33554432.0};  // 2^25; encodable only with a widened safe range
  l.b = {0.0};
  m.layers.push_back({l});
  FixedPointCodec codec(FieldParams{}, 1ULL << 26);
  QuantizedModel q = quantize(m, codec);
  Tensor x({1}, {1.0});
  EXPECT_THROW(forward_fixed(q, encode_tensor(x, codec), codec), std::overflow_error);
}

TEST(ForwardFixed, TruncationEventCounts) {
  FixedPointCodec codec{FieldParams{}};
  EXPECT_EQ(count_truncation_events(quantize(build_mlp3(), codec)), 98u);
  EXPECT_EQ(count_truncation_events(quantize(build_cnn6(), codec)), 1252u);
}

ModelGraph vgg_style_pair() {
  Rng rng(61);
  ModelGraph m;
  m.input_shape = {2, 4, 4};
  for (int rep = 0; rep < 2; ++rep) {
    m.layers.push_back({detail::seeded_conv(2, 2, 3, 1, 1, rng)});
    BatchNormParams bn = make_batchnorm(2);
    bn.training = false;
    bn.stats_populated = true;
    m.layers.push_back({BatchNormLayer{bn}});
    m.layers.push_back({ReLULayer{}});
  }
  return m;
}

TEST(Herpnize, VggPatternCollapses) {
  ModelGraph out = herpnize(vgg_style_pair());
  ASSERT_EQ(out.layers.size(), 4u);
  EXPECT_TRUE(std::holds_alternative<Conv2dLayer>(out.layers[0].node));
  EXPECT_TRUE(std::holds_alternative<HerPNLayer>(out.layers[1].node));
  EXPECT_TRUE(std::holds_alternative<Conv2dLayer>(out.layers[2].node));
  EXPECT_TRUE(std::holds_alternative<HerPNLayer>(out.layers[3].node));
  EXPECT_EQ(count_relu_layers(out), 0u);
  EXPECT_EQ(count_batchnorm_layers(out), 0u);
}

TEST(Herpnize, ReluBnOrderAlsoCollapses) {
  ModelGraph m;
  m.input_shape = {4};
  Rng rng(62);
  m.layers.push_back({detail::seeded_linear(4, 4, rng)});
  m.layers.push_back({ReLULayer{}});
  BatchNormParams bn = make_batchnorm(4);
  m.layers.push_back({BatchNormLayer{bn}});
  ModelGraph out = herpnize(m);
  ASSERT_EQ(out.layers.size(), 2u);
  EXPECT_TRUE(std::holds_alternative<HerPNLayer>(out.layers[1].node));
}

TEST(Herpnize, LoneReluRejectedWithIndex) {
  ModelGraph m;
  m.input_shape = {4};
  Rng rng(63);
  m.layers.push_back({detail::seeded_linear(4, 4, rng)});
  m.layers.push_back({ReLULayer{}});
  try {
    herpnize(m);
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
}

TEST(Herpnize, PreActivationBlockBecomesPaHerpn) {
  Rng rng(64);
  ModelGraph m;
  m.input_shape = {4, 6, 6};
  ResidualBlock rb;
  rb.variant = ResidualVariant::standard;
  for (int rep = 0; rep < 2; ++rep) {
    BatchNormParams bn = make_batchnorm(4);
    rb.branch.push_back({BatchNormLayer{bn}});
    rb.branch.push_back({ReLULayer{}});
    rb.branch.push_back({detail::seeded_conv(4, 4, 3, 1, 1, rng)});
  }
  m.layers.push_back({rb});
  ModelGraph out = herpnize(m);
  const auto& orb = std::get<ResidualBlock>(out.layers[0].node);
  EXPECT_EQ(orb.variant, ResidualVariant::pa_herpn);
  ASSERT_EQ(orb.branch.size(), 4u);
  EXPECT_TRUE(std::holds_alternative<HerPNLayer>(orb.branch[0].node));
  EXPECT_TRUE(std::holds_alternative<Conv2dLayer>(orb.branch[1].node));
  EXPECT_TRUE(std::holds_alternative<HerPNLayer>(orb.branch[2].node));
  EXPECT_TRUE(std::holds_alternative<Conv2dLayer>(orb.branch[3].node));
}

TEST(Herpnize, PostActivationBlockStrictVsSurgery) {
  ModelGraph m = build_residual_unit(ResidualVariant::standard, 65);
  EXPECT_THROW(herpnize(m, HerpnizeMode::strict), std::invalid_argument);
  ModelGraph out = herpnize(m, HerpnizeMode::surgery);
  const auto& orb = std::get<ResidualBlock>(out.layers[0].node);
  EXPECT_EQ(orb.variant, ResidualVariant::herpn);
  EXPECT_FALSE(orb.post_add_relu);
  ASSERT_EQ(orb.branch.size(), 4u);
  EXPECT_TRUE(std::holds_alternative<Conv2dLayer>(orb.branch[0].node));
  EXPECT_TRUE(std::holds_alternative<HerPNLayer>(orb.branch[1].node));
  EXPECT_TRUE(std::holds_alternative<Conv2dLayer>(orb.branch[2].node));
  EXPECT_TRUE(std::holds_alternative<HerPNLayer>(orb.branch[3].node));
  EXPECT_EQ(count_relu_layers(out), 0u);
  EXPECT_EQ(count_batchnorm_layers(out), 0u);
}

TEST(ModelIo, FloatRoundtripPreservesInference) {
  ModelGraph m = build_mlp3(1);
  std::string path = temp_path("qpi_model_mlp3.json");
  save_model(m, path);
  EXPECT_TRUE(std::filesystem::exists(path + ".bin"));  // 32-entry W goes to the sidecar
  ModelGraph back = load_model(path);
  EXPECT_EQ(back.name, m.name);
  Tensor x({2}, {0.35, -0.8});
  Tensor a = forward_float(m, x), b = forward_float(back, x);
  for (size_t k = 0; k < a.size(); ++k) EXPECT_DOUBLE_EQ(a.data[k], b.data[k]);
}

TEST(ModelIo, QuantizedRoundtripPreservesHashAndOutput) {
  FixedPointCodec codec{FieldParams{}};
  QuantizedModel q = quantize(build_cnn6(2), codec);
  std::string path = temp_path("qpi_model_cnn6q.json");
  save_quantized(q, path);
  QuantizedModel back = load_quantized(path);
  EXPECT_EQ(model_hash(q), model_hash(back));
  Tensor x({1, 8, 8});
  Rng rng(99);
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  FieldTensor fa = forward_fixed(q, encode_tensor(x, codec), codec);
  FieldTensor fb = forward_fixed(back, encode_tensor(x, codec), codec);
  for (size_t k = 0; k < fa.size(); ++k) EXPECT_EQ(fa.data[k].raw(), fb.data[k].raw());
}

TEST(ModelIo, HashTracksParameters) {
  FixedPointCodec codec{FieldParams{}};
  QuantizedModel a = quantize(build_mlp3(1), codec);
  QuantizedModel b = quantize(build_mlp3(1), codec);
  EXPECT_EQ(model_hash(a), model_hash(b));
  std::get<QLinear>(b.layers[0].node).W[0] += FieldElement::from_raw(1, b.field.p);
  EXPECT_NE(model_hash(a), model_hash(b));
}

TEST(ModelIo, RejectsCorruptFiles) {
  std::string path = temp_path("qpi_model_bad.json");
  {
    std::ofstream f(path);
    f << "{ not json";
  }
  EXPECT_THROW(load_model(path), std::runtime_error);
  FixedPointCodec codec{FieldParams{}};
  QuantizedModel q = quantize(build_mlp3(1), codec);
  std::string qpath = temp_path("qpi_model_kind.json");
  save_quantized(q, qpath);
  EXPECT_THROW(load_model(qpath), std::runtime_error);  // kind mismatch
}

TEST(ModelIo, TensorAndGoldenFiles) {
  Tensor t({2, 2}, {0.5, -1.5, 3.25, 1e-9});
  std::string path = temp_path("qpi_tensor.txt");
  save_tensor_text(t, path);
  Tensor back = load_tensor_text(path);
  EXPECT_EQ(back.shape, t.shape);
  for (size_t k = 0; k < t.size(); ++k) EXPECT_DOUBLE_EQ(back.data[k], t.data[k]);

  GoldenVector g{Tensor({2}, {0.35, -0.8}), Tensor({2}, {0.0576, 0.102}), 0.01};
  std::string gpath = temp_path("qpi_golden.txt");
  save_golden(g, gpath);
  GoldenVector gb = load_golden(gpath);
  EXPECT_EQ(gb.input.shape, g.input.shape);
  EXPECT_DOUBLE_EQ(gb.tolerance, 0.01);
  EXPECT_DOUBLE_EQ(gb.output.data[1], 0.102);
}

}  // namespace
