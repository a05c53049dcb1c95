#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "qpi/costmodel.hpp"

using namespace qpi;

TEST(CostTable, DefaultsAndValidation) {
  CostTable t;
  EXPECT_EQ(t.at(ActKind::poly, Phase::offline).time_us, 2.80);
  EXPECT_EQ(t.at(ActKind::poly, Phase::online).time_us, 1.20);
  EXPECT_EQ(t.at(ActKind::poly, Phase::offline).comm_kb, 0.192);
  EXPECT_EQ(t.at(ActKind::poly, Phase::online).comm_kb, 0.036);
  EXPECT_EQ(t.at(ActKind::relu, Phase::offline).time_us, 60.60);
  EXPECT_EQ(t.at(ActKind::relu, Phase::online).time_us, 20.22);
  EXPECT_EQ(t.at(ActKind::relu, Phase::offline).comm_kb, 19.088);
  EXPECT_EQ(t.at(ActKind::relu, Phase::online).comm_kb, 1.184);
  t.validate();
  t.poly_online.comm_kb = 0.0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(ArchProfiles, ActivationLayerCounts) {
  EXPECT_EQ(activation_counts("resnet32").layer_count(), 31u);
  EXPECT_EQ(activation_counts("resnet32-cifar").layer_count(), 31u);
  EXPECT_EQ(activation_counts("resnet32-tiny").layer_count(), 31u);
  EXPECT_EQ(activation_counts("resnet18").layer_count(), 17u);
  EXPECT_EQ(activation_counts("pa-resnet32").layer_count(), 31u);
  EXPECT_EQ(activation_counts("pa-resnet18").layer_count(), 17u);
  EXPECT_EQ(activation_counts("vgg16").layer_count(), 15u);
  EXPECT_THROW(activation_counts("alexnet"), std::invalid_argument);
}

TEST(ArchProfiles, ResNet32ElementArithmetic) {
  ArchProfile p = activation_counts("resnet32");
  // Stem activation at 16x32x32, then five two-activation blocks per stage at
  // 16x32x32, 32x16x16, 64x8x8.
  EXPECT_EQ(p.act_elems[0], 16u * 32 * 32);
  for (int i = 1; i <= 10; ++i) EXPECT_EQ(p.act_elems[i], 16384u);
  for (int i = 11; i <= 20; ++i) EXPECT_EQ(p.act_elems[i], 8192u);
  for (int i = 21; i <= 30; ++i) EXPECT_EQ(p.act_elems[i], 4096u);
  EXPECT_EQ(p.total_elements(), 16384u + 10 * 16384 + 10 * 8192 + 10 * 4096);
  // Doubling the input side quadruples every activation.
  ArchProfile tiny = activation_counts("resnet32-tiny");
  for (std::size_t i = 0; i < p.layer_count(); ++i)
    EXPECT_EQ(tiny.act_elems[i], 4 * p.act_elems[i]);
}

TEST(ArchProfiles, PreActivationLayout) {
  // Same layer count as the post-activation net, but no stem activation and a
  // final one at the last feature size; downsampling blocks pre-activate at
  // the previous stage's size.
  ArchProfile p = activation_counts("pa-resnet32");
  EXPECT_EQ(p.act_elems.front(), 16u * 32 * 32);
  EXPECT_EQ(p.act_elems.back(), 64u * 8 * 8);
  EXPECT_EQ(p.act_elems[10], 16u * 32 * 32);  // stage-2 entry, pre-downsample size
  EXPECT_EQ(p.act_elems[11], 32u * 16 * 16);
}

TEST(ArchProfiles, Vgg16Elements) {
  ArchProfile p = activation_counts("vgg16");
  EXPECT_EQ(p.act_elems[0], 64u * 32 * 32);
  EXPECT_EQ(p.act_elems[12], 512u * 2 * 2);
  EXPECT_EQ(p.act_elems[13], 4096u);
  EXPECT_EQ(p.act_elems[14], 4096u);
}

TEST(ArchProfiles, FromGraphSingleActivation) {
  ModelGraph m;
  m.name = "one-act";
  m.input_shape = {8, 4, 4};
  m.layers.push_back({HerPNLayer{make_herpn(8)}});
  ArchProfile p = activation_counts(m);
  ASSERT_EQ(p.layer_count(), 1u);
  EXPECT_EQ(p.act_elems[0], 128u);
}

TEST(ArchProfiles, Mlp3CountsEqualHiddenWidths) {
  ArchProfile p = activation_counts(build_mlp3());
  ASSERT_EQ(p.layer_count(), 2u);
  EXPECT_EQ(p.act_elems[0], 16u);
  EXPECT_EQ(p.act_elems[1], 16u);
}

TEST(ArchProfiles, QuantizedGraphAgreesWithFloatGraph) {
  ModelGraph m = build_cnn6();
  QuantizedModel qm = quantize(m, FixedPointCodec(FieldParams{}));
  ArchProfile a = activation_counts(m);
  ArchProfile b = activation_counts(qm);
  EXPECT_EQ(a.act_elems, b.act_elems);
  ASSERT_EQ(a.layer_count(), 2u);
  EXPECT_EQ(a.act_elems[0], 256u);
  EXPECT_EQ(a.act_elems[1], 128u);
}

TEST(ArchProfiles, ResidualPostAddReluCounted) {
  ModelGraph m = build_residual_unit(ResidualVariant::standard, 3);
  ArchProfile p = activation_counts(m);
  // Standard block: one in-branch activation plus the post-add one.
  ASSERT_GE(p.layer_count(), 2u);
  EXPECT_EQ(p.act_elems.back(), p.act_elems.front());
}

TEST(Estimate, RatiosMatchTableQuotients) {
  CostTable t;
  for (const char* arch : {"resnet32", "vgg16-tiny", "pa-resnet18"}) {
    ArchProfile p = activation_counts(arch);
    PlanComparison c = estimate_plans(p, t, Plan::all_bt());
    EXPECT_NEAR(c.online_comm_ratio, 1.184 / 0.036, 1e-9) << arch;
    EXPECT_NEAR(c.online_time_ratio, 20.22 / 1.20, 1e-9) << arch;
    EXPECT_NEAR(c.online_time_ratio, 16.85, 1e-9) << arch;
    EXPECT_NEAR(c.online_comm_ratio, 32.9, 0.02) << arch;
    EXPECT_NEAR(c.offline_time_ratio, 60.60 / 2.80, 1e-9) << arch;
    EXPECT_NEAR(c.offline_comm_ratio, 19.088 / 0.192, 1e-9) << arch;
  }
}

TEST(Estimate, AllPolyOnlineCommIsLinear) {
  CostTable t;
  ArchProfile one;
  one.name = "unit";
  one.act_elems = {1000};
  CostEstimate e = estimate(one, t, Plan::all_bt());
  EXPECT_EQ(e.online.comm_kb, 1000.0 * 0.036);
  EXPECT_EQ(e.online.time_us, 1000.0 * 1.20);
  // n-fold profile scales n-fold.
  ArchProfile many;
  many.name = "many";
  many.act_elems.assign(8, 1000);
  CostEstimate m = estimate(many, t, Plan::all_bt());
  EXPECT_NEAR(m.online.comm_kb, 8 * e.online.comm_kb, 1e-9);
  EXPECT_NEAR(m.offline.time_us, 8 * e.offline.time_us, 1e-9);
}

TEST(Estimate, MixedPlansAreBracketedAndMonotone) {
  CostTable t;
  ArchProfile p = activation_counts("resnet32");
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::set<std::size_t> gc;
    for (std::size_t i = 0; i < p.layer_count(); ++i)
      if (rng.uniform_below(2)) gc.insert(i);
    if (gc.empty()) gc.insert(rng.index(p.layer_count()));
    PlanComparison c = estimate_plans(p, t, Plan::mixed(gc));
    auto leq = [](const PhaseCost& a, const PhaseCost& b) {
      return a.time_us <= b.time_us && a.comm_kb <= b.comm_kb;
    };
    EXPECT_TRUE(leq(c.all_bt.online, c.mixed.online) && leq(c.mixed.online, c.all_gc.online));
    EXPECT_TRUE(leq(c.all_bt.offline, c.mixed.offline) && leq(c.mixed.offline, c.all_gc.offline));
    // Moving any one layer from GC to BT strictly improves every metric.
    std::size_t victim = *gc.begin();
    std::set<std::size_t> fewer = gc;
    fewer.erase(victim);
    CostEstimate before = estimate(p, t, Plan::mixed(gc));
    CostEstimate after = estimate(p, t, Plan::mixed(fewer));
    EXPECT_LT(after.online.time_us, before.online.time_us);
    EXPECT_LT(after.online.comm_kb, before.online.comm_kb);
    EXPECT_LT(after.offline.time_us, before.offline.time_us);
    EXPECT_LT(after.offline.comm_kb, before.offline.comm_kb);
  }
}

TEST(Estimate, PlanOutsideProfileRejected) {
  ArchProfile p = activation_counts("vgg16");
  Plan bad;
  bad.gc_layers.insert(p.layer_count());
  EXPECT_THROW(estimate(p, CostTable{}, bad), std::invalid_argument);
}

TEST(Estimate, EmptyProfileIsZero) {
  ArchProfile p;
  p.name = "empty";
  CostEstimate e = estimate(p, CostTable{}, Plan::all_bt());
  EXPECT_EQ(e.online.comm_kb, 0.0);
  EXPECT_EQ(e.offline.time_us, 0.0);
  EXPECT_EQ(e.gc_elements + e.bt_elements, 0u);
}

TEST(TableFile, RoundtripAndRejection) {
  CostTable t;
  t.relu_online.comm_kb = 2.5;
  std::istringstream in(format_cost_table(t));
  CostTable back = parse_cost_table(in);
  EXPECT_EQ(back.relu_online.comm_kb, 2.5);
  EXPECT_EQ(back.poly_offline.time_us, t.poly_offline.time_us);

  auto reject = [](const std::string& text) {
    std::istringstream s(text);
    EXPECT_THROW(parse_cost_table(s), std::runtime_error) << text;
  };
  reject("poly offline 2.8 0.192\n");  // missing entries
  reject(
      "poly offline 2.8 0.192\npoly online 1.2 0.036\nrelu offline 60.6 19.088\n"
      "relu online 20.22 1.184\npoly online 9 9\n");  // duplicate
  reject(
      "sigmoid offline 2.8 0.192\npoly online 1.2 0.036\nrelu offline 60.6 19.088\n"
      "relu online 20.22 1.184\n");  // unknown kind
  reject(
      "poly offline 2.8\npoly online 1.2 0.036\nrelu offline 60.6 19.088\n"
      "relu online 20.22 1.184\n");  // malformed line
  reject(
      "poly offline 2.8 0.192 extra\npoly online 1.2 0.036\nrelu offline 60.6 19.088\n"
      "relu online 20.22 1.184\n");  // trailing tokens
  std::istringstream nonpos(
      "poly offline -2.8 0.192\npoly online 1.2 0.036\nrelu offline 60.6 19.088\n"
      "relu online 20.22 1.184\n");
  EXPECT_THROW(parse_cost_table(nonpos), std::invalid_argument);

  std::istringstream commented(
      "# per-op costs\n\npoly offline 2.8 0.192  # poly setup\npoly online 1.2 0.036\n"
      "relu offline 60.6 19.088\nrelu online 20.22 1.184\n");
  CostTable ok = parse_cost_table(commented);
  EXPECT_EQ(ok.poly_offline.comm_kb, 0.192);
}

TEST(Measured, LoopbackMatchesWireFormula) {
  ModelGraph m = build_mlp3();
  QuantizedModel qm = quantize(m, FixedPointCodec(FieldParams{}));
  DealtMaterial dm = deal_offline(qm, 7);
  Tensor in({2});
  in.data = {0.4, -0.9};
  LoopbackResult res = loopback_run(qm, dm.client, dm.server, in);
  ASSERT_TRUE(res.client.ok && res.server.ok);
  MeasuredComparison c =
      compare_with_measured(qm, res.client_transcript, res.server_transcript);
  EXPECT_TRUE(c.wire_exact);
  EXPECT_EQ(c.measured_client_bytes, c.analytic_client_bytes);
  EXPECT_EQ(c.measured_server_bytes, c.analytic_server_bytes);
  EXPECT_EQ(c.table_online_kb, 32.0 * 0.036);  // two 16-wide activations
  EXPECT_NE(c.caveat.find("different framing"), std::string::npos);
  std::string report = format_measured_report(c);
  EXPECT_NE(report.find("exact match"), std::string::npos);

  Transcript not_server = res.client_transcript;
  EXPECT_THROW(compare_with_measured(qm, res.client_transcript, not_server),
               std::invalid_argument);
}

TEST(Measured, EmptyModelZeroEstimate) {
  QuantizedModel qm;
  qm.name = "empty";
  qm.input_shape = {3};
  qm.field = FieldParams{};
  DealtMaterial dm = deal_offline(qm, 1);
  Tensor in({3});
  in.data = {0.0, 0.0, 0.0};
  LoopbackResult res = loopback_run(qm, dm.client, dm.server, in);
  ASSERT_TRUE(res.client.ok && res.server.ok);
  MeasuredComparison c =
      compare_with_measured(qm, res.client_transcript, res.server_transcript);
  EXPECT_TRUE(c.wire_exact);
  EXPECT_EQ(c.table_online_kb, 0.0);
}

TEST(Reports, EstimateTableShape) {
  PlanComparison c = estimate_plans(activation_counts("resnet32"), CostTable{}, Plan::all_bt());
  std::string r = format_estimate_report(c);
  EXPECT_NE(r.find("all-gc"), std::string::npos);
  EXPECT_NE(r.find("all-bt"), std::string::npos);
  EXPECT_NE(r.find("HE layers excluded"), std::string::npos);
  EXPECT_NE(r.find("ratios"), std::string::npos);
}
