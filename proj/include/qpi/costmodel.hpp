#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qpi/model.hpp"
#include "qpi/protocol.hpp"

namespace qpi {

// Analytic activation-cost estimator. Per-operation constants are exogenous
// measurements (amortized Delphi figures for ResNet32); everything derived
// here is ratio structure and linear extrapolation, never a latency claim.
// Linear-layer (HE) costs are out of scope and excluded from every estimate.

enum class ActKind { poly, relu };
enum class Phase { offline, online };

inline const char* act_kind_name(ActKind k) { return k == ActKind::poly ? "poly" : "relu"; }
inline const char* phase_name(Phase p) { return p == Phase::offline ? "offline" : "online"; }

struct OpCost {
  double time_us = 0.0;
  double comm_kb = 0.0;
};

/// Measured per-operation activation costs by kind and phase.
struct CostTable {
  OpCost poly_offline{2.80, 0.192};
  OpCost poly_online{1.20, 0.036};
  OpCost relu_offline{60.60, 19.088};
  OpCost relu_online{20.22, 1.184};

  const OpCost& at(ActKind k, Phase p) const {
    if (k == ActKind::poly) return p == Phase::offline ? poly_offline : poly_online;
    return p == Phase::offline ? relu_offline : relu_online;
  }

  OpCost& at(ActKind k, Phase p) {
    return const_cast<OpCost&>(static_cast<const CostTable*>(this)->at(k, p));
  }

  void validate() const {
    for (ActKind k : {ActKind::poly, ActKind::relu})
      for (Phase p : {Phase::offline, Phase::online}) {
        const OpCost& c = at(k, p);
        if (!(c.time_us > 0.0) || !(c.comm_kb > 0.0))
          throw std::invalid_argument(std::string("cost table: non-positive entry for ") +
                                      act_kind_name(k) + " " + phase_name(p));
      }
  }
};

/// Activation structure of a network: one entry per activation layer, holding
/// its element count, in evaluation order.
struct ArchProfile {
  std::string name;
  std::vector<u64> act_elems;

  std::size_t layer_count() const { return act_elems.size(); }

  u64 total_elements() const {
    u64 n = 0;
    for (u64 e : act_elems) n += e;
    return n;
  }
};

namespace detail {

inline void count_graph_acts(const std::vector<LayerSpec>& layers, std::vector<size_t>& shape,
                             std::size_t& idx, std::vector<u64>& out) {
  for (const LayerSpec& l : layers) {
    if (std::holds_alternative<ReLULayer>(l.node) || std::holds_alternative<HerPNLayer>(l.node) ||
        std::holds_alternative<HermiteActLayer>(l.node)) {
      out.push_back(shape_size(shape));
    } else if (const auto* rb = std::get_if<ResidualBlock>(&l.node)) {
      std::vector<size_t> branch = shape;
      std::size_t inner = idx + 1;
      count_graph_acts(rb->branch, branch, inner, out);
      if (rb->post_add_relu) out.push_back(shape_size(shape));
    }
    shape = layer_output_shape(l, shape, idx++);
  }
}

inline void count_qmodel_acts(const std::vector<QLayer>& layers, std::vector<size_t>& shape,
                              std::vector<u64>& out) {
  for (const QLayer& l : layers) {
    if (std::holds_alternative<QActivation>(l.node)) {
      out.push_back(shape_size(shape));
    } else if (const auto* rb = std::get_if<QResidual>(&l.node)) {
      std::vector<size_t> branch = shape;
      count_qmodel_acts(rb->branch, branch, out);
      continue;
    }
    shape = qlayer_output_shape(l, shape, 0);
  }
}

}  // namespace detail

inline ArchProfile activation_counts(const ModelGraph& m) {
  ArchProfile p;
  p.name = m.name;
  std::vector<size_t> shape = m.input_shape;
  std::size_t idx = 0;
  detail::count_graph_acts(m.layers, shape, idx, p.act_elems);
  return p;
}

inline ArchProfile activation_counts(const QuantizedModel& m) {
  ArchProfile p;
  p.name = m.name;
  std::vector<size_t> shape = m.input_shape;
  detail::count_qmodel_acts(m.layers, shape, p.act_elems);
  return p;
}

namespace detail {

// Standard post-activation residual net: stem conv + ReLU, then stages of
// two-activation basic blocks at fixed channel/spatial sizes.
inline ArchProfile resnet_profile(const std::string& name, u64 spatial, u64 stem_ch,
                                  const std::vector<u64>& stage_ch, std::size_t blocks) {
  ArchProfile p;
  p.name = name;
  u64 s = spatial;
  p.act_elems.push_back(stem_ch * s * s);
  for (std::size_t i = 0; i < stage_ch.size(); ++i) {
    if (i > 0) s /= 2;
    for (std::size_t b = 0; b < 2 * blocks; ++b) p.act_elems.push_back(stage_ch[i] * s * s);
  }
  return p;
}

// Pre-activation variant: no stem activation; each block pre-activates at its
// input size (the first block of a downsampling stage therefore at the
// previous stage's size), plus one final activation before pooling.
inline ArchProfile pa_resnet_profile(const std::string& name, u64 spatial, u64 stem_ch,
                                     const std::vector<u64>& stage_ch, std::size_t blocks) {
  ArchProfile p;
  p.name = name;
  u64 s = spatial;
  u64 prev_ch = stem_ch;
  u64 prev_s = s;
  for (std::size_t i = 0; i < stage_ch.size(); ++i) {
    if (i > 0) s /= 2;
    for (std::size_t b = 0; b < blocks; ++b) {
      p.act_elems.push_back(b == 0 ? prev_ch * prev_s * prev_s : stage_ch[i] * s * s);
      p.act_elems.push_back(stage_ch[i] * s * s);
    }
    prev_ch = stage_ch[i];
    prev_s = s;
  }
  p.act_elems.push_back(prev_ch * prev_s * prev_s);
  return p;
}

inline ArchProfile vgg16_profile(const std::string& name, u64 spatial) {
  ArchProfile p;
  p.name = name;
  const std::vector<std::pair<u64, std::size_t>> groups = {
      {64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}};
  u64 s = spatial;
  for (const auto& [ch, n] : groups) {
    for (std::size_t i = 0; i < n; ++i) p.act_elems.push_back(ch * s * s);
    s /= 2;
  }
  // Classifier keeps the original two 4096-wide hidden layers.
  p.act_elems.push_back(4096);
  p.act_elems.push_back(4096);
  return p;
}

}  // namespace detail

/// Named architecture profiles: vgg16, resnet18, resnet32, pa-resnet18,
/// pa-resnet32, each with an optional -cifar (32x32, default) or -tiny
/// (64x64) input-size suffix.
inline ArchProfile activation_counts(const std::string& name) {
  std::string base = name;
  u64 spatial = 32;
  auto strip = [&](const char* suffix, u64 s) {
    std::string suf(suffix);
    if (base.size() > suf.size() && base.compare(base.size() - suf.size(), suf.size(), suf) == 0) {
      base.resize(base.size() - suf.size());
      spatial = s;
      return true;
    }
    return false;
  };
  if (!strip("-tiny", 64)) strip("-cifar", 32);

  if (base == "resnet32")
    return detail::resnet_profile(name, spatial, 16, {16, 32, 64}, 5);
  if (base == "resnet18")
    return detail::resnet_profile(name, spatial, 64, {64, 128, 256, 512}, 2);
  if (base == "pa-resnet32")
    return detail::pa_resnet_profile(name, spatial, 16, {16, 32, 64}, 5);
  if (base == "pa-resnet18")
    return detail::pa_resnet_profile(name, spatial, 64, {64, 128, 256, 512}, 2);
  if (base == "vgg16") return detail::vgg16_profile(name, spatial);
  throw std::invalid_argument(
      "cost: unknown architecture '" + name +
      "' (known: vgg16, resnet18, resnet32, pa-resnet18, pa-resnet32, each "
      "optionally suffixed -cifar or -tiny)");
}

/// Which activation layers run the exact-ReLU path; everything else runs the
/// quadratic path. Empty set = all-BT, full range = all-GC.
struct Plan {
  std::set<std::size_t> gc_layers;

  static Plan all_bt() { return {}; }

  static Plan all_gc(const ArchProfile& p) {
    Plan plan;
    for (std::size_t i = 0; i < p.layer_count(); ++i) plan.gc_layers.insert(i);
    return plan;
  }

  static Plan mixed(std::set<std::size_t> gc) { return {std::move(gc)}; }
};

struct PhaseCost {
  double time_us = 0.0;
  double comm_kb = 0.0;
};

struct CostEstimate {
  std::string arch;
  std::size_t gc_layer_count = 0, bt_layer_count = 0;
  u64 gc_elements = 0, bt_elements = 0;
  PhaseCost offline, online;
};

/// Linear per-element cost of one plan. Every activation element contributes
/// its kind's per-op cost; nothing else is modeled.
inline CostEstimate estimate(const ArchProfile& profile, const CostTable& table,
                             const Plan& plan) {
  table.validate();
  if (!plan.gc_layers.empty() && *plan.gc_layers.rbegin() >= profile.layer_count())
    throw std::invalid_argument("cost: plan names a layer outside the profile");
  CostEstimate e;
  e.arch = profile.name;
  for (std::size_t i = 0; i < profile.layer_count(); ++i) {
    bool gc = plan.gc_layers.count(i) > 0;
    ActKind kind = gc ? ActKind::relu : ActKind::poly;
    u64 n = profile.act_elems[i];
    (gc ? e.gc_elements : e.bt_elements) += n;
    (gc ? e.gc_layer_count : e.bt_layer_count) += 1;
    for (Phase ph : {Phase::offline, Phase::online}) {
      const OpCost& c = table.at(kind, ph);
      PhaseCost& out = ph == Phase::offline ? e.offline : e.online;
      out.time_us += static_cast<double>(n) * c.time_us;
      out.comm_kb += static_cast<double>(n) * c.comm_kb;
    }
  }
  return e;
}

/// The three canonical plans side by side, with all-GC / all-BT improvement
/// ratios. With one cost table the ratios are architecture-independent.
struct PlanComparison {
  CostEstimate all_gc, all_bt, mixed;
  double online_time_ratio = 0.0;
  double online_comm_ratio = 0.0;
  double offline_time_ratio = 0.0;
  double offline_comm_ratio = 0.0;
};

inline PlanComparison estimate_plans(const ArchProfile& profile, const CostTable& table,
                                     const Plan& mixed_plan) {
  PlanComparison c;
  c.all_gc = estimate(profile, table, Plan::all_gc(profile));
  c.all_bt = estimate(profile, table, Plan::all_bt());
  c.mixed = estimate(profile, table, mixed_plan);
  c.online_time_ratio = c.all_gc.online.time_us / c.all_bt.online.time_us;
  c.online_comm_ratio = c.all_gc.online.comm_kb / c.all_bt.online.comm_kb;
  c.offline_time_ratio = c.all_gc.offline.time_us / c.all_bt.offline.time_us;
  c.offline_comm_ratio = c.all_gc.offline.comm_kb / c.all_bt.offline.comm_kb;
  return c;
}

// Cost table file: one "kind phase time_us comm_kb" line per entry, '#'
// comments and blank lines ignored; all four (kind, phase) pairs required
// exactly once.
inline CostTable parse_cost_table(std::istream& in) {
  CostTable t;
  bool seen[2][2] = {};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string::size_type h = line.find('#');
    if (h != std::string::npos) line.resize(h);
    std::istringstream row(line);
    std::string kind_s, phase_s;
    double time_us = 0.0, comm_kb = 0.0;
    if (!(row >> kind_s)) continue;  // blank
    if (!(row >> phase_s >> time_us >> comm_kb))
      throw std::runtime_error("cost table: malformed line " + std::to_string(lineno));
    std::string rest;
    if (row >> rest)
      throw std::runtime_error("cost table: trailing tokens on line " + std::to_string(lineno));
    ActKind kind;
    if (kind_s == "poly")
      kind = ActKind::poly;
    else if (kind_s == "relu")
      kind = ActKind::relu;
    else
      throw std::runtime_error("cost table: unknown kind '" + kind_s + "' on line " +
                               std::to_string(lineno));
    Phase phase;
    if (phase_s == "offline")
      phase = Phase::offline;
    else if (phase_s == "online")
      phase = Phase::online;
    else
      throw std::runtime_error("cost table: unknown phase '" + phase_s + "' on line " +
                               std::to_string(lineno));
    bool& s = seen[kind == ActKind::relu ? 1 : 0][phase == Phase::online ? 1 : 0];
    if (s)
      throw std::runtime_error("cost table: duplicate entry on line " + std::to_string(lineno));
    s = true;
    t.at(kind, phase) = {time_us, comm_kb};
  }
  for (int k = 0; k < 2; ++k)
    for (int p = 0; p < 2; ++p)
      if (!seen[k][p])
        throw std::runtime_error(std::string("cost table: missing entry for ") +
                                 act_kind_name(k ? ActKind::relu : ActKind::poly) + " " +
                                 phase_name(p ? Phase::online : Phase::offline));
  t.validate();
  return t;
}

inline CostTable load_cost_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cost table: cannot open " + path);
  return parse_cost_table(in);
}

inline std::string format_cost_table(const CostTable& t) {
  std::string out = "# activation kind | phase | time_us | comm_kb (per op)\n";
  char buf[128];
  for (ActKind k : {ActKind::poly, ActKind::relu})
    for (Phase p : {Phase::offline, Phase::online}) {
      const OpCost& c = t.at(k, p);
      std::snprintf(buf, sizeof buf, "%s %s %g %g\n", act_kind_name(k), phase_name(p), c.time_us,
                    c.comm_kb);
      out += buf;
    }
  return out;
}

inline void save_cost_table(const std::string& path, const CostTable& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cost table: cannot write " + path);
  out << format_cost_table(t);
}

inline std::string format_estimate_report(const PlanComparison& c) {
  char buf[256];
  std::string out;
  out += "activation cost estimate for " + c.all_bt.arch +
         " (activations only; linear/HE layers excluded)\n";
  out += "plan        layers(gc/bt)    offline_time_us  offline_comm_kb   online_time_us  "
         "online_comm_kb\n";
  auto row = [&](const char* label, const CostEstimate& e) {
    std::snprintf(buf, sizeof buf, "%-10s %6zu /%5zu %18.2f %16.3f %16.2f %15.3f\n", label,
                  e.gc_layer_count, e.bt_layer_count, e.offline.time_us, e.offline.comm_kb,
                  e.online.time_us, e.online.comm_kb);
    out += buf;
  };
  row("all-gc", c.all_gc);
  row("all-bt", c.all_bt);
  row("mixed", c.mixed);
  std::snprintf(buf, sizeof buf,
                "all-gc/all-bt ratios: online time %.2fx, online comm %.1fx, offline time %.2fx, "
                "offline comm %.1fx\n",
                c.online_time_ratio, c.online_comm_ratio, c.offline_time_ratio,
                c.offline_comm_ratio);
  out += buf;
  return out;
}

/// Analytic-vs-measured bridge. Our own wire formula must match the metered
/// transcripts byte for byte; the table-based figure uses a different framing
/// (amortized per-op measurements of another implementation) and is reported
/// as external reference only, never checked.
struct MeasuredComparison {
  u64 measured_client_bytes = 0, measured_server_bytes = 0;
  u64 analytic_client_bytes = 0, analytic_server_bytes = 0;
  bool wire_exact = false;
  double table_online_kb = 0.0;
  std::string caveat;
};

inline MeasuredComparison compare_with_measured(const QuantizedModel& qm,
                                                const Transcript& client,
                                                const Transcript& server,
                                                const CostTable& table = {}) {
  if (client.party != PartyId::Client || server.party != PartyId::Server)
    throw std::invalid_argument("cost: transcripts do not cover both parties");
  MeasuredComparison r;
  AnalyticComm a = analytic_online_comm(qm);
  r.measured_client_bytes = client.total_bytes();
  r.measured_server_bytes = server.total_bytes();
  r.analytic_client_bytes = a.client_bytes;
  r.analytic_server_bytes = a.server_bytes;
  r.wire_exact = r.measured_client_bytes == r.analytic_client_bytes &&
                 r.measured_server_bytes == r.analytic_server_bytes;
  ArchProfile profile = activation_counts(qm);
  r.table_online_kb = estimate(profile, table, Plan::all_bt()).online.comm_kb;
  r.caveat =
      "table figure uses a different framing (amortized per-op costs of an external "
      "implementation) and is not comparable to wire bytes";
  return r;
}

inline std::string format_measured_report(const MeasuredComparison& r) {
  char buf[256];
  std::string out = "online communication, measured vs analytic\n";
  std::snprintf(buf, sizeof buf, "  client: measured %llu B, wire formula %llu B\n",
                static_cast<unsigned long long>(r.measured_client_bytes),
                static_cast<unsigned long long>(r.analytic_client_bytes));
  out += buf;
  std::snprintf(buf, sizeof buf, "  server: measured %llu B, wire formula %llu B\n",
                static_cast<unsigned long long>(r.measured_server_bytes),
                static_cast<unsigned long long>(r.analytic_server_bytes));
  out += buf;
  out += r.wire_exact ? "  wire formula: exact match\n" : "  wire formula: MISMATCH\n";
  std::snprintf(buf, sizeof buf, "  external table estimate: %.3f KB (%s)\n", r.table_online_kb,
                r.caveat.c_str());
  out += buf;
  return out;
}

}  // namespace qpi
