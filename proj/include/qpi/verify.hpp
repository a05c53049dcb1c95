#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <thread>

#include "qpi/beaver.hpp"
#include "qpi/hermite.hpp"
#include "qpi/model.hpp"
#include "qpi/protocol.hpp"
#include "qpi/quadrature.hpp"

namespace qpi {

// Self-check suites shared by the command line and the acceptance harness.
// Each check is a pure pass/fail property with its evidence in `detail`.

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double elapsed_ms = 0.0;
};

namespace detail {

inline void run_check(std::vector<CheckResult>& out, const std::string& name,
                      const std::function<std::pair<bool, std::string>()>& body) {
  CheckResult r;
  r.name = name;
  auto t0 = std::chrono::steady_clock::now();
  try {
    auto [pass, d] = body();
    r.pass = pass;
    r.detail = d;
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                     .count();
  out.push_back(std::move(r));
}

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

}  // namespace detail

inline std::vector<CheckResult> verify_field() {
  std::vector<CheckResult> out;
  FieldParams fp;
  FixedPointCodec codec(fp);

  detail::run_check(out, "field.codec-roundtrip", [&] {
    Rng rng(101);
    double worst = 0.0;
    double step = std::exp2(-static_cast<double>(fp.frac_bits));
    for (int i = 0; i < 20000; ++i) {
      double x = rng.uniform(-1000.0, 1000.0);
      worst = std::max(worst, std::abs(codec.decode(codec.encode(x)) - x));
    }
    return std::make_pair(worst <= 0.5 * step + 1e-12,
                          "worst roundtrip error " + detail::fmt(worst));
  });

  detail::run_check(out, "field.truncation-bound", [&] {
    Rng rng(102);
    double step = std::exp2(-static_cast<double>(fp.frac_bits));
    double worst = 0.0;
    for (int i = 0; i < 20000; ++i) {
      double x = rng.uniform(-900.0, 900.0);
      double y = rng.uniform(-1.0, 1.0);
      FieldElement prod = codec.encode(x) * codec.encode(y);
      double got = codec.decode(codec.truncate(prod));
      worst = std::max(worst, std::abs(got - x * y));
    }
    // One truncation floors at most one LSB, on top of two encode roundings.
    double bound = step * (1.0 + 0.5 + 0.5 * 900.0 + 0.5);
    return std::make_pair(worst <= bound, "worst product error " + detail::fmt(worst) +
                                              " bound " + detail::fmt(bound));
  });

  detail::run_check(out, "field.arithmetic-vs-wide-reference", [&] {
    Rng rng(103);
    for (int i = 0; i < 20000; ++i) {
      u64 a = rng.uniform_below(fp.p), b = rng.uniform_below(fp.p);
      FieldElement fa = FieldElement::from_raw(a, fp.p), fb = FieldElement::from_raw(b, fp.p);
      u64 sum = static_cast<u64>((u128(a) + b) % fp.p);
      u64 prod = static_cast<u64>(u128(a) * b % fp.p);
      u64 diff = static_cast<u64>((u128(a) + fp.p - b) % fp.p);
      if ((fa + fb).raw() != sum || (fa * fb).raw() != prod || (fa - fb).raw() != diff)
        return std::make_pair(false, "mismatch at a=" + std::to_string(a) +
                                         " b=" + std::to_string(b));
    }
    return std::make_pair(true, std::string("20000 random triples agree"));
  });

  return out;
}

inline std::vector<CheckResult> verify_hermite() {
  std::vector<CheckResult> out;

  detail::run_check(out, "hermite.relu-coefficient-quadrature", [] {
    // <relu, h_n> under the Gaussian measure reduces to the half-line
    // integral of x h_n(x); the closed form must match to 1e-6 for n = 0..6.
    double worst = 0.0;
    for (unsigned n = 0; n <= 6; ++n) {
      double q = gaussian_expect_half([n](double x) { return x * hermite_h(n, x); });
      worst = std::max(worst, std::abs(q - relu_hermite_coeff(n)));
    }
    return std::make_pair(worst <= 1e-6, "worst |quadrature - closed form| " + detail::fmt(worst));
  });

  detail::run_check(out, "hermite.orthonormality-128pt", [] {
    QuadratureRule gh = gauss_hermite(128);
    double worst = 0.0;
    for (unsigned i = 0; i <= 4; ++i)
      for (unsigned j = 0; j <= 4; ++j) {
        double ip =
            gaussian_expect_gh(gh, [&](double x) { return hermite_h(i, x) * hermite_h(j, x); });
        worst = std::max(worst, std::abs(ip - (i == j ? 1.0 : 0.0)));
      }
    return std::make_pair(worst <= 1e-6, "worst |<hi,hj> - delta| " + detail::fmt(worst));
  });

  return out;
}

inline std::vector<CheckResult> verify_beaver() {
  std::vector<CheckResult> out;
  FieldParams fp;
  fp.p = 97;
  fp.frac_bits = 1;

  detail::run_check(out, "beaver.exhaustive-square-p97", [&] {
    Rng rng(201);
    std::vector<FieldElement> xs, want;
    for (u64 x = 0; x < 97; ++x) {
      xs.push_back(FieldElement::from_raw(x, 97));
      want.push_back(FieldElement::from_raw(x * x % 97, 97));
    }
    std::vector<std::pair<Share, Share>> shares;
    for (const FieldElement& x : xs) shares.push_back(share(x, fp, rng));
    std::vector<FieldElement> xc, xsrv;
    for (auto& [c, s] : shares) {
      xc.push_back(c.value);
      xsrv.push_back(s.value);
    }
    auto [tc, ts] = deal_triples(TripleKind::Square, xs.size(), fp, rng);
    auto [a, b] = LoopbackChannel::make_pair();
    CountingChannel ca(*a), cb(*b);
    std::vector<FieldElement> ys;
    std::thread srv([&] { ys = secure_square_batch(PartyId::Server, xsrv, ts, cb, fp); });
    std::vector<FieldElement> yc = secure_square_batch(PartyId::Client, xc, tc, ca, fp);
    srv.join();
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (!((yc[i] + ys[i]) == want[i]))
        return std::make_pair(false, "x = " + std::to_string(i) + " disagrees");
    if (ca.bytes_sent != frame_bytes(xs.size()))
      return std::make_pair(false, std::string("client opened more than 1 element per op"));
    return std::make_pair(true, std::string("97/97 squares exact, 1 opened element per op"));
  });

  detail::run_check(out, "beaver.exhaustive-mul-p97", [&] {
    Rng rng(202);
    std::vector<FieldElement> xs, ys, want;
    for (u64 x = 0; x < 97; ++x)
      for (u64 y = 0; y < 97; y += 7) {
        xs.push_back(FieldElement::from_raw(x, 97));
        ys.push_back(FieldElement::from_raw(y % 97, 97));
        want.push_back(FieldElement::from_raw(x * (y % 97) % 97, 97));
      }
    std::vector<FieldElement> xc, xsrv, yc, ysrv;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto [c1, s1] = share(xs[i], fp, rng);
      auto [c2, s2] = share(ys[i], fp, rng);
      xc.push_back(c1.value);
      xsrv.push_back(s1.value);
      yc.push_back(c2.value);
      ysrv.push_back(s2.value);
    }
    auto [tc, ts] = deal_triples(TripleKind::Mul, xs.size(), fp, rng);
    auto [a, b] = LoopbackChannel::make_pair();
    CountingChannel ca(*a), cb(*b);
    std::vector<FieldElement> zs;
    std::thread srv([&] { zs = secure_mul_batch(PartyId::Server, xsrv, ysrv, ts, cb, fp); });
    std::vector<FieldElement> zc = secure_mul_batch(PartyId::Client, xc, yc, tc, ca, fp);
    srv.join();
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (!((zc[i] + zs[i]) == want[i]))
        return std::make_pair(false, "pair " + std::to_string(i) + " disagrees");
    if (ca.bytes_sent != frame_bytes(2 * xs.size()))
      return std::make_pair(false, std::string("client opened more than 2 elements per op"));
    return std::make_pair(true, std::to_string(xs.size()) + " products exact, 2 opened "
                                                            "elements per op");
  });

  return out;
}

inline std::vector<CheckResult> verify_protocol() {
  std::vector<CheckResult> out;

  detail::run_check(out, "protocol.mlp3-twin-agreement", [] {
    ModelGraph m = build_mlp3();
    FixedPointCodec codec{FieldParams{}};
    QuantizedModel qm = quantize(m, codec);
    DealtMaterial dm = deal_offline(qm, 424242);
    Rng rng(17);
    double budget = static_cast<double>(count_truncation_events(qm));
    double scale = std::exp2(static_cast<double>(qm.field.frac_bits));
    double worst_lsb = 0.0, worst_float = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      Tensor in({2});
      for (double& v : in.data) v = rng.uniform(-4.0, 4.0);
      LoopbackResult res = loopback_run(qm, dm.client, dm.server, in);
      if (!res.client.ok || !res.server.ok)
        return std::make_pair(false, "run failed: " + res.client.error + res.server.error);
      FieldTensor fixed = forward_fixed(qm, encode_tensor(in, codec), codec);
      Tensor fl = forward_float(m, in);
      for (std::size_t i = 0; i < fixed.data.size(); ++i) {
        worst_lsb = std::max(
            worst_lsb, std::abs(res.output->data[i] - codec.decode(fixed.data[i])) * scale);
        worst_float = std::max(worst_float, std::abs(res.output->data[i] - fl.data[i]));
      }
    }
    bool ok = worst_lsb <= budget && worst_float <= 0.01;
    return std::make_pair(ok, "worst twin distance " + detail::fmt(worst_lsb) + " LSB (budget " +
                                  detail::fmt(budget) + "), worst float distance " +
                                  detail::fmt(worst_float));
  });

  detail::run_check(out, "protocol.meter-equals-wire-formula", [] {
    QuantizedModel qm = quantize(build_cnn6(), FixedPointCodec(FieldParams{}));
    DealtMaterial dm = deal_offline(qm, 515151);
    Tensor in({1, 8, 8});
    Rng rng(23);
    for (double& v : in.data) v = rng.uniform(-1.0, 1.0);
    LoopbackResult res = loopback_run(qm, dm.client, dm.server, in);
    if (!res.client.ok || !res.server.ok)
      return std::make_pair(false, std::string("run failed"));
    AnalyticComm a = analytic_online_comm(qm);
    bool ok = res.client_transcript.total_bytes() == a.client_bytes &&
              res.server_transcript.total_bytes() == a.server_bytes;
    return std::make_pair(ok, "client " + std::to_string(res.client_transcript.total_bytes()) +
                                  "/" + std::to_string(a.client_bytes) + " B, server " +
                                  std::to_string(res.server_transcript.total_bytes()) + "/" +
                                  std::to_string(a.server_bytes) + " B");
  });

  detail::run_check(out, "protocol.material-roundtrip", [] {
    QuantizedModel qm = quantize(build_mlp3(), FixedPointCodec(FieldParams{}));
    DealtMaterial dm = deal_offline(qm, 616161);
    OfflineMaterial back = parse_material(serialize_material(dm.server));
    bool ok = back.role == dm.server.role && back.hash == dm.server.hash &&
              back.sections.size() == dm.server.sections.size();
    for (std::size_t i = 0; ok && i < back.sections.size(); ++i)
      ok = back.sections[i].elems == dm.server.sections[i].elems;
    return std::make_pair(ok, std::to_string(dm.server.sections.size()) + " sections identical");
  });

  return out;
}

/// Suite lookup for the command line; "all" concatenates every suite.
inline std::vector<CheckResult> verify_suite(const std::string& name) {
  if (name == "field") return verify_field();
  if (name == "hermite") return verify_hermite();
  if (name == "beaver") return verify_beaver();
  if (name == "protocol") return verify_protocol();
  if (name == "all") {
    std::vector<CheckResult> out = verify_field();
    for (auto&& suite : {verify_hermite(), verify_beaver(), verify_protocol()})
      out.insert(out.end(), suite.begin(), suite.end());
    return out;
  }
  throw std::invalid_argument("verify: unknown suite '" + name +
                              "' (field, hermite, beaver, protocol, all)");
}

}  // namespace qpi
