#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "qpi/beaver.hpp"
#include "qpi/channel.hpp"
#include "qpi/offline.hpp"

namespace qpi {

inline constexpr u32 kProtocolVersion = 1;

// One row per (phase, layer) of traffic this party sent; layer -1 covers the
// handshake and masked input, layer = #layers covers the result message.
struct CommRecord {
  std::string phase;
  i64 layer = 0;
  u64 messages = 0;
  u64 bytes = 0;
  double millis = 0.0;
};

struct Transcript {
  PartyId party = PartyId::Client;
  std::vector<CommRecord> records;
  u64 traffic_hash = 14695981039346656037ULL;  // FNV-1a over sent frames, in order

  u64 total_bytes() const {
    u64 n = 0;
    for (const CommRecord& r : records) n += r.bytes;
    return n;
  }

  u64 total_messages() const {
    u64 n = 0;
    for (const CommRecord& r : records) n += r.messages;
    return n;
  }

  u64 bytes_at_layer(i64 layer) const {
    u64 n = 0;
    for (const CommRecord& r : records)
      if (r.layer == layer && r.phase == "online") n += r.bytes;
    return n;
  }

  std::string to_jsonl() const {
    std::string out;
    for (const CommRecord& r : records) {
      nlohmann::ordered_json j;
      j["phase"] = r.phase;
      j["layer"] = r.layer;
      j["party"] = party_name(party);
      j["messages"] = r.messages;
      j["bytes"] = r.bytes;
      j["millis"] = r.millis;
      out += j.dump();
      out += '\n';
    }
    return out;
  }

  /// Timing-free identity of the traffic: what was sent, where, in what order.
  std::string signature() const {
    std::string out;
    for (const CommRecord& r : records)
      out += r.phase + ":" + std::to_string(r.layer) + ":" + std::to_string(r.messages) + ":" +
             std::to_string(r.bytes) + ";";
    return out;
  }
};

/// Counts and hashes sent frames into the active transcript record without
/// altering the traffic. Receives pass through unmetered: each party accounts
/// for what it sends, so the union of both transcripts covers every byte once.
class MeteredChannel : public Channel {
 public:
  MeteredChannel(Channel& inner, Transcript& t) : inner_(inner), t_(&t) {}

  void begin(const std::string& phase, i64 layer) {
    end();
    t_->records.push_back({phase, layer, 0, 0, 0.0});
    started_ = std::chrono::steady_clock::now();
    open_ = true;
  }

  void end() {
    if (!open_) return;
    auto dt = std::chrono::steady_clock::now() - started_;
    t_->records.back().millis +=
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(dt).count();
    open_ = false;
  }

  void send_bytes(const u8* data, std::size_t n) override {
    inner_.send_bytes(data, n);
    if (!open_) throw std::logic_error("protocol: send outside a metered step");
    CommRecord& r = t_->records.back();
    r.messages += 1;
    r.bytes += n;
    for (std::size_t i = 0; i < n; ++i) {
      t_->traffic_hash ^= data[i];
      t_->traffic_hash *= 1099511628211ULL;
    }
  }

  void recv_bytes(u8* data, std::size_t n) override { inner_.recv_bytes(data, n); }

 private:
  Channel& inner_;
  Transcript* t_;
  std::chrono::steady_clock::time_point started_;
  bool open_ = false;
};

struct ProtocolConfig {
  u32 version = kProtocolVersion;
  i64 abort_at_layer = kNoAbort;  // inject an abort when the walk reaches this layer

  static constexpr i64 kNoAbort = -1000000;
};

namespace detail {

inline void hello_exchange(MeteredChannel& ch, const QuantizedModel& qm, u64 hash,
                           const ProtocolConfig& cfg) {
  u64 mine[4] = {cfg.version, qm.field.p, qm.field.frac_bits, hash};
  send_frame_words(ch, MsgType::Hello, std::span<const u64>(mine, 4));
  Frame peer = expect_frame(ch, MsgType::Hello);
  if (peer.payload.size() != 4) throw ProtocolError("protocol: malformed hello");
  for (int i = 0; i < 4; ++i)
    if (peer.payload[i] != mine[i]) {
      send_abort(ch, -1);
      throw ProtocolError("protocol: hello mismatch (version/field/model)");
    }
}

inline void maybe_inject_abort(MeteredChannel& ch, i64 here, const ProtocolConfig& cfg) {
  if (cfg.abort_at_layer == here) {
    send_abort(ch, here);
    throw AbortError(here);
  }
}

// Per-channel folded quadratic on shares, before any truncation. The client
// omits c0: adding the public constant on both sides would double it.
inline FieldElement activation_affine_share(PartyId role, const QActivation& act, size_t channel,
                                            const FieldElement& x_share,
                                            const FieldElement& x2_share) {
  FieldElement y = act.c2[channel] * x2_share + act.c1[channel] * x_share;
  if (role == PartyId::Server) y = y + act.c0[channel];
  return y;
}

struct OnlineWalk {
  const QuantizedModel& qm;
  MaterialCursor& cursor;
  MeteredChannel& ch;
  const ProtocolConfig& cfg;
  PartyId role;
  i64 idx = 0;

  void activation(const QActivation& act, std::vector<FieldElement>& sh,
                  const std::vector<size_t>& shape, i64 here) {
    const FieldParams& fp = qm.field;
    std::size_t n = shape_size(shape);
    std::size_t inner = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) inner *= shape[i];
    if (act.channels * inner != n)
      throw ProtocolError("protocol: activation shape mismatch at layer " + std::to_string(here));

    const MaterialSection& tri = cursor.next(SectionType::act_triples, here);
    if (tri.elems.size() != 2 * n)
      throw ProtocolError("protocol: triple count mismatch at layer " + std::to_string(here));
    TripleBatch batch(TripleKind::Square, role, tri.elems);
    std::vector<FieldElement> x2 = secure_square_batch(role, sh, batch, ch, fp);
    truncate_shares_inplace(role, x2, fp.frac_bits);

    std::vector<FieldElement> y;
    y.reserve(n);
    for (std::size_t c = 0; c < act.channels; ++c)
      for (std::size_t j = 0; j < inner; ++j) {
        std::size_t k = c * inner + j;
        y.push_back(activation_affine_share(role, act, c, sh[k], x2[k]));
      }
    truncate_shares_inplace(role, y, fp.frac_bits);

    if (role == PartyId::Client) {
      const MaterialSection& rm = cursor.next(SectionType::act_return_mask, here);
      if (rm.elems.size() != n)
        throw ProtocolError("protocol: return mask count mismatch at layer " +
                            std::to_string(here));
      std::vector<FieldElement> ret;
      ret.reserve(n);
      for (std::size_t k = 0; k < n; ++k) ret.push_back(y[k] - rm.elems[k]);
      send_frame(ch, MsgType::ActivationReturn, ret);
      sh = rm.elems;
    } else {
      Frame f = expect_frame(ch, MsgType::ActivationReturn);
      if (f.payload.size() != n)
        throw ProtocolError("protocol: activation return size mismatch at layer " +
                            std::to_string(here));
      std::vector<FieldElement> ret = payload_elements(f, fp);
      for (std::size_t k = 0; k < n; ++k) sh[k] = y[k] + ret[k];
    }
  }

  void walk(const std::vector<QLayer>& layers, std::vector<FieldElement>& sh,
            std::vector<size_t>& shape) {
    const FieldParams& fp = qm.field;
    for (const QLayer& l : layers) {
      i64 here = idx++;
      ch.begin("online", here);
      maybe_inject_abort(ch, here, cfg);
      if (const auto* lin = std::get_if<QLinear>(&l.node)) {
        if (role == PartyId::Client) {
          sh = cursor.next(SectionType::linear_client, here).elems;
          if (sh.size() != lin->out)
            throw ProtocolError("protocol: material size mismatch at layer " +
                                std::to_string(here));
        } else {
          std::vector<FieldElement> ws = shareops::linear(*lin, sh);
          const MaterialSection& s = cursor.next(SectionType::linear_server, here);
          if (s.elems.size() != lin->out)
            throw ProtocolError("protocol: material size mismatch at layer " +
                                std::to_string(here));
          for (size_t k = 0; k < lin->out; ++k) ws[k] = ws[k] + s.elems[k] + lin->b[k];
          sh = std::move(ws);
        }
        truncate_shares_inplace(role, sh, fp.frac_bits);
        shape = {lin->out};
      } else if (const auto* cv = std::get_if<QConv>(&l.node)) {
        std::vector<size_t> out_shape = qlayer_output_shape(l, shape, static_cast<size_t>(here));
        if (role == PartyId::Client) {
          sh = cursor.next(SectionType::linear_client, here).elems;
        } else {
          std::vector<FieldElement> ws = shareops::conv(*cv, shape, sh);
          const MaterialSection& s = cursor.next(SectionType::linear_server, here);
          if (s.elems.size() != ws.size())
            throw ProtocolError("protocol: material size mismatch at layer " +
                                std::to_string(here));
          size_t plane = out_shape[1] * out_shape[2];
          for (size_t k = 0; k < ws.size(); ++k)
            ws[k] = ws[k] + s.elems[k] + cv->b[k / plane];
          sh = std::move(ws);
        }
        shape = std::move(out_shape);
        if (sh.size() != shape_size(shape))
          throw ProtocolError("protocol: material size mismatch at layer " + std::to_string(here));
        truncate_shares_inplace(role, sh, fp.frac_bits);
      } else if (const auto* ap = std::get_if<QAvgPool>(&l.node)) {
        sh = shareops::avgpool(*ap, shape, sh);
        truncate_shares_inplace(role, sh, fp.frac_bits);
        shape = qlayer_output_shape(l, shape, static_cast<size_t>(here));
      } else if (std::holds_alternative<QFlatten>(l.node)) {
        shape = {shape_size(shape)};
      } else if (const auto* act = std::get_if<QActivation>(&l.node)) {
        activation(*act, sh, shape, here);
      } else {
        const auto& rb = std::get<QResidual>(l.node);
        std::vector<FieldElement> saved = sh;
        std::vector<size_t> branch_shape = shape;
        ch.end();
        walk(rb.branch, sh, branch_shape);
        ch.begin("online", here);
        if (branch_shape != shape)
          throw ProtocolError("protocol: residual branch changes shape at layer " +
                              std::to_string(here));
        for (std::size_t k = 0; k < sh.size(); ++k) sh[k] = sh[k] + saved[k];
      }
      ch.end();
    }
  }
};

}  // namespace detail

/// Client side of one online inference. Returns the decoded output tensor;
/// the transcript (if supplied) records every byte this party sent.
inline Tensor run_client(const QuantizedModel& qm, const OfflineMaterial& mat,
                         const Tensor& input, Channel& raw, Transcript* transcript = nullptr,
                         const ProtocolConfig& cfg = {}) {
  if (mat.role != PartyId::Client) throw std::invalid_argument("protocol: material role mismatch");
  u64 hash = model_hash(qm);
  if (mat.hash != hash) throw std::invalid_argument("protocol: material dealt for another model");
  if (!(mat.field == qm.field)) throw std::invalid_argument("protocol: material field mismatch");
  if (input.shape != qm.input_shape) throw std::invalid_argument("protocol: input shape mismatch");

  Transcript local;
  Transcript& t = transcript ? *transcript : local;
  t.party = PartyId::Client;
  MeteredChannel ch(raw, t);
  MaterialCursor cursor(mat);

  ch.begin("online", -1);
  detail::hello_exchange(ch, qm, hash, cfg);

  FixedPointCodec codec(qm.field);
  const MaterialSection& r0 = cursor.next(SectionType::input_mask, -1);
  if (r0.elems.size() != input.data.size())
    throw ProtocolError("protocol: input mask size mismatch");
  std::vector<FieldElement> sh = r0.elems;
  std::vector<FieldElement> masked;
  masked.reserve(sh.size());
  for (std::size_t i = 0; i < sh.size(); ++i)
    masked.push_back(codec.encode(input.data[i]) - sh[i]);
  send_frame(ch, MsgType::MaskedInput, masked);
  ch.end();

  detail::OnlineWalk walk{qm, cursor, ch, cfg, PartyId::Client};
  std::vector<size_t> shape = qm.input_shape;
  walk.walk(qm.layers, sh, shape);

  ch.begin("online", static_cast<i64>(qm.layers.size()));
  Frame f = expect_frame(ch, MsgType::Result);
  std::vector<FieldElement> server_share = payload_elements(f, qm.field);
  if (server_share.size() != sh.size()) throw ProtocolError("protocol: result size mismatch");
  Tensor out(shape);
  for (std::size_t i = 0; i < sh.size(); ++i)
    out.data[i] = codec.decode((sh[i] + server_share[i]));
  ch.end();
  return out;
}

/// Server side of one online inference; learns nothing but masked traffic.
inline void run_server(const QuantizedModel& qm, const OfflineMaterial& mat, Channel& raw,
                       Transcript* transcript = nullptr, const ProtocolConfig& cfg = {}) {
  if (mat.role != PartyId::Server) throw std::invalid_argument("protocol: material role mismatch");
  u64 hash = model_hash(qm);
  if (mat.hash != hash) throw std::invalid_argument("protocol: material dealt for another model");
  if (!(mat.field == qm.field)) throw std::invalid_argument("protocol: material field mismatch");

  Transcript local;
  Transcript& t = transcript ? *transcript : local;
  t.party = PartyId::Server;
  MeteredChannel ch(raw, t);
  MaterialCursor cursor(mat);

  ch.begin("online", -1);
  detail::hello_exchange(ch, qm, hash, cfg);
  Frame f = expect_frame(ch, MsgType::MaskedInput);
  std::vector<FieldElement> sh = payload_elements(f, qm.field);
  if (sh.size() != shape_size(qm.input_shape))
    throw ProtocolError("protocol: masked input size mismatch");
  ch.end();

  detail::OnlineWalk walk{qm, cursor, ch, cfg, PartyId::Server};
  std::vector<size_t> shape = qm.input_shape;
  walk.walk(qm.layers, sh, shape);

  ch.begin("online", static_cast<i64>(qm.layers.size()));
  send_frame(ch, MsgType::Result, sh);
  ch.end();
}

struct PartyOutcome {
  bool ok = false;
  i64 abort_layer = ProtocolConfig::kNoAbort;
  std::string error;
};

struct LoopbackResult {
  std::optional<Tensor> output;
  Transcript client_transcript, server_transcript;
  PartyOutcome client, server;
};

/// Both parties over an in-process duplex pipe, server on a second thread.
/// Byte traffic is identical to the networked path: the transport below the
/// frame layer is the only difference.
inline LoopbackResult loopback_run(const QuantizedModel& qm, const OfflineMaterial& client_mat,
                                   const OfflineMaterial& server_mat, const Tensor& input,
                                   const ProtocolConfig& client_cfg = {},
                                   const ProtocolConfig& server_cfg = {}) {
  auto [client_ch, server_ch] = LoopbackChannel::make_pair();
  LoopbackResult res;
  std::thread server([&] {
    try {
      run_server(qm, server_mat, *server_ch, &res.server_transcript, server_cfg);
      res.server.ok = true;
    } catch (const AbortError& e) {
      res.server.abort_layer = e.layer;
      res.server.error = e.what();
      server_ch->close();
    } catch (const std::exception& e) {
      res.server.error = e.what();
      server_ch->close();
    }
  });
  try {
    res.output = run_client(qm, client_mat, input, *client_ch, &res.client_transcript, client_cfg);
    res.client.ok = true;
  } catch (const AbortError& e) {
    res.client.abort_layer = e.layer;
    res.client.error = e.what();
    client_ch->close();
  } catch (const std::exception& e) {
    res.client.error = e.what();
    client_ch->close();
  }
  server.join();
  return res;
}

// Closed-form online traffic per party, in bytes, for one inference. Ground
// truth for the meter: handshake hello (4 words) plus masked input from the
// client; per activation of n elements one n-word opening from each party and
// one n-word return from the client; one result message from the server.
struct AnalyticComm {
  u64 client_bytes = 0, server_bytes = 0;
  u64 client_messages = 0, server_messages = 0;
};

namespace detail {

inline void analytic_walk(const std::vector<QLayer>& layers, std::vector<size_t>& shape,
                          AnalyticComm& a) {
  for (const QLayer& l : layers) {
    if (std::holds_alternative<QActivation>(l.node)) {
      u64 n = shape_size(shape);
      a.client_bytes += 2 * frame_bytes(n);  // opening + masked return
      a.client_messages += 2;
      a.server_bytes += frame_bytes(n);  // opening
      a.server_messages += 1;
    } else if (const auto* rb = std::get_if<QResidual>(&l.node)) {
      std::vector<size_t> s = shape;
      analytic_walk(rb->branch, s, a);
    } else {
      shape = qlayer_output_shape(l, shape, 0);
    }
  }
}

}  // namespace detail

inline AnalyticComm analytic_online_comm(const QuantizedModel& qm) {
  AnalyticComm a;
  a.client_bytes = frame_bytes(4) + frame_bytes(shape_size(qm.input_shape));
  a.client_messages = 2;  // hello + masked input
  a.server_bytes = frame_bytes(4);
  a.server_messages = 1;  // hello
  std::vector<size_t> shape = qm.input_shape;
  detail::analytic_walk(qm.layers, shape, a);
  a.server_bytes += frame_bytes(shape_size(shape));  // result
  a.server_messages += 1;
  return a;
}

}  // namespace qpi
