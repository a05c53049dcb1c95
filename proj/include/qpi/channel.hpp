#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpi/field.hpp"
#include "qpi/serialize.hpp"

namespace qpi {

struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& m) : std::runtime_error(m) {}
};

/// Peer signalled abort; layer < 0 marks the handshake stage.
struct AbortError : ProtocolError {
  explicit AbortError(i64 l)
      : ProtocolError("protocol: peer aborted at layer " + std::to_string(l)), layer(l) {}
  i64 layer;
};

struct DesyncError : ProtocolError {
  DesyncError(u8 got, u8 want)
      : ProtocolError("protocol: desynchronized message type " + std::to_string(got) +
                      ", expected " + std::to_string(want)) {}
};

/// Blocking, ordered, reliable byte stream between two parties.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send_bytes(const u8* data, std::size_t n) = 0;
  virtual void recv_bytes(u8* data, std::size_t n) = 0;
};

namespace detail {

struct ByteQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<u8> bytes;
  bool closed = false;

  void push(const u8* data, std::size_t n) {
    std::lock_guard<std::mutex> lk(mu);
    if (closed) throw ProtocolError("channel: send on closed loopback");
    bytes.insert(bytes.end(), data, data + n);
    cv.notify_all();
  }

  void pop(u8* data, std::size_t n) {
    std::unique_lock<std::mutex> lk(mu);
    cv.wait(lk, [&] { return bytes.size() >= n || closed; });
    if (bytes.size() < n) throw ProtocolError("channel: loopback closed mid-read");
    for (std::size_t i = 0; i < n; ++i) {
      data[i] = bytes.front();
      bytes.pop_front();
    }
  }

  void close() {
    std::lock_guard<std::mutex> lk(mu);
    closed = true;
    cv.notify_all();
  }
};

}  // namespace detail

/// In-process duplex stream. Byte-for-byte the same traffic as a socket, so
/// transcripts from the two transports are directly comparable.
class LoopbackChannel : public Channel {
 public:
  void send_bytes(const u8* data, std::size_t n) override { out_->push(data, n); }
  void recv_bytes(u8* data, std::size_t n) override { in_->pop(data, n); }
  void close() { out_->close(); }

  static std::pair<std::unique_ptr<LoopbackChannel>, std::unique_ptr<LoopbackChannel>> make_pair() {
    auto a2b = std::make_shared<detail::ByteQueue>();
    auto b2a = std::make_shared<detail::ByteQueue>();
    auto a = std::unique_ptr<LoopbackChannel>(new LoopbackChannel(a2b, b2a));
    auto b = std::unique_ptr<LoopbackChannel>(new LoopbackChannel(b2a, a2b));
    return {std::move(a), std::move(b)};
  }

 private:
  LoopbackChannel(std::shared_ptr<detail::ByteQueue> out, std::shared_ptr<detail::ByteQueue> in)
      : out_(std::move(out)), in_(std::move(in)) {}

  std::shared_ptr<detail::ByteQueue> out_;
  std::shared_ptr<detail::ByteQueue> in_;
};

/// Wraps a channel and counts traffic without altering it.
class CountingChannel : public Channel {
 public:
  explicit CountingChannel(Channel& inner) : inner_(inner) {}

  void send_bytes(const u8* data, std::size_t n) override {
    inner_.send_bytes(data, n);
    bytes_sent += n;
  }

  void recv_bytes(u8* data, std::size_t n) override {
    inner_.recv_bytes(data, n);
    bytes_received += n;
  }

  u64 bytes_sent = 0;
  u64 bytes_received = 0;

 private:
  Channel& inner_;
};

// Wire frame: u32 length (little-endian, counts the whole frame including
// itself), u8 type tag, then 8-byte little-endian words.
enum class MsgType : u8 {
  Open = 1,
  MaskedInput = 2,
  ActivationReturn = 3,
  Result = 4,
  Hello = 5,
  Abort = 15,
};

inline bool known_msg_type(u8 t) {
  switch (static_cast<MsgType>(t)) {
    case MsgType::Open:
    case MsgType::MaskedInput:
    case MsgType::ActivationReturn:
    case MsgType::Result:
    case MsgType::Hello:
    case MsgType::Abort:
      return true;
  }
  return false;
}

/// Frame byte size for a payload of n words.
constexpr u64 frame_bytes(u64 n_words) { return 5 + 8 * n_words; }

struct Frame {
  MsgType type;
  std::vector<u64> payload;
};

inline void send_frame_words(Channel& ch, MsgType type, std::span<const u64> words) {
  std::vector<u8> buf;
  buf.reserve(frame_bytes(words.size()));
  put_u32_le(buf, static_cast<u32>(frame_bytes(words.size())));
  buf.push_back(static_cast<u8>(type));
  for (u64 w : words) put_u64_le(buf, w);
  ch.send_bytes(buf.data(), buf.size());
}

inline void send_frame(Channel& ch, MsgType type, std::span<const FieldElement> elems) {
  std::vector<u64> words;
  words.reserve(elems.size());
  for (const auto& e : elems) words.push_back(e.raw());
  send_frame_words(ch, type, words);
}

inline void send_abort(Channel& ch, i64 layer) {
  u64 w = static_cast<u64>(layer);
  send_frame_words(ch, MsgType::Abort, std::span<const u64>(&w, 1));
}

inline Frame recv_frame(Channel& ch) {
  u8 hdr[4];
  ch.recv_bytes(hdr, 4);
  u32 len = get_u32_le(hdr);
  if (len < 5 || len > (1u << 24) || (len - 5) % 8 != 0)
    throw ProtocolError("protocol: malformed frame length " + std::to_string(len));
  u8 tag;
  ch.recv_bytes(&tag, 1);
  if (!known_msg_type(tag)) throw ProtocolError("protocol: unknown message tag " + std::to_string(tag));
  std::size_t n = (len - 5) / 8;
  std::vector<u8> body(len - 5);
  if (n) ch.recv_bytes(body.data(), body.size());
  Frame f{static_cast<MsgType>(tag), {}};
  f.payload.reserve(n);
  for (std::size_t i = 0; i < n; ++i) f.payload.push_back(get_u64_le(body.data() + 8 * i));
  return f;
}

/// Receive and insist on a specific tag. An Abort frame raises AbortError,
/// anything else unexpected raises DesyncError.
inline Frame expect_frame(Channel& ch, MsgType want) {
  Frame f = recv_frame(ch);
  if (f.type == MsgType::Abort)
    throw AbortError(f.payload.empty() ? -1 : static_cast<i64>(f.payload[0]));
  if (f.type != want) throw DesyncError(static_cast<u8>(f.type), static_cast<u8>(want));
  return f;
}

inline std::vector<FieldElement> payload_elements(const Frame& f, const FieldParams& fp) {
  std::vector<FieldElement> out;
  out.reserve(f.payload.size());
  for (u64 w : f.payload) {
    if (w >= fp.p) throw ProtocolError("protocol: payload word exceeds modulus");
    out.push_back(FieldElement::from_raw(w, fp.p));
  }
  return out;
}

}  // namespace qpi
