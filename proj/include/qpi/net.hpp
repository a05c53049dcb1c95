#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <thread>

#include "qpi/channel.hpp"

namespace qpi {

/// Blocking stream socket as a Channel. Owns the descriptor.
class TcpChannel : public Channel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {
    if (fd_ < 0) throw std::invalid_argument("net: bad socket descriptor");
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }

  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;
  ~TcpChannel() override { close(); }

  void send_bytes(const u8* data, std::size_t n) override {
    while (n > 0) {
      ssize_t k = ::send(fd_, data, n, MSG_NOSIGNAL);
      if (k <= 0) throw ProtocolError("net: send failed (connection lost)");
      data += k;
      n -= static_cast<std::size_t>(k);
    }
  }

  void recv_bytes(u8* data, std::size_t n) override {
    while (n > 0) {
      ssize_t k = ::recv(fd_, data, n, 0);
      if (k <= 0) throw ProtocolError("net: connection closed mid-read");
      data += k;
      n -= static_cast<std::size_t>(k);
    }
  }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_;
};

/// Bound listening socket; port 0 picks a free port, readable via port().
class TcpListener {
 public:
  explicit TcpListener(std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("net: socket() failed");
    int one = 1;
    setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      ::close(fd_);
      throw std::runtime_error("net: bind failed on port " + std::to_string(port));
    }
    if (::listen(fd_, 1) != 0) {
      ::close(fd_);
      throw std::runtime_error("net: listen failed");
    }
    socklen_t len = sizeof addr;
    getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
  }

  std::uint16_t port() const { return port_; }

  TcpChannel accept_one() {
    int cfd = ::accept(fd_, nullptr, nullptr);
    if (cfd < 0) throw std::runtime_error("net: accept failed");
    return TcpChannel(cfd);
  }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Connect with retries so the client can start before the server listens.
inline TcpChannel tcp_connect(const std::string& host, std::uint16_t port, unsigned attempts = 50,
                              std::chrono::milliseconds delay = std::chrono::milliseconds(100)) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  for (unsigned i = 0; i < attempts; ++i) {
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) == 0) {
      for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
          freeaddrinfo(res);
          return TcpChannel(fd);
        }
        ::close(fd);
      }
      freeaddrinfo(res);
    }
    std::this_thread::sleep_for(delay);
  }
  throw std::runtime_error("net: could not connect to " + host + ":" + std::to_string(port));
}

}  // namespace qpi
