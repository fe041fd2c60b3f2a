#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cop/core/bytes.hpp"

namespace cop::net {

// Owning TCP connection carrying u32 big-endian length-prefixed frames.
class FramedStream {
 public:
  FramedStream() = default;
  explicit FramedStream(int fd) : fd_(fd) {}
  FramedStream(FramedStream&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  FramedStream& operator=(FramedStream&& other) noexcept;
  FramedStream(const FramedStream&) = delete;
  FramedStream& operator=(const FramedStream&) = delete;
  ~FramedStream();

  // Connects to 127.0.0.1:port (or host). Throws TransportFailure.
  static FramedStream connect(const std::string& host, std::uint16_t port);

  // Throws TransportFailure on a broken connection.
  void send_frame(ByteView frame);
  // nullopt on orderly EOF; throws TransportFailure on errors or oversized frames.
  std::optional<Bytes> recv_frame();

  bool valid() const { return fd_ >= 0; }
  void shutdown();
  void close();

 private:
  int fd_ = -1;
};

// Listening socket bound to 127.0.0.1 (port 0 picks an ephemeral port).
class Listener {
 public:
  explicit Listener(std::uint16_t port = 0);
  Listener(Listener&& other) noexcept : fd_(other.fd_), port_(other.port_) { other.fd_ = -1; }
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;
  ~Listener();

  std::uint16_t port() const { return port_; }
  // Blocks; nullopt once the listener has been shut down.
  std::optional<FramedStream> accept();
  void shutdown();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

inline constexpr std::uint32_t kMaxFrame = 64u << 20;

}  // namespace cop::net
