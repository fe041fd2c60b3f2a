#include "cop/net/socket.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "cop/core/errors.hpp"

namespace cop::net {

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw Error(ErrorCode::TransportFailure, what + ": " + std::strerror(errno));
}

bool read_exact(int fd, std::uint8_t* out, std::size_t n, bool allow_eof_at_start) {
  std::size_t got = 0;
  while (got < n) {
    auto r = ::recv(fd, out + got, n - got, 0);
    if (r == 0) {
      if (got == 0 && allow_eof_at_start) return false;
      throw Error(ErrorCode::TransportFailure, "connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      fail("recv");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace

FramedStream& FramedStream::operator=(FramedStream&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

FramedStream::~FramedStream() { close(); }

FramedStream FramedStream::connect(const std::string& host, std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) fail("socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw Error(ErrorCode::TransportFailure, "bad host " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    int saved = errno;
    ::close(fd);
    errno = saved;
    fail("connect " + host + ":" + std::to_string(port));
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return FramedStream(fd);
}

void FramedStream::send_frame(ByteView frame) {
  if (fd_ < 0) throw Error(ErrorCode::TransportFailure, "send on closed stream");
  ByteWriter w;
  w.bytes(frame);
  const auto& buf = w.data();
  std::size_t off = 0;
  while (off < buf.size()) {
    auto n = ::send(fd_, buf.data() + off, buf.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("send");
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<Bytes> FramedStream::recv_frame() {
  if (fd_ < 0) return std::nullopt;
  std::uint8_t len_buf[4];
  if (!read_exact(fd_, len_buf, 4, true)) return std::nullopt;
  std::uint32_t len = (std::uint32_t{len_buf[0]} << 24) | (std::uint32_t{len_buf[1]} << 16) |
                      (std::uint32_t{len_buf[2]} << 8) | std::uint32_t{len_buf[3]};
  if (len > kMaxFrame) throw Error(ErrorCode::TransportFailure, "frame of " + std::to_string(len) + " bytes");
  Bytes out(len);
  if (len > 0) read_exact(fd_, out.data(), len, false);
  return out;
}

void FramedStream::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void FramedStream::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Listener::Listener(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) fail("socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) fail("bind");
  if (::listen(fd_, 128) != 0) fail("listen");
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<FramedStream> Listener::accept() {
  while (true) {
    int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return FramedStream(fd);
    }
    if (errno == EINTR || errno == ECONNABORTED) continue;
    return std::nullopt;
  }
}

void Listener::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

}  // namespace cop::net
