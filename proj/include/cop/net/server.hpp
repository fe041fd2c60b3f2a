#pragma once

#include <functional>
#include <list>
#include <mutex>
#include <thread>

#include "cop/net/socket.hpp"

namespace cop::net {

// Accepts connections on a loopback port and runs `handler` for every
// inbound frame. A returned frame is sent back on the same connection.
class FrameServer {
 public:
  using Handler = std::function<std::optional<Bytes>(ByteView request)>;

  explicit FrameServer(Handler handler, std::uint16_t port = 0);
  FrameServer(const FrameServer&) = delete;
  FrameServer& operator=(const FrameServer&) = delete;
  ~FrameServer();

  std::uint16_t port() const { return listener_.port(); }
  void stop();

 private:
  void accept_loop();

  Handler handler_;
  Listener listener_;
  std::mutex mu_;
  bool stopping_ = false;
  std::list<std::pair<FramedStream*, std::thread>> connections_;
  std::thread acceptor_;
};

}  // namespace cop::net
