#include "cop/net/server.hpp"

#include <iostream>
#include <memory>

#include "cop/core/errors.hpp"

namespace cop::net {

FrameServer::FrameServer(Handler handler, std::uint16_t port)
    : handler_(std::move(handler)), listener_(port), acceptor_([this] { accept_loop(); }) {}

FrameServer::~FrameServer() { stop(); }

void FrameServer::accept_loop() {
  while (true) {
    auto conn = listener_.accept();
    if (!conn) return;
    auto owned = std::make_shared<FramedStream>(std::move(*conn));
    std::lock_guard lock(mu_);
    if (stopping_) return;
    connections_.emplace_back(owned.get(), std::thread([this, owned] {
                                try {
                                  while (auto frame = owned->recv_frame()) {
                                    auto reply = handler_(*frame);
                                    if (reply) owned->send_frame(*reply);
                                  }
                                } catch (const Error&) {
                                  // Peer went away; the connection is dropped.
                                }
                              }));
  }
}

void FrameServer::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopping_) return;
    stopping_ = true;
    for (auto& [stream, _] : connections_) stream->shutdown();
  }
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  for (auto& [_, t] : connections_) {
    if (t.joinable()) t.join();
  }
}

}  // namespace cop::net
