#include "cop/cpnode/transport.hpp"

#include "cop/core/errors.hpp"
#include "cop/law/codec.hpp"
#include "cop/net/server.hpp"

namespace cop {

namespace codec {

Bytes encode(const WireMessage& m) {
  ByteWriter w;
  w.u8(kTagWire);
  write_address(w, m.source);
  write_address(w, m.target);
  w.bytes(m.payload);
  w.str(m.sender_law);
  return std::move(w).take();
}

WireMessage decode_wire(ByteView b) {
  ByteReader r(b);
  if (r.u8() != kTagWire) throw Error(ErrorCode::DecodeError, "not a wire message");
  WireMessage m;
  m.source = read_address(r);
  m.target = read_address(r);
  m.payload = r.bytes();
  m.sender_law = r.str();
  r.expect_end();
  return m;
}

}  // namespace codec

bool Transport::send(const WireMessage& msg) {
  {
    std::lock_guard lock(obs_mu_);
    if (observer_) observer_(msg);
  }
  sent_.fetch_add(1);
  if (!do_send(msg)) {
    sent_.fetch_sub(1);
    return false;
  }
  return true;
}

void Transport::set_observer(Observer obs) {
  std::lock_guard lock(obs_mu_);
  observer_ = std::move(obs);
}

void InProcessBus::attach(CPNodeId node, Endpoint& endpoint) {
  std::lock_guard lock(mu_);
  endpoints_[node] = &endpoint;
}

void InProcessBus::detach(CPNodeId node) {
  std::lock_guard lock(mu_);
  endpoints_.erase(node);
}

bool InProcessBus::do_send(const WireMessage& msg) {
  Endpoint* ep = nullptr;
  {
    std::lock_guard lock(mu_);
    auto it = endpoints_.find(msg.target.node);
    if (it == endpoints_.end()) return false;
    ep = it->second;
  }
  if (!ep->hosts(msg.target.controller)) return false;
  mark_received();
  ep->on_wire(msg);
  return true;
}

struct TcpTransport::Peer {
  std::mutex mu;
  net::FramedStream stream;
};

TcpTransport::TcpTransport() = default;

TcpTransport::~TcpTransport() {
  std::map<CPNodeId, std::unique_ptr<net::FrameServer>> servers;
  {
    std::lock_guard lock(mu_);
    servers.swap(servers_);
    peers_.clear();
  }
  for (auto& [_, s] : servers) s->stop();
}

void TcpTransport::attach(CPNodeId node, Endpoint& endpoint) {
  auto server = std::make_unique<net::FrameServer>([this, &endpoint](ByteView frame) -> std::optional<Bytes> {
    WireMessage msg;
    try {
      msg = codec::decode_wire(frame);
    } catch (const Error&) {
      // Unsolicited or malformed traffic is not a wire message; drop it.
      return std::nullopt;
    }
    mark_received();
    endpoint.on_wire(std::move(msg));
    return std::nullopt;
  });
  std::lock_guard lock(mu_);
  ports_[node] = server->port();
  servers_[node] = std::move(server);
}

void TcpTransport::detach(CPNodeId node) {
  std::unique_ptr<net::FrameServer> server;
  {
    std::lock_guard lock(mu_);
    auto it = servers_.find(node);
    if (it == servers_.end()) return;
    server = std::move(it->second);
    servers_.erase(it);
    ports_.erase(node);
    peers_.erase(node);
  }
  server->stop();
}

std::uint16_t TcpTransport::port_of(CPNodeId node) const {
  std::lock_guard lock(mu_);
  auto it = ports_.find(node);
  return it == ports_.end() ? 0 : it->second;
}

bool TcpTransport::do_send(const WireMessage& msg) {
  std::shared_ptr<Peer> peer;
  std::uint16_t port = 0;
  {
    std::lock_guard lock(mu_);
    auto pit = ports_.find(msg.target.node);
    if (pit == ports_.end()) return false;
    port = pit->second;
    auto& slot = peers_[msg.target.node];
    if (!slot) slot = std::make_shared<Peer>();
    peer = slot;
  }
  const auto frame = codec::encode(msg);
  std::lock_guard lock(peer->mu);
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      if (!peer->stream.valid()) peer->stream = net::FramedStream::connect("127.0.0.1", port);
      peer->stream.send_frame(frame);
      return true;
    } catch (const Error&) {
      peer->stream.close();
    }
  }
  return false;
}

void SinkEndpoint::on_wire(WireMessage msg) {
  std::lock_guard lock(mu_);
  received_.push_back(std::move(msg));
}

std::vector<WireMessage> SinkEndpoint::received() const {
  std::lock_guard lock(mu_);
  return received_;
}

std::size_t SinkEndpoint::count() const {
  std::lock_guard lock(mu_);
  return received_.size();
}

}  // namespace cop
