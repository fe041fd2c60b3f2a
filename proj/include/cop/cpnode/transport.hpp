#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "cop/core/bytes.hpp"
#include "cop/core/ids.hpp"
#include "cop/law/types.hpp"

namespace cop {

namespace net {
class FrameServer;
class FramedStream;
}  // namespace net

// Controller-to-controller message.
struct WireMessage {
  AgentAddress source;
  AgentAddress target;
  Bytes payload;
  LawId sender_law;

  bool operator==(const WireMessage&) const = default;
};

namespace codec {
inline constexpr std::uint8_t kTagWire = 'W';
Bytes encode(const WireMessage& m);
WireMessage decode_wire(ByteView b);
}  // namespace codec

// Receiving side of a transport: a CPnode or an external sink.
class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void on_wire(WireMessage msg) = 0;
  // Whether the endpoint can currently accept messages for `c`.
  virtual bool hosts(ControllerId c) const = 0;
};

class Transport {
 public:
  using Observer = std::function<void(const WireMessage&)>;

  virtual ~Transport() = default;

  virtual void attach(CPNodeId node, Endpoint& endpoint) = 0;
  virtual void detach(CPNodeId node) = 0;

  // Returns false when the target is unreachable.
  bool send(const WireMessage& msg);

  // Test instrumentation: called for every message handed to the transport.
  void set_observer(Observer obs);

  // Messages sent but not yet handed to their endpoint.
  std::int64_t in_flight() const { return sent_.load() - received_.load(); }
  std::int64_t sent_count() const { return sent_.load(); }

 protected:
  virtual bool do_send(const WireMessage& msg) = 0;
  void mark_received() { received_.fetch_add(1); }

 private:
  std::mutex obs_mu_;
  Observer observer_;
  std::atomic<std::int64_t> sent_{0};
  std::atomic<std::int64_t> received_{0};
};

// Synchronous in-process delivery; deterministic.
class InProcessBus final : public Transport {
 public:
  void attach(CPNodeId node, Endpoint& endpoint) override;
  void detach(CPNodeId node) override;

 protected:
  bool do_send(const WireMessage& msg) override;

 private:
  std::mutex mu_;
  std::map<CPNodeId, Endpoint*> endpoints_;
};

// Length-prefixed frames over loopback TCP. Every attached endpoint gets its
// own listening port; senders keep one connection per destination node.
class TcpTransport final : public Transport {
 public:
  TcpTransport();
  ~TcpTransport() override;

  void attach(CPNodeId node, Endpoint& endpoint) override;
  void detach(CPNodeId node) override;

  std::uint16_t port_of(CPNodeId node) const;

 protected:
  bool do_send(const WireMessage& msg) override;

 private:
  struct Peer;
  mutable std::mutex mu_;
  std::map<CPNodeId, std::unique_ptr<net::FrameServer>> servers_;
  std::map<CPNodeId, std::uint16_t> ports_;
  std::map<CPNodeId, std::shared_ptr<Peer>> peers_;
};

// Collects everything sent to it. Stands in for external actors such as a
// monitor or a lock manager.
class SinkEndpoint final : public Endpoint {
 public:
  void on_wire(WireMessage msg) override;
  bool hosts(ControllerId) const override { return true; }

  std::vector<WireMessage> received() const;
  std::size_t count() const;

 private:
  mutable std::mutex mu_;
  std::vector<WireMessage> received_;
};

}  // namespace cop
