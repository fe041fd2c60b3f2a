#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <variant>

#include "cop/core/bytes.hpp"
#include "cop/law/types.hpp"
#include "cop/ledger/entry.hpp"

namespace cop {

namespace net {
class FrameServer;
}

// Inspector-to-CPnode control protocol. Requests are authenticated with an
// HMAC-SHA256 over the request bytes under a shared secret.
//
//   request  = 'Q' || u8 type || body || hmac(32)
//   RECONSTRUCT (type 1) body = u64 request_id || u64 controller || str law
//                               || terms csv || u64 through_event_seq
//                               || u32 n || (str name || i64 due_at)*
//   EXECUTE_OP  (type 2) body = u64 request_id || u64 controller || operation
//   reply    = 'A' || u8 status || u64 processed_events || str message
struct ReconstructRequest {
  std::uint64_t request_id = 0;
  ControllerId controller;
  LawId law;
  ControllerState csv;
  // Number of the controller's events the csv accounts for.
  std::uint64_t through_event_seq = 0;
  // Timers the controller should hold; replaces all current ones.
  PendingObligations obligations;

  bool operator==(const ReconstructRequest&) const = default;
};

struct ExecuteOpRequest {
  std::uint64_t request_id = 0;
  ControllerId controller;
  Operation operation;

  bool operator==(const ExecuteOpRequest&) const = default;
};

using ControlRequest = std::variant<ReconstructRequest, ExecuteOpRequest>;

enum class ControlStatus : std::uint8_t {
  Ok = 0,
  // Already applied; nothing done.
  Duplicate = 1,
  // The controller has processed more events than the csv covers. It is now
  // suspended; retry once the inspector has caught up to `processed_events`.
  Stale = 2,
  Error = 3,
};

struct ControlReply {
  ControlStatus status = ControlStatus::Ok;
  std::uint64_t processed_events = 0;
  std::string message;

  bool operator==(const ControlReply&) const = default;
};

namespace codec {
Bytes encode_request(const ControlRequest& req, std::string_view secret);
// Throws AuthenticationFailed or DecodeError.
ControlRequest decode_request(ByteView frame, std::string_view secret);
Bytes encode(const ControlReply& reply);
ControlReply decode_reply(ByteView frame);
}  // namespace codec

// Handles authenticated control frames; implemented by CPNode.
class ControlHandler {
 public:
  virtual ~ControlHandler() = default;
  virtual Bytes handle_control_frame(ByteView frame) = 0;
};

// Inspector-side client. Throws TransportFailure when the CPnode cannot be
// reached.
class ControlClient {
 public:
  virtual ~ControlClient() = default;
  virtual ControlReply send(CPNodeId node, const ControlRequest& req) = 0;
};

// Direct calls into in-process nodes, still through the encoded frames.
class InProcessControl final : public ControlClient {
 public:
  explicit InProcessControl(std::string secret) : secret_(std::move(secret)) {}

  void add(CPNodeId node, ControlHandler& handler);
  void remove(CPNodeId node);
  ControlReply send(CPNodeId node, const ControlRequest& req) override;

 private:
  std::string secret_;
  std::mutex mu_;
  std::map<CPNodeId, ControlHandler*> nodes_;
};

// Serves a node's control protocol over loopback TCP.
class ControlServer {
 public:
  explicit ControlServer(ControlHandler& handler, std::uint16_t port = 0);
  ~ControlServer();
  std::uint16_t port() const;
  void stop();

 private:
  std::unique_ptr<net::FrameServer> server_;
};

class TcpControlClient final : public ControlClient {
 public:
  explicit TcpControlClient(std::string secret) : secret_(std::move(secret)) {}

  void add(CPNodeId node, std::uint16_t port);
  ControlReply send(CPNodeId node, const ControlRequest& req) override;

 private:
  std::string secret_;
  std::mutex mu_;
  std::map<CPNodeId, std::uint16_t> ports_;
};

}  // namespace cop
