#include "cop/cpnode/control.hpp"

#include "cop/core/digest.hpp"
#include "cop/core/errors.hpp"
#include "cop/law/codec.hpp"
#include "cop/net/server.hpp"

namespace cop {

namespace codec {

namespace {
constexpr std::uint8_t kTypeReconstruct = 1;
constexpr std::uint8_t kTypeExecuteOp = 2;
}  // namespace

Bytes encode_request(const ControlRequest& req, std::string_view secret) {
  ByteWriter w;
  w.u8('Q');
  if (const auto* r = std::get_if<ReconstructRequest>(&req)) {
    w.u8(kTypeReconstruct);
    w.u64(r->request_id);
    w.u64(r->controller.value);
    w.str(r->law);
    write_terms(w, r->csv.terms);
    w.u64(r->through_event_seq);
    write_obligations(w, r->obligations);
  } else {
    const auto& x = std::get<ExecuteOpRequest>(req);
    w.u8(kTypeExecuteOp);
    w.u64(x.request_id);
    w.u64(x.controller.value);
    write_operation(w, x.operation);
  }
  auto mac = hmac_sha256(secret, w.data());
  w.raw(mac);
  return std::move(w).take();
}

ControlRequest decode_request(ByteView frame, std::string_view secret) {
  if (frame.size() < 34) throw Error(ErrorCode::DecodeError, "control frame too short");
  auto body = frame.first(frame.size() - 32);
  auto mac = hmac_sha256(secret, body);
  if (!constant_time_equal(mac, frame.last(32))) {
    throw Error(ErrorCode::AuthenticationFailed, "control request MAC mismatch");
  }
  ByteReader r(body);
  if (r.u8() != 'Q') throw Error(ErrorCode::DecodeError, "not a control request");
  auto type = r.u8();
  if (type == kTypeReconstruct) {
    ReconstructRequest req;
    req.request_id = r.u64();
    req.controller.value = r.u64();
    req.law = r.str();
    req.csv.terms = read_terms(r);
    req.through_event_seq = r.u64();
    req.obligations = read_obligations(r);
    r.expect_end();
    return req;
  }
  if (type == kTypeExecuteOp) {
    ExecuteOpRequest req;
    req.request_id = r.u64();
    req.controller.value = r.u64();
    req.operation = read_operation(r);
    r.expect_end();
    return req;
  }
  throw Error(ErrorCode::DecodeError, "unknown control request type " + std::to_string(type));
}

Bytes encode(const ControlReply& reply) {
  ByteWriter w;
  w.u8('A');
  w.u8(static_cast<std::uint8_t>(reply.status));
  w.u64(reply.processed_events);
  w.str(reply.message);
  return std::move(w).take();
}

ControlReply decode_reply(ByteView frame) {
  ByteReader r(frame);
  if (r.u8() != 'A') throw Error(ErrorCode::DecodeError, "not a control reply");
  ControlReply reply;
  auto status = r.u8();
  if (status > 3) throw Error(ErrorCode::DecodeError, "unknown control status");
  reply.status = static_cast<ControlStatus>(status);
  reply.processed_events = r.u64();
  reply.message = r.str();
  r.expect_end();
  return reply;
}

}  // namespace codec

void InProcessControl::add(CPNodeId node, ControlHandler& handler) {
  std::lock_guard lock(mu_);
  nodes_[node] = &handler;
}

void InProcessControl::remove(CPNodeId node) {
  std::lock_guard lock(mu_);
  nodes_.erase(node);
}

ControlReply InProcessControl::send(CPNodeId node, const ControlRequest& req) {
  ControlHandler* handler = nullptr;
  {
    std::lock_guard lock(mu_);
    auto it = nodes_.find(node);
    if (it == nodes_.end()) throw Error(ErrorCode::TransportFailure, "no control endpoint for " + to_string(node));
    handler = it->second;
  }
  return codec::decode_reply(handler->handle_control_frame(codec::encode_request(req, secret_)));
}

ControlServer::ControlServer(ControlHandler& handler, std::uint16_t port)
    : server_(std::make_unique<net::FrameServer>(
          [&handler](ByteView frame) -> std::optional<Bytes> { return handler.handle_control_frame(frame); },
          port)) {}

ControlServer::~ControlServer() { stop(); }

std::uint16_t ControlServer::port() const { return server_->port(); }

void ControlServer::stop() { server_->stop(); }

void TcpControlClient::add(CPNodeId node, std::uint16_t port) {
  std::lock_guard lock(mu_);
  ports_[node] = port;
}

ControlReply TcpControlClient::send(CPNodeId node, const ControlRequest& req) {
  std::uint16_t port = 0;
  {
    std::lock_guard lock(mu_);
    auto it = ports_.find(node);
    if (it == ports_.end()) throw Error(ErrorCode::TransportFailure, "no control endpoint for " + to_string(node));
    port = it->second;
  }
  auto stream = net::FramedStream::connect("127.0.0.1", port);
  stream.send_frame(codec::encode_request(req, secret_));
  auto reply = stream.recv_frame();
  if (!reply) throw Error(ErrorCode::TransportFailure, "control connection closed by " + to_string(node));
  return codec::decode_reply(*reply);
}

}  // namespace cop
