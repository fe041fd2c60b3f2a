#include "cop/law/codec.hpp"

#include "cop/core/errors.hpp"

namespace cop::codec {

namespace {

constexpr std::uint8_t kValueInt = 1;
constexpr std::uint8_t kValueString = 2;
constexpr std::uint8_t kValueBytes = 3;
constexpr std::uint8_t kValueAddress = 4;

void expect_tag(ByteReader& r, std::uint8_t tag) {
  auto got = r.u8();
  if (got != tag) {
    throw Error(ErrorCode::DecodeError,
                "expected record tag " + std::to_string(tag) + ", found " + std::to_string(got));
  }
}

EventKind read_event_kind(ByteReader& r) {
  auto k = r.u8();
  if (k < 1 || k > 6) throw Error(ErrorCode::DecodeError, "unknown event kind " + std::to_string(k));
  return static_cast<EventKind>(k);
}

OpKind read_op_kind(ByteReader& r) {
  auto k = r.u8();
  if ((k < 1 || k > 6) && k != 0xFF) {
    throw Error(ErrorCode::DecodeError, "unknown operation kind " + std::to_string(k));
  }
  return static_cast<OpKind>(k);
}

void write_optional_address(ByteWriter& w, const std::optional<AgentAddress>& a) {
  w.u8(a ? 1 : 0);
  if (a) write_address(w, *a);
}

std::optional<AgentAddress> read_optional_address(ByteReader& r) {
  auto flag = r.u8();
  if (flag == 0) return std::nullopt;
  if (flag != 1) throw Error(ErrorCode::DecodeError, "bad presence flag");
  return read_address(r);
}

}  // namespace

void write_address(ByteWriter& w, const AgentAddress& a) {
  w.u32(a.node.value);
  w.u64(a.controller.value);
}

AgentAddress read_address(ByteReader& r) {
  AgentAddress a;
  a.node.value = r.u32();
  a.controller.value = r.u64();
  return a;
}

void write_value(ByteWriter& w, const Value& v) {
  struct Visitor {
    ByteWriter& w;
    void operator()(std::int64_t i) const {
      w.u8(kValueInt);
      w.i64(i);
    }
    void operator()(const std::string& s) const {
      w.u8(kValueString);
      w.str(s);
    }
    void operator()(const Bytes& b) const {
      w.u8(kValueBytes);
      w.bytes(b);
    }
    void operator()(const AgentAddress& a) const {
      w.u8(kValueAddress);
      write_address(w, a);
    }
  };
  std::visit(Visitor{w}, v);
}

Value read_value(ByteReader& r) {
  switch (r.u8()) {
    case kValueInt: return r.i64();
    case kValueString: return r.str();
    case kValueBytes: return r.bytes();
    case kValueAddress: return read_address(r);
    default: throw Error(ErrorCode::DecodeError, "unknown value tag");
  }
}

void write_terms(ByteWriter& w, const Terms& t) {
  w.u32(static_cast<std::uint32_t>(t.size()));
  for (const auto& [k, v] : t) {
    w.str(k);
    write_value(w, v);
  }
}

Terms read_terms(ByteReader& r) {
  Terms t;
  auto n = r.u32();
  const std::string* prev = nullptr;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto key = r.str();
    if (prev != nullptr && !(*prev < key)) {
      throw Error(ErrorCode::DecodeError, "map keys not strictly ascending at '" + key + "'");
    }
    auto [it, _] = t.emplace(std::move(key), read_value(r));
    prev = &it->first;
  }
  return t;
}

void write_operation(ByteWriter& w, const Operation& op) {
  w.u8(kTagOperation);
  w.u8(static_cast<std::uint8_t>(op.kind));
  write_terms(w, op.args);
}

Operation read_operation(ByteReader& r) {
  expect_tag(r, kTagOperation);
  Operation op;
  op.kind = read_op_kind(r);
  op.args = read_terms(r);
  return op;
}

Bytes encode(const Event& e) {
  ByteWriter w;
  w.u8(kTagEvent);
  w.u8(static_cast<std::uint8_t>(e.kind));
  w.u64(e.controller.value);
  w.u64(e.seq);
  write_optional_address(w, e.source);
  write_optional_address(w, e.target);
  w.bytes(e.payload);
  return std::move(w).take();
}

Bytes encode(const Operation& op) {
  ByteWriter w;
  write_operation(w, op);
  return std::move(w).take();
}

Bytes encode(const Ruling& ruling) {
  ByteWriter w;
  w.u8(kTagRuling);
  w.u32(static_cast<std::uint32_t>(ruling.operations.size()));
  for (const auto& op : ruling.operations) write_operation(w, op);
  write_terms(w, ruling.new_state.terms);
  return std::move(w).take();
}

Bytes encode(const ControllerState& s) {
  ByteWriter w;
  w.u8(kTagState);
  write_terms(w, s.terms);
  return std::move(w).take();
}

Event decode_event(ByteView b) {
  ByteReader r(b);
  expect_tag(r, kTagEvent);
  Event e;
  e.kind = read_event_kind(r);
  e.controller.value = r.u64();
  e.seq = r.u64();
  e.source = read_optional_address(r);
  e.target = read_optional_address(r);
  e.payload = r.bytes();
  r.expect_end();
  return e;
}

Operation decode_operation(ByteView b) {
  ByteReader r(b);
  auto op = read_operation(r);
  r.expect_end();
  return op;
}

Ruling decode_ruling(ByteView b) {
  ByteReader r(b);
  expect_tag(r, kTagRuling);
  Ruling ruling;
  auto n = r.u32();
  if (n > r.remaining()) throw Error(ErrorCode::DecodeError, "operation count exceeds input");
  ruling.operations.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) ruling.operations.push_back(read_operation(r));
  ruling.new_state.terms = read_terms(r);
  r.expect_end();
  return ruling;
}

ControllerState decode_state(ByteView b) {
  ByteReader r(b);
  expect_tag(r, kTagState);
  ControllerState s{read_terms(r)};
  r.expect_end();
  return s;
}

}  // namespace cop::codec
