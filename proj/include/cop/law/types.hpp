#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cop/core/bytes.hpp"
#include "cop/core/ids.hpp"

namespace cop {

// A term value. Addresses only appear in operation arguments; controller
// state terms are integers, strings, or byte strings.
using Value = std::variant<std::int64_t, std::string, Bytes, AgentAddress>;

// Sorted by key, which makes the canonical encoding independent of
// insertion order.
using Terms = std::map<std::string, Value, std::less<>>;

struct ControllerState {
  Terms terms;

  bool operator==(const ControllerState&) const = default;

  bool empty() const { return terms.empty(); }
  std::optional<std::int64_t> get_int(std::string_view key) const;
  std::optional<std::string> get_string(std::string_view key) const;
  void set(std::string key, Value v) { terms.insert_or_assign(std::move(key), std::move(v)); }
};

enum class EventKind : std::uint8_t {
  Adopted = 1,
  Arrived = 2,
  Sent = 3,
  ObligationDue = 4,
  Exception = 5,
  Quit = 6,
};

struct Event {
  EventKind kind = EventKind::Adopted;
  std::optional<AgentAddress> source;
  std::optional<AgentAddress> target;
  Bytes payload;
  ControllerId controller;
  std::uint64_t seq = 0;

  bool operator==(const Event&) const = default;

  static Event adopted(ControllerId c, std::uint64_t seq, Bytes args);
  static Event sent(ControllerId c, std::uint64_t seq, AgentAddress self, AgentAddress target, Bytes payload);
  static Event arrived(ControllerId c, std::uint64_t seq, AgentAddress source, AgentAddress self, Bytes payload);
  static Event obligation_due(ControllerId c, std::uint64_t seq, std::string name);
  static Event exception(ControllerId c, std::uint64_t seq, AgentAddress self, AgentAddress unreachable, Bytes payload);
  static Event quit(ControllerId c, std::uint64_t seq);

  // Throws Error(DecodeError) when the kind-specific shape is violated.
  void validate() const;
};

enum class OpKind : std::uint8_t {
  SetTerm = 1,
  Forward = 2,
  Deliver = 3,
  SendMessage = 4,
  ImposeObligation = 5,
  QuitSelf = 6,
  // Delimiter logged by the interceptor after a ruling has been carried out.
  // Never part of a law's ruling.
  RulingEnd = 0xFF,
};

struct Operation {
  OpKind kind = OpKind::SetTerm;
  Terms args;

  bool operator==(const Operation&) const = default;

  static Operation set_term(std::string key, Value value);
  static Operation forward(AgentAddress target, Bytes payload);
  static Operation deliver(Bytes payload);
  static Operation send_message(AgentAddress target, Bytes payload);
  static Operation impose_obligation(std::string name, std::int64_t dt_ms);
  static Operation quit_self();
  static Operation ruling_end();

  // Typed accessors; throw Error(DecodeError) if the argument is missing.
  std::string key() const;
  const Value& value() const;
  AgentAddress target() const;
  const Bytes& payload() const;
  std::string obligation_name() const;
  std::int64_t dt_ms() const;

  // Forward and SendMessage leave the node.
  bool is_transmission() const { return kind == OpKind::Forward || kind == OpKind::SendMessage; }
};

struct Ruling {
  std::vector<Operation> operations;
  ControllerState new_state;

  bool operator==(const Ruling&) const = default;

  static Ruling unchanged(const ControllerState& s) { return Ruling{{}, s}; }
  bool contains(OpKind k) const;
};

std::string_view to_string(EventKind k);
std::string_view to_string(OpKind k);
std::string describe(const Value& v);
std::string describe(const Operation& op);
std::string describe(const Event& e);
std::string describe(const ControllerState& s);

}  // namespace cop
