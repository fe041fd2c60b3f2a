#include "cop/law/types.hpp"

#include <sstream>

#include "cop/core/errors.hpp"

namespace cop {

std::optional<std::int64_t> ControllerState::get_int(std::string_view key) const {
  auto it = terms.find(key);
  if (it == terms.end()) return std::nullopt;
  if (auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
  return std::nullopt;
}

std::optional<std::string> ControllerState::get_string(std::string_view key) const {
  auto it = terms.find(key);
  if (it == terms.end()) return std::nullopt;
  if (auto* v = std::get_if<std::string>(&it->second)) return *v;
  return std::nullopt;
}

Event Event::adopted(ControllerId c, std::uint64_t seq, Bytes args) {
  return Event{EventKind::Adopted, std::nullopt, std::nullopt, std::move(args), c, seq};
}

Event Event::sent(ControllerId c, std::uint64_t seq, AgentAddress self, AgentAddress target, Bytes payload) {
  return Event{EventKind::Sent, self, target, std::move(payload), c, seq};
}

Event Event::arrived(ControllerId c, std::uint64_t seq, AgentAddress source, AgentAddress self, Bytes payload) {
  return Event{EventKind::Arrived, source, self, std::move(payload), c, seq};
}

Event Event::obligation_due(ControllerId c, std::uint64_t seq, std::string name) {
  return Event{EventKind::ObligationDue, std::nullopt, std::nullopt, to_bytes(name), c, seq};
}

Event Event::exception(ControllerId c, std::uint64_t seq, AgentAddress self, AgentAddress unreachable,
                       Bytes payload) {
  return Event{EventKind::Exception, self, unreachable, std::move(payload), c, seq};
}

Event Event::quit(ControllerId c, std::uint64_t seq) {
  return Event{EventKind::Quit, std::nullopt, std::nullopt, {}, c, seq};
}

void Event::validate() const {
  if (seq == 0) throw Error(ErrorCode::DecodeError, "event seq must be >= 1");
  switch (kind) {
    case EventKind::Adopted:
    case EventKind::ObligationDue:
    case EventKind::Quit:
      if (source) throw Error(ErrorCode::DecodeError, std::string(to_string(kind)) + " event carries a source");
      break;
    case EventKind::Sent:
      if (!target) throw Error(ErrorCode::DecodeError, "Sent event without target");
      break;
    case EventKind::Arrived:
      if (!source) throw Error(ErrorCode::DecodeError, "Arrived event without source");
      break;
    case EventKind::Exception:
      break;
  }
}

Operation Operation::set_term(std::string key, Value value) {
  Operation op{OpKind::SetTerm, {}};
  op.args.emplace("key", std::move(key));
  op.args.emplace("value", std::move(value));
  return op;
}

Operation Operation::forward(AgentAddress target, Bytes payload) {
  Operation op{OpKind::Forward, {}};
  op.args.emplace("target", target);
  op.args.emplace("payload", std::move(payload));
  return op;
}

Operation Operation::deliver(Bytes payload) {
  Operation op{OpKind::Deliver, {}};
  op.args.emplace("payload", std::move(payload));
  return op;
}

Operation Operation::send_message(AgentAddress target, Bytes payload) {
  Operation op{OpKind::SendMessage, {}};
  op.args.emplace("target", target);
  op.args.emplace("payload", std::move(payload));
  return op;
}

Operation Operation::impose_obligation(std::string name, std::int64_t dt_ms) {
  Operation op{OpKind::ImposeObligation, {}};
  op.args.emplace("name", std::move(name));
  op.args.emplace("dt", dt_ms);
  return op;
}

Operation Operation::quit_self() { return Operation{OpKind::QuitSelf, {}}; }

Operation Operation::ruling_end() { return Operation{OpKind::RulingEnd, {}}; }

namespace {

const Value& arg(const Operation& op, std::string_view name) {
  auto it = op.args.find(name);
  if (it == op.args.end()) {
    throw Error(ErrorCode::DecodeError,
                std::string(to_string(op.kind)) + " operation missing argument '" + std::string(name) + "'");
  }
  return it->second;
}

template <typename T>
const T& typed_arg(const Operation& op, std::string_view name) {
  const auto* v = std::get_if<T>(&arg(op, name));
  if (v == nullptr) {
    throw Error(ErrorCode::DecodeError, "argument '" + std::string(name) + "' has the wrong type");
  }
  return *v;
}

}  // namespace

std::string Operation::key() const { return typed_arg<std::string>(*this, "key"); }
const Value& Operation::value() const { return arg(*this, "value"); }
AgentAddress Operation::target() const { return typed_arg<AgentAddress>(*this, "target"); }
const Bytes& Operation::payload() const { return typed_arg<Bytes>(*this, "payload"); }
std::string Operation::obligation_name() const { return typed_arg<std::string>(*this, "name"); }
std::int64_t Operation::dt_ms() const { return typed_arg<std::int64_t>(*this, "dt"); }

bool Ruling::contains(OpKind k) const {
  for (const auto& op : operations) {
    if (op.kind == k) return true;
  }
  return false;
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Adopted: return "adopted";
    case EventKind::Arrived: return "arrived";
    case EventKind::Sent: return "sent";
    case EventKind::ObligationDue: return "obligationDue";
    case EventKind::Exception: return "exception";
    case EventKind::Quit: return "quit";
  }
  return "?";
}

std::string_view to_string(OpKind k) {
  switch (k) {
    case OpKind::SetTerm: return "set";
    case OpKind::Forward: return "forward";
    case OpKind::Deliver: return "deliver";
    case OpKind::SendMessage: return "send";
    case OpKind::ImposeObligation: return "imposeObligation";
    case OpKind::QuitSelf: return "quit";
    case OpKind::RulingEnd: return "<end>";
  }
  return "?";
}

namespace {

bool printable(const Bytes& b) {
  for (auto c : b) {
    if (c < 0x20 || c > 0x7E) return false;
  }
  return true;
}

}  // namespace

std::string describe(const Value& v) {
  struct Visitor {
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(const std::string& s) const { return "\"" + s + "\""; }
    std::string operator()(const Bytes& b) const {
      if (b.size() <= 64 && printable(b)) return "b\"" + to_string(ByteView(b)) + "\"";
      return "0x" + to_hex(b.size() > 32 ? ByteView(b).first(32) : ByteView(b)) + (b.size() > 32 ? "..." : "");
    }
    std::string operator()(const AgentAddress& a) const { return to_string(a); }
  };
  return std::visit(Visitor{}, v);
}

namespace {

std::string describe_terms(const Terms& terms) {
  std::ostringstream out;
  out << "{";
  bool first = true;
  for (const auto& [k, v] : terms) {
    if (!first) out << ", ";
    first = false;
    out << k << ": " << describe(v);
  }
  out << "}";
  return out.str();
}

}  // namespace

std::string describe(const Operation& op) {
  return std::string(to_string(op.kind)) + describe_terms(op.args);
}

std::string describe(const Event& e) {
  std::ostringstream out;
  out << to_string(e.kind) << "#" << e.seq << "@" << to_string(e.controller);
  if (e.source) out << " from " << to_string(*e.source);
  if (e.target) out << " to " << to_string(*e.target);
  if (!e.payload.empty()) out << " " << describe(Value(e.payload));
  return out.str();
}

std::string describe(const ControllerState& s) { return describe_terms(s.terms); }

}  // namespace cop
