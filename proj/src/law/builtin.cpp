#include "cop/law/builtin.hpp"

#include <charconv>
#include <limits>

#include "cop/core/errors.hpp"
#include "cop/law/codec.hpp"

namespace cop::laws {

std::optional<std::int64_t> parse_amount(ByteView payload) {
  if (payload.empty() || payload.size() > 20) return std::nullopt;
  const char* first = reinterpret_cast<const char*>(payload.data());
  const char* last = first + payload.size();
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) return std::nullopt;
  return v;
}

Bytes amount_payload(std::int64_t amount) { return to_bytes(std::to_string(amount)); }

Bytes MoneyTransferLaw::definition() const {
  ByteWriter w;
  w.str("money-transfer/1");
  w.str("R1 adopted: set budget initial");
  w.str("R2 sent: 0 < amount <= budget => set budget budget-amount; forward");
  w.str("R3 arrived: amount > 0 => set budget budget+amount; deliver");
  w.i64(initial_budget_);
  return std::move(w).take();
}

Ruling MoneyTransferLaw::evaluate(const Event& e, const ControllerState& s) const {
  switch (e.kind) {
    case EventKind::Adopted: {
      Ruling r{{Operation::set_term("budget", initial_budget_)}, s};
      r.new_state.set("budget", initial_budget_);
      return r;
    }
    case EventKind::Sent: {
      auto amount = parse_amount(e.payload);
      auto budget = s.get_int("budget");
      if (!amount || !budget || !e.target || *amount <= 0 || *amount > *budget) break;
      Ruling r{{Operation::set_term("budget", *budget - *amount), Operation::forward(*e.target, e.payload)}, s};
      r.new_state.set("budget", *budget - *amount);
      return r;
    }
    case EventKind::Arrived: {
      auto amount = parse_amount(e.payload);
      auto budget = s.get_int("budget");
      // An undefined budget is not a number; the deposit rule does not fire.
      if (!amount || !budget || *amount <= 0) break;
      if (*amount > std::numeric_limits<std::int64_t>::max() - *budget) break;
      Ruling r{{Operation::set_term("budget", *budget + *amount), Operation::deliver(e.payload)}, s};
      r.new_state.set("budget", *budget + *amount);
      return r;
    }
    default:
      break;
  }
  return Ruling::unchanged(s);
}

Bytes MonitoringLaw::definition() const {
  ByteWriter w;
  w.str("monitoring/1");
  w.str("R1 adopted: send birth record to monitor");
  w.str("R2 sent: forward; send copy with sender and target to monitor");
  w.str("R3 arrived: deliver");
  codec::write_address(w, monitor_);
  return std::move(w).take();
}

Ruling MonitoringLaw::evaluate(const Event& e, const ControllerState& s) const {
  switch (e.kind) {
    case EventKind::Adopted: {
      MonitorRecord birth{MonitorRecord::Type::Birth, AgentAddress::of(e.controller), {}, {}, {}};
      return Ruling{{Operation::send_message(monitor_, encode_monitor_record(birth))}, s};
    }
    case EventKind::Sent: {
      if (!e.target) break;
      AgentAddress sender = e.source.value_or(AgentAddress::of(e.controller));
      MonitorRecord copy{MonitorRecord::Type::Copy, {}, sender, *e.target, e.payload};
      return Ruling{{Operation::forward(*e.target, e.payload),
                     Operation::send_message(monitor_, encode_monitor_record(copy))},
                    s};
    }
    case EventKind::Arrived:
      return Ruling{{Operation::deliver(e.payload)}, s};
    default:
      break;
  }
  return Ruling::unchanged(s);
}

Bytes LockLaw::definition() const {
  ByteWriter w;
  w.str("lock/1");
  w.str("adopted: holding 0");
  w.str("sent: release while holding clears holding; forward");
  w.str("arrived grant: holding 1; impose lock-timeout; deliver");
  w.str("obligationDue lock-timeout while holding: holding 0; send release to manager");
  codec::write_address(w, manager_);
  w.i64(hold_ms_);
  return std::move(w).take();
}

Ruling LockLaw::evaluate(const Event& e, const ControllerState& s) const {
  const std::string body = to_string(ByteView(e.payload));
  const bool holding = s.get_int("holding").value_or(0) == 1;
  switch (e.kind) {
    case EventKind::Adopted: {
      Ruling r{{Operation::set_term("holding", std::int64_t{0})}, s};
      r.new_state.set("holding", std::int64_t{0});
      return r;
    }
    case EventKind::Sent: {
      if (!e.target) break;
      if (body == "release") {
        if (!holding) break;
        Ruling r{{Operation::set_term("holding", std::int64_t{0}), Operation::forward(*e.target, e.payload)}, s};
        r.new_state.set("holding", std::int64_t{0});
        return r;
      }
      return Ruling{{Operation::forward(*e.target, e.payload)}, s};
    }
    case EventKind::Arrived: {
      if (body == "grant") {
        Ruling r{{Operation::set_term("holding", std::int64_t{1}),
                  Operation::impose_obligation(std::string(kObligation), hold_ms_), Operation::deliver(e.payload)},
                 s};
        r.new_state.set("holding", std::int64_t{1});
        return r;
      }
      return Ruling{{Operation::deliver(e.payload)}, s};
    }
    case EventKind::ObligationDue: {
      if (body != kObligation || !holding) break;
      Ruling r{{Operation::set_term("holding", std::int64_t{0}), Operation::send_message(manager_, to_bytes("release"))},
               s};
      r.new_state.set("holding", std::int64_t{0});
      return r;
    }
    default:
      break;
  }
  return Ruling::unchanged(s);
}

Bytes encode_monitor_record(const MonitorRecord& r) {
  ControllerState rec;
  if (r.type == MonitorRecord::Type::Birth) {
    rec.set("type", std::string("birth"));
    rec.set("agent", r.agent);
  } else {
    rec.set("type", std::string("copy"));
    rec.set("sender", r.sender);
    rec.set("target", r.target);
    rec.set("payload", r.payload);
  }
  return codec::encode(rec);
}

MonitorRecord decode_monitor_record(ByteView b) {
  auto rec = codec::decode_state(b);
  auto type = rec.get_string("type");
  auto addr = [&](const char* key) {
    auto it = rec.terms.find(key);
    if (it == rec.terms.end() || !std::holds_alternative<AgentAddress>(it->second)) {
      throw Error(ErrorCode::DecodeError, std::string("monitor record missing ") + key);
    }
    return std::get<AgentAddress>(it->second);
  };
  MonitorRecord out;
  if (type == "birth") {
    out.type = MonitorRecord::Type::Birth;
    out.agent = addr("agent");
  } else if (type == "copy") {
    out.type = MonitorRecord::Type::Copy;
    out.sender = addr("sender");
    out.target = addr("target");
    auto it = rec.terms.find("payload");
    if (it == rec.terms.end() || !std::holds_alternative<Bytes>(it->second)) {
      throw Error(ErrorCode::DecodeError, "monitor copy missing payload");
    }
    out.payload = std::get<Bytes>(it->second);
  } else {
    throw Error(ErrorCode::DecodeError, "unknown monitor record type");
  }
  return out;
}

}  // namespace cop::laws
