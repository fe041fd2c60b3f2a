#pragma once

// Test-only laws, oracles and fixtures.

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cop/core/errors.hpp"
#include "cop/cpnode/cpnode.hpp"
#include "cop/harness/community.hpp"
#include "cop/law/builtin.hpp"
#include "cop/law/codec.hpp"

namespace cop::test {

// Admission by password.
//   adopted with args == password: set member 1.
//   adopted otherwise: quit-self (the adoption is refused).
//   sent while member: forward. arrived: deliver.
class PasswordLaw final : public Law {
 public:
  explicit PasswordLaw(std::string password) : password_(std::move(password)) {}
  LawId id() const override { return "PW"; }
  Bytes definition() const override { return to_bytes("password/1 " + password_); }
  Ruling evaluate(const Event& e, const ControllerState& s) const override {
    switch (e.kind) {
      case EventKind::Adopted: {
        if (to_string(ByteView(e.payload)) != password_) return Ruling{{Operation::quit_self()}, s};
        Ruling r{{Operation::set_term("member", std::int64_t{1})}, s};
        r.new_state.set("member", std::int64_t{1});
        return r;
      }
      case EventKind::Sent:
        if (s.get_int("member") == 1 && e.target) return Ruling{{Operation::forward(*e.target, e.payload)}, s};
        break;
      case EventKind::Arrived:
        return Ruling{{Operation::deliver(e.payload)}, s};
      default:
        break;
    }
    return Ruling::unchanged(s);
  }

 private:
  std::string password_;
};

// Independent money-transfer reference: the three rules written out by hand
// over a plain integer budget.
struct MtOracle {
  std::int64_t initial = 1000;

  struct Result {
    std::vector<Operation> ops;
    std::optional<std::int64_t> budget;
  };

  static std::optional<std::int64_t> amount(const Bytes& payload) {
    const std::string s(payload.begin(), payload.end());
    if (s.empty() || s.size() > 20) return std::nullopt;
    std::size_t i = (s[0] == '-' ? 1 : 0);
    if (i == s.size()) return std::nullopt;
    for (std::size_t k = i; k < s.size(); ++k) {
      if (s[k] < '0' || s[k] > '9') return std::nullopt;
    }
    try {
      return std::stoll(s);
    } catch (...) {
      return std::nullopt;
    }
  }

  Result step(const Event& e, std::optional<std::int64_t> budget) const {
    Result r{{}, budget};
    if (e.kind == EventKind::Adopted) {
      r.ops.push_back(Operation::set_term("budget", initial));
      r.budget = initial;
    } else if (e.kind == EventKind::Sent) {
      auto a = amount(e.payload);
      if (a && budget && e.target && *a > 0 && *a <= *budget) {
        r.budget = *budget - *a;
        r.ops.push_back(Operation::set_term("budget", *r.budget));
        r.ops.push_back(Operation::forward(*e.target, e.payload));
      }
    } else if (e.kind == EventKind::Arrived) {
      auto a = amount(e.payload);
      if (a && budget && *a > 0) {
        r.budget = *budget + *a;
        r.ops.push_back(Operation::set_term("budget", *r.budget));
        r.ops.push_back(Operation::deliver(e.payload));
      }
    }
    return r;
  }
};

// One event and the operations logged for it, as read from a controller view.
struct Group {
  Event event;
  std::uint64_t ctrl_seq = 0;
  std::vector<Operation> ops;
  bool closed = false;
};

// Splits a controller view into ruling groups. Repair and Reconstructed
// entries are returned separately through the optional out-parameters.
inline std::vector<Group> groups_of(const std::vector<LedgerEntry>& view, std::size_t* others = nullptr) {
  std::vector<Group> out;
  for (const auto& e : view) {
    if (e.kind == EntryKind::Event) {
      out.push_back(Group{codec::decode_event(e.body), e.ctrl_seq, {}, false});
    } else if (e.kind == EntryKind::Operation) {
      if (out.empty()) throw std::runtime_error("operation before any event");
      auto op = codec::decode_operation(e.body);
      if (op.kind == OpKind::RulingEnd) {
        out.back().closed = true;
      } else {
        out.back().ops.push_back(op);
      }
    } else if (others) {
      ++*others;
    }
  }
  return out;
}

inline std::vector<Bytes> encoded(const std::vector<Operation>& ops) {
  std::vector<Bytes> out;
  for (const auto& op : ops) out.push_back(codec::encode(op));
  return out;
}

// A ledger that can be taken down.
class FlakyLedger final : public Ledger {
 public:
  explicit FlakyLedger(std::shared_ptr<Ledger> inner) : inner_(std::move(inner)) {}
  std::atomic<bool> down{false};

  const LawId& law() const override { return inner_->law(); }
  std::uint64_t append(LedgerEntry e) override {
    check();
    return inner_->append(std::move(e));
  }
  std::vector<LedgerEntry> read(std::uint64_t from, std::size_t max) const override {
    check();
    return inner_->read(from, max);
  }
  bool wait_for(std::uint64_t from, std::chrono::milliseconds timeout) const override {
    check();
    return inner_->wait_for(from, timeout);
  }
  std::uint64_t size() const override {
    check();
    return inner_->size();
  }
  std::vector<LedgerEntry> controller_view(ControllerId c, std::uint64_t from) const override {
    check();
    return inner_->controller_view(c, from);
  }
  std::uint64_t last_ctrl_seq(ControllerId c) const override {
    check();
    return inner_->last_ctrl_seq(c);
  }

 private:
  void check() const {
    if (down) throw Error(ErrorCode::LedgerUnavailable, "ledger down");
  }
  std::shared_ptr<Ledger> inner_;
};

// Bare deployment without an inspector: one virtual clock, the in-process
// bus, and memory ledgers.
struct Bench {
  VirtualClock clock;
  InProcessBus bus;
  LawRegistry laws;
  LedgerDirectory dir;
  std::map<LawId, std::shared_ptr<MemoryLedger>> ledgers;
  std::vector<std::unique_ptr<CPNode>> nodes;
  SinkEndpoint monitor_sink;
  SinkEndpoint manager_sink;
  AgentAddress monitor{CPNodeId{0xFFFF0001u}, ControllerId::make(CPNodeId{0xFFFF0001u}, 1)};
  AgentAddress manager{CPNodeId{0xFFFF0002u}, ControllerId::make(CPNodeId{0xFFFF0002u}, 1)};

  Bench() {
    bus.attach(monitor.node, monitor_sink);
    bus.attach(manager.node, manager_sink);
  }
  ~Bench() {
    nodes.clear();
    bus.detach(monitor.node);
    bus.detach(manager.node);
  }

  std::shared_ptr<MemoryLedger> add_law(std::shared_ptr<const Law> law, bool with_ledger = true) {
    const auto id = laws.register_law(std::move(law));
    if (!with_ledger) return nullptr;
    auto l = std::make_shared<MemoryLedger>(id);
    ledgers[id] = l;
    dir.add(l);
    return l;
  }

  CPNode& add_node(NodeConfig cfg = {}) {
    const auto id = CPNodeId{static_cast<std::uint32_t>(nodes.size() + 1)};
    nodes.push_back(std::make_unique<CPNode>(id, cfg, laws, dir, bus, clock));
    return *nodes.back();
  }

  struct Member {
    CPNode* node;
    AgentAddress address;
    std::shared_ptr<RecordingActor> actor;
  };

  Member adopt(CPNode& node, const LawId& law, Bytes args = {}) {
    const auto c = node.provision();
    auto actor = std::make_shared<RecordingActor>();
    auto addr = node.adopt(c, law, std::move(args), actor);
    if (!addr) throw std::runtime_error("adoption refused");
    return Member{&node, *addr, actor};
  }

  void drain() {
    for (;;) {
      bool any = false;
      for (auto& n : nodes) any = n->process_pending() > 0 || any;
      for (auto& n : nodes) any = n->fire_due_obligations() > 0 || any;
      if (!any) return;
    }
  }
};

// A scenario with `n` agents under one law of `type`.
inline Scenario scenario_of(const std::string& type, std::size_t n, std::uint64_t seed = 1) {
  Scenario s;
  s.name = type;
  s.seed = seed;
  LawSpec l;
  l.type = type;
  l.id = type == "money-transfer" ? "MT" : type == "monitoring" ? "MO" : "LOCK";
  s.laws.push_back(l);
  s.agents.push_back(AgentGroup{l.id, n});
  s.ledger.backend = "memory";
  return s;
}

}  // namespace cop::test
