#include "cop/harness/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "cop/core/errors.hpp"

namespace cop {

std::size_t Scenario::agent_count() const {
  std::size_t n = 0;
  for (const auto& g : agents) n += g.count;
  return n;
}

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& field, const std::string& msg) const {
    std::ostringstream os;
    os << source_;
    const auto mark = at.Mark();
    if (mark.line >= 0) os << ":" << mark.line + 1 << ":" << mark.column + 1;
    os << ": " << field << ": " << msg;
    throw Error(ErrorCode::ConfigError, os.str());
  }

  void keys(const YAML::Node& map, const std::string& field, std::set<std::string> allowed) const {
    if (!map.IsMap()) fail(map, field, "expected a mapping");
    for (const auto& kv : map) {
      auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, field.empty() ? key : field + "." + key, "unknown field");
    }
  }

  template <typename T>
  T get(const YAML::Node& n, const std::string& field, const char* expected) const {
    if (!n.IsScalar()) fail(n, field, std::string("expected ") + expected);
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, field, std::string("expected ") + expected + ", got '" + n.Scalar() + "'");
    }
  }

  std::uint64_t u64(const YAML::Node& n, const std::string& field) const {
    if (n.IsScalar() && !n.Scalar().empty() && n.Scalar()[0] == '-') fail(n, field, "must not be negative");
    return get<std::uint64_t>(n, field, "a non-negative integer");
  }
  std::int64_t i64(const YAML::Node& n, const std::string& field) const {
    return get<std::int64_t>(n, field, "an integer");
  }
  bool boolean(const YAML::Node& n, const std::string& field) const { return get<bool>(n, field, "true or false"); }
  std::string str(const YAML::Node& n, const std::string& field) const {
    return get<std::string>(n, field, "a string");
  }

  std::string choice(const YAML::Node& n, const std::string& field, const std::set<std::string>& options) const {
    auto s = str(n, field);
    if (!options.count(s)) {
      std::string list;
      for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
      fail(n, field, "'" + s + "' is not one of: " + list);
    }
    return s;
  }

 private:
  std::string source_;
};

EventKind parse_event_kind(const Reader& rd, const YAML::Node& n, const std::string& field) {
  auto s = rd.choice(n, field, {"adopted", "arrived", "sent", "obligation-due", "exception", "quit"});
  if (s == "adopted") return EventKind::Adopted;
  if (s == "arrived") return EventKind::Arrived;
  if (s == "sent") return EventKind::Sent;
  if (s == "obligation-due") return EventKind::ObligationDue;
  if (s == "exception") return EventKind::Exception;
  return EventKind::Quit;
}

OpKind parse_op_kind(const Reader& rd, const YAML::Node& n, const std::string& field) {
  auto s = rd.choice(n, field,
                     {"set-term", "forward", "deliver", "send-message", "impose-obligation", "quit-self"});
  if (s == "set-term") return OpKind::SetTerm;
  if (s == "forward") return OpKind::Forward;
  if (s == "deliver") return OpKind::Deliver;
  if (s == "send-message") return OpKind::SendMessage;
  if (s == "impose-obligation") return OpKind::ImposeObligation;
  return OpKind::QuitSelf;
}

FaultConfig parse_fault(const Reader& rd, const YAML::Node& n, const std::string& field) {
  rd.keys(n, field, {"agent", "mode", "trigger", "once", "params"});
  FaultConfig f;
  if (!n["agent"]) rd.fail(n, field + ".agent", "required");
  f.agent = rd.u64(n["agent"], field + ".agent");
  if (!n["mode"]) rd.fail(n, field + ".mode", "required");
  try {
    f.mode = parse_fault_mode(rd.str(n["mode"], field + ".mode"));
  } catch (const Error&) {
    rd.fail(n["mode"], field + ".mode", "expected drop-ops, extra-op, corrupt-state or wrong-ruling");
  }
  if (auto t = n["trigger"]) {
    rd.keys(t, field + ".trigger", {"event", "min_ctrl_seq"});
    if (t["event"]) f.trigger.event_kind = parse_event_kind(rd, t["event"], field + ".trigger.event");
    if (t["min_ctrl_seq"]) f.trigger.min_ctrl_seq = rd.u64(t["min_ctrl_seq"], field + ".trigger.min_ctrl_seq");
  }
  if (n["once"]) f.once = rd.boolean(n["once"], field + ".once");
  if (auto p = n["params"]) {
    const auto pf = field + ".params";
    rd.keys(p, pf, {"drop_count", "drop_kind", "target_agent", "amount", "delta"});
    if (p["drop_count"]) f.params.drop_count = rd.u64(p["drop_count"], pf + ".drop_count");
    if (p["drop_kind"]) f.params.drop_kind = parse_op_kind(rd, p["drop_kind"], pf + ".drop_kind");
    if (p["target_agent"]) f.extra_target_agent = rd.u64(p["target_agent"], pf + ".target_agent");
    if (p["amount"]) f.extra_amount = rd.i64(p["amount"], pf + ".amount");
    if (p["delta"]) f.params.delta = rd.i64(p["delta"], pf + ".delta");
  }
  return f;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& source) {
  Reader rd(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw Error(ErrorCode::ConfigError, source + ":" + std::to_string(e.mark.line + 1) + ":" +
                                            std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) throw Error(ErrorCode::ConfigError, source + ": expected a mapping at the top level");
  rd.keys(root, "",
          {"name", "seed", "clock", "transport", "shards", "topology", "control_secret", "laws", "agents",
           "workload", "faults", "ledger", "inspector"});

  Scenario s;
  if (root["name"]) s.name = rd.str(root["name"], "name");
  if (root["seed"]) s.seed = rd.u64(root["seed"], "seed");
  if (root["clock"]) s.virtual_clock = rd.choice(root["clock"], "clock", {"virtual", "system"}) == "virtual";
  if (root["transport"]) s.tcp = rd.choice(root["transport"], "transport", {"inproc", "tcp"}) == "tcp";
  if (root["shards"]) s.shards = rd.u64(root["shards"], "shards");
  if (root["control_secret"]) s.control_secret = rd.str(root["control_secret"], "control_secret");
  if (auto t = root["topology"]) {
    rd.keys(t, "topology", {"nodes", "capacity"});
    if (t["nodes"]) s.nodes = rd.u64(t["nodes"], "topology.nodes");
    if (t["capacity"]) s.capacity = rd.u64(t["capacity"], "topology.capacity");
  }

  auto laws = root["laws"];
  if (!laws) rd.fail(root, "laws", "required");
  if (!laws.IsSequence()) rd.fail(laws, "laws", "expected a list");
  for (std::size_t i = 0; i < laws.size(); ++i) {
    const auto f = "laws[" + std::to_string(i) + "]";
    const auto& n = laws[i];
    rd.keys(n, f, {"id", "type", "initial_budget", "hold_ms"});
    LawSpec l;
    if (!n["type"]) rd.fail(n, f + ".type", "required");
    l.type = rd.choice(n["type"], f + ".type", {"money-transfer", "monitoring", "lock"});
    if (n["id"]) {
      l.id = rd.str(n["id"], f + ".id");
    } else {
      l.id = l.type == "money-transfer" ? "MT" : l.type == "monitoring" ? "MO" : "LOCK";
    }
    if (n["initial_budget"]) l.initial_budget = rd.i64(n["initial_budget"], f + ".initial_budget");
    if (n["hold_ms"]) l.hold_ms = rd.i64(n["hold_ms"], f + ".hold_ms");
    for (const auto& other : s.laws) {
      if (other.id == l.id) rd.fail(n, f + ".id", "duplicate law id '" + l.id + "'");
    }
    s.laws.push_back(std::move(l));
  }

  if (auto agents = root["agents"]) {
    if (!agents.IsSequence()) rd.fail(agents, "agents", "expected a list");
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const auto f = "agents[" + std::to_string(i) + "]";
      const auto& n = agents[i];
      rd.keys(n, f, {"law", "count"});
      AgentGroup g;
      if (!n["law"]) rd.fail(n, f + ".law", "required");
      g.law = rd.str(n["law"], f + ".law");
      bool known = false;
      for (const auto& l : s.laws) known = known || l.id == g.law;
      if (!known) rd.fail(n["law"], f + ".law", "no law with id '" + g.law + "'");
      g.count = n["count"] ? rd.u64(n["count"], f + ".count") : 1;
      s.agents.push_back(std::move(g));
    }
  }

  if (auto w = root["workload"]) {
    rd.keys(w, "workload", {"messages", "law", "amount", "interval_ms", "burst"});
    if (w["messages"]) s.workload.messages = rd.u64(w["messages"], "workload.messages");
    if (w["law"]) s.workload.law = rd.str(w["law"], "workload.law");
    if (auto a = w["amount"]) {
      rd.keys(a, "workload.amount", {"min", "max"});
      if (a["min"]) s.workload.amount_min = rd.i64(a["min"], "workload.amount.min");
      if (a["max"]) s.workload.amount_max = rd.i64(a["max"], "workload.amount.max");
      if (s.workload.amount_min > s.workload.amount_max) rd.fail(a, "workload.amount", "min exceeds max");
    }
    if (w["interval_ms"]) s.workload.interval_ms = rd.i64(w["interval_ms"], "workload.interval_ms");
    if (w["burst"]) s.workload.burst = rd.u64(w["burst"], "workload.burst");
  }

  if (auto faults = root["faults"]) {
    if (!faults.IsSequence()) rd.fail(faults, "faults", "expected a list");
    for (std::size_t i = 0; i < faults.size(); ++i) {
      auto f = parse_fault(rd, faults[i], "faults[" + std::to_string(i) + "]");
      if (f.agent >= s.agent_count()) {
        rd.fail(faults[i]["agent"], "faults[" + std::to_string(i) + "].agent", "no agent with that index");
      }
      s.faults.push_back(std::move(f));
    }
  }

  if (auto l = root["ledger"]) {
    rd.keys(l, "ledger", {"backend", "hash_chain", "fsync"});
    if (l["backend"]) s.ledger.backend = rd.choice(l["backend"], "ledger.backend", {"memory", "file"});
    if (l["hash_chain"]) s.ledger.hash_chain = rd.boolean(l["hash_chain"], "ledger.hash_chain");
    if (l["fsync"]) s.ledger.fsync = rd.boolean(l["fsync"], "ledger.fsync");
  }

  if (auto in = root["inspector"]) {
    rd.keys(in, "inspector", {"quiescence_timeout_ms", "obligation_tolerance_ms"});
    if (in["quiescence_timeout_ms"]) {
      s.inspector.quiescence_timeout =
          std::chrono::milliseconds(rd.u64(in["quiescence_timeout_ms"], "inspector.quiescence_timeout_ms"));
    }
    if (in["obligation_tolerance_ms"]) {
      s.inspector.obligation_tolerance =
          millis(static_cast<std::int64_t>(rd.u64(in["obligation_tolerance_ms"], "inspector.obligation_tolerance_ms")));
    }
  }

  try {
    validate(s);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, source + ": " + std::string(e.what()).substr(13));
  }
  return s;
}

void validate(const Scenario& s) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (s.laws.empty()) fail("laws: at least one law is required");
  if (s.shards == 0) fail("shards: must be positive");
  if (s.nodes == 0) fail("topology.nodes: must be positive");
  if (s.tcp && s.virtual_clock) fail("clock: the tcp transport runs on the system clock");
  if (s.agent_count() > s.nodes * s.capacity) fail("agents: more agents than the nodes can host");
  if (s.workload.messages > 0 && s.agent_count() < 2) fail("workload: needs at least two agents");
  if (s.workload.burst == 0) fail("workload.burst: must be positive");
  if (s.workload.interval_ms < 0) fail("workload.interval_ms: must not be negative");
  if (s.workload.law) {
    bool known = false;
    for (const auto& l : s.laws) known = known || l.id == *s.workload.law;
    if (!known) fail("workload.law: no law with id '" + *s.workload.law + "'");
  }
  for (const auto& f : s.faults) {
    if (f.agent >= s.agent_count()) fail("faults: agent index " + std::to_string(f.agent) + " out of range");
    if (f.extra_target_agent && *f.extra_target_agent >= s.agent_count()) {
      fail("faults: target_agent " + std::to_string(*f.extra_target_agent) + " out of range");
    }
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.string());
}

}  // namespace cop
