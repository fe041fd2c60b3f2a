#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cop/faults/faults.hpp"
#include "cop/inspector/inspector.hpp"

namespace cop {

struct LawSpec {
  LawId id;
  // money-transfer | monitoring | lock
  std::string type;
  std::int64_t initial_budget = 1000;
  std::int64_t hold_ms = 100;
};

struct AgentGroup {
  LawId law;
  std::size_t count = 0;
};

struct WorkloadSpec {
  std::size_t messages = 0;
  // Senders and receivers are drawn from this law's agents (all agents when
  // unset).
  std::optional<LawId> law;
  std::int64_t amount_min = 1;
  std::int64_t amount_max = 100;
  // Time between submissions (virtual clock: advanced; system clock: slept).
  std::int64_t interval_ms = 1;
  // Messages submitted before the community is let to settle.
  std::size_t burst = 1;
};

struct FaultConfig {
  // Index into the scenario's agents, in declaration order.
  std::size_t agent = 0;
  FaultMode mode = FaultMode::ExtraOp;
  FaultTrigger trigger;
  FaultParams params;
  bool once = true;
  // ExtraOp: SendMessage of `extra_amount` to this agent (when set),
  // instead of params.extra_op.
  std::optional<std::size_t> extra_target_agent;
  std::int64_t extra_amount = 5000;
};

struct LedgerConfig {
  // memory | file. File ledgers are written under <out>/ledgers.
  std::string backend = "file";
  bool hash_chain = true;
  bool fsync = false;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  bool virtual_clock = true;
  bool tcp = false;
  std::size_t shards = 1;
  std::size_t nodes = 1;
  std::size_t capacity = 1024;
  std::string control_secret = "cop-control";
  std::vector<LawSpec> laws;
  std::vector<AgentGroup> agents;
  WorkloadSpec workload;
  std::vector<FaultConfig> faults;
  LedgerConfig ledger;
  InspectorConfig inspector;

  std::size_t agent_count() const;
};

// Throws ConfigError with "<source>:<line>:<column>: <field>: ..." diagnostics.
Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>");
// Throws ConfigError, IoError.
Scenario load_scenario(const std::filesystem::path& path);
// Checks cross-field constraints. Throws ConfigError.
void validate(const Scenario& s);

}  // namespace cop
