#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>

#include "cop/cpnode/cpnode.hpp"
#include "cop/faults/faults.hpp"
#include "cop/harness/report.hpp"
#include "cop/harness/scenario.hpp"
#include "cop/inspector/inspector.hpp"
#include "cop/ledger/remote.hpp"

namespace cop {

struct Agent {
  std::size_t index = 0;
  LawId law;
  CPNode* node = nullptr;
  AgentAddress address;
  std::shared_ptr<RecordingActor> actor;
};

struct TimedVerdict {
  Verdict verdict;
  std::chrono::steady_clock::time_point at;
};

// Control client wrapper that keeps every request sent and the time each
// reconstruction was acknowledged.
class RecordingControl final : public ControlClient {
 public:
  explicit RecordingControl(ControlClient& inner) : inner_(inner) {}
  ControlReply send(CPNodeId node, const ControlRequest& req) override;

  std::vector<ControlRequest> requests() const;
  std::optional<std::chrono::steady_clock::time_point> reconstructed_at(ControllerId c) const;

 private:
  ControlClient& inner_;
  mutable std::mutex mu_;
  std::vector<ControlRequest> requests_;
  std::map<ControllerId, std::chrono::steady_clock::time_point> reconstructed_;
};

// A deployment built from a scenario: laws, ledgers, CPnodes, sinks standing
// in for the monitor and the lock manager, and one inspector per law.
//
// With the in-process transport everything runs on the caller's thread and
// settle() interleaves node steps with inspector polls; with TCP every node
// and inspector shard runs its own thread.
class Community {
 public:
  // `out_dir` empty: ledgers in memory, no artifacts.
  explicit Community(Scenario scenario, std::filesystem::path out_dir = {});
  ~Community();
  Community(const Community&) = delete;
  Community& operator=(const Community&) = delete;

  const Scenario& scenario() const { return scenario_; }

  // Provisions a controller on the next node (round robin) and adopts `law`.
  // Returns nullptr when the law refused the adoption.
  Agent* add_agent(const LawId& law, Bytes args = {});
  // Adopts every agent group of the scenario and installs its faults.
  void populate();
  std::shared_ptr<FaultOutcome> inject(std::size_t agent, const FaultSpec& spec);

  void send(const Agent& from, const AgentAddress& to, Bytes payload);
  // Delivers a message from an external party (the monitor or lock manager).
  void deliver_external(const AgentAddress& from, const Agent& to, Bytes payload);
  // Submits the scenario workload.
  void run_workload();
  // Runs until no node has work, every inspector has caught up, and (on the
  // virtual clock) no obligation remains pending.
  void settle();
  // Advances the virtual clock and processes whatever becomes due.
  void advance(Timestamp dt);

  Report report() const;
  // Writes laws.json, report.json and flushes ledgers and the verdict stream.
  void write_artifacts(const Report& r) const;

  std::deque<Agent>& agents() { return agents_; }
  Agent& agent(std::size_t i) { return agents_.at(i); }
  CPNode& node(std::size_t i) { return *nodes_.at(i); }
  std::size_t node_count() const { return nodes_.size(); }
  Inspector& inspector(const LawId& law) { return *inspectors_.at(law); }
  std::shared_ptr<Ledger> ledger(const LawId& law) const { return ledgers_.at(law); }
  const LawRegistry& laws() const { return registry_; }
  const Clock& clock() const { return *clock_; }
  VirtualClock* virtual_clock() { return vclock_; }
  const SinkEndpoint& monitor() const { return monitor_; }
  const SinkEndpoint& manager() const { return manager_; }
  AgentAddress monitor_address() const { return monitor_addr_; }
  AgentAddress manager_address() const { return manager_addr_; }
  const RecordingControl& control() const { return *control_; }
  std::vector<TimedVerdict> verdicts() const;
  std::vector<Verdict> failed_verdicts() const;
  std::vector<Notification> notifications() const;
  const std::vector<std::pair<std::size_t, std::shared_ptr<FaultOutcome>>>& faults() const { return faults_; }
  std::uint64_t messages_submitted() const { return messages_; }
  double busy_seconds() const { return busy_; }

  // In-process stepping: one event at one node, then all inspectors.
  bool step();

 private:
  void build_laws();
  void poll_inspectors();
  bool quiescent_threaded() const;
  // Virtual clock: processes work and due obligations up to `target`.
  void settle_until(Timestamp target);
  std::int64_t random_amount();

  Scenario scenario_;
  std::filesystem::path out_dir_;
  std::mt19937_64 rng_;
  std::unique_ptr<Clock> clock_;
  VirtualClock* vclock_ = nullptr;
  std::unique_ptr<Transport> transport_;
  LawRegistry registry_;
  std::map<LawId, std::shared_ptr<Ledger>> ledgers_;
  std::vector<std::unique_ptr<LedgerServer>> ledger_servers_;
  LedgerDirectory directory_;
  std::vector<std::unique_ptr<CPNode>> nodes_;
  std::vector<std::unique_ptr<ControlServer>> control_servers_;
  std::unique_ptr<ControlClient> control_inner_;
  std::unique_ptr<RecordingControl> control_;
  std::unique_ptr<Recoverer> recoverer_;
  std::map<LawId, std::unique_ptr<Inspector>> inspectors_;
  std::unique_ptr<ReportStream> report_stream_;
  SinkEndpoint monitor_;
  SinkEndpoint manager_;
  AgentAddress monitor_addr_;
  AgentAddress manager_addr_;
  // Deque so Agent pointers stay valid as agents are added.
  std::deque<Agent> agents_;
  std::vector<std::pair<std::size_t, std::shared_ptr<FaultOutcome>>> faults_;
  std::size_t next_node_ = 0;
  std::size_t next_step_node_ = 0;
  std::uint64_t messages_ = 0;
  double busy_ = 0;

  mutable std::mutex verdict_mu_;
  std::vector<TimedVerdict> verdicts_;
  std::vector<Notification> notifications_;
};

// Builds the community, runs the scenario and writes artifacts to `out_dir`
// (when non-empty). Throws ConfigError.
Report run(const Scenario& scenario, const std::filesystem::path& out_dir = {});

struct ReplayResult {
  LawId law;
  std::uint64_t entries = 0;
  std::vector<Verdict> verdicts;
  double seconds = 0;
};

// Offline inspection of recorded entries.
ReplayResult replay_entries(const std::vector<LedgerEntry>& entries, std::shared_ptr<const LawDefinition> law,
                            std::size_t shards, bool parallel);

// Verifies a ledger file and replays it offline. The law is rebuilt from the
// laws.json written next to the ledger directory (or given explicitly).
// Throws CorruptLedger, ConfigError.
Report replay_verify(const std::filesystem::path& ledger_path, std::size_t shards = 1,
                     std::optional<std::filesystem::path> laws_json = std::nullopt);

// Law objects as described by a scenario's law list. The monitor and lock
// manager addresses are fixed for a deployment.
std::shared_ptr<const Law> make_law(const LawSpec& spec, const AgentAddress& monitor, const AgentAddress& manager);

}  // namespace cop
