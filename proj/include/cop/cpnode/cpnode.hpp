#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <thread>

#include "cop/controller/controller.hpp"
#include "cop/core/clock.hpp"
#include "cop/cpnode/control.hpp"
#include "cop/cpnode/obligations.hpp"
#include "cop/cpnode/transport.hpp"
#include "cop/law/law.hpp"
#include "cop/ledger/ledger.hpp"

namespace cop {

struct NodeConfig {
  std::size_t capacity = 1024;
  // Queue depth above which a backpressure warning is raised.
  std::size_t queue_warning_depth = 10'000;
  std::string control_secret = "cop-control";
};

struct NodeStats {
  std::uint64_t events = 0;
  std::uint64_t operations = 0;
  std::uint64_t dropped_messages = 0;
  std::uint64_t stalls = 0;
  std::uint64_t backpressure_warnings = 0;
  std::uint64_t reconstructions = 0;
  std::uint64_t repairs = 0;
};

struct ControllerSnapshot {
  AgentAddress address;
  ControllerStatus status = ControllerStatus::Generic;
  std::optional<LawId> law;
  ControllerState state;
  std::uint64_t processed_events = 0;
  std::size_t queue_depth = 0;
};

// Controller provider host. Its local manager (the interceptor) is the
// trusted party: every event a hosted controller consumes and every
// operation it carries out is appended to the ledger of the controller's
// law before any effect leaves the node. Hosted controllers are not trusted
// and cannot reach the transport except through the interceptor.
class CPNode final : public Endpoint, public ControlHandler {
 public:
  using WarningSink = std::function<void(const std::string&)>;

  CPNode(CPNodeId id, NodeConfig config, const LawRegistry& laws, LedgerDirectory& ledgers, Transport& transport,
         const Clock& clock);
  ~CPNode() override;

  CPNodeId id() const { return id_; }

  // Throws CapacityExceeded.
  ControllerId provision();

  // Processes the Adopted event immediately. Returns nullopt when the law
  // refuses the adoption (its ruling quits the controller). Throws
  // AlreadyAdopted, UnknownController, UnknownLaw.
  std::optional<AgentAddress> adopt(ControllerId c, const LawId& law, Bytes args, ActorHandle actor);

  // Actor-facing submissions; queued, then serialized per controller.
  // Throw NotActive, UnknownController.
  void submit_send(ControllerId c, AgentAddress target, Bytes payload);
  void submit_quit(ControllerId c);
  void raise_obligation_due(ControllerId c, std::string name);

  // Endpoint.
  void on_wire(WireMessage msg) override;
  bool hosts(ControllerId c) const override;

  // Consumes one event at the next controller with work (round robin in id
  // order). Returns false when there was nothing to do.
  bool step_one();
  // Runs until no hosted controller has work or `max_events` were consumed.
  std::size_t process_pending(std::size_t max_events = SIZE_MAX);
  bool has_work() const;

  // Queues ObligationDue for every timer due at the node's current time.
  std::size_t fire_due_obligations();
  std::optional<Timestamp> next_obligation_due() const { return obligations_.next_due(); }
  const ObligationServer& obligations() const { return obligations_; }

  // Control protocol (authenticated frames) and the typed operations behind it.
  Bytes handle_control_frame(ByteView frame) override;
  ControlReply reconstruct(const ReconstructRequest& req);
  ControlReply execute_op(const ExecuteOpRequest& req);

  // Background worker for threaded deployments. Waits for work, fires due
  // obligations on the node clock, retries stalled controllers.
  void start();
  void stop();

  ControllerSnapshot snapshot(ControllerId c) const;
  std::vector<ControllerId> controller_ids() const;
  NodeStats stats() const;
  void set_warning_sink(WarningSink sink);

  // Runs `fn` on a hosted controller under the node lock (used to install
  // fault-injecting engines). Throws UnknownController.
  void with_controller(ControllerId c, const std::function<void(Controller&)>& fn);

 private:
  class Interceptor;
  friend class Interceptor;

  struct Inbound {
    AgentAddress source;
    ControllerId target;
    Bytes payload;
  };

  Controller& find(ControllerId c);
  const Controller& find(ControllerId c) const;
  void admit_inbound();
  void check_depth(const Controller& c);
  void notify_work();
  void worker_loop();
  // Appends one entry for `c` under `law`; false when the ledger is unavailable.
  bool log(const Controller& c, const LawId& law, EntryKind kind, Bytes body);
  void apply_effect(Controller& c, const Operation& op);

  CPNodeId id_;
  NodeConfig config_;
  const LawRegistry& laws_;
  LedgerDirectory& ledgers_;
  Transport& transport_;
  const Clock& clock_;
  std::unique_ptr<Interceptor> interceptor_;
  ObligationServer obligations_;

  mutable std::recursive_mutex exec_mu_;
  std::map<ControllerId, std::unique_ptr<Controller>> controllers_;
  std::uint32_t next_local_ = 1;
  // Per (law, controller) ledger position assigned by the interceptor.
  std::map<std::pair<LawId, ControllerId>, std::uint64_t> ctrl_seq_;
  std::size_t round_robin_ = 0;
  std::map<ControllerId, std::uint64_t> pending_reconstruction_;
  std::set<std::pair<ControllerId, std::uint64_t>> completed_requests_;
  std::set<ControllerId> depth_warned_;
  NodeStats stats_;
  WarningSink warn_;

  mutable std::shared_mutex directory_mu_;
  std::set<ControllerId> directory_;

  mutable std::mutex inbound_mu_;
  std::deque<Inbound> inbound_;

  std::mutex wake_mu_;
  std::condition_variable wake_;
  bool wake_flag_ = false;
  std::atomic<bool> running_{false};
  std::thread worker_;
};

}  // namespace cop
