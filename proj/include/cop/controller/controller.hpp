#pragma once

#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "cop/law/law.hpp"

namespace cop {

enum class ControllerStatus { Generic, Active, Quit, UnderReconstruction };

std::string_view to_string(ControllerStatus s);

// The animating actor. Its internals are irrelevant to enforcement; it only
// receives what the law delivers.
class Actor {
 public:
  virtual ~Actor() = default;
  virtual void deliver(const AgentAddress& self, const Bytes& payload) = 0;
};

using ActorHandle = std::shared_ptr<Actor>;

class RecordingActor final : public Actor {
 public:
  void deliver(const AgentAddress& self, const Bytes& payload) override;
  std::vector<Bytes> delivered() const;
  std::size_t count() const;

 private:
  mutable std::mutex mu_;
  std::vector<Bytes> delivered_;
};

struct RulingContext {
  // Ledger position of the event's entry in the controller's view.
  std::uint64_t ctrl_seq = 0;
};

// Decides which ruling a controller carries out for an event. The honest
// engine simply evaluates the law; fault injection substitutes its own.
class RulingEngine {
 public:
  virtual ~RulingEngine() = default;
  virtual Ruling decide(const LawDefinition& law, const Event& e, const ControllerState& s,
                        const RulingContext& ctx) = 0;
};

class HonestEngine final : public RulingEngine {
 public:
  Ruling decide(const LawDefinition& law, const Event& e, const ControllerState& s, const RulingContext&) override {
    return law.evaluate(e, s);
  }
};

class Controller;

// The trusted side of the controller boundary, implemented by the CPnode's
// interceptor. Each call returns false when the ledger cannot take the entry
// yet; the controller then stalls and retries later.
class Effects {
 public:
  virtual ~Effects() = default;
  virtual bool log_event(Controller& c, const Event& e, std::uint64_t& ctrl_seq) = 0;
  // Logs the operation, then carries it out.
  virtual bool perform(Controller& c, const Operation& op) = 0;
  virtual bool end_ruling(Controller& c) = 0;
};

// An event waiting in a controller's queue; its seq is assigned when it is
// consumed.
struct PendingEvent {
  EventKind kind;
  std::optional<AgentAddress> source;
  std::optional<AgentAddress> target;
  Bytes payload;
};

// A generic controller, and once adopted, the surrogate of one actor. Events
// are consumed strictly one at a time; the ruling for event n is carried out
// in full before event n+1 is looked at.
//
// Not internally synchronized: the hosting CPnode serializes access.
class Controller {
 public:
  explicit Controller(AgentAddress address);

  const AgentAddress& address() const { return address_; }
  ControllerId id() const { return address_.controller; }
  ControllerStatus status() const { return status_; }
  const std::shared_ptr<const LawDefinition>& law() const { return law_; }
  const ControllerState& state() const { return state_; }
  const ActorHandle& actor() const { return actor_; }
  std::uint64_t next_seq() const { return next_seq_; }
  std::size_t queue_depth() const { return inbox_.size(); }
  bool mid_ruling() const { return inflight_.has_value(); }

  // Plants the law and queues the Adopted event at the head of the queue.
  // Throws AlreadyAdopted unless Generic.
  void begin_adoption(std::shared_ptr<const LawDefinition> law, Bytes args, ActorHandle actor);

  // Throw NotActive.
  void submit_send(AgentAddress target, Bytes payload);
  void raise_obligation_due(std::string name);
  void submit_quit();
  // Returns false (message dropped) unless Active or UnderReconstruction.
  bool receive_message(AgentAddress source, Bytes payload);
  void report_exception(AgentAddress unreachable, Bytes payload);

  enum class Step { Idle, Done, Stalled };
  // Consumes the next event (or resumes a stalled ruling).
  Step step(Effects& fx);
  bool has_work() const;

  // Carries out a ruling's operations in order through `fx`, then replaces
  // the state. Resumable after a stall.
  Step execute_ruling(const Ruling& r, Effects& fx);

  void set_engine(std::unique_ptr<RulingEngine> engine) { engine_ = std::move(engine); }
  std::unique_ptr<RulingEngine> take_engine() { return std::move(engine_); }
  RulingEngine& engine() { return *engine_; }

  // Reconstruction: suspend, then replace the instance's logic with an
  // authentic engine, plant law and state, and reactivate. Queued events
  // survive.
  void suspend();
  void reconstruct(std::shared_ptr<const LawDefinition> law, ControllerState csv);

  void mark_quit() { status_ = ControllerStatus::Quit; }

 private:
  struct InFlight {
    Ruling ruling;
    std::size_t next_op = 0;
    bool ops_done = false;
    bool quit_event = false;
  };

  void require_active(const char* what) const;
  Step resume(Effects& fx);

  AgentAddress address_;
  std::shared_ptr<const LawDefinition> law_;
  ControllerState state_;
  ActorHandle actor_;
  ControllerStatus status_ = ControllerStatus::Generic;
  std::uint64_t next_seq_ = 1;
  std::deque<PendingEvent> inbox_;
  std::optional<InFlight> inflight_;
  std::unique_ptr<RulingEngine> engine_;
};

}  // namespace cop
