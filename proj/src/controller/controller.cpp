#include "cop/controller/controller.hpp"

#include "cop/core/errors.hpp"

namespace cop {

std::string_view to_string(ControllerStatus s) {
  switch (s) {
    case ControllerStatus::Generic: return "generic";
    case ControllerStatus::Active: return "active";
    case ControllerStatus::Quit: return "quit";
    case ControllerStatus::UnderReconstruction: return "under-reconstruction";
  }
  return "?";
}

void RecordingActor::deliver(const AgentAddress&, const Bytes& payload) {
  std::lock_guard lock(mu_);
  delivered_.push_back(payload);
}

std::vector<Bytes> RecordingActor::delivered() const {
  std::lock_guard lock(mu_);
  return delivered_;
}

std::size_t RecordingActor::count() const {
  std::lock_guard lock(mu_);
  return delivered_.size();
}

Controller::Controller(AgentAddress address) : address_(address), engine_(std::make_unique<HonestEngine>()) {}

void Controller::begin_adoption(std::shared_ptr<const LawDefinition> law, Bytes args, ActorHandle actor) {
  if (status_ != ControllerStatus::Generic) {
    throw Error(ErrorCode::AlreadyAdopted, to_string(id()) + " is " + std::string(to_string(status_)));
  }
  law_ = std::move(law);
  actor_ = std::move(actor);
  state_ = {};
  status_ = ControllerStatus::Active;
  inbox_.push_front(PendingEvent{EventKind::Adopted, std::nullopt, std::nullopt, std::move(args)});
}

void Controller::require_active(const char* what) const {
  if (status_ != ControllerStatus::Active && status_ != ControllerStatus::UnderReconstruction) {
    throw Error(ErrorCode::NotActive,
                std::string(what) + " on " + to_string(id()) + " which is " + std::string(to_string(status_)));
  }
}

void Controller::submit_send(AgentAddress target, Bytes payload) {
  require_active("send");
  inbox_.push_back(PendingEvent{EventKind::Sent, address_, target, std::move(payload)});
}

void Controller::raise_obligation_due(std::string name) {
  require_active("obligationDue");
  inbox_.push_back(PendingEvent{EventKind::ObligationDue, std::nullopt, std::nullopt, to_bytes(name)});
}

void Controller::submit_quit() {
  require_active("quit");
  inbox_.push_back(PendingEvent{EventKind::Quit, std::nullopt, std::nullopt, {}});
}

bool Controller::receive_message(AgentAddress source, Bytes payload) {
  if (status_ != ControllerStatus::Active && status_ != ControllerStatus::UnderReconstruction) return false;
  inbox_.push_back(PendingEvent{EventKind::Arrived, source, address_, std::move(payload)});
  return true;
}

void Controller::report_exception(AgentAddress unreachable, Bytes payload) {
  if (status_ != ControllerStatus::Active && status_ != ControllerStatus::UnderReconstruction) return;
  inbox_.push_back(PendingEvent{EventKind::Exception, address_, unreachable, std::move(payload)});
}

bool Controller::has_work() const {
  if (inflight_) return true;
  return !inbox_.empty() && status_ == ControllerStatus::Active;
}

Controller::Step Controller::step(Effects& fx) {
  if (inflight_) return resume(fx);
  if (inbox_.empty() || status_ != ControllerStatus::Active) return Step::Idle;

  PendingEvent pending = std::move(inbox_.front());
  inbox_.pop_front();
  Event e{pending.kind, pending.source, pending.target, pending.payload, id(), next_seq_};

  std::uint64_t ctrl_seq = 0;
  if (!fx.log_event(*this, e, ctrl_seq)) {
    inbox_.push_front(std::move(pending));
    return Step::Stalled;
  }
  ++next_seq_;
  Ruling ruling = engine_->decide(*law_, e, state_, RulingContext{ctrl_seq});
  inflight_ = InFlight{std::move(ruling), 0, false, e.kind == EventKind::Quit};
  return resume(fx);
}

Controller::Step Controller::execute_ruling(const Ruling& r, Effects& fx) {
  inflight_ = InFlight{r, 0, false, false};
  return resume(fx);
}

Controller::Step Controller::resume(Effects& fx) {
  auto& f = *inflight_;
  const auto& ops = f.ruling.operations;
  while (!f.ops_done && f.next_op < ops.size()) {
    if (!fx.perform(*this, ops[f.next_op])) return Step::Stalled;
    ++f.next_op;
  }
  if (!f.ops_done) {
    state_ = f.ruling.new_state;
    f.ops_done = true;
  }
  if (!fx.end_ruling(*this)) return Step::Stalled;
  if (f.quit_event || f.ruling.contains(OpKind::QuitSelf)) status_ = ControllerStatus::Quit;
  inflight_.reset();
  return Step::Done;
}

void Controller::suspend() {
  if (status_ == ControllerStatus::Active) status_ = ControllerStatus::UnderReconstruction;
}

void Controller::reconstruct(std::shared_ptr<const LawDefinition> law, ControllerState csv) {
  engine_ = std::make_unique<HonestEngine>();
  law_ = std::move(law);
  state_ = std::move(csv);
  inflight_.reset();
  status_ = ControllerStatus::Active;
}

}  // namespace cop
