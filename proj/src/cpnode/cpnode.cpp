#include "cop/cpnode/cpnode.hpp"

#include <iostream>

#include "cop/core/errors.hpp"
#include "cop/law/codec.hpp"

namespace cop {

class CPNode::Interceptor final : public Effects {
 public:
  explicit Interceptor(CPNode& node) : node_(node) {}

  bool log_event(Controller& c, const Event& e, std::uint64_t& ctrl_seq) override {
    if (!node_.log(c, c.law()->law_id, EntryKind::Event, codec::encode(e))) return false;
    ctrl_seq = node_.ctrl_seq_[{c.law()->law_id, c.id()}];
    ++node_.stats_.events;
    return true;
  }

  bool perform(Controller& c, const Operation& op) override {
    if (!node_.log(c, c.law()->law_id, EntryKind::Operation, codec::encode(op))) return false;
    ++node_.stats_.operations;
    node_.apply_effect(c, op);
    return true;
  }

  bool end_ruling(Controller& c) override {
    return node_.log(c, c.law()->law_id, EntryKind::Operation, codec::encode(Operation::ruling_end()));
  }

 private:
  CPNode& node_;
};

CPNode::CPNode(CPNodeId id, NodeConfig config, const LawRegistry& laws, LedgerDirectory& ledgers,
               Transport& transport, const Clock& clock)
    : id_(id),
      config_(std::move(config)),
      laws_(laws),
      ledgers_(ledgers),
      transport_(transport),
      clock_(clock),
      interceptor_(std::make_unique<Interceptor>(*this)) {
  warn_ = [](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; };
  transport_.attach(id_, *this);
}

CPNode::~CPNode() {
  stop();
  transport_.detach(id_);
}

ControllerId CPNode::provision() {
  std::lock_guard lock(exec_mu_);
  if (controllers_.size() >= config_.capacity) {
    throw Error(ErrorCode::CapacityExceeded,
                to_string(id_) + " hosts " + std::to_string(controllers_.size()) + " controllers");
  }
  const auto cid = ControllerId::make(id_, next_local_++);
  controllers_.emplace(cid, std::make_unique<Controller>(AgentAddress{id_, cid}));
  std::unique_lock dlock(directory_mu_);
  directory_.insert(cid);
  return cid;
}

Controller& CPNode::find(ControllerId c) {
  auto it = controllers_.find(c);
  if (it == controllers_.end()) throw Error(ErrorCode::UnknownController, to_string(c) + " on " + to_string(id_));
  return *it->second;
}

const Controller& CPNode::find(ControllerId c) const {
  auto it = controllers_.find(c);
  if (it == controllers_.end()) throw Error(ErrorCode::UnknownController, to_string(c) + " on " + to_string(id_));
  return *it->second;
}

std::optional<AgentAddress> CPNode::adopt(ControllerId cid, const LawId& law, Bytes args, ActorHandle actor) {
  std::lock_guard lock(exec_mu_);
  auto& c = find(cid);
  auto def = laws_.get(law);
  c.begin_adoption(std::move(def), std::move(args), std::move(actor));
  const auto result = c.step(*interceptor_);
  if (result == Controller::Step::Stalled) {
    throw Error(ErrorCode::LedgerUnavailable, "adoption of " + to_string(cid) + " is waiting for the ledger");
  }
  if (c.status() == ControllerStatus::Quit) {
    obligations_.cancel_all(cid);
    return std::nullopt;
  }
  return c.address();
}

void CPNode::submit_send(ControllerId cid, AgentAddress target, Bytes payload) {
  {
    std::lock_guard lock(exec_mu_);
    auto& c = find(cid);
    c.submit_send(target, std::move(payload));
    check_depth(c);
  }
  notify_work();
}

void CPNode::submit_quit(ControllerId cid) {
  {
    std::lock_guard lock(exec_mu_);
    find(cid).submit_quit();
  }
  notify_work();
}

void CPNode::raise_obligation_due(ControllerId cid, std::string name) {
  {
    std::lock_guard lock(exec_mu_);
    auto& c = find(cid);
    c.raise_obligation_due(std::move(name));
    check_depth(c);
  }
  notify_work();
}

void CPNode::on_wire(WireMessage msg) {
  {
    std::lock_guard lock(inbound_mu_);
    inbound_.push_back(Inbound{msg.source, msg.target.controller, std::move(msg.payload)});
  }
  notify_work();
}

bool CPNode::hosts(ControllerId c) const {
  std::shared_lock lock(directory_mu_);
  return directory_.count(c) != 0;
}

void CPNode::admit_inbound() {
  std::deque<Inbound> batch;
  {
    std::lock_guard lock(inbound_mu_);
    batch.swap(inbound_);
  }
  for (auto& in : batch) {
    auto it = controllers_.find(in.target);
    if (it == controllers_.end() || !it->second->receive_message(in.source, std::move(in.payload))) {
      ++stats_.dropped_messages;
      continue;
    }
    check_depth(*it->second);
  }
}

void CPNode::check_depth(const Controller& c) {
  if (c.queue_depth() > config_.queue_warning_depth) {
    if (depth_warned_.insert(c.id()).second) {
      ++stats_.backpressure_warnings;
      if (warn_) {
        warn_(to_string(c.id()) + " has " + std::to_string(c.queue_depth()) + " queued events");
      }
    }
  } else {
    depth_warned_.erase(c.id());
  }
}

bool CPNode::step_one() {
  std::lock_guard lock(exec_mu_);
  admit_inbound();
  const std::size_t n = controllers_.size();
  if (n == 0) return false;
  auto it = controllers_.begin();
  std::advance(it, round_robin_ % n);
  for (std::size_t i = 0; i < n; ++i, ++it) {
    if (it == controllers_.end()) it = controllers_.begin();
    auto& c = *it->second;
    if (!c.has_work()) continue;
    const auto result = c.step(*interceptor_);
    if (result == Controller::Step::Stalled) continue;
    if (c.status() == ControllerStatus::Quit) obligations_.cancel_all(c.id());
    round_robin_ = (round_robin_ + i + 1) % n;
    return result == Controller::Step::Done;
  }
  return false;
}

std::size_t CPNode::process_pending(std::size_t max_events) {
  std::size_t done = 0;
  while (done < max_events && step_one()) ++done;
  return done;
}

bool CPNode::has_work() const {
  {
    std::lock_guard lock(inbound_mu_);
    if (!inbound_.empty()) return true;
  }
  std::lock_guard lock(exec_mu_);
  for (const auto& [_, c] : controllers_) {
    if (c->has_work()) return true;
  }
  return false;
}

std::size_t CPNode::fire_due_obligations() {
  auto due = obligations_.take_due(clock_.now());
  if (due.empty()) return 0;
  std::size_t fired = 0;
  {
    std::lock_guard lock(exec_mu_);
    for (auto& t : due) {
      auto it = controllers_.find(t.controller.controller);
      if (it == controllers_.end() || it->second->status() == ControllerStatus::Quit) continue;
      it->second->raise_obligation_due(std::move(t.name));
      ++fired;
    }
  }
  notify_work();
  return fired;
}

bool CPNode::log(const Controller& c, const LawId& law, EntryKind kind, Bytes body) {
  const auto key = std::make_pair(law, c.id());
  const auto seq = ctrl_seq_[key] + 1;
  LedgerEntry entry;
  entry.law = law;
  entry.controller = c.id();
  entry.ctrl_seq = seq;
  entry.kind = kind;
  entry.body = std::move(body);
  entry.timestamp = clock_.now();
  entry.node = id_;
  try {
    ledgers_.get(law)->append(std::move(entry));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::LedgerUnavailable) throw;
    ++stats_.stalls;
    return false;
  }
  ctrl_seq_[key] = seq;
  return true;
}

void CPNode::apply_effect(Controller& c, const Operation& op) {
  try {
    switch (op.kind) {
      case OpKind::SetTerm:
      case OpKind::RulingEnd:
        break;
      case OpKind::Forward:
      case OpKind::SendMessage: {
        WireMessage msg{c.address(), op.target(), op.payload(), c.law() ? c.law()->law_id : LawId{}};
        if (!transport_.send(msg)) c.report_exception(msg.target, msg.payload);
        break;
      }
      case OpKind::Deliver:
        if (c.actor()) c.actor()->deliver(c.address(), op.payload());
        break;
      case OpKind::ImposeObligation:
        obligations_.impose(c.address(), op.obligation_name(), clock_.now() + millis(op.dt_ms()));
        break;
      case OpKind::QuitSelf:
        obligations_.cancel_all(c.id());
        break;
    }
  } catch (const Error& e) {
    // A malformed operation was still logged as carried out; it has no effect.
    if (e.code() != ErrorCode::DecodeError) throw;
    if (warn_) warn_(to_string(c.id()) + " carried out malformed " + describe(op));
  }
}

Bytes CPNode::handle_control_frame(ByteView frame) {
  ControlReply reply;
  try {
    auto req = codec::decode_request(frame, config_.control_secret);
    if (auto* r = std::get_if<ReconstructRequest>(&req)) {
      reply = reconstruct(*r);
    } else {
      reply = execute_op(std::get<ExecuteOpRequest>(req));
    }
  } catch (const Error& e) {
    reply.status = ControlStatus::Error;
    reply.message = e.what();
  }
  return codec::encode(reply);
}

ControlReply CPNode::reconstruct(const ReconstructRequest& req) {
  ControlReply reply;
  {
    std::lock_guard lock(exec_mu_);
    auto& c = find(req.controller);
    if (completed_requests_.count({req.controller, req.request_id}) != 0) {
      reply.status = ControlStatus::Duplicate;
      reply.processed_events = c.next_seq() - 1;
      return reply;
    }
    auto pending = pending_reconstruction_.find(req.controller);
    if (pending != pending_reconstruction_.end() && pending->second != req.request_id) {
      throw Error(ErrorCode::ReconstructionRace, "reconstruction of " + to_string(req.controller) + " already in flight");
    }
    auto def = laws_.get(req.law);
    c.suspend();
    pending_reconstruction_[req.controller] = req.request_id;
    reply.processed_events = c.next_seq() - 1;
    if (reply.processed_events < req.through_event_seq) {
      throw Error(ErrorCode::ReconstructionRace, to_string(req.controller) + " has processed only " +
                                                    std::to_string(reply.processed_events) + " events");
    }
    if (c.mid_ruling() || reply.processed_events != req.through_event_seq) {
      reply.status = ControlStatus::Stale;
      return reply;
    }
    ReconstructionRecord record{req.law, req.csv, req.through_event_seq, req.obligations};
    if (!log(c, req.law, EntryKind::Reconstructed, codec::encode(record))) {
      throw Error(ErrorCode::LedgerUnavailable, "cannot log reconstruction of " + to_string(req.controller));
    }
    obligations_.cancel_all(req.controller);
    for (const auto& [name, due] : req.obligations) obligations_.impose(c.address(), name, due);
    c.reconstruct(std::move(def), req.csv);
    pending_reconstruction_.erase(req.controller);
    completed_requests_.insert({req.controller, req.request_id});
    ++stats_.reconstructions;
  }
  notify_work();
  return reply;
}

ControlReply CPNode::execute_op(const ExecuteOpRequest& req) {
  ControlReply reply;
  {
    std::lock_guard lock(exec_mu_);
    auto& c = find(req.controller);
    reply.processed_events = c.next_seq() - 1;
    if (completed_requests_.count({req.controller, req.request_id}) != 0) {
      reply.status = ControlStatus::Duplicate;
      return reply;
    }
    if (!c.law()) throw Error(ErrorCode::NotActive, to_string(req.controller) + " operates under no law");
    if (!log(c, c.law()->law_id, EntryKind::Repair, codec::encode(req.operation))) {
      throw Error(ErrorCode::LedgerUnavailable, "cannot log repair for " + to_string(req.controller));
    }
    apply_effect(c, req.operation);
    if (req.operation.kind == OpKind::QuitSelf) c.mark_quit();
    completed_requests_.insert({req.controller, req.request_id});
    ++stats_.repairs;
  }
  notify_work();
  return reply;
}

void CPNode::notify_work() {
  {
    std::lock_guard lock(wake_mu_);
    wake_flag_ = true;
  }
  wake_.notify_one();
}

void CPNode::start() {
  if (running_.exchange(true)) return;
  worker_ = std::thread([this] { worker_loop(); });
}

void CPNode::stop() {
  if (!running_.exchange(false)) return;
  notify_work();
  if (worker_.joinable()) worker_.join();
}

void CPNode::worker_loop() {
  while (running_.load()) {
    fire_due_obligations();
    if (process_pending(256) > 0) continue;
    std::unique_lock lock(wake_mu_);
    auto timeout = std::chrono::milliseconds(5);
    if (auto due = obligations_.next_due()) {
      auto until = std::chrono::microseconds(std::max<Timestamp>(0, *due - clock_.now()));
      timeout = std::min(timeout, std::chrono::duration_cast<std::chrono::milliseconds>(until));
    }
    wake_.wait_for(lock, timeout, [this] { return wake_flag_ || !running_.load(); });
    wake_flag_ = false;
  }
}

ControllerSnapshot CPNode::snapshot(ControllerId cid) const {
  std::lock_guard lock(exec_mu_);
  const auto& c = find(cid);
  ControllerSnapshot s;
  s.address = c.address();
  s.status = c.status();
  if (c.law()) s.law = c.law()->law_id;
  s.state = c.state();
  s.processed_events = c.next_seq() - 1;
  s.queue_depth = c.queue_depth();
  return s;
}

std::vector<ControllerId> CPNode::controller_ids() const {
  std::lock_guard lock(exec_mu_);
  std::vector<ControllerId> out;
  for (const auto& [id, _] : controllers_) out.push_back(id);
  return out;
}

NodeStats CPNode::stats() const {
  std::lock_guard lock(exec_mu_);
  return stats_;
}

void CPNode::set_warning_sink(WarningSink sink) {
  std::lock_guard lock(exec_mu_);
  warn_ = std::move(sink);
}

void CPNode::with_controller(ControllerId cid, const std::function<void(Controller&)>& fn) {
  std::lock_guard lock(exec_mu_);
  fn(find(cid));
}

}  // namespace cop
