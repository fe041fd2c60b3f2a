#include "cop/inspector/inspector.hpp"

#include <algorithm>
#include <iostream>

#include "cop/core/errors.hpp"
#include "cop/law/codec.hpp"

namespace cop {

std::string_view to_string(InspectionStatus s) {
  switch (s) {
    case InspectionStatus::Healthy: return "healthy";
    case InspectionStatus::FailedPendingRecovery: return "failed-pending-recovery";
    case InspectionStatus::Recovered: return "recovered";
  }
  return "?";
}

namespace {

std::vector<Bytes> canonical(const std::vector<Operation>& ops) {
  std::vector<Bytes> out;
  out.reserve(ops.size());
  for (const auto& op : ops) out.push_back(codec::encode(op));
  return out;
}

// Multiset difference a - b, preserving the order of a.
std::vector<Operation> difference(const std::vector<Operation>& a, const std::vector<Bytes>& ab,
                                  const std::vector<Bytes>& bb) {
  std::vector<bool> used(bb.size(), false);
  std::vector<Operation> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    bool matched = false;
    for (std::size_t j = 0; j < bb.size(); ++j) {
      if (!used[j] && bb[j] == ab[i]) {
        used[j] = true;
        matched = true;
        break;
      }
    }
    if (!matched) out.push_back(a[i]);
  }
  return out;
}

std::uint64_t request_id(std::uint64_t at_ctrl_seq, std::uint64_t slot) { return (at_ctrl_seq << 16) | (slot & 0xFFFF); }

}  // namespace

// ---------------------------------------------------------------- Recoverer

Recoverer::Recoverer(ControlClient& client, NotificationSink notify, InspectorConfig config)
    : client_(client), notify_(std::move(notify)), config_(config) {}

ControlReply Recoverer::send(CPNodeId node, const ControlRequest& req) {
  for (int attempt = 1;; ++attempt) {
    try {
      return client_.send(node, req);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransportFailure || attempt >= config_.control_attempts) throw;
      std::this_thread::sleep_for(config_.control_backoff * attempt);
    }
  }
}

bool Recoverer::recover(InspectionRecord& rec, const Verdict& v) {
  rec.status = InspectionStatus::FailedPendingRecovery;
  if (!rec.recovery) rec.recovery = InspectionRecord::Recovery{request_id(v.at_ctrl_seq, 0), {}, 0};
  for (std::size_t i = 0; i < v.inactions.size(); ++i) {
    const auto& op = v.inactions[i];
    const auto id = request_id(v.at_ctrl_seq, i + 1);
    switch (op.kind) {
      case OpKind::SetTerm:
      case OpKind::ImposeObligation:
      case OpKind::RulingEnd:
        // State and timers are planted by the reconstruction.
        break;
      case OpKind::QuitSelf:
        rec.recovery->deferred.emplace_back(id, op);
        break;
      default: {
        auto reply = send(rec.node, ExecuteOpRequest{id, rec.controller, op});
        if (reply.status == ControlStatus::Error) {
          std::cerr << "warning: repair of " << to_string(rec.controller) << " refused: " << reply.message << "\n";
        }
      }
    }
  }
  if (notify_) {
    for (const auto& op : v.actions) notify_(Notification{v.law, v.controller, v.node, op, v.at_ctrl_seq});
  }
  return resume(rec);
}

bool Recoverer::resume(InspectionRecord& rec) {
  if (!rec.recovery) return true;
  ++rec.recovery->attempts;
  ReconstructRequest req{rec.recovery->request_id, rec.controller, rec.law, rec.csv, rec.events, rec.obligations};
  auto reply = send(rec.node, req);
  switch (reply.status) {
    case ControlStatus::Ok:
    case ControlStatus::Duplicate:
      for (const auto& [id, op] : rec.recovery->deferred) send(rec.node, ExecuteOpRequest{id, rec.controller, op});
      rec.status = InspectionStatus::Recovered;
      rec.recovery.reset();
      {
        std::lock_guard lock(mu_);
        stale_.erase(rec.controller);
      }
      return true;
    case ControlStatus::Stale: {
      std::lock_guard lock(mu_);
      stale_[rec.controller] = reply.processed_events;
      return false;
    }
    case ControlStatus::Error:
      std::cerr << "warning: reconstruction of " << to_string(rec.controller) << " refused: " << reply.message
                << "\n";
      return false;
  }
  return false;
}

std::optional<std::uint64_t> Recoverer::stale_target(ControllerId c) const {
  std::lock_guard lock(mu_);
  auto it = stale_.find(c);
  if (it == stale_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------- ShardPlan

ShardPlan ShardPlan::hashed(std::size_t k) {
  if (k == 0) throw Error(ErrorCode::ConfigError, "shard count must be positive");
  std::vector<Predicate> preds;
  for (std::size_t i = 0; i < k; ++i) {
    preds.push_back([i, k](ControllerId c) {
      // splitmix64 finalizer; controller ids are dense in their low bits.
      std::uint64_t z = c.value + 0x9E3779B97F4A7C15ull;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
      z ^= z >> 31;
      return z % k == i;
    });
  }
  return custom(std::move(preds));
}

ShardPlan ShardPlan::custom(std::vector<Predicate> predicates) {
  if (predicates.empty()) throw Error(ErrorCode::ConfigError, "a shard plan needs at least one shard");
  ShardPlan p;
  p.predicates_ = std::move(predicates);
  return p;
}

std::size_t ShardPlan::shard_of(ControllerId c) const {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < predicates_.size(); ++i) {
    if (!predicates_[i](c)) continue;
    if (found) throw Error(ErrorCode::ConfigError, to_string(c) + " matches more than one shard");
    found = i;
  }
  if (!found) throw Error(ErrorCode::ConfigError, to_string(c) + " matches no shard");
  return *found;
}

// ---------------------------------------------------------------- ShardInspector

ShardInspector::ShardInspector(std::shared_ptr<const LawDefinition> law, ShardPlan plan, std::size_t shard,
                               InspectorConfig config, VerdictSink sink, Recoverer* recoverer, const Clock* clock)
    : law_(std::move(law)),
      plan_(std::move(plan)),
      shard_(shard),
      config_(config),
      sink_(std::move(sink)),
      recoverer_(recoverer),
      clock_(clock) {
  if (shard_ >= plan_.size()) throw Error(ErrorCode::ConfigError, "shard index out of range");
}

const InspectionRecord* ShardInspector::record(ControllerId c) const {
  auto it = records_.find(c);
  return it == records_.end() ? nullptr : &it->second;
}

void ShardInspector::consume(const LedgerEntry& e) {
  position_ = e.global_seq + 1;
  last_global_ = e.global_seq;
  if (e.law != law_->law_id || !owns(e.controller)) return;
  ++inspected_;
  switch (e.kind) {
    case EntryKind::Event:
      on_event(e);
      break;
    case EntryKind::Operation:
      on_operation(e);
      break;
    case EntryKind::Reconstructed:
      on_reconstructed(e);
      break;
    case EntryKind::Repair:
      if (auto it = records_.find(e.controller); it != records_.end()) {
        try {
          if (codec::decode_operation(e.body).kind == OpKind::QuitSelf) {
            it->second.quit = true;
            it->second.obligations.clear();
          }
        } catch (const Error&) {
        }
      }
      break;
  }
  if (auto it = records_.find(e.controller); it != records_.end()) {
    it->second.last_ctrl_seq = std::max(it->second.last_ctrl_seq, e.ctrl_seq);
    maybe_resume(it->second);
  }
}

InspectionRecord& ShardInspector::on_adopted(const LedgerEntry& entry) {
  InspectionRecord rec;
  rec.controller = entry.controller;
  rec.node = entry.node;
  rec.law = law_->law_id;
  auto [it, inserted] = records_.emplace(entry.controller, std::move(rec));
  if (!inserted) {
    stray(entry, FailureReason::DuplicateAdoption, {});
    return it->second;
  }
  if (entry.ctrl_seq != 1) stray(entry, FailureReason::BadAdoption, {});
  return it->second;
}

void ShardInspector::open_group(InspectionRecord& rec, const LedgerEntry& e, bool skip) {
  OpenGroup g;
  g.event_entry = e;
  g.skip = skip;
  g.opened_at = now();
  rec.open = std::move(g);
}

void ShardInspector::on_event(const LedgerEntry& e) {
  auto it = records_.find(e.controller);
  if (it != records_.end() && it->second.open) close_group(it->second, e.global_seq);

  Event ev;
  try {
    ev = codec::decode_event(e.body);
  } catch (const Error&) {
    stray(e, FailureReason::Malformed, {});
    if (it != records_.end()) open_group(it->second, e, true);
    return;
  }

  if (ev.kind == EventKind::Adopted) {
    if (it != records_.end()) {
      on_adopted(e);
      open_group(it->second, e, true);
      return;
    }
    auto& rec = on_adopted(e);
    open_group(rec, e, false);
    return;
  }

  if (it == records_.end()) {
    // Event for a controller never adopted under this law.
    InspectionRecord rec;
    rec.controller = e.controller;
    rec.node = e.node;
    rec.law = law_->law_id;
    rec.events = ev.seq;
    it = records_.emplace(e.controller, std::move(rec)).first;
    stray(e, FailureReason::Malformed, {});
    open_group(it->second, e, true);
    return;
  }

  auto& rec = it->second;
  if (rec.quit) {
    rec.events = ev.seq;
    stray(e, FailureReason::EventAfterQuit, {});
    open_group(rec, e, true);
    return;
  }
  if (ev.controller != e.controller || ev.seq != rec.events + 1) {
    rec.events = ev.seq;
    stray(e, FailureReason::Malformed, {});
    open_group(rec, e, true);
    return;
  }
  open_group(rec, e, false);
}

void ShardInspector::on_operation(const LedgerEntry& e) {
  auto it = records_.find(e.controller);
  std::optional<Operation> op;
  try {
    op = codec::decode_operation(e.body);
  } catch (const Error&) {
  }
  if (it == records_.end() || !it->second.open) {
    std::vector<Operation> actions;
    if (op && op->kind != OpKind::RulingEnd) actions.push_back(*op);
    stray(e, FailureReason::Malformed, std::move(actions));
    return;
  }
  auto& g = *it->second.open;
  if (!op) {
    g.malformed = true;
    return;
  }
  if (op->kind == OpKind::RulingEnd) {
    close_group(it->second, e.global_seq);
    return;
  }
  if (!g.skip) g.observed.push_back(std::move(*op));
}

void ShardInspector::on_reconstructed(const LedgerEntry& e) {
  auto it = records_.find(e.controller);
  if (it != records_.end() && it->second.open) close_group(it->second, e.global_seq);
  ReconstructionRecord r;
  try {
    r = codec::decode_reconstruction(e.body);
  } catch (const Error&) {
    stray(e, FailureReason::Malformed, {});
    return;
  }
  if (it == records_.end()) {
    InspectionRecord rec;
    rec.controller = e.controller;
    rec.node = e.node;
    rec.law = law_->law_id;
    it = records_.emplace(e.controller, std::move(rec)).first;
  }
  auto& rec = it->second;
  rec.csv = std::move(r.csv);
  rec.obligations = std::move(r.obligations);
  rec.events = r.through_event_seq;
  rec.quit = false;
  rec.status = InspectionStatus::Recovered;
}

void ShardInspector::close_group(InspectionRecord& rec, std::uint64_t decided_at) {
  auto g = std::move(*rec.open);
  rec.open.reset();
  if (g.skip) return;
  auto v = inspect_step(rec, g.event_entry, g.observed);
  if (g.malformed && !v.failed()) {
    v.kind = VerdictKind::Failed;
    v.reason = FailureReason::Malformed;
  }
  v.decided_at = decided_at;
  emit(&rec, std::move(v));
}

Verdict ShardInspector::inspect_step(InspectionRecord& rec, const LedgerEntry& event_entry,
                                     const std::vector<Operation>& observed) {
  Verdict v;
  v.law = law_->law_id;
  v.controller = rec.controller;
  v.node = rec.node;
  v.at_ctrl_seq = event_entry.ctrl_seq;
  v.decided_at = event_entry.global_seq;

  Event ev;
  try {
    ev = codec::decode_event(event_entry.body);
  } catch (const Error&) {
    v.kind = VerdictKind::Failed;
    v.reason = FailureReason::Malformed;
    v.actions = observed;
    return v;
  }
  v.event_seq = ev.seq;

  auto expected = law_->evaluate(ev, rec.csv);
  rec.csv = expected.new_state;
  rec.events = ev.seq;

  bool obligation_ok = true;
  if (ev.kind == EventKind::ObligationDue) {
    auto it = rec.obligations.find(to_string(ev.payload));
    if (it == rec.obligations.end()) {
      obligation_ok = false;
    } else {
      if (it->second > event_entry.timestamp + config_.obligation_tolerance) obligation_ok = false;
      rec.obligations.erase(it);
    }
  }
  for (const auto& op : expected.operations) {
    if (op.kind == OpKind::ImposeObligation) {
      rec.obligations.insert_or_assign(op.obligation_name(), event_entry.timestamp + millis(op.dt_ms()));
    }
  }
  if (ev.kind == EventKind::Quit || expected.contains(OpKind::QuitSelf)) {
    rec.quit = true;
    rec.obligations.clear();
  }

  const auto want = canonical(expected.operations);
  const auto got = canonical(observed);
  if (want != got) {
    v.kind = VerdictKind::Failed;
    v.inactions = difference(expected.operations, want, got);
    v.actions = difference(observed, got, want);
    v.reason = v.inactions.empty() && v.actions.empty() ? FailureReason::Reordered : FailureReason::Divergence;
  }
  if (!obligation_ok) {
    v.kind = VerdictKind::Failed;
    v.reason = FailureReason::UnmatchedObligation;
  }
  return v;
}

void ShardInspector::stray(const LedgerEntry& e, FailureReason reason, std::vector<Operation> actions) {
  Verdict v;
  v.kind = VerdictKind::Failed;
  v.reason = reason;
  v.law = law_->law_id;
  v.controller = e.controller;
  v.node = e.node;
  v.at_ctrl_seq = e.ctrl_seq;
  v.decided_at = e.global_seq;
  v.actions = std::move(actions);
  auto it = records_.find(e.controller);
  emit(it == records_.end() ? nullptr : &it->second, std::move(v));
}

void ShardInspector::emit(InspectionRecord* rec, Verdict v) {
  ++verdicts_;
  if (v.failed()) ++failed_;
  if (sink_) sink_(v);
  if (!v.failed() || !rec) return;
  rec->status = InspectionStatus::FailedPendingRecovery;
  if (!recoverer_) return;
  try {
    recoverer_->recover(*rec, v);
  } catch (const Error& e) {
    std::cerr << "warning: recovery of " << to_string(rec->controller) << " failed: " << e.what() << "\n";
  }
}

void ShardInspector::maybe_resume(InspectionRecord& rec) {
  if (!recoverer_ || !rec.recovery || rec.open) return;
  auto target = recoverer_->stale_target(rec.controller);
  if (target && rec.events < *target) return;
  try {
    recoverer_->resume(rec);
  } catch (const Error& e) {
    std::cerr << "warning: recovery of " << to_string(rec.controller) << " failed: " << e.what() << "\n";
  }
}

std::size_t ShardInspector::poll(const Ledger& ledger) {
  std::size_t n = 0;
  for (;;) {
    auto batch = ledger.read(position_.load(), 4096);
    if (batch.empty()) break;
    for (const auto& e : batch) consume(e);
    n += batch.size();
  }
  return n;
}

void ShardInspector::run(const Ledger& ledger, const std::atomic<bool>& stop) {
  auto backoff = std::chrono::milliseconds(10);
  while (!stop.load()) {
    try {
      if (poll(ledger) == 0) ledger.wait_for(position_.load(), std::chrono::milliseconds(20));
      check_quiescence();
      backoff = std::chrono::milliseconds(10);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::LedgerUnavailable && e.code() != ErrorCode::TransportFailure) throw;
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, std::chrono::milliseconds(1000));
    }
  }
}

std::size_t ShardInspector::check_quiescence() {
  std::size_t closed = 0;
  const bool timed = clock_ && config_.quiescence_timeout.count() > 0;
  const auto limit = std::chrono::duration_cast<std::chrono::microseconds>(config_.quiescence_timeout).count();
  for (auto& [_, rec] : records_) {
    if (timed && rec.open && now() - rec.open->opened_at >= limit) {
      close_group(rec, last_global_);
      ++closed;
    }
    maybe_resume(rec);
  }
  return closed;
}

void ShardInspector::finish() {
  for (auto& [_, rec] : records_) {
    if (rec.open) close_group(rec, last_global_);
  }
}

std::vector<InspectionRecord> ShardInspector::export_records() {
  std::vector<InspectionRecord> out;
  out.reserve(records_.size());
  for (auto& [_, rec] : records_) out.push_back(std::move(rec));
  records_.clear();
  return out;
}

void ShardInspector::import_record(InspectionRecord rec) {
  const auto id = rec.controller;
  records_.insert_or_assign(id, std::move(rec));
}

// ---------------------------------------------------------------- Inspector

Inspector::Inspector(std::shared_ptr<const LawDefinition> law, std::size_t shards, InspectorConfig config,
                     VerdictSink sink, Recoverer* recoverer, const Clock* clock)
    : law_(std::move(law)), config_(config), sink_(std::move(sink)), recoverer_(recoverer), clock_(clock) {
  build(shards);
}

Inspector::~Inspector() { stop(); }

void Inspector::build(std::size_t shards) {
  auto plan = ShardPlan::hashed(shards);
  shards_.clear();
  for (std::size_t i = 0; i < shards; ++i) {
    shards_.push_back(std::make_unique<ShardInspector>(law_, plan, i, config_, sink_, recoverer_, clock_));
  }
}

std::size_t Inspector::poll(const Ledger& ledger) {
  std::size_t n = 0;
  for (auto& s : shards_) n += s->poll(ledger);
  return n;
}

std::size_t Inspector::check_quiescence() {
  std::size_t n = 0;
  for (auto& s : shards_) n += s->check_quiescence();
  return n;
}

void Inspector::finish() {
  for (auto& s : shards_) s->finish();
}

void Inspector::start(std::shared_ptr<const Ledger> ledger) {
  if (running()) return;
  followed_ = std::move(ledger);
  stop_.store(false);
  for (auto& s : shards_) {
    threads_.emplace_back([this, shard = s.get()] { shard->run(*followed_, stop_); });
  }
}

void Inspector::stop() {
  stop_.store(true);
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
}

void Inspector::replay(std::span<const LedgerEntry> entries, bool parallel) {
  auto one = [entries](ShardInspector& s) {
    for (const auto& e : entries) s.consume(e);
    s.finish();
  };
  if (!parallel || shards_.size() == 1) {
    for (auto& s : shards_) one(*s);
    return;
  }
  std::vector<std::thread> threads;
  for (auto& s : shards_) threads.emplace_back([&one, shard = s.get()] { one(*shard); });
  for (auto& t : threads) t.join();
}

void Inspector::repartition(std::size_t shards, const Ledger& ledger) {
  if (running()) throw Error(ErrorCode::ConfigError, "stop the inspector before repartitioning");
  // Barrier: every shard at the same ledger position.
  std::uint64_t target = 0;
  for (auto& s : shards_) target = std::max(target, s->position());
  for (auto& s : shards_) {
    while (s->position() < target) {
      auto batch = ledger.read(s->position(), static_cast<std::size_t>(target - s->position()));
      if (batch.empty()) throw Error(ErrorCode::LedgerUnavailable, "ledger shorter than shard position");
      for (const auto& e : batch) s->consume(e);
    }
  }
  std::vector<InspectionRecord> records;
  for (auto& s : shards_) {
    auto part = s->export_records();
    std::move(part.begin(), part.end(), std::back_inserter(records));
  }
  build(shards);
  auto plan = ShardPlan::hashed(shards);
  for (auto& s : shards_) s->set_position(target);
  for (auto& rec : records) {
    const auto i = plan.shard_of(rec.controller);
    shards_[i]->import_record(std::move(rec));
  }
}

std::optional<InspectionRecord> Inspector::record(ControllerId c) const {
  for (const auto& s : shards_) {
    if (!s->owns(c)) continue;
    if (const auto* r = s->record(c)) return *r;
  }
  return std::nullopt;
}

std::uint64_t Inspector::verdict_count() const {
  std::uint64_t n = 0;
  for (const auto& s : shards_) n += s->verdict_count();
  return n;
}

std::uint64_t Inspector::failed_count() const {
  std::uint64_t n = 0;
  for (const auto& s : shards_) n += s->failed_count();
  return n;
}

}  // namespace cop
