#include <gtest/gtest.h>

#include <filesystem>

#include "cop/faults/faults.hpp"
#include "cop/inspector/inspector.hpp"
#include "support/support.hpp"

namespace cop {
namespace {

namespace fs = std::filesystem;

const ControllerId kX = ControllerId::make(CPNodeId{1}, 1);
const ControllerId kY = ControllerId::make(CPNodeId{1}, 2);
const AgentAddress kAx = AgentAddress::of(kX);
const AgentAddress kAy = AgentAddress::of(kY);

std::shared_ptr<const LawDefinition> mt_def() {
  return std::make_shared<LawDefinition>(LawDefinition::of(std::make_shared<laws::MoneyTransferLaw>()));
}

// Hand-written ledger entries, fed straight to a shard or appended to a ledger.
struct Script {
  LawId law = "MT";
  std::vector<LedgerEntry> entries;
  std::map<ControllerId, std::uint64_t> seq;
  std::map<ControllerId, std::uint64_t> events;
  Timestamp at = 0;

  LedgerEntry& add(ControllerId c, EntryKind kind, Bytes body, std::optional<std::uint64_t> ctrl_seq = {}) {
    LedgerEntry e;
    e.global_seq = entries.size();
    e.law = law;
    e.controller = c;
    e.ctrl_seq = ctrl_seq ? *ctrl_seq : ++seq[c];
    e.kind = kind;
    e.body = std::move(body);
    e.timestamp = at;
    e.node = c.node();
    entries.push_back(e);
    return entries.back();
  }
  void event(ControllerId c, const Event& ev) { add(c, EntryKind::Event, codec::encode(ev)); }
  void op(ControllerId c, const Operation& op) { add(c, EntryKind::Operation, codec::encode(op)); }
  void group(ControllerId c, const Event& ev, const std::vector<Operation>& ops, bool close = true) {
    event(c, ev);
    for (const auto& o : ops) op(c, o);
    if (close) op(c, Operation::ruling_end());
  }
  std::uint64_t next(ControllerId c) { return ++events[c]; }

  void adopt_mt(ControllerId c) {
    group(c, Event::adopted(c, next(c), {}), {Operation::set_term("budget", std::int64_t{1000})});
  }
  Event sent(ControllerId c, const AgentAddress& to, const std::string& amount) {
    return Event::sent(c, next(c), AgentAddress::of(c), to, to_bytes(amount));
  }
};

struct Collector {
  std::vector<Verdict> verdicts;
  VerdictSink sink() {
    return [this](const Verdict& v) { verdicts.push_back(v); };
  }
  std::vector<Verdict> failed() const {
    std::vector<Verdict> out;
    for (const auto& v : verdicts) {
      if (v.failed()) out.push_back(v);
    }
    return out;
  }
};

ShardInspector single(Collector& out, const Clock* clock = nullptr, InspectorConfig cfg = {}) {
  return ShardInspector(mt_def(), ShardPlan::hashed(1), 0, cfg, out.sink(), nullptr, clock);
}

void feed(ShardInspector& s, const Script& sc) {
  for (const auto& e : sc.entries) s.consume(e);
}

TEST(InspectStep, CompliantTransfer) {
  Collector out;
  auto s = single(out);
  Script sc;
  sc.adopt_mt(kX);
  sc.group(kX, sc.sent(kX, kAy, "200"),
           {Operation::set_term("budget", std::int64_t{800}), Operation::forward(kAy, to_bytes("200"))});
  feed(s, sc);
  ASSERT_EQ(out.verdicts.size(), 2u);
  for (const auto& v : out.verdicts) {
    EXPECT_EQ(v.kind, VerdictKind::Compliant);
    EXPECT_TRUE(v.inactions.empty());
    EXPECT_TRUE(v.actions.empty());
  }
  EXPECT_EQ(out.verdicts[1].event_seq, 2u);
  EXPECT_EQ(out.verdicts[1].at_ctrl_seq, 4u);
  EXPECT_EQ(s.record(kX)->csv.get_int("budget"), 800);
}

TEST(InspectStep, MissingForwardIsIllegalInaction) {
  Collector out;
  auto s = single(out);
  Script sc;
  sc.adopt_mt(kX);
  sc.group(kX, sc.sent(kX, kAy, "200"), {Operation::set_term("budget", std::int64_t{800})});
  feed(s, sc);
  auto bad = out.failed();
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].reason, FailureReason::Divergence);
  EXPECT_EQ(bad[0].inactions, std::vector<Operation>{Operation::forward(kAy, to_bytes("200"))});
  EXPECT_TRUE(bad[0].actions.empty());
  EXPECT_EQ(s.record(kX)->status, InspectionStatus::FailedPendingRecovery);
}

TEST(InspectStep, ForgedSendIsIllegalAction) {
  Collector out;
  auto s = single(out);
  Script sc;
  const auto forged = Operation::send_message(kAy, to_bytes("1000000"));
  sc.group(kX, Event::adopted(kX, sc.next(kX), {}), {Operation::set_term("budget", std::int64_t{1000}), forged});
  feed(s, sc);
  auto bad = out.failed();
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].reason, FailureReason::Divergence);
  EXPECT_TRUE(bad[0].inactions.empty());
  EXPECT_EQ(bad[0].actions, std::vector<Operation>{forged});
  // The csv follows the law, not the controller.
  EXPECT_EQ(s.record(kX)->csv.get_int("budget"), 1000);
}

TEST(InspectStep, ReorderedOperationsFail) {
  Collector out;
  auto s = single(out);
  Script sc;
  sc.adopt_mt(kX);
  sc.group(kX, sc.sent(kX, kAy, "200"),
           {Operation::forward(kAy, to_bytes("200")), Operation::set_term("budget", std::int64_t{800})});
  feed(s, sc);
  auto bad = out.failed();
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].reason, FailureReason::Reordered);
  EXPECT_TRUE(bad[0].inactions.empty());
  EXPECT_TRUE(bad[0].actions.empty());
}

TEST(InspectStep, WrongValueReportsBothSides) {
  Collector out;
  auto s = single(out);
  Script sc;
  sc.adopt_mt(kX);
  sc.group(kX, sc.sent(kX, kAy, "200"),
           {Operation::set_term("budget", std::int64_t{900}), Operation::forward(kAy, to_bytes("200"))});
  feed(s, sc);
  auto bad = out.failed();
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].inactions, std::vector<Operation>{Operation::set_term("budget", std::int64_t{800})});
  EXPECT_EQ(bad[0].actions, std::vector<Operation>{Operation::set_term("budget", std::int64_t{900})});
}

TEST(InspectStep, DirectCallAdvancesCsv) {
  Collector out;
  auto s = single(out);
  Script sc;
  sc.group(kX, Event::adopted(kX, sc.next(kX), {}), {});
  auto& rec = s.on_adopted(sc.entries[0]);
  auto v = s.inspect_step(rec, sc.entries[0], {Operation::set_term("budget", std::int64_t{1000})});
  EXPECT_FALSE(v.failed());
  EXPECT_EQ(rec.csv.get_int("budget"), 1000);
  EXPECT_EQ(rec.events, 1u);
}

TEST(InspectStep, SecondAdoptionFails) {
  Collector out;
  auto s = single(out);
  Script sc;
  sc.adopt_mt(kX);
  sc.group(kX, Event::adopted(kX, sc.next(kX), {}), {Operation::set_term("budget", std::int64_t{1000})});
  feed(s, sc);
  auto bad = out.failed();
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].reason, FailureReason::DuplicateAdoption);
  EXPECT_EQ(bad[0].at_ctrl_seq, 4u);
}

TEST(InspectStep, AdoptionNotFirstFails) {
  Collector out;
  auto s = single(out);
  Script sc;
  sc.add(kX, EntryKind::Event, codec::encode(Event::adopted(kX, 1, {})), 5);
  sc.op(kX, Operation::set_term("budget", std::int64_t{1000}));
  sc.op(kX, Operation::ruling_end());
  feed(s, sc);
  auto bad = out.failed();
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].reason, FailureReason::BadAdoption);
}

TEST(InspectStep, StrayOperationIsMalformed) {
  Collector out;
  auto s = single(out);
  Script sc;
  sc.op(kX, Operation::forward(kAy, to_bytes("5")));
  feed(s, sc);
  auto bad = out.failed();
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].reason, FailureReason::Malformed);
  EXPECT_EQ(bad[0].actions, std::vector<Operation>{Operation::forward(kAy, to_bytes("5"))});
}

TEST(InspectStep, UndecodableOperationIsMalformed) {
  Collector out;
  auto s = single(out);
  Script sc;
  sc.adopt_mt(kX);
  sc.event(kX, sc.sent(kX, kAy, "1"));
  sc.op(kX, Operation::set_term("budget", std::int64_t{999}));
  sc.add(kX, EntryKind::Operation, to_bytes("junk"));
  sc.op(kX, Operation::forward(kAy, to_bytes("1")));
  sc.op(kX, Operation::ruling_end());
  feed(s, sc);
  auto bad = out.failed();
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].reason, FailureReason::Malformed);
}

TEST(InspectStep, EventAfterQuitFails) {
  Collector out;
  auto pw = std::make_shared<LawDefinition>(LawDefinition::of(std::make_shared<test::PasswordLaw>("pw")));
  ShardInspector s(pw, ShardPlan::hashed(1), 0, {}, out.sink());
  Script sc;
  sc.law = "PW";
  sc.group(kX, Event::adopted(kX, sc.next(kX), to_bytes("wrong")), {Operation::quit_self()});
  sc.group(kX, Event::arrived(kX, sc.next(kX), kAy, kAx, to_bytes("x")), {});
  feed(s, sc);
  auto bad = out.failed();
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].reason, FailureReason::EventAfterQuit);
  EXPECT_EQ(out.verdicts.size(), 2u);
}

TEST(InspectStep, UnmatchedObligationDueFails) {
  Collector out;
  auto s = single(out);
  Script sc;
  sc.adopt_mt(kX);
  sc.group(kX, Event::obligation_due(kX, sc.next(kX), "lock-timeout"), {});
  feed(s, sc);
  auto bad = out.failed();
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0].reason, FailureReason::UnmatchedObligation);
}

TEST(InspectStep, EarlyObligationDueFails) {
  const AgentAddress manager{CPNodeId{9}, ControllerId::make(CPNodeId{9}, 1)};
  auto lock = std::make_shared<LawDefinition>(LawDefinition::of(std::make_shared<laws::LockLaw>(manager, 100)));
  for (Timestamp due_at : {millis(100), millis(20)}) {
    Collector out;
    ShardInspector s(lock, ShardPlan::hashed(1), 0, {}, out.sink());
    Script sc;
    sc.law = "LOCK";
    sc.group(kX, Event::adopted(kX, sc.next(kX), {}), {Operation::set_term("holding", std::int64_t{0})});
    sc.group(kX, Event::arrived(kX, sc.next(kX), manager, kAx, to_bytes("grant")),
             {Operation::set_term("holding", std::int64_t{1}), Operation::impose_obligation("lock-timeout", 100),
              Operation::deliver(to_bytes("grant"))});
    sc.at = due_at;
    sc.group(kX, Event::obligation_due(kX, sc.next(kX), "lock-timeout"),
             {Operation::set_term("holding", std::int64_t{0}), Operation::send_message(manager, to_bytes("release"))});
    feed(s, sc);
    if (due_at == millis(100)) {
      EXPECT_TRUE(out.failed().empty()) << describe(out.failed().at(0));
    } else {
      ASSERT_EQ(out.failed().size(), 1u);
      EXPECT_EQ(out.failed()[0].reason, FailureReason::UnmatchedObligation);
    }
  }
}

TEST(InspectStep, QuiescenceTimeoutJudgesOpenGroup) {
  VirtualClock clock;
  Collector out;
  InspectorConfig cfg;
  cfg.quiescence_timeout = std::chrono::milliseconds(500);
  auto s = single(out, &clock, cfg);
  Script sc;
  sc.adopt_mt(kX);
  sc.group(kX, sc.sent(kX, kAy, "200"), {Operation::set_term("budget", std::int64_t{800})}, false);
  feed(s, sc);
  EXPECT_EQ(out.verdicts.size(), 1u);
  clock.advance_by(millis(499));
  EXPECT_EQ(s.check_quiescence(), 0u);
  clock.advance_by(millis(1));
  EXPECT_EQ(s.check_quiescence(), 1u);
  ASSERT_EQ(out.failed().size(), 1u);
  EXPECT_EQ(out.failed()[0].inactions, std::vector<Operation>{Operation::forward(kAy, to_bytes("200"))});
}

TEST(ShardPlanTest, HashedCoversEveryIdOnce) {
  auto plan = ShardPlan::hashed(4);
  std::vector<std::size_t> counts(4);
  for (std::uint32_t n = 1; n <= 4; ++n) {
    for (std::uint32_t i = 1; i <= 500; ++i) ++counts[plan.shard_of(ControllerId::make(CPNodeId{n}, i))];
  }
  for (auto c : counts) EXPECT_GT(c, 300u);
  EXPECT_THROW(ShardPlan::hashed(0), Error);
}

TEST(ShardPlanTest, CustomPlanMustPartition) {
  auto even = [](ControllerId c) { return c.local() % 2 == 0; };
  auto odd = [](ControllerId c) { return c.local() % 2 == 1; };
  auto all = [](ControllerId) { return true; };
  auto overlap = ShardPlan::custom({even, all});
  auto gap = ShardPlan::custom({even});
  try {
    overlap.shard_of(kY);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
  try {
    gap.shard_of(kX);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
  EXPECT_EQ(ShardPlan::custom({even, odd}).shard_of(kX), 1u);
  EXPECT_THROW(ShardPlan::custom({}), Error);
}

// Honest deployment with a random MT workload; returns the ledger.
std::shared_ptr<MemoryLedger> honest_ledger(test::Bench& b, std::uint64_t seed, std::size_t agents,
                                            std::size_t sends, std::vector<test::Bench::Member>* out = nullptr) {
  auto mt = b.add_law(std::make_shared<laws::MoneyTransferLaw>());
  auto& n1 = b.add_node();
  auto& n2 = b.add_node();
  std::vector<test::Bench::Member> members;
  for (std::size_t i = 0; i < agents; ++i) members.push_back(b.adopt(i % 2 ? n2 : n1, "MT"));
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < sends; ++i) {
    auto a = rng() % agents;
    auto c = rng() % agents;
    if (a == c) continue;
    members[a].node->submit_send(members[a].address.controller, members[c].address,
                                 laws::amount_payload(static_cast<std::int64_t>(rng() % 400) - 20));
    if (i % 5 == 0) b.drain();
  }
  b.drain();
  if (out) *out = members;
  return mt;
}

std::vector<Verdict> sorted(std::vector<Verdict> v) {
  std::sort(v.begin(), v.end(), verdict_less);
  return v;
}

TEST(InspectorTest, CsvMatchesIndependentFoldAndLiveState) {
  test::Bench b;
  std::vector<test::Bench::Member> members;
  auto mt = honest_ledger(b, 21, 8, 400, &members);
  Collector out;
  Inspector insp(mt_def(), 2, {}, out.sink());
  insp.poll(*mt);
  insp.finish();
  EXPECT_EQ(insp.failed_count(), 0u);
  test::MtOracle oracle;
  for (const auto& m : members) {
    std::optional<std::int64_t> budget;
    for (const auto& g : test::groups_of(mt->controller_view(m.address.controller))) {
      auto r = oracle.step(g.event, budget);
      ASSERT_EQ(test::encoded(r.ops), test::encoded(g.ops));
      budget = r.budget;
    }
    auto rec = insp.record(m.address.controller);
    ASSERT_TRUE(rec);
    EXPECT_EQ(rec->csv.get_int("budget"), budget);
    EXPECT_EQ(rec->csv, m.node->snapshot(m.address.controller).state);
  }
}

TEST(InspectorTest, ShardCountDoesNotChangeVerdicts) {
  test::Bench b;
  auto mt = honest_ledger(b, 4, 10, 300);
  // Corrupt a copy so that there is something to find.
  auto entries = mt->read(0, SIZE_MAX);
  for (auto& e : entries) {
    if (e.kind == EntryKind::Operation && e.global_seq % 37 == 0) {
      auto op = codec::decode_operation(e.body);
      if (op.kind == OpKind::SetTerm) e.body = codec::encode(Operation::set_term("budget", std::int64_t{-1}));
    }
  }
  std::vector<std::vector<Verdict>> runs;
  for (std::size_t k : {1, 3, 4}) {
    for (bool parallel : {false, true}) {
      Collector out;
      Inspector insp(mt_def(), k, {}, out.sink());
      insp.replay(entries, parallel);
      runs.push_back(sorted(out.verdicts));
    }
  }
  ASSERT_FALSE(runs[0].empty());
  EXPECT_FALSE(sorted(runs[0]).empty());
  std::size_t failed = 0;
  for (const auto& v : runs[0]) failed += v.failed();
  EXPECT_GT(failed, 0u);
  for (const auto& r : runs) EXPECT_EQ(r, runs[0]);
}

TEST(InspectorTest, EmptyShardIsHarmless) {
  test::Bench b;
  auto mt = honest_ledger(b, 8, 4, 50);
  Collector out;
  auto nobody = [](ControllerId) { return false; };
  auto everybody = [](ControllerId) { return true; };
  ShardInspector idle(mt_def(), ShardPlan::custom({nobody, everybody}), 0, {}, out.sink());
  ShardInspector busy(mt_def(), ShardPlan::custom({nobody, everybody}), 1, {}, out.sink());
  idle.poll(*mt);
  busy.poll(*mt);
  idle.finish();
  busy.finish();
  EXPECT_EQ(idle.verdict_count(), 0u);
  EXPECT_EQ(idle.position(), mt->size());
  EXPECT_GT(busy.verdict_count(), 0u);
  EXPECT_EQ(busy.failed_count(), 0u);
}

TEST(InspectorTest, RepartitionHandsRecordsOver) {
  test::Bench b;
  std::vector<test::Bench::Member> members;
  auto mt = honest_ledger(b, 13, 6, 200, &members);
  const auto all = mt->read(0, SIZE_MAX);

  Collector reference;
  Inspector one(mt_def(), 1, {}, reference.sink());
  one.replay(all, false);

  Collector out;
  Inspector insp(mt_def(), 1, {}, out.sink());
  MemoryLedger partial("MT");
  const std::size_t half = all.size() / 2;
  for (std::size_t i = 0; i < half; ++i) partial.append(all[i]);
  insp.poll(partial);
  insp.repartition(4, *mt);
  EXPECT_EQ(insp.shard_count(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(insp.shard(i).position(), partial.size());
  insp.poll(*mt);
  insp.finish();
  EXPECT_EQ(sorted(out.verdicts), sorted(reference.verdicts));
  for (const auto& m : members) EXPECT_EQ(insp.record(m.address.controller), one.record(m.address.controller));
}

// Records every request and answers Ok first, Duplicate after.
class FakeControl final : public ControlClient {
 public:
  std::vector<ControlRequest> requests;
  ControlReply send(CPNodeId, const ControlRequest& req) override {
    const auto id = std::visit([](const auto& r) { return r.request_id; }, req);
    const bool seen = std::any_of(requests.begin(), requests.end(), [&](const ControlRequest& r) {
      return std::visit([](const auto& x) { return x.request_id; }, r) == id && r.index() == req.index();
    });
    requests.push_back(req);
    return ControlReply{seen ? ControlStatus::Duplicate : ControlStatus::Ok, 0, ""};
  }
};

TEST(RecovererTest, RepairsNotifiesThenReconstructs) {
  FakeControl control;
  std::vector<Notification> notes;
  Recoverer rec(control, [&](const Notification& n) { notes.push_back(n); });
  InspectionRecord r;
  r.controller = kX;
  r.node = kX.node();
  r.law = "MT";
  r.csv.set("budget", std::int64_t{800});
  r.events = 2;
  Verdict v;
  v.kind = VerdictKind::Failed;
  v.law = "MT";
  v.controller = kX;
  v.node = kX.node();
  v.at_ctrl_seq = 4;
  v.inactions = {Operation::set_term("budget", std::int64_t{800}), Operation::forward(kAy, to_bytes("200"))};
  v.actions = {Operation::send_message(kAy, to_bytes("5000"))};
  EXPECT_TRUE(rec.recover(r, v));
  ASSERT_EQ(control.requests.size(), 2u);
  auto* repair = std::get_if<ExecuteOpRequest>(&control.requests[0]);
  ASSERT_TRUE(repair);
  EXPECT_EQ(repair->operation, Operation::forward(kAy, to_bytes("200")));
  auto* recon = std::get_if<ReconstructRequest>(&control.requests[1]);
  ASSERT_TRUE(recon);
  EXPECT_EQ(recon->csv, r.csv);
  EXPECT_EQ(recon->through_event_seq, 2u);
  ASSERT_EQ(notes.size(), 1u);
  EXPECT_EQ(notes[0].operation, v.actions[0]);
  EXPECT_EQ(r.status, InspectionStatus::Recovered);

  // Reissuing the same verdict reuses the same request ids.
  EXPECT_TRUE(rec.recover(r, v));
  ASSERT_EQ(control.requests.size(), 4u);
  EXPECT_EQ(control.requests[2], control.requests[0]);
  EXPECT_EQ(control.requests[3], control.requests[1]);
}

// Live deployment with the inspector in the loop.
struct Live {
  test::Bench b;
  std::shared_ptr<MemoryLedger> mt;
  CPNode* node;
  InProcessControl control{"cop-control"};
  std::vector<Notification> notes;
  Recoverer recoverer{control, [this](const Notification& n) { notes.push_back(n); }};
  Collector out;
  std::unique_ptr<Inspector> insp;

  Live() {
    mt = b.add_law(std::make_shared<laws::MoneyTransferLaw>());
    node = &b.add_node();
    control.add(node->id(), *node);
    insp = std::make_unique<Inspector>(b.laws.get("MT"), 1, InspectorConfig{}, out.sink(), &recoverer);
  }
  void settle() {
    for (int i = 0; i < 20; ++i) {
      b.drain();
      if (insp->poll(*mt) == 0) return;
    }
  }
  std::int64_t budget(const test::Bench::Member& m) {
    return *node->snapshot(m.address.controller).state.get_int("budget");
  }
};

TEST(RecoveryTest, DroppedForwardIsRepairedOnce) {
  Live l;
  auto x = l.b.adopt(*l.node, "MT");
  auto y = l.b.adopt(*l.node, "MT");
  FaultSpec spec;
  spec.target = x.address.controller;
  spec.mode = FaultMode::DropOps;
  spec.params.drop_kind = OpKind::Forward;
  wrap(*l.node, spec);
  l.node->submit_send(x.address.controller, y.address, to_bytes("200"));
  l.settle();
  l.settle();
  ASSERT_EQ(l.out.failed().size(), 1u);
  EXPECT_EQ(y.actor->count(), 1u);
  EXPECT_EQ(l.budget(x), 800);
  EXPECT_EQ(l.budget(y), 1200);
  EXPECT_TRUE(l.notes.empty());
  // Honest again afterwards.
  l.node->submit_send(x.address.controller, y.address, to_bytes("100"));
  l.settle();
  EXPECT_EQ(l.out.failed().size(), 1u);
  EXPECT_EQ(l.budget(y), 1300);
  EXPECT_EQ(y.actor->count(), 2u);
}

TEST(RecoveryTest, ForgedMoneyIsReported) {
  Live l;
  auto x = l.b.adopt(*l.node, "MT");
  auto y = l.b.adopt(*l.node, "MT");
  FaultSpec spec;
  spec.target = x.address.controller;
  spec.mode = FaultMode::ExtraOp;
  spec.params.extra_op = Operation::send_message(y.address, to_bytes("5000"));
  wrap(*l.node, spec);
  l.node->submit_send(x.address.controller, y.address, to_bytes("10"));
  l.settle();
  ASSERT_EQ(l.out.failed().size(), 1u);
  ASSERT_EQ(l.notes.size(), 1u);
  EXPECT_EQ(l.notes[0].operation, *spec.params.extra_op);
  EXPECT_EQ(l.notes[0].controller, x.address.controller);
  EXPECT_EQ(l.insp->record(x.address.controller)->status, InspectionStatus::Recovered);
  EXPECT_EQ(l.budget(x), 990);
}

TEST(RecoveryTest, CorruptStateIsReplacedByCsv) {
  Live l;
  auto x = l.b.adopt(*l.node, "MT");
  auto y = l.b.adopt(*l.node, "MT");
  FaultSpec spec;
  spec.target = x.address.controller;
  spec.mode = FaultMode::CorruptState;
  spec.trigger.event_kind = EventKind::Sent;
  wrap(*l.node, spec);
  l.node->submit_send(x.address.controller, y.address, to_bytes("10"));
  l.settle();
  l.node->submit_send(x.address.controller, y.address, to_bytes("10"));
  l.settle();
  EXPECT_GE(l.out.failed().size(), 1u);
  EXPECT_EQ(l.node->snapshot(x.address.controller).state, l.insp->record(x.address.controller)->csv);
  const auto failed = l.out.failed().size();
  for (int i = 0; i < 5; ++i) {
    l.node->submit_send(x.address.controller, y.address, to_bytes("1"));
    l.settle();
  }
  EXPECT_EQ(l.out.failed().size(), failed);
}

TEST(ReportStreamTest, RoundTrip) {
  const auto dir = fs::temp_directory_path() / ("cop-report-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  Verdict v;
  v.kind = VerdictKind::Failed;
  v.reason = FailureReason::Divergence;
  v.law = "MT";
  v.controller = kX;
  v.node = kX.node();
  v.at_ctrl_seq = 7;
  v.event_seq = 3;
  v.decided_at = 40;
  v.inactions = {Operation::forward(kAy, to_bytes("1"))};
  Verdict ok;
  ok.law = "MT";
  ok.controller = kY;
  Notification n{"MT", kX, kX.node(), Operation::send_message(kAy, to_bytes("9")), 7};
  {
    ReportStream s(dir);
    s.write(v);
    s.write(n);
    s.write(ok);
    s.flush();
  }
  auto got = read_report_stream(dir / "verdicts.bin");
  EXPECT_EQ(got.verdicts, (std::vector<Verdict>{v, ok}));
  EXPECT_EQ(got.notifications, std::vector<Notification>{n});
  EXPECT_TRUE(fs::file_size(dir / "verdicts.txt") > 0);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace cop
