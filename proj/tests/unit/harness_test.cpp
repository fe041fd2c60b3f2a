#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cop/harness/community.hpp"
#include "cop/harness/scenario.hpp"
#include "support/support.hpp"

namespace cop {
namespace {

namespace fs = std::filesystem;

std::string config_error(const std::string& yaml) {
  try {
    validate(parse_scenario(yaml, "s.yaml"));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    return e.what();
  }
  ADD_FAILURE() << "accepted:\n" << yaml;
  return {};
}

TEST(ScenarioTest, ParsesFullScenario) {
  auto s = parse_scenario(R"(
name: demo
seed: 3
shards: 2
topology: {nodes: 2}
laws:
  - type: money-transfer
    initial_budget: 500
  - type: lock
    hold_ms: 250
agents:
  - {law: MT, count: 4}
  - {law: LOCK, count: 1}
workload: {messages: 10, law: MT, amount: {min: 5, max: 9}, burst: 2}
faults:
  - agent: 1
    mode: drop-ops
    trigger: {event: sent, min_ctrl_seq: 7}
    params: {drop_kind: forward, drop_count: 0}
ledger: {backend: memory}
inspector: {quiescence_timeout_ms: 300}
)");
  validate(s);
  EXPECT_EQ(s.name, "demo");
  EXPECT_EQ(s.seed, 3u);
  EXPECT_EQ(s.nodes, 2u);
  ASSERT_EQ(s.laws.size(), 2u);
  EXPECT_EQ(s.laws[0].id, "MT");
  EXPECT_EQ(s.laws[0].initial_budget, 500);
  EXPECT_EQ(s.laws[1].id, "LOCK");
  EXPECT_EQ(s.laws[1].hold_ms, 250);
  EXPECT_EQ(s.agent_count(), 5u);
  EXPECT_EQ(s.workload.amount_min, 5);
  EXPECT_EQ(s.workload.amount_max, 9);
  ASSERT_EQ(s.faults.size(), 1u);
  EXPECT_EQ(s.faults[0].mode, FaultMode::DropOps);
  EXPECT_EQ(s.faults[0].trigger.event_kind, EventKind::Sent);
  EXPECT_EQ(s.faults[0].trigger.min_ctrl_seq, 7u);
  EXPECT_EQ(s.faults[0].params.drop_kind, OpKind::Forward);
  EXPECT_EQ(s.faults[0].params.drop_count, 0u);
  EXPECT_EQ(s.ledger.backend, "memory");
  EXPECT_EQ(s.inspector.quiescence_timeout, std::chrono::milliseconds(300));
}

TEST(ScenarioTest, ErrorsCarryLineAndField) {
  auto msg = config_error("name: x\nlaws:\n  - type: money-transfer\nagents:\n  - law: MT\n    count: many\n");
  EXPECT_NE(msg.find("s.yaml:6:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("count"), std::string::npos) << msg;

  msg = config_error("laws:\n  - type: money-transfer\n    colour: red\n");
  EXPECT_NE(msg.find("s.yaml:3:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("colour"), std::string::npos) << msg;

  msg = config_error("laws: [{type: teleport}]\n");
  EXPECT_NE(msg.find("teleport"), std::string::npos) << msg;

  msg = config_error("laws: [{type: money-transfer]\n");
  EXPECT_NE(msg.find("s.yaml:"), std::string::npos) << msg;
}

TEST(ScenarioTest, CrossFieldChecks) {
  const std::string base = "laws: [{type: money-transfer}]\nagents: [{law: MT, count: 3}]\n";
  config_error("laws: [{type: money-transfer}]\nagents: [{law: MO, count: 3}]\n");
  config_error(base + "faults: [{agent: 3, mode: extra-op}]\n");
  config_error(base + "shards: 0\n");
  config_error(base + "workload: {messages: 5, amount: {min: 10, max: 2}}\n");
  config_error("laws: [{type: money-transfer}, {type: money-transfer}]\n");
  EXPECT_NO_THROW(validate(parse_scenario(base)));
}

TEST(HarnessTest, HonestRunIsCleanAndConserves) {
  auto s = test::scenario_of("money-transfer", 6, 2);
  s.workload.messages = 200;
  s.workload.burst = 4;
  auto r = run(s);
  EXPECT_EQ(r.false_positives, 0u);
  EXPECT_EQ(r.false_negatives, 0u);
  EXPECT_TRUE(r.failed_verdicts.empty());
  EXPECT_EQ(r.conservation_ok, true);
  EXPECT_EQ(r.conservation_expected, 6000);
  ASSERT_EQ(r.laws.size(), 1u);
  EXPECT_GT(r.laws[0].verdicts, 200u);
}

TEST(HarnessTest, SameSeedSameLedger) {
  auto s = test::scenario_of("money-transfer", 5, 42);
  s.workload.messages = 120;
  s.workload.burst = 3;
  FaultConfig f;
  f.agent = 2;
  f.mode = FaultMode::ExtraOp;
  f.trigger.min_ctrl_seq = 10;
  s.faults.push_back(f);
  auto once = [&] {
    Community c(s);
    c.populate();
    c.run_workload();
    c.settle();
    return c.ledger("MT")->read(0, SIZE_MAX);
  };
  auto a = once();
  EXPECT_EQ(a, once());
  s.seed = 43;
  EXPECT_NE(a, once());
}

TEST(HarnessTest, FaultsDetectedExactlyAndReplayAgrees) {
  const auto dir = fs::temp_directory_path() / ("cop-harness-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  auto s = test::scenario_of("money-transfer", 10, 5);
  s.ledger.backend = "file";
  s.workload.messages = 400;
  s.workload.burst = 5;
  const FaultMode modes[] = {FaultMode::DropOps, FaultMode::ExtraOp, FaultMode::CorruptState, FaultMode::WrongRuling};
  for (std::size_t i = 0; i < 4; ++i) {
    FaultConfig f;
    f.agent = i * 2;
    f.mode = modes[i];
    f.trigger.min_ctrl_seq = 10;
    if (modes[i] == FaultMode::DropOps) f.trigger.event_kind = EventKind::Sent;
    if (modes[i] == FaultMode::WrongRuling) f.trigger.event_kind = EventKind::Arrived;
    s.faults.push_back(f);
  }
  auto live = run(s, dir);
  ASSERT_EQ(live.faults.size(), 4u);
  for (const auto& f : live.faults) {
    EXPECT_TRUE(f.detected) << to_string(f.mode);
    EXPECT_TRUE(f.exact) << to_string(f.mode);
    EXPECT_TRUE(f.recovered) << to_string(f.mode);
  }
  EXPECT_EQ(live.false_positives, 0u);
  EXPECT_EQ(live.false_negatives, 0u);

  for (std::size_t shards : {1, 4}) {
    auto offline = replay_verify(dir / "ledgers" / "MT.ledger", shards);
    auto a = offline.failed_verdicts;
    auto b = live.failed_verdicts;
    for (auto& v : b) v.decided_at = 0;
    for (auto& v : a) v.decided_at = 0;
    std::sort(a.begin(), a.end(), verdict_less);
    std::sort(b.begin(), b.end(), verdict_less);
    EXPECT_EQ(a, b) << shards;
  }

  auto back = Report::from_json(live.to_json());
  EXPECT_EQ(back.to_json(), live.to_json());
  EXPECT_FALSE(live.render().empty());

  // Truncation is caught before any replay.
  const auto ledger = dir / "ledgers" / "MT.ledger";
  fs::resize_file(ledger, fs::file_size(ledger) - 3);
  try {
    replay_verify(ledger, 1);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptLedger);
  }
  fs::remove_all(dir);
}

TEST(HarnessTest, MonitoringCopiesEveryMessage) {
  auto s = test::scenario_of("monitoring", 4, 3);
  s.workload.messages = 40;
  Community c(s);
  c.populate();
  c.run_workload();
  c.settle();
  auto r = c.report();
  EXPECT_EQ(r.monitor_births, 4u);
  EXPECT_EQ(r.monitor_copies, c.messages_submitted());
  EXPECT_TRUE(r.failed_verdicts.empty());
}

TEST(HarnessTest, SmallTcpRun) {
  auto s = test::scenario_of("money-transfer", 4, 8);
  s.tcp = true;
  s.virtual_clock = false;
  s.nodes = 2;
  s.shards = 2;
  s.workload.messages = 60;
  s.workload.burst = 10;
  s.workload.interval_ms = 0;
  FaultConfig f;
  f.agent = 1;
  f.mode = FaultMode::ExtraOp;
  f.trigger.min_ctrl_seq = 5;
  s.faults.push_back(f);
  auto r = run(s);
  EXPECT_EQ(r.transport, "tcp");
  ASSERT_EQ(r.faults.size(), 1u);
  EXPECT_TRUE(r.faults[0].detected);
  EXPECT_TRUE(r.faults[0].exact);
  EXPECT_EQ(r.false_positives, 0u);
}

TEST(HarnessTest, UnknownLawTypeRejected) {
  LawSpec l;
  l.type = "barter";
  try {
    make_law(l, {}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

}  // namespace
}  // namespace cop
