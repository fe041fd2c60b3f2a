#include "cop/harness/community.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "cop/core/errors.hpp"
#include "cop/law/builtin.hpp"

namespace cop {

namespace {

constexpr CPNodeId kMonitorNode{0xFFFF0001u};
constexpr CPNodeId kManagerNode{0xFFFF0002u};

double ms_between(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

}  // namespace

ControlReply RecordingControl::send(CPNodeId node, const ControlRequest& req) {
  {
    std::lock_guard lock(mu_);
    requests_.push_back(req);
  }
  auto reply = inner_.send(node, req);
  if (const auto* r = std::get_if<ReconstructRequest>(&req);
      r && (reply.status == ControlStatus::Ok || reply.status == ControlStatus::Duplicate)) {
    std::lock_guard lock(mu_);
    reconstructed_.try_emplace(r->controller, std::chrono::steady_clock::now());
  }
  return reply;
}

std::vector<ControlRequest> RecordingControl::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::optional<std::chrono::steady_clock::time_point> RecordingControl::reconstructed_at(ControllerId c) const {
  std::lock_guard lock(mu_);
  auto it = reconstructed_.find(c);
  if (it == reconstructed_.end()) return std::nullopt;
  return it->second;
}

std::shared_ptr<const Law> make_law(const LawSpec& spec, const AgentAddress& monitor, const AgentAddress& manager) {
  if (spec.type == "money-transfer") return std::make_shared<laws::MoneyTransferLaw>(spec.initial_budget, spec.id);
  if (spec.type == "monitoring") return std::make_shared<laws::MonitoringLaw>(monitor, spec.id);
  if (spec.type == "lock") return std::make_shared<laws::LockLaw>(manager, spec.hold_ms, spec.id);
  throw Error(ErrorCode::ConfigError, "unknown law type '" + spec.type + "'");
}

Community::Community(Scenario scenario, std::filesystem::path out_dir)
    : scenario_(std::move(scenario)), out_dir_(std::move(out_dir)), rng_(scenario_.seed) {
  validate(scenario_);
  if (scenario_.virtual_clock) {
    auto vc = std::make_unique<VirtualClock>();
    vclock_ = vc.get();
    clock_ = std::move(vc);
  } else {
    clock_ = std::make_unique<SystemClock>();
  }
  if (scenario_.tcp) {
    transport_ = std::make_unique<TcpTransport>();
  } else {
    transport_ = std::make_unique<InProcessBus>();
  }
  monitor_addr_ = AgentAddress{kMonitorNode, ControllerId::make(kMonitorNode, 1)};
  manager_addr_ = AgentAddress{kManagerNode, ControllerId::make(kManagerNode, 1)};
  transport_->attach(kMonitorNode, monitor_);
  transport_->attach(kManagerNode, manager_);

  if (!out_dir_.empty()) {
    std::filesystem::create_directories(out_dir_);
    std::filesystem::remove(out_dir_ / "verdicts.bin");
    std::filesystem::remove(out_dir_ / "verdicts.txt");
    report_stream_ = std::make_unique<ReportStream>(out_dir_);
  }
  build_laws();

  NodeConfig cfg;
  cfg.capacity = scenario_.capacity;
  cfg.control_secret = scenario_.control_secret;
  for (std::size_t i = 0; i < scenario_.nodes; ++i) {
    nodes_.push_back(std::make_unique<CPNode>(CPNodeId{static_cast<std::uint32_t>(i + 1)}, cfg, registry_, directory_,
                                              *transport_, *clock_));
  }
  if (scenario_.tcp) {
    auto client = std::make_unique<TcpControlClient>(scenario_.control_secret);
    for (auto& n : nodes_) {
      control_servers_.push_back(std::make_unique<ControlServer>(*n));
      client->add(n->id(), control_servers_.back()->port());
    }
    control_inner_ = std::move(client);
  } else {
    auto client = std::make_unique<InProcessControl>(scenario_.control_secret);
    for (auto& n : nodes_) client->add(n->id(), *n);
    control_inner_ = std::move(client);
  }
  control_ = std::make_unique<RecordingControl>(*control_inner_);
  recoverer_ = std::make_unique<Recoverer>(
      *control_,
      [this](const Notification& n) {
        std::lock_guard lock(verdict_mu_);
        notifications_.push_back(n);
        if (report_stream_) report_stream_->write(n);
      },
      scenario_.inspector);

  auto sink = [this](const Verdict& v) {
    std::lock_guard lock(verdict_mu_);
    verdicts_.push_back(TimedVerdict{v, std::chrono::steady_clock::now()});
    if (report_stream_) report_stream_->write(v);
  };
  for (const auto& spec : scenario_.laws) {
    inspectors_.emplace(spec.id,
                        std::make_unique<Inspector>(registry_.get(spec.id), scenario_.shards, scenario_.inspector, sink,
                                                    recoverer_.get(), scenario_.tcp ? clock_.get() : nullptr));
  }
  if (scenario_.tcp) {
    for (auto& n : nodes_) n->start();
    for (std::size_t i = 0; i < scenario_.laws.size(); ++i) {
      const auto& id = scenario_.laws[i].id;
      inspectors_.at(id)->start(std::make_shared<RemoteLedger>(ledger_servers_.at(i)->port()));
    }
  }
}

Community::~Community() {
  for (auto& [_, insp] : inspectors_) insp->stop();
  for (auto& n : nodes_) n->stop();
  for (auto& s : control_servers_) s->stop();
  transport_->detach(kMonitorNode);
  transport_->detach(kManagerNode);
  nodes_.clear();
  for (auto& s : ledger_servers_) s->stop();
}

void Community::build_laws() {
  if (!out_dir_.empty() && scenario_.ledger.backend == "file") {
    std::filesystem::create_directories(out_dir_ / "ledgers");
  }
  LedgerOptions opts{scenario_.ledger.hash_chain, scenario_.ledger.fsync};
  for (const auto& spec : scenario_.laws) {
    registry_.register_law(make_law(spec, monitor_addr_, manager_addr_));
    std::shared_ptr<Ledger> ledger;
    if (!out_dir_.empty() && scenario_.ledger.backend == "file") {
      auto path = out_dir_ / "ledgers" / (spec.id + ".ledger");
      std::filesystem::remove(path);
      std::filesystem::remove(head_path(path));
      ledger = std::make_shared<FileLedger>(spec.id, path, opts);
    } else {
      ledger = std::make_shared<MemoryLedger>(spec.id, opts);
    }
    ledgers_[spec.id] = ledger;
    if (scenario_.tcp) {
      ledger_servers_.push_back(std::make_unique<LedgerServer>(ledger));
      directory_.add(std::make_shared<RemoteLedger>(ledger_servers_.back()->port()));
    } else {
      directory_.add(ledger);
    }
  }
}

Agent* Community::add_agent(const LawId& law, Bytes args) {
  auto& node = *nodes_.at(next_node_++ % nodes_.size());
  const auto cid = node.provision();
  auto actor = std::make_shared<RecordingActor>();
  auto addr = node.adopt(cid, law, std::move(args), actor);
  if (!scenario_.tcp) poll_inspectors();
  if (!addr) return nullptr;
  agents_.push_back(Agent{agents_.size(), law, &node, *addr, std::move(actor)});
  return &agents_.back();
}

void Community::populate() {
  for (const auto& g : scenario_.agents) {
    for (std::size_t i = 0; i < g.count; ++i) {
      if (!add_agent(g.law)) throw Error(ErrorCode::ConfigError, "law " + g.law + " refused an adoption");
    }
  }
  for (const auto& f : scenario_.faults) {
    FaultSpec spec;
    spec.target = agents_.at(f.agent).address.controller;
    spec.trigger = f.trigger;
    spec.mode = f.mode;
    spec.params = f.params;
    spec.once = f.once;
    if (f.mode == FaultMode::ExtraOp && !spec.params.extra_op) {
      const auto target = f.extra_target_agent.value_or((f.agent + 1) % agents_.size());
      spec.params.extra_op = Operation::send_message(agents_.at(target).address, laws::amount_payload(f.extra_amount));
    }
    inject(f.agent, spec);
  }
}

std::shared_ptr<FaultOutcome> Community::inject(std::size_t agent, const FaultSpec& spec) {
  auto& a = agents_.at(agent);
  auto outcome = wrap(*a.node, spec);
  faults_.emplace_back(agent, outcome);
  return outcome;
}

void Community::send(const Agent& from, const AgentAddress& to, Bytes payload) {
  from.node->submit_send(from.address.controller, to, std::move(payload));
  ++messages_;
}

void Community::deliver_external(const AgentAddress& from, const Agent& to, Bytes payload) {
  transport_->send(WireMessage{from, to.address, std::move(payload), LawId{}});
}

std::int64_t Community::random_amount() {
  std::uniform_int_distribution<std::int64_t> d(scenario_.workload.amount_min, scenario_.workload.amount_max);
  return d(rng_);
}

void Community::run_workload() {
  const auto& w = scenario_.workload;
  std::vector<std::size_t> pool;
  for (const auto& a : agents_) {
    if (!w.law || a.law == *w.law) pool.push_back(a.index);
  }
  const auto started = std::chrono::steady_clock::now();
  if (w.messages > 0 && pool.size() < 2) throw Error(ErrorCode::ConfigError, "workload: needs two agents");
  for (std::size_t m = 0; m < w.messages; ++m) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::uniform_int_distribution<std::size_t> other(0, pool.size() - 2);
    const auto i = pick(rng_);
    auto j = other(rng_);
    if (j >= i) ++j;
    const auto amount = random_amount();
    try {
      send(agents_[pool[i]], agents_[pool[j]].address, laws::amount_payload(amount));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotActive) throw;
    }
    if ((m + 1) % w.burst == 0 || m + 1 == w.messages) {
      settle();
      if (vclock_) {
        vclock_->advance_by(millis(w.interval_ms));
      } else if (w.interval_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(w.interval_ms));
      }
    }
  }
  settle();
  busy_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
}

void Community::poll_inspectors() {
  for (auto& [law, insp] : inspectors_) insp->poll(*ledgers_.at(law));
}

bool Community::step() {
  const auto n = nodes_.size();
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = (next_step_node_ + k) % n;
    if (nodes_[i]->step_one()) {
      next_step_node_ = i + 1;
      poll_inspectors();
      return true;
    }
  }
  return false;
}

bool Community::quiescent_threaded() const {
  if (transport_->in_flight() != 0) return false;
  for (const auto& n : nodes_) {
    if (n->has_work() || n->obligations().pending() != 0) return false;
    for (auto c : n->controller_ids()) {
      if (n->snapshot(c).status == ControllerStatus::UnderReconstruction) return false;
    }
  }
  for (const auto& spec : scenario_.laws) {
    auto& insp = *inspectors_.at(spec.id);
    const auto size = ledgers_.at(spec.id)->size();
    for (std::size_t i = 0; i < insp.shard_count(); ++i) {
      if (insp.shard(i).position() < size) return false;
    }
  }
  return true;
}

void Community::settle() {
  if (scenario_.tcp) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
    int stable = 0;
    while (stable < 3) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      stable = quiescent_threaded() ? stable + 1 : 0;
      if (std::chrono::steady_clock::now() > deadline) {
        std::cerr << "warning: community did not settle within 120 s\n";
        return;
      }
    }
    return;
  }
  for (;;) {
    bool progressed = false;
    while (step()) progressed = true;
    poll_inspectors();
    if (progressed) continue;
    std::size_t fired = 0;
    for (auto& n : nodes_) fired += n->fire_due_obligations();
    if (fired) continue;
    bool work = false;
    for (auto& n : nodes_) work = work || n->has_work();
    if (work) continue;
    if (vclock_) {
      std::optional<Timestamp> next;
      for (auto& n : nodes_) {
        if (auto due = n->next_obligation_due(); due && (!next || *due < *next)) next = due;
      }
      if (next) {
        vclock_->advance_to(*next);
        continue;
      }
    }
    break;
  }
}

void Community::advance(Timestamp dt) {
  if (vclock_) {
    settle_until(vclock_->now() + dt);
  } else {
    std::this_thread::sleep_for(std::chrono::microseconds(dt));
    settle();
  }
}

void Community::settle_until(Timestamp target) {
  for (;;) {
    bool progressed = false;
    while (step()) progressed = true;
    poll_inspectors();
    if (progressed) continue;
    std::size_t fired = 0;
    for (auto& n : nodes_) fired += n->fire_due_obligations();
    if (fired) continue;
    std::optional<Timestamp> next;
    for (auto& n : nodes_) {
      if (auto due = n->next_obligation_due(); due && (!next || *due < *next)) next = due;
    }
    if (next && *next <= target) {
      vclock_->advance_to(*next);
      continue;
    }
    vclock_->advance_to(target);
    return;
  }
}

std::vector<TimedVerdict> Community::verdicts() const {
  std::lock_guard lock(verdict_mu_);
  return verdicts_;
}

std::vector<Verdict> Community::failed_verdicts() const {
  std::lock_guard lock(verdict_mu_);
  std::vector<Verdict> out;
  for (const auto& tv : verdicts_) {
    if (tv.verdict.failed()) out.push_back(tv.verdict);
  }
  return out;
}

std::vector<Notification> Community::notifications() const {
  std::lock_guard lock(verdict_mu_);
  return notifications_;
}

Report Community::report() const {
  Report r;
  r.scenario = scenario_.name;
  r.seed = scenario_.seed;
  r.transport = scenario_.tcp ? "tcp" : "inproc";
  r.shards = scenario_.shards;
  const auto verdicts = this->verdicts();

  for (const auto& spec : scenario_.laws) {
    LawReport lr;
    lr.law = spec.id;
    lr.entries = ledgers_.at(spec.id)->size();
    for (const auto& tv : verdicts) {
      if (tv.verdict.law != spec.id) continue;
      ++lr.verdicts;
      if (tv.verdict.failed()) ++lr.failed;
    }
    r.laws.push_back(lr);
  }

  std::map<ControllerId, std::uint64_t> divergent;
  for (const auto& [index, outcome] : faults_) {
    FaultReport fr;
    fr.agent = index;
    {
      std::lock_guard lock(outcome->mu);
      fr.controller = outcome->target;
      fr.mode = outcome->mode;
      fr.fired = outcome->fired;
      fr.first_divergent_ctrl_seq = outcome->first_divergent_ctrl_seq;
    }
    const auto& law = agents_.at(index).law;
    const TimedVerdict* first = nullptr;
    for (const auto& tv : verdicts) {
      if (tv.verdict.failed() && tv.verdict.controller == fr.controller) {
        first = &tv;
        break;
      }
    }
    if (fr.first_divergent_ctrl_seq) {
      divergent[fr.controller] = *fr.first_divergent_ctrl_seq;
      if (first) {
        fr.detected = true;
        fr.verdict_ctrl_seq = first->verdict.at_ctrl_seq;
        fr.exact = first->verdict.at_ctrl_seq == *fr.first_divergent_ctrl_seq;
        {
          std::lock_guard lock(outcome->mu);
          fr.detection_latency_ms = ms_between(outcome->divergent_at, first->at);
        }
        auto view = ledgers_.at(law)->controller_view(fr.controller, *fr.first_divergent_ctrl_seq);
        if (!view.empty() && view.front().ctrl_seq == *fr.first_divergent_ctrl_seq) {
          const auto g0 = view.front().global_seq;
          const auto decided = first->verdict.decided_at;
          fr.ledger_distance_entries = decided >= g0 ? decided - g0 : 0;
          std::uint64_t groups = 0;
          for (std::size_t k = 1; k < view.size(); ++k) {
            if (view[k].global_seq > decided) break;
            if (view[k].kind == EntryKind::Event) ++groups;
          }
          fr.ledger_distance_groups = groups;
        }
        if (auto at = control_->reconstructed_at(fr.controller)) {
          fr.recovered = true;
          fr.recovery_latency_ms = ms_between(first->at, *at);
        }
      }
    }
    r.faults.push_back(fr);
  }
  for (const auto& fr : r.faults) {
    if (fr.first_divergent_ctrl_seq && !fr.detected) ++r.false_negatives;
  }
  for (const auto& tv : verdicts) {
    if (!tv.verdict.failed()) continue;
    r.failed_verdicts.push_back(tv.verdict);
    auto it = divergent.find(tv.verdict.controller);
    if (it == divergent.end() || tv.verdict.at_ctrl_seq < it->second) ++r.false_positives;
  }

  std::int64_t expected = 0;
  std::int64_t actual = 0;
  bool any_mt = false;
  for (const auto& spec : scenario_.laws) {
    if (spec.type != "money-transfer") continue;
    for (const auto& a : agents_) {
      if (a.law != spec.id) continue;
      any_mt = true;
      expected += spec.initial_budget;
      actual += a.node->snapshot(a.address.controller).state.get_int("budget").value_or(0);
    }
  }
  if (any_mt) {
    r.conservation_ok = expected == actual;
    r.conservation_expected = expected;
    r.conservation_actual = actual;
  }

  for (const auto& n : nodes_) {
    auto st = n->stats();
    r.events += st.events;
    r.operations += st.operations;
    r.repairs += st.repairs;
    r.reconstructions += st.reconstructions;
  }
  r.messages = messages_;
  r.wall_seconds = busy_;
  r.events_per_second = busy_ > 0 ? static_cast<double>(r.events) / busy_ : 0;
  for (const auto& m : monitor_.received()) {
    try {
      auto rec = laws::decode_monitor_record(m.payload);
      if (rec.type == laws::MonitorRecord::Type::Birth) {
        ++r.monitor_births;
      } else {
        ++r.monitor_copies;
      }
    } catch (const Error&) {
    }
  }
  r.notifications = notifications().size();
  return r;
}

void Community::write_artifacts(const Report& r) const {
  if (out_dir_.empty()) return;
  using nlohmann::json;
  json laws = json::array();
  for (const auto& spec : scenario_.laws) {
    auto def = registry_.get(spec.id);
    laws.push_back({{"id", spec.id},
                    {"type", spec.type},
                    {"initial_budget", spec.initial_budget},
                    {"hold_ms", spec.hold_ms},
                    {"version_hash", to_hex(def->version_hash)},
                    {"monitor", {{"node", monitor_addr_.node.value}, {"controller", monitor_addr_.controller.value}}},
                    {"manager", {{"node", manager_addr_.node.value}, {"controller", manager_addr_.controller.value}}}});
  }
  std::ofstream(out_dir_ / "laws.json") << laws.dump(2) << "\n";
  std::ofstream(out_dir_ / "report.json") << r.to_json() << "\n";
  if (scenario_.ledger.backend == "memory") {
    // Memory ledgers are still saved so the run can be replayed offline.
    std::filesystem::create_directories(out_dir_ / "ledgers");
    LedgerOptions opts{scenario_.ledger.hash_chain, false};
    for (const auto& [law, ledger] : ledgers_) {
      auto path = out_dir_ / "ledgers" / (law + ".ledger");
      std::filesystem::remove(path);
      std::filesystem::remove(head_path(path));
      FileLedger copy(law, path, opts);
      for (auto& e : ledger->read(0, SIZE_MAX)) copy.append(std::move(e));
    }
  }
  if (report_stream_) report_stream_->flush();
}

Report run(const Scenario& scenario, const std::filesystem::path& out_dir) {
  Community c(scenario, out_dir);
  c.populate();
  c.run_workload();
  auto r = c.report();
  c.write_artifacts(r);
  return r;
}

ReplayResult replay_entries(const std::vector<LedgerEntry>& entries, std::shared_ptr<const LawDefinition> law,
                            std::size_t shards, bool parallel) {
  ReplayResult out;
  out.law = law->law_id;
  out.entries = entries.size();
  std::mutex mu;
  Inspector insp(
      law, shards, InspectorConfig{}, [&](const Verdict& v) {
        std::lock_guard lock(mu);
        out.verdicts.push_back(v);
      });
  const auto started = std::chrono::steady_clock::now();
  insp.replay(entries, parallel);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::sort(out.verdicts.begin(), out.verdicts.end(), verdict_less);
  return out;
}

Report replay_verify(const std::filesystem::path& ledger_path, std::size_t shards,
                     std::optional<std::filesystem::path> laws_json) {
  auto verified = verify_ledger_file(ledger_path);
  LawId law_id = verified.entries.empty() ? ledger_path.stem().string() : verified.entries.front().law;

  if (!laws_json) {
    for (auto dir : {ledger_path.parent_path().parent_path(), ledger_path.parent_path()}) {
      if (std::filesystem::exists(dir / "laws.json")) {
        laws_json = dir / "laws.json";
        break;
      }
    }
  }
  if (!laws_json) throw Error(ErrorCode::ConfigError, "no laws.json found next to " + ledger_path.string());
  std::ifstream in(*laws_json);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + laws_json->string());
  nlohmann::json laws;
  try {
    in >> laws;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, laws_json->string() + ": " + e.what());
  }
  std::shared_ptr<const LawDefinition> def;
  try {
    for (const auto& l : laws) {
      if (l.at("id").get<std::string>() != law_id) continue;
      LawSpec spec;
      spec.id = law_id;
      spec.type = l.at("type").get<std::string>();
      spec.initial_budget = l.at("initial_budget").get<std::int64_t>();
      spec.hold_ms = l.at("hold_ms").get<std::int64_t>();
      AgentAddress monitor{CPNodeId{l.at("monitor").at("node").get<std::uint32_t>()},
                           ControllerId{l.at("monitor").at("controller").get<std::uint64_t>()}};
      AgentAddress manager{CPNodeId{l.at("manager").at("node").get<std::uint32_t>()},
                           ControllerId{l.at("manager").at("controller").get<std::uint64_t>()}};
      auto law = LawDefinition::of(make_law(spec, monitor, manager));
      if (to_hex(law.version_hash) != l.at("version_hash").get<std::string>()) {
        throw Error(ErrorCode::ConfigError, "law " + law_id + " does not match its recorded version hash");
      }
      def = std::make_shared<const LawDefinition>(std::move(law));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, laws_json->string() + ": " + e.what());
  }
  if (!def) throw Error(ErrorCode::ConfigError, "law " + law_id + " is not described in " + laws_json->string());

  auto replay = replay_entries(verified.entries, def, shards, shards > 1);
  Report r;
  r.scenario = "replay " + ledger_path.string();
  r.shards = shards;
  LawReport lr;
  lr.law = law_id;
  lr.entries = replay.entries;
  lr.verdicts = replay.verdicts.size();
  for (const auto& v : replay.verdicts) {
    if (!v.failed()) continue;
    ++lr.failed;
    r.failed_verdicts.push_back(v);
  }
  r.laws.push_back(lr);
  r.wall_seconds = replay.seconds;
  r.events_per_second = replay.seconds > 0 ? static_cast<double>(replay.entries) / replay.seconds : 0;
  return r;
}

}  // namespace cop
