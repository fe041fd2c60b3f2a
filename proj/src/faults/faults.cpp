#include "cop/faults/faults.hpp"

#include "cop/core/errors.hpp"
#include "cop/cpnode/cpnode.hpp"

namespace cop {

std::string_view to_string(FaultMode m) {
  switch (m) {
    case FaultMode::DropOps: return "drop-ops";
    case FaultMode::ExtraOp: return "extra-op";
    case FaultMode::CorruptState: return "corrupt-state";
    case FaultMode::WrongRuling: return "wrong-ruling";
  }
  return "?";
}

FaultMode parse_fault_mode(std::string_view s) {
  for (auto m : {FaultMode::DropOps, FaultMode::ExtraOp, FaultMode::CorruptState, FaultMode::WrongRuling}) {
    if (s == to_string(m)) return m;
  }
  throw Error(ErrorCode::ConfigError, "unknown fault mode '" + std::string(s) + "'");
}

FaultyEngine::FaultyEngine(FaultSpec spec, std::unique_ptr<RulingEngine> inner, std::shared_ptr<FaultOutcome> outcome)
    : spec_(std::move(spec)), inner_(std::move(inner)), outcome_(std::move(outcome)) {
  if (!inner_) inner_ = std::make_unique<HonestEngine>();
}

ControllerState FaultyEngine::perturb(const ControllerState& s) const {
  ControllerState out = s;
  bool touched = false;
  for (auto& [_, v] : out.terms) {
    if (auto* i = std::get_if<std::int64_t>(&v)) {
      *i += spec_.params.delta;
      touched = true;
    }
  }
  if (!touched) out.set("corrupt", spec_.params.delta);
  return out;
}

bool FaultyEngine::apply(const LawDefinition& law, const Event& e, const ControllerState& s, Ruling& r) {
  const auto& p = spec_.params;
  switch (spec_.mode) {
    case FaultMode::DropOps: {
      std::size_t dropped = 0;
      std::vector<Operation> kept;
      for (auto& op : r.operations) {
        const bool eligible = !p.drop_kind || op.kind == *p.drop_kind;
        if (eligible && (p.drop_count == 0 || dropped < p.drop_count)) {
          ++dropped;
          continue;
        }
        kept.push_back(std::move(op));
      }
      r.operations = std::move(kept);
      return dropped > 0;
    }
    case FaultMode::ExtraOp:
      r.operations.push_back(p.extra_op ? *p.extra_op : Operation::deliver(to_bytes("forged")));
      return true;
    case FaultMode::CorruptState:
      r.new_state = p.state ? *p.state : perturb(r.new_state);
      return true;
    case FaultMode::WrongRuling: {
      auto wrong = law.evaluate(e, perturb(s));
      if (wrong.operations == r.operations) return false;
      r = std::move(wrong);
      return true;
    }
  }
  return false;
}

Ruling FaultyEngine::decide(const LawDefinition& law, const Event& e, const ControllerState& s,
                            const RulingContext& ctx) {
  if (!shadow_) shadow_ = s;
  auto honest = law.evaluate(e, *shadow_);
  auto r = inner_->decide(law, e, s, ctx);
  bool fired = false;
  if (armed_ && spec_.trigger.matches(e.kind, ctx.ctrl_seq)) {
    // A copy, so a mode that does not fire leaves the ruling untouched.
    Ruling faulty = r;
    if (apply(law, e, s, faulty)) {
      r = std::move(faulty);
      fired = true;
      if (spec_.once) armed_ = false;
    }
  }
  shadow_ = honest.new_state;

  std::lock_guard lock(outcome_->mu);
  if (fired) {
    ++outcome_->fired;
    if (!outcome_->first_fired_ctrl_seq) outcome_->first_fired_ctrl_seq = ctx.ctrl_seq;
  }
  if (!outcome_->first_divergent_ctrl_seq && r.operations != honest.operations) {
    outcome_->first_divergent_ctrl_seq = ctx.ctrl_seq;
    outcome_->first_divergent_event_seq = e.seq;
    outcome_->divergent_at = std::chrono::steady_clock::now();
  }
  return r;
}

std::shared_ptr<FaultOutcome> wrap(Controller& c, const FaultSpec& spec) {
  auto outcome = std::make_shared<FaultOutcome>();
  outcome->target = c.id();
  outcome->mode = spec.mode;
  c.set_engine(std::make_unique<FaultyEngine>(spec, c.take_engine(), outcome));
  return outcome;
}

std::shared_ptr<FaultOutcome> wrap(CPNode& node, const FaultSpec& spec) {
  std::shared_ptr<FaultOutcome> out;
  node.with_controller(spec.target, [&](Controller& c) { out = wrap(c, spec); });
  return out;
}

}  // namespace cop
