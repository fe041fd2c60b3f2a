#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>

#include "cop/controller/controller.hpp"

namespace cop {

class CPNode;

enum class FaultMode : std::uint8_t { DropOps, ExtraOp, CorruptState, WrongRuling };

std::string_view to_string(FaultMode m);
// Throws ConfigError.
FaultMode parse_fault_mode(std::string_view s);

struct FaultTrigger {
  std::optional<EventKind> event_kind;
  // Earliest event entry position (ctrl_seq) at which the fault may fire.
  std::uint64_t min_ctrl_seq = 0;

  bool matches(EventKind k, std::uint64_t ctrl_seq) const {
    return (!event_kind || *event_kind == k) && ctrl_seq >= min_ctrl_seq;
  }
};

struct FaultParams {
  // DropOps: how many operations to suppress (0 = all matching).
  std::size_t drop_count = 1;
  // DropOps: only suppress operations of this kind.
  std::optional<OpKind> drop_kind;
  // ExtraOp: the operation appended to the ruling.
  std::optional<Operation> extra_op;
  // CorruptState: replacement state. When unset, every integer term is
  // shifted by `delta`.
  std::optional<ControllerState> state;
  std::int64_t delta = 1000;
};

struct FaultSpec {
  ControllerId target;
  FaultTrigger trigger;
  FaultMode mode = FaultMode::ExtraOp;
  FaultParams params;
  // Fire once, or every time the trigger matches.
  bool once = true;
};

// Ground truth kept by a faulty engine, readable after the engine has been
// replaced by reconstruction.
struct FaultOutcome {
  mutable std::mutex mu;
  ControllerId target;
  FaultMode mode = FaultMode::ExtraOp;
  std::uint64_t fired = 0;
  std::optional<std::uint64_t> first_fired_ctrl_seq;
  // First event whose carried-out operations differ from an honest
  // controller's.
  std::optional<std::uint64_t> first_divergent_ctrl_seq;
  std::optional<std::uint64_t> first_divergent_event_seq;
  std::chrono::steady_clock::time_point divergent_at{};
};

// Byzantine engine: decides honestly until the trigger matches, then applies
// the fault mode. A shadow of the honest state is kept to detect when the
// carried-out operations first diverge from an honest controller's.
class FaultyEngine final : public RulingEngine {
 public:
  FaultyEngine(FaultSpec spec, std::unique_ptr<RulingEngine> inner, std::shared_ptr<FaultOutcome> outcome);

  Ruling decide(const LawDefinition& law, const Event& e, const ControllerState& s,
                const RulingContext& ctx) override;

 private:
  bool apply(const LawDefinition& law, const Event& e, const ControllerState& s, Ruling& r);
  ControllerState perturb(const ControllerState& s) const;

  FaultSpec spec_;
  std::unique_ptr<RulingEngine> inner_;
  std::shared_ptr<FaultOutcome> outcome_;
  std::optional<ControllerState> shadow_;
  bool armed_ = true;
};

// Installs a faulty engine in `c`.
std::shared_ptr<FaultOutcome> wrap(Controller& c, const FaultSpec& spec);
// Same, for a controller hosted on `node`. Throws UnknownController.
std::shared_ptr<FaultOutcome> wrap(CPNode& node, const FaultSpec& spec);

}  // namespace cop
