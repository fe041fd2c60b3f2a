#pragma once

#include <memory>
#include <optional>

#include "cop/law/law.hpp"

namespace cop::laws {

inline constexpr std::int64_t kDefaultInitialBudget = 1000;

// Money transfer. The message body of a sent/arrived event is the amount, a
// decimal integer in whole currency units.
//   R1 adopted: budget := initial budget.
//   R2 sent: if 0 < amount <= budget then budget -= amount; forward.
//   R3 arrived: if amount > 0 then budget += amount; deliver.
// A body that does not parse as an integer matches no rule.
class MoneyTransferLaw final : public Law {
 public:
  explicit MoneyTransferLaw(std::int64_t initial_budget = kDefaultInitialBudget, LawId id = "MT")
      : initial_budget_(initial_budget), id_(std::move(id)) {}

  LawId id() const override { return id_; }
  Bytes definition() const override;
  Ruling evaluate(const Event& e, const ControllerState& s) const override;

  std::int64_t initial_budget() const { return initial_budget_; }

 private:
  std::int64_t initial_budget_;
  LawId id_;
};

// Monitoring. Every newborn agent reports its birth to the monitor, and
// every sent message is forwarded with a copy (carrying sender and target
// addresses) to the monitor. Arrivals are delivered.
class MonitoringLaw final : public Law {
 public:
  explicit MonitoringLaw(AgentAddress monitor, LawId id = "MO") : monitor_(monitor), id_(std::move(id)) {}

  LawId id() const override { return id_; }
  Bytes definition() const override;
  Ruling evaluate(const Event& e, const ControllerState& s) const override;

  const AgentAddress& monitor() const { return monitor_; }

 private:
  AgentAddress monitor_;
  LawId id_;
};

// Lock holding with an enforced release obligation.
//   adopted: holding := 0.
//   sent "acquire"/"grant"/other non-release text: forward.
//   sent "release" while holding: holding := 0; forward.
//   arrived "grant": holding := 1; imposeObligation("lock-timeout", hold); deliver.
//   arrived other: deliver.
//   obligationDue("lock-timeout") while holding: holding := 0; send "release"
//   to the lock manager (the sanction).
class LockLaw final : public Law {
 public:
  static constexpr std::string_view kObligation = "lock-timeout";

  LockLaw(AgentAddress manager, std::int64_t hold_ms, LawId id = "LOCK")
      : manager_(manager), hold_ms_(hold_ms), id_(std::move(id)) {}

  LawId id() const override { return id_; }
  Bytes definition() const override;
  Ruling evaluate(const Event& e, const ControllerState& s) const override;

  std::int64_t hold_ms() const { return hold_ms_; }
  const AgentAddress& manager() const { return manager_; }

 private:
  AgentAddress manager_;
  std::int64_t hold_ms_;
  LawId id_;
};

// Parses a strictly decimal integer ("-5", "200"); nullopt otherwise.
std::optional<std::int64_t> parse_amount(ByteView payload);
Bytes amount_payload(std::int64_t amount);

// Records the monitoring law sends to the monitor.
struct MonitorRecord {
  enum class Type { Birth, Copy };
  Type type = Type::Birth;
  AgentAddress agent;   // Birth: the newborn agent.
  AgentAddress sender;  // Copy.
  AgentAddress target;  // Copy.
  Bytes payload;        // Copy: the original message body.
};

Bytes encode_monitor_record(const MonitorRecord& r);
MonitorRecord decode_monitor_record(ByteView b);

}  // namespace cop::laws
