#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cop/core/clock.hpp"
#include "cop/core/ids.hpp"

namespace cop {

struct ObligationTimer {
  AgentAddress controller;
  std::string name;
  Timestamp due_at = 0;
};

// Per-node obligation server. Timers are keyed by (controller, name);
// imposing an obligation that is already pending replaces its deadline. A
// timer fires at most once.
class ObligationServer {
 public:
  void impose(const AgentAddress& controller, std::string name, Timestamp due_at);
  void cancel_all(ControllerId controller);

  // Removes and returns every timer due at or before `now`, earliest first.
  std::vector<ObligationTimer> take_due(Timestamp now);
  std::optional<Timestamp> next_due() const;
  std::size_t pending() const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<ControllerId, std::string>, ObligationTimer> timers_;
};

}  // namespace cop
