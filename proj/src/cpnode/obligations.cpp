#include "cop/cpnode/obligations.hpp"

#include <algorithm>

namespace cop {

void ObligationServer::impose(const AgentAddress& controller, std::string name, Timestamp due_at) {
  std::lock_guard lock(mu_);
  auto key = std::make_pair(controller.controller, name);
  timers_.insert_or_assign(std::move(key), ObligationTimer{controller, std::move(name), due_at});
}

void ObligationServer::cancel_all(ControllerId controller) {
  std::lock_guard lock(mu_);
  auto it = timers_.lower_bound({controller, std::string()});
  while (it != timers_.end() && it->first.first == controller) it = timers_.erase(it);
}

std::vector<ObligationTimer> ObligationServer::take_due(Timestamp now) {
  std::lock_guard lock(mu_);
  std::vector<ObligationTimer> due;
  for (auto it = timers_.begin(); it != timers_.end();) {
    if (it->second.due_at <= now) {
      due.push_back(std::move(it->second));
      it = timers_.erase(it);
    } else {
      ++it;
    }
  }
  std::stable_sort(due.begin(), due.end(),
                   [](const ObligationTimer& a, const ObligationTimer& b) { return a.due_at < b.due_at; });
  return due;
}

std::optional<Timestamp> ObligationServer::next_due() const {
  std::lock_guard lock(mu_);
  std::optional<Timestamp> best;
  for (const auto& [_, t] : timers_) {
    if (!best || t.due_at < *best) best = t.due_at;
  }
  return best;
}

std::size_t ObligationServer::pending() const {
  std::lock_guard lock(mu_);
  return timers_.size();
}

}  // namespace cop
