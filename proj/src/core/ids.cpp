#include "cop/core/ids.hpp"

namespace cop {

std::string to_string(CPNodeId id) { return "n" + std::to_string(id.value); }

std::string to_string(ControllerId id) {
  return to_string(id.node()) + "." + std::to_string(id.local());
}

std::string to_string(const AgentAddress& a) {
  return "<" + to_string(a.node) + "/" + to_string(a.controller) + ">";
}

}  // namespace cop
