#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace cop {

using LawId = std::string;

struct CPNodeId {
  std::uint32_t value = 0;
  auto operator<=>(const CPNodeId&) const = default;
};

// Globally unique: the hosting node's id occupies the high 32 bits, so the
// id alone identifies both controller and host.
struct ControllerId {
  std::uint64_t value = 0;
  auto operator<=>(const ControllerId&) const = default;

  static ControllerId make(CPNodeId node, std::uint32_t local) {
    return ControllerId{(static_cast<std::uint64_t>(node.value) << 32) | local};
  }
  CPNodeId node() const { return CPNodeId{static_cast<std::uint32_t>(value >> 32)}; }
  std::uint32_t local() const { return static_cast<std::uint32_t>(value & 0xFFFFFFFFu); }
};

struct AgentAddress {
  CPNodeId node;
  ControllerId controller;
  auto operator<=>(const AgentAddress&) const = default;

  static AgentAddress of(ControllerId id) { return AgentAddress{id.node(), id}; }
};

std::string to_string(CPNodeId id);
std::string to_string(ControllerId id);
std::string to_string(const AgentAddress& a);

}  // namespace cop

template <>
struct std::hash<cop::ControllerId> {
  std::size_t operator()(const cop::ControllerId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};

template <>
struct std::hash<cop::AgentAddress> {
  std::size_t operator()(const cop::AgentAddress& a) const noexcept {
    return std::hash<std::uint64_t>{}(a.controller.value) ^ (std::size_t{a.node.value} << 1);
  }
};
