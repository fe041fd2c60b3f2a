#include "cop/law/law.hpp"

#include <mutex>

#include "cop/core/errors.hpp"
#include "cop/law/codec.hpp"

namespace cop {

namespace {

// Probe set for the registration-time determinism check. Covers every event
// kind against an empty and a populated state.
std::vector<std::pair<Event, ControllerState>> determinism_probes() {
  const ControllerId c = ControllerId::make(CPNodeId{1}, 1);
  const AgentAddress self = AgentAddress::of(c);
  const AgentAddress peer = AgentAddress::of(ControllerId::make(CPNodeId{2}, 7));
  ControllerState populated;
  populated.set("budget", std::int64_t{500});
  populated.set("holding", std::int64_t{1});
  populated.set("tag", std::string("probe"));

  std::vector<Event> events = {
      Event::adopted(c, 1, {}),
      Event::adopted(c, 1, to_bytes("secret")),
      Event::sent(c, 2, self, peer, to_bytes("200")),
      Event::sent(c, 2, self, peer, to_bytes("hello")),
      Event::arrived(c, 3, peer, self, to_bytes("200")),
      Event::arrived(c, 3, peer, self, to_bytes("grant")),
      Event::obligation_due(c, 4, "lock-timeout"),
      Event::exception(c, 5, self, peer, to_bytes("200")),
      Event::quit(c, 6),
  };
  std::vector<std::pair<Event, ControllerState>> out;
  for (const auto& e : events) {
    out.emplace_back(e, ControllerState{});
    out.emplace_back(e, populated);
  }
  return out;
}

}  // namespace

Digest law_version_hash(const LawId& id, ByteView definition) {
  ByteWriter w;
  w.str("cop-law-v1");
  w.str(id);
  w.bytes(definition);
  return sha256(w.data());
}

LawDefinition LawDefinition::of(std::shared_ptr<const Law> law) {
  LawDefinition def;
  def.law_id = law->id();
  auto d = law->definition();
  def.version_hash = law_version_hash(def.law_id, d);
  def.law = std::move(law);
  return def;
}

LawId LawRegistry::register_law(LawDefinition def) {
  if (!def.law) throw Error(ErrorCode::UnknownLaw, "law definition without an implementation");

  for (const auto& [e, s] : determinism_probes()) {
    if (codec::encode(def.law->evaluate(e, s)) != codec::encode(def.law->evaluate(e, s))) {
      throw Error(ErrorCode::NonDeterministicLaw, "law '" + def.law_id + "' rules differently on " + describe(e));
    }
  }

  std::unique_lock lock(mu_);
  auto it = laws_.find(def.law_id);
  if (it != laws_.end()) {
    if (it->second->version_hash != def.version_hash) {
      throw Error(ErrorCode::DuplicateLawId, "law '" + def.law_id + "' already registered with version " +
                                                 to_hex(it->second->version_hash));
    }
    return def.law_id;
  }
  auto id = def.law_id;
  laws_.emplace(id, std::make_shared<const LawDefinition>(std::move(def)));
  return id;
}

std::shared_ptr<const LawDefinition> LawRegistry::get(const LawId& id) const {
  std::shared_lock lock(mu_);
  auto it = laws_.find(id);
  if (it == laws_.end()) throw Error(ErrorCode::UnknownLaw, "law '" + id + "' is not registered");
  return it->second;
}

bool LawRegistry::contains(const LawId& id) const {
  std::shared_lock lock(mu_);
  return laws_.count(id) != 0;
}

Ruling LawRegistry::evaluate(const LawId& id, const Event& e, const ControllerState& s) const {
  return get(id)->evaluate(e, s);
}

}  // namespace cop
