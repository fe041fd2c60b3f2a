#pragma once

#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "cop/core/digest.hpp"
#include "cop/law/types.hpp"

namespace cop {

// A law is a deterministic, local function from (event, state) to a ruling.
// Implementations see nothing but their arguments: no clock, no randomness,
// no other controller. Unmatched events must yield Ruling::unchanged(s).
class Law {
 public:
  virtual ~Law() = default;

  virtual LawId id() const = 0;
  // Canonical description of the rules and their parameters. Two laws with
  // the same id and different definitions are different versions.
  virtual Bytes definition() const = 0;
  virtual Ruling evaluate(const Event& e, const ControllerState& s) const = 0;
};

struct LawDefinition {
  LawId law_id;
  Digest version_hash{};
  std::shared_ptr<const Law> law;

  static LawDefinition of(std::shared_ptr<const Law> law);

  Ruling evaluate(const Event& e, const ControllerState& s) const { return law->evaluate(e, s); }
};

Digest law_version_hash(const LawId& id, ByteView definition);

// Write-once-per-id registry shared by CPnodes, controllers and inspectors.
// Concurrent reads are safe.
class LawRegistry {
 public:
  LawRegistry() = default;
  LawRegistry(const LawRegistry&) = delete;
  LawRegistry& operator=(const LawRegistry&) = delete;

  // Idempotent for an identical definition. Throws DuplicateLawId when the
  // id is taken by a different version, NonDeterministicLaw when the law
  // rules differently on repeated evaluation of a probe set.
  LawId register_law(LawDefinition def);
  LawId register_law(std::shared_ptr<const Law> law) { return register_law(LawDefinition::of(std::move(law))); }

  // Throws UnknownLaw.
  std::shared_ptr<const LawDefinition> get(const LawId& id) const;
  bool contains(const LawId& id) const;

  Ruling evaluate(const LawId& id, const Event& e, const ControllerState& s) const;

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<LawId, std::shared_ptr<const LawDefinition>> laws_;
};

}  // namespace cop
