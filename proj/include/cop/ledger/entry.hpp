#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cop/core/bytes.hpp"
#include "cop/core/clock.hpp"
#include "cop/core/digest.hpp"
#include "cop/core/ids.hpp"
#include "cop/law/types.hpp"

namespace cop {

enum class EntryKind : std::uint8_t {
  Event = 1,
  Operation = 2,
  Reconstructed = 3,
  // An operation the CPnode executed on a failed controller's behalf at the
  // inspector's request. Not part of any ruling group.
  Repair = 4,
};

std::string_view to_string(EntryKind k);

struct LedgerEntry {
  std::uint64_t global_seq = 0;
  LawId law;
  ControllerId controller;
  std::uint64_t ctrl_seq = 0;
  EntryKind kind = EntryKind::Event;
  Bytes body;
  Timestamp timestamp = 0;
  CPNodeId node;

  bool operator==(const LedgerEntry&) const = default;

  bool is_ruling_end() const;
};

// Obligation timers by name, with their due times.
using PendingObligations = std::map<std::string, Timestamp, std::less<>>;

// Body of a Reconstructed entry.
struct ReconstructionRecord {
  LawId law;
  ControllerState csv;
  std::uint64_t through_event_seq = 0;
  // Timers re-planted with the state; all others were cancelled.
  PendingObligations obligations;

  bool operator==(const ReconstructionRecord&) const = default;
};

namespace codec {

inline constexpr std::uint8_t kTagEntry = 'L';

Bytes encode(const LedgerEntry& e);
LedgerEntry decode_entry(ByteView b);
void write_obligations(ByteWriter& w, const PendingObligations& o);
PendingObligations read_obligations(ByteReader& r);
Bytes encode(const ReconstructionRecord& r);
ReconstructionRecord decode_reconstruction(ByteView b);

// One ledger-file record: u32 length || entry bytes || previous record hash.
Bytes encode_record(ByteView entry_bytes, const Digest& prev_hash);
// Hash chained into the next record.
Digest record_hash(ByteView record);

}  // namespace codec

std::string describe(const LedgerEntry& e);

}  // namespace cop
