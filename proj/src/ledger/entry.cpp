#include "cop/ledger/entry.hpp"

#include "cop/core/errors.hpp"
#include "cop/law/codec.hpp"

namespace cop {

std::string_view to_string(EntryKind k) {
  switch (k) {
    case EntryKind::Event: return "event";
    case EntryKind::Operation: return "op";
    case EntryKind::Reconstructed: return "reconstructed";
    case EntryKind::Repair: return "repair";
  }
  return "?";
}

bool LedgerEntry::is_ruling_end() const {
  // Operation tag followed by the RulingEnd kind byte and an empty map.
  return kind == EntryKind::Operation && body.size() == 6 && body[0] == codec::kTagOperation &&
         body[1] == static_cast<std::uint8_t>(OpKind::RulingEnd);
}

namespace codec {

Bytes encode(const LedgerEntry& e) {
  ByteWriter w;
  w.u8(kTagEntry);
  w.u64(e.global_seq);
  w.str(e.law);
  w.u64(e.controller.value);
  w.u64(e.ctrl_seq);
  w.u8(static_cast<std::uint8_t>(e.kind));
  w.bytes(e.body);
  w.i64(e.timestamp);
  w.u32(e.node.value);
  return std::move(w).take();
}

LedgerEntry decode_entry(ByteView b) {
  ByteReader r(b);
  if (r.u8() != kTagEntry) throw Error(ErrorCode::DecodeError, "not a ledger entry");
  LedgerEntry e;
  e.global_seq = r.u64();
  e.law = r.str();
  e.controller.value = r.u64();
  e.ctrl_seq = r.u64();
  auto kind = r.u8();
  if (kind < 1 || kind > 4) throw Error(ErrorCode::DecodeError, "unknown entry kind " + std::to_string(kind));
  e.kind = static_cast<EntryKind>(kind);
  e.body = r.bytes();
  e.timestamp = r.i64();
  e.node.value = r.u32();
  r.expect_end();
  return e;
}

void write_obligations(ByteWriter& w, const PendingObligations& o) {
  w.u32(static_cast<std::uint32_t>(o.size()));
  for (const auto& [name, due] : o) {
    w.str(name);
    w.i64(due);
  }
}

PendingObligations read_obligations(ByteReader& r) {
  PendingObligations out;
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = r.str();
    auto due = r.i64();
    if (!out.empty() && !(out.rbegin()->first < name)) {
      throw Error(ErrorCode::DecodeError, "obligation names not in ascending order");
    }
    out.emplace_hint(out.end(), std::move(name), due);
  }
  return out;
}

Bytes encode(const ReconstructionRecord& rec) {
  ByteWriter w;
  w.u8('C');
  w.str(rec.law);
  write_terms(w, rec.csv.terms);
  w.u64(rec.through_event_seq);
  write_obligations(w, rec.obligations);
  return std::move(w).take();
}

ReconstructionRecord decode_reconstruction(ByteView b) {
  ByteReader r(b);
  if (r.u8() != 'C') throw Error(ErrorCode::DecodeError, "not a reconstruction record");
  ReconstructionRecord rec;
  rec.law = r.str();
  rec.csv.terms = read_terms(r);
  rec.through_event_seq = r.u64();
  rec.obligations = read_obligations(r);
  r.expect_end();
  return rec;
}

Bytes encode_record(ByteView entry_bytes, const Digest& prev_hash) {
  ByteWriter w;
  w.bytes(entry_bytes);
  w.raw(prev_hash);
  return std::move(w).take();
}

Digest record_hash(ByteView record) { return sha256(record); }

}  // namespace codec

std::string describe(const LedgerEntry& e) {
  std::string out = "#" + std::to_string(e.global_seq) + " " + e.law + " " + to_string(e.controller) + ":" +
                    std::to_string(e.ctrl_seq) + " " + std::string(to_string(e.kind)) + " ";
  try {
    switch (e.kind) {
      case EntryKind::Event: out += describe(codec::decode_event(e.body)); break;
      case EntryKind::Operation:
      case EntryKind::Repair: out += describe(codec::decode_operation(e.body)); break;
      case EntryKind::Reconstructed: {
        auto rec = codec::decode_reconstruction(e.body);
        out += rec.law + " csv=" + describe(rec.csv) + " through=" + std::to_string(rec.through_event_seq);
        break;
      }
    }
  } catch (const Error&) {
    out += "<undecodable " + std::to_string(e.body.size()) + " bytes>";
  }
  return out;
}

}  // namespace cop
