#pragma once

// Canonical encoding shared by the wire, the ledger, and the inspector's
// ruling comparison. Layout is documented in docs/encoding.md.
//
// Every top-level record starts with a one-byte type tag. Integers are
// big-endian, signed integers two's complement, strings and byte strings
// u32 length-prefixed, maps u32 count-prefixed with keys in ascending byte
// order. Decoding is strict: unknown tags, unsorted or duplicate map keys
// and trailing bytes are rejected, so decode(encode(x)) == x and every
// byte string has at most one meaning.

#include "cop/core/bytes.hpp"
#include "cop/law/types.hpp"

namespace cop::codec {

inline constexpr std::uint8_t kTagEvent = 'E';
inline constexpr std::uint8_t kTagOperation = 'O';
inline constexpr std::uint8_t kTagRuling = 'R';
inline constexpr std::uint8_t kTagState = 'S';

void write_address(ByteWriter& w, const AgentAddress& a);
AgentAddress read_address(ByteReader& r);
void write_value(ByteWriter& w, const Value& v);
Value read_value(ByteReader& r);
void write_terms(ByteWriter& w, const Terms& t);
Terms read_terms(ByteReader& r);
void write_operation(ByteWriter& w, const Operation& op);
Operation read_operation(ByteReader& r);

Bytes encode(const Event& e);
Bytes encode(const Operation& op);
Bytes encode(const Ruling& r);
Bytes encode(const ControllerState& s);

Event decode_event(ByteView b);
Operation decode_operation(ByteView b);
Ruling decode_ruling(ByteView b);
ControllerState decode_state(ByteView b);

// Canonical bytes of a ruling; the inspector compares these.
inline Bytes canonical_bytes(const Ruling& r) { return encode(r); }

}  // namespace cop::codec
