#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "cop/core/bytes.hpp"

namespace cop {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(ByteView data);
Digest sha256(ByteView a, ByteView b);
Digest hmac_sha256(std::string_view key, ByteView data);

bool constant_time_equal(ByteView a, ByteView b);

}  // namespace cop
