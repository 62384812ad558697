#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace ocrr {

using Digest = std::array<std::uint8_t, 32>;

inline constexpr Digest kGenesisHash{};

Digest sha256(std::span<const std::uint8_t> bytes);

std::string to_hex(const Digest& d);

}  // namespace ocrr
