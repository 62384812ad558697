#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ocrr {

// Every stochastic component draws from this one engine family.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent sub-seed for a named purpose, so that e.g. the
/// stream shuffle and the correction policy never share a random sequence.
std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose) noexcept;

inline Rng make_rng(std::uint64_t base, std::string_view purpose) {
    return Rng(derive_seed(base, purpose));
}

}  // namespace ocrr
