#include "ocrr/rng.hpp"

namespace ocrr {

std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose) noexcept {
    // FNV-1a over the purpose tag, then mixed with the base seed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : purpose) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(base) ^ h);
}

}  // namespace ocrr
