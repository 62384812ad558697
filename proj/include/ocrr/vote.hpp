#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "ocrr/errors.hpp"

namespace ocrr {

enum class VoteVariant { full, count_only, no_recency, k1, sumsim };

const char* to_string(VoteVariant v);
VoteVariant parse_vote_variant(std::string_view name);

struct VoteConfig {
    std::size_t k = 5;
    double margin = 0.05;
    VoteVariant variant = VoteVariant::full;

    /// Neighbours actually retrieved; the k1 variant always uses one.
    std::size_t effective_k() const noexcept { return variant == VoteVariant::k1 ? 1 : k; }
    void validate() const;
};

struct Neighbour {
    std::string_view label;
    float similarity = 0.0f;
    std::uint64_t index = 0;  // ledger position, larger = more recent
};

/// Votes over neighbours sorted by similarity, highest first.
///
/// full:       keep neighbours with sim >= top - margin; most survivors wins;
///             ties go to the label with the highest best-survivor similarity,
///             then to the label whose best survivor is most recent.
/// count_only: margin band + count; ties go to the label seen first.
/// no_recency: full without the recency stage (remaining ties: first seen).
/// k1:         label of the nearest neighbour.
/// sumsim:     no band; largest similarity sum over all neighbours.
///
/// Throws NoEvidenceError on an empty list.
ClassLabel vote(std::span<const Neighbour> neighbours, const VoteConfig& config);

}  // namespace ocrr
