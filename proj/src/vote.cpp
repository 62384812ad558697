#include "ocrr/vote.hpp"

#include <algorithm>
#include <vector>

namespace ocrr {

const char* to_string(VoteVariant v) {
    switch (v) {
        case VoteVariant::full: return "full";
        case VoteVariant::count_only: return "count_only";
        case VoteVariant::no_recency: return "no_recency";
        case VoteVariant::k1: return "k1";
        case VoteVariant::sumsim: return "sumsim";
    }
    return "full";
}

VoteVariant parse_vote_variant(std::string_view name) {
    for (auto v : {VoteVariant::full, VoteVariant::count_only, VoteVariant::no_recency, VoteVariant::k1,
                   VoteVariant::sumsim}) {
        if (name == to_string(v)) {
            return v;
        }
    }
    throw ConfigError("unknown vote variant '" + std::string(name) + "'");
}

void VoteConfig::validate() const {
    if (k < 1) {
        throw ConfigError("vote k must be >= 1");
    }
    if (!(margin >= 0.0)) {
        throw ConfigError("vote margin must be >= 0");
    }
}

namespace {

struct Tally {
    std::string_view label;
    std::size_t count = 0;
    double sum = 0.0;
    float best_sim = 0.0f;
    std::uint64_t best_index = 0;  // most recent among the best-similarity members
};

}  // namespace

ClassLabel vote(std::span<const Neighbour> neighbours, const VoteConfig& config) {
    if (neighbours.empty()) {
        throw NoEvidenceError("vote over an empty neighbour list");
    }
    if (config.variant == VoteVariant::k1) {
        return ClassLabel(neighbours.front().label);
    }

    const bool banded = config.variant != VoteVariant::sumsim;
    const double floor = static_cast<double>(neighbours.front().similarity) - config.margin;

    // k is small, so a linear scan keeps first-encountered order for free.
    std::vector<Tally> tallies;
    tallies.reserve(neighbours.size());
    for (const Neighbour& n : neighbours) {
        if (banded && static_cast<double>(n.similarity) < floor) {
            continue;
        }
        auto it = std::find_if(tallies.begin(), tallies.end(), [&](const Tally& t) { return t.label == n.label; });
        if (it == tallies.end()) {
            tallies.push_back({n.label, 1, n.similarity, n.similarity, n.index});
            continue;
        }
        it->count += 1;
        it->sum += n.similarity;
        if (n.similarity > it->best_sim) {
            it->best_sim = n.similarity;
            it->best_index = n.index;
        } else if (n.similarity == it->best_sim) {
            it->best_index = std::max(it->best_index, n.index);
        }
    }

    // Strict comparisons keep the earliest tally on a full tie.
    const Tally* winner = &tallies.front();
    for (const Tally& t : tallies) {
        if (&t == winner) {
            continue;
        }
        bool better = false;
        switch (config.variant) {
            case VoteVariant::sumsim:
                better = t.sum > winner->sum;
                break;
            case VoteVariant::count_only:
                better = t.count > winner->count;
                break;
            case VoteVariant::no_recency:
                better = t.count > winner->count || (t.count == winner->count && t.best_sim > winner->best_sim);
                break;
            case VoteVariant::full:
                if (t.count != winner->count) {
                    better = t.count > winner->count;
                } else if (t.best_sim != winner->best_sim) {
                    better = t.best_sim > winner->best_sim;
                } else {
                    better = t.best_index > winner->best_index;
                }
                break;
            case VoteVariant::k1:
                break;
        }
        if (better) {
            winner = &t;
        }
    }
    return ClassLabel(winner->label);
}

}  // namespace ocrr
