#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "ocrr/ledger.hpp"
#include "ocrr/rng.hpp"
#include "ocrr/substrate.hpp"
#include "ocrr/vote.hpp"

namespace ocrr {

/// Vitter's Algorithm R over an unbounded stream with `capacity` slots.
class ReservoirSampler {
public:
    ReservoirSampler(std::size_t capacity, std::uint64_t seed);

    /// Offers the next stream item; returns the slot it should occupy or
    /// nullopt when it is dropped. The t-th item (1-based) is kept with
    /// probability min(1, capacity / t) in a uniformly chosen slot.
    std::optional<std::size_t> offer();

    std::size_t capacity() const noexcept { return capacity_; }
    std::uint64_t seen() const noexcept { return seen_; }

private:
    std::size_t capacity_;
    std::uint64_t seen_ = 0;
    Rng rng_;
};

enum class Eviction { reservoir, fifo };

const char* to_string(Eviction e);
Eviction parse_eviction(std::string_view name);

struct BudgetConfig {
    std::size_t budget = 1000;
    Eviction eviction = Eviction::reservoir;
    std::uint64_t rng_seed = 0;
    bool record_chain = false;  // keep a hash chain of appends plus eviction tombstones
};

struct InsertOutcome {
    enum class Kind { stored, stored_evicting, dropped };
    Kind kind = Kind::stored;
    std::uint64_t evicted = 0;  // insertion sequence number of the evicted item
};

/// Memory-budgeted substrate. Every item, seed corpus included, enters
/// through insert(); the live set never exceeds the budget.
class BoundedStore {
public:
    BoundedStore(std::size_t dim, BudgetConfig budget, VoteConfig vote = {});

    InsertOutcome insert(const EmbeddingVector& embedding, const ClassLabel& label);

    /// Same retrieval and vote as the unbounded substrate, over live entries only.
    /// Throws NoEvidenceError on an empty live set.
    Prediction predict(std::span<const float> query) const;

    std::size_t live_size() const noexcept { return live_seq_.size(); }
    /// Insertion sequence numbers (0-based) of the live entries, in slot order.
    const std::vector<std::uint64_t>& live_sequence_numbers() const noexcept { return live_seq_; }
    std::uint64_t inserted() const noexcept { return next_seq_; }
    const BudgetConfig& budget() const noexcept { return config_; }
    std::size_t dim() const noexcept { return dim_; }
    /// Present only when record_chain is on.
    const Ledger* chain() const noexcept { return config_.record_chain ? &chain_ : nullptr; }
    std::size_t live_label_bytes() const noexcept;

private:
    void write_slot(std::size_t slot, const EmbeddingVector& embedding, const ClassLabel& label);

    std::size_t dim_;
    BudgetConfig config_;
    VoteConfig vote_;
    ReservoirSampler reservoir_;
    std::size_t fifo_head_ = 0;  // oldest slot once full
    std::uint64_t next_seq_ = 0;

    std::vector<float> live_vectors_;
    std::vector<ClassLabel> live_labels_;
    std::vector<std::uint64_t> live_seq_;
    std::vector<std::uint64_t> chain_index_;  // ledger position per slot when recording
    Ledger chain_;
};

}  // namespace ocrr
