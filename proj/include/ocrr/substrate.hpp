#pragma once

#include <memory>
#include <span>
#include <vector>

#include "ocrr/corpus.hpp"
#include "ocrr/index.hpp"
#include "ocrr/ledger.hpp"
#include "ocrr/vote.hpp"

namespace ocrr {

struct Prediction {
    ClassLabel label;
    std::vector<std::uint64_t> neighbour_indices;
    std::vector<float> neighbour_similarities;  // non-increasing
};

/// Top-k retrieval through `index` (ids = ledger positions) followed by vote().
/// Throws NoEvidenceError when the ledger is empty.
Prediction predict(const Ledger& ledger, std::span<const float> query, const VoteConfig& config,
                   const VectorIndex& index);

/// The append-only retrieval learner: a hash-chained ledger kept in lockstep
/// with a retrieval index. Learning is appending; nothing is ever overwritten.
class Substrate {
public:
    Substrate(std::size_t dim, VoteConfig vote = {}, IndexConfig index = {});

    /// Appends the seed corpus in order. Throws Error if anything is already stored.
    void seed(std::span<const LabeledExample> seed_set);

    const LedgerEntry& append(const EmbeddingVector& embedding, const ClassLabel& label);
    Prediction predict(std::span<const float> query) const;
    /// predict() for many queries, sharing one pass over the index where it can.
    std::vector<Prediction> predict_batch(std::span<const float* const> queries) const;
    std::vector<std::vector<Hit>> retrieve_batch(std::span<const float* const> queries, std::size_t k) const;
    std::vector<Hit> retrieve(std::span<const float> query, std::size_t k) const;

    const Ledger& ledger() const noexcept { return ledger_; }
    const VectorIndex& index() const noexcept { return *index_; }
    const VoteConfig& vote_config() const noexcept { return vote_; }
    std::size_t dim() const noexcept { return dim_; }

private:
    std::size_t dim_;
    VoteConfig vote_;
    Ledger ledger_;
    std::unique_ptr<VectorIndex> index_;
};

}  // namespace ocrr
