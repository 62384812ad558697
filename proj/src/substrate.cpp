#include "ocrr/substrate.hpp"

namespace ocrr {

namespace {

Prediction vote_hits(const Ledger& ledger, const std::vector<Hit>& hits, const VoteConfig& config) {
    std::vector<Neighbour> neighbours;
    neighbours.reserve(hits.size());
    Prediction p;
    for (const Hit& h : hits) {
        neighbours.push_back({ledger[h.id].label, h.similarity, h.id});
        p.neighbour_indices.push_back(h.id);
        p.neighbour_similarities.push_back(h.similarity);
    }
    p.label = vote(neighbours, config);
    return p;
}

}  // namespace

Prediction predict(const Ledger& ledger, std::span<const float> query, const VoteConfig& config,
                   const VectorIndex& index) {
    if (ledger.empty() || index.size() == 0) {
        throw NoEvidenceError("predict on an empty ledger");
    }
    return vote_hits(ledger, index.top_k(query, config.effective_k()), config);
}

Substrate::Substrate(std::size_t dim, VoteConfig vote, IndexConfig index) : dim_(dim), vote_(vote) {
    vote_.validate();
    index.dim = dim;
    index_ = make_index(index);
}

void Substrate::seed(std::span<const LabeledExample> seed_set) {
    if (!ledger_.empty()) {
        throw Error("substrate already seeded");
    }
    if (auto* brute = dynamic_cast<BruteForceIndex*>(index_.get())) {
        brute->reserve(seed_set.size());
    }
    for (const auto& ex : seed_set) {
        append(ex.embedding, ex.label);
    }
}

const LedgerEntry& Substrate::append(const EmbeddingVector& embedding, const ClassLabel& label) {
    if (embedding.dim() != dim_) {
        throw std::invalid_argument("embedding dim mismatch");
    }
    const LedgerEntry& e = ledger_.append(embedding, label);
    index_->insert(e.index, e.embedding.components());
    return e;
}

Prediction Substrate::predict(std::span<const float> query) const {
    return ocrr::predict(ledger_, query, vote_, *index_);
}

std::vector<Prediction> Substrate::predict_batch(std::span<const float* const> queries) const {
    if (ledger_.empty()) {
        throw NoEvidenceError("predict on an empty ledger");
    }
    std::vector<Prediction> out;
    out.reserve(queries.size());
    for (const auto& hits : index_->top_k_batch(queries, vote_.effective_k())) {
        out.push_back(vote_hits(ledger_, hits, vote_));
    }
    return out;
}

std::vector<std::vector<Hit>> Substrate::retrieve_batch(std::span<const float* const> queries, std::size_t k) const {
    if (ledger_.empty()) {
        throw NoEvidenceError("retrieve on an empty ledger");
    }
    return index_->top_k_batch(queries, k);
}

std::vector<Hit> Substrate::retrieve(std::span<const float> query, std::size_t k) const {
    if (ledger_.empty()) {
        throw NoEvidenceError("retrieve on an empty ledger");
    }
    return index_->top_k(query, k);
}

}  // namespace ocrr
