#include "ocrr/bounded_store.hpp"

#include <algorithm>
#include <stdexcept>

namespace ocrr {

ReservoirSampler::ReservoirSampler(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(derive_seed(seed, "reservoir")) {
    if (capacity == 0) {
        throw std::invalid_argument("reservoir capacity must be >= 1");
    }
}

std::optional<std::size_t> ReservoirSampler::offer() {
    ++seen_;
    if (seen_ <= capacity_) {
        return static_cast<std::size_t>(seen_ - 1);
    }
    std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
    const std::uint64_t j = pick(rng_);
    if (j < capacity_) {
        return static_cast<std::size_t>(j);
    }
    return std::nullopt;
}

const char* to_string(Eviction e) {
    return e == Eviction::reservoir ? "reservoir" : "fifo";
}

Eviction parse_eviction(std::string_view name) {
    if (name == "reservoir") {
        return Eviction::reservoir;
    }
    if (name == "fifo") {
        return Eviction::fifo;
    }
    throw ConfigError("unknown eviction policy '" + std::string(name) + "'");
}

BoundedStore::BoundedStore(std::size_t dim, BudgetConfig budget, VoteConfig vote)
    : dim_(dim), config_(budget), vote_(vote), reservoir_(std::max<std::size_t>(budget.budget, 1), budget.rng_seed) {
    if (budget.budget < 1) {
        throw std::invalid_argument("budget must be >= 1");
    }
    vote_.validate();
    live_vectors_.reserve(config_.budget * dim_);
    live_labels_.reserve(config_.budget);
    live_seq_.reserve(config_.budget);
}

void BoundedStore::write_slot(std::size_t slot, const EmbeddingVector& embedding, const ClassLabel& label) {
    const std::uint64_t seq = next_seq_;
    if (slot == live_seq_.size()) {
        live_vectors_.insert(live_vectors_.end(), embedding.components().begin(), embedding.components().end());
        live_labels_.push_back(label);
        live_seq_.push_back(seq);
    } else {
        std::copy(embedding.components().begin(), embedding.components().end(),
                  live_vectors_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
        live_labels_[slot] = label;
        live_seq_[slot] = seq;
    }
    if (config_.record_chain) {
        const auto pos = chain_.append(embedding, label).index;
        if (slot == chain_index_.size()) {
            chain_index_.push_back(pos);
        } else {
            chain_index_[slot] = pos;
        }
    }
}

InsertOutcome BoundedStore::insert(const EmbeddingVector& embedding, const ClassLabel& label) {
    if (embedding.dim() != dim_) {
        throw std::invalid_argument("embedding dim mismatch");
    }
    if (label.empty()) {
        throw std::invalid_argument("labels must be non-empty");
    }
    InsertOutcome out;
    std::optional<std::size_t> slot;
    if (config_.eviction == Eviction::reservoir) {
        slot = reservoir_.offer();
    } else if (live_seq_.size() < config_.budget) {
        slot = live_seq_.size();
    } else {
        slot = fifo_head_;
        fifo_head_ = (fifo_head_ + 1) % config_.budget;
    }

    if (!slot) {
        out.kind = InsertOutcome::Kind::dropped;
    } else if (*slot < live_seq_.size()) {
        out.kind = InsertOutcome::Kind::stored_evicting;
        out.evicted = live_seq_[*slot];
        if (config_.record_chain) {
            chain_.append_tombstone(chain_index_[*slot]);
        }
        write_slot(*slot, embedding, label);
    } else {
        write_slot(*slot, embedding, label);
    }
    ++next_seq_;
    return out;
}

Prediction BoundedStore::predict(std::span<const float> query) const {
    if (live_seq_.empty()) {
        throw NoEvidenceError("predict on an empty live set");
    }
    if (query.size() != dim_) {
        throw std::invalid_argument("query dim mismatch");
    }
    // Same ordering as BruteForceIndex: similarity desc, then older first.
    struct Scored {
        float sim;
        std::uint64_t seq;
        std::size_t slot;
    };
    auto better = [](const Scored& a, const Scored& b) { return a.sim != b.sim ? a.sim > b.sim : a.seq < b.seq; };
    const std::size_t k = std::min(vote_.effective_k(), live_seq_.size());
    std::vector<Scored> heap;
    heap.reserve(k + 1);
    for (std::size_t s = 0; s < live_seq_.size(); ++s) {
        const Scored c{dot(live_vectors_.data() + s * dim_, query.data(), dim_), live_seq_[s], s};
        if (heap.size() < k) {
            heap.push_back(c);
            std::push_heap(heap.begin(), heap.end(), better);
        } else if (better(c, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), better);
            heap.back() = c;
            std::push_heap(heap.begin(), heap.end(), better);
        }
    }
    std::sort(heap.begin(), heap.end(), better);

    std::vector<Neighbour> neighbours;
    Prediction p;
    for (const Scored& c : heap) {
        neighbours.push_back({live_labels_[c.slot], c.sim, c.seq});
        p.neighbour_indices.push_back(c.seq);
        p.neighbour_similarities.push_back(c.sim);
    }
    p.label = vote(neighbours, vote_);
    return p;
}

std::size_t BoundedStore::live_label_bytes() const noexcept {
    std::size_t n = 0;
    for (const auto& l : live_labels_) {
        n += l.size();
    }
    return n;
}

}  // namespace ocrr
