#include "ocrr/index.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "ocrr/embedding.hpp"

namespace ocrr {

const char* to_string(Backend b) {
    return b == Backend::brute ? "brute" : "hnsw";
}

Backend parse_backend(std::string_view name) {
    if (name == "brute") {
        return Backend::brute;
    }
    if (name == "hnsw") {
        return Backend::hnsw;
    }
    throw ConfigError("unknown index backend '" + std::string(name) + "'");
}

BruteForceIndex::BruteForceIndex(std::size_t dim) : dim_(dim) {
    if (dim == 0) {
        throw std::invalid_argument("index dim must be positive");
    }
}

void BruteForceIndex::reserve(std::size_t n) {
    data_.reserve(n * dim_);
    ids_.reserve(n);
    slot_of_.reserve(n);
}

void BruteForceIndex::insert(std::uint64_t id, std::span<const float> vector) {
    if (vector.size() != dim_) {
        throw std::invalid_argument("vector dim " + std::to_string(vector.size()) + " != index dim " +
                                    std::to_string(dim_));
    }
    if (!slot_of_.emplace(id, ids_.size()).second) {
        throw std::invalid_argument("duplicate id " + std::to_string(id));
    }
    ids_.push_back(id);
    data_.insert(data_.end(), vector.begin(), vector.end());
}

bool BruteForceIndex::erase(std::uint64_t id) {
    auto it = slot_of_.find(id);
    if (it == slot_of_.end()) {
        return false;
    }
    const std::size_t slot = it->second;
    const std::size_t last = ids_.size() - 1;
    slot_of_.erase(it);
    if (slot != last) {
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(last * dim_), dim_,
                    data_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
        ids_[slot] = ids_[last];
        slot_of_[ids_[slot]] = slot;
    }
    ids_.pop_back();
    data_.resize(last * dim_);
    return true;
}

std::vector<std::vector<Hit>> VectorIndex::top_k_batch(std::span<const float* const> queries, std::size_t k) const {
    std::vector<std::vector<Hit>> out;
    out.reserve(queries.size());
    for (const float* q : queries) {
        out.push_back(top_k({q, dim()}, k));
    }
    return out;
}

namespace {

// Orders by similarity descending, then id ascending.
bool better(const Hit& a, const Hit& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
}

// Bounded heap of the k best hits, worst-kept at front.
struct TopK {
    std::size_t k;
    std::vector<Hit> heap;

    explicit TopK(std::size_t k_) : k(k_) { heap.reserve(k + 1); }

    void offer(const Hit& h) {
        if (heap.size() < k) {
            heap.push_back(h);
            std::push_heap(heap.begin(), heap.end(), better);
        } else if (better(h, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), better);
            heap.back() = h;
            std::push_heap(heap.begin(), heap.end(), better);
        }
    }

    std::vector<Hit> sorted() && {
        std::sort(heap.begin(), heap.end(), better);
        return std::move(heap);
    }
};

// One row against four queries; the row is loaded once per lane block.
// Bit-identical to four dot() calls (same lane split and reduction order).
void dot4(const float* row, const float* const* q, std::size_t n, float* out) {
    constexpr std::size_t kLanes = 64;
    float acc[4][kLanes] = {};
    const std::size_t body = n - n % kLanes;
    for (std::size_t i = 0; i < body; i += kLanes) {
#pragma omp simd
        for (std::size_t j = 0; j < kLanes; ++j) {
            const float r = row[i + j];
            acc[0][j] += r * q[0][i + j];
            acc[1][j] += r * q[1][i + j];
            acc[2][j] += r * q[2][i + j];
            acc[3][j] += r * q[3][i + j];
        }
    }
    for (std::size_t t = 0; t < 4; ++t) {
        float s = 0.0f;
        for (std::size_t j = body; j < n; ++j) {
            s += row[j] * q[t][j];
        }
#pragma omp simd reduction(+ : s)
        for (std::size_t j = 0; j < kLanes; ++j) {
            s += acc[t][j];
        }
        out[t] = s;
    }
}

}  // namespace

std::vector<std::vector<Hit>> BruteForceIndex::top_k_batch(std::span<const float* const> queries,
                                                           std::size_t k) const {
    if (ids_.empty()) {
        throw NoEvidenceError("top_k on an empty index");
    }
    k = std::min(k, ids_.size());
    constexpr std::size_t kBlock = 16;
    std::vector<std::vector<Hit>> out;
    out.reserve(queries.size());
    for (std::size_t b = 0; b < queries.size(); b += kBlock) {
        const std::size_t n = std::min(kBlock, queries.size() - b);
        std::vector<TopK> tops(n, TopK(k));
        const float* row = data_.data();
        for (std::size_t i = 0; i < ids_.size(); ++i, row += dim_) {
            std::size_t q = 0;
            for (; q + 4 <= n; q += 4) {
                float sims[4];
                dot4(row, &queries[b + q], dim_, sims);
                for (std::size_t j = 0; j < 4; ++j) {
                    tops[q + j].offer({ids_[i], sims[j]});
                }
            }
            for (; q < n; ++q) {
                tops[q].offer({ids_[i], dot(row, queries[b + q], dim_)});
            }
        }
        for (auto& t : tops) {
            out.push_back(std::move(t).sorted());
        }
    }
    return out;
}

std::vector<Hit> BruteForceIndex::top_k(std::span<const float> query, std::size_t k) const {
    if (ids_.empty()) {
        throw NoEvidenceError("top_k on an empty index");
    }
    if (query.size() != dim_) {
        throw std::invalid_argument("query dim mismatch");
    }
    TopK top(std::min(k, ids_.size()));
    const float* row = data_.data();
    for (std::size_t i = 0; i < ids_.size(); ++i, row += dim_) {
        top.offer({ids_[i], dot(row, query.data(), dim_)});
    }
    return std::move(top).sorted();
}

std::size_t BruteForceIndex::memory_bytes() const noexcept {
    return data_.capacity() * sizeof(float) + ids_.capacity() * sizeof(std::uint64_t) +
           slot_of_.size() * (sizeof(std::uint64_t) + sizeof(std::size_t) + 16);
}

std::unique_ptr<VectorIndex> make_index(const IndexConfig& config) {
    if (config.backend == Backend::hnsw) {
        return std::make_unique<HnswIndex>(config.dim, config.hnsw);
    }
    return std::make_unique<BruteForceIndex>(config.dim);
}

double recall_at_k(std::span<const std::uint64_t> exact_ids, std::span<const std::uint64_t> approx_ids,
                   std::size_t k) {
    if (k == 0) {
        throw std::invalid_argument("recall_at_k needs k >= 1");
    }
    if (exact_ids.size() > k || approx_ids.size() > k) {
        throw std::invalid_argument("recall_at_k lists must have at most k ids");
    }
    std::size_t hits = 0;
    for (auto id : approx_ids) {
        if (std::find(exact_ids.begin(), exact_ids.end(), id) != exact_ids.end()) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace ocrr
