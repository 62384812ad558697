#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ocrr/errors.hpp"

namespace ocrr {

struct Hit {
    std::uint64_t id = 0;
    float similarity = 0.0f;
};

enum class Backend { brute, hnsw };

const char* to_string(Backend b);
Backend parse_backend(std::string_view name);

struct HnswParams {
    std::size_t M = 16;
    std::size_t ef_construction = 200;
    std::size_t ef_search = 64;
    std::uint64_t level_seed = 100;
};

struct IndexConfig {
    Backend backend = Backend::brute;
    std::size_t dim = 0;
    HnswParams hnsw;
};

/// Cosine-similarity retrieval over unit vectors. Inserts are single-writer;
/// top_k is const and safe to call concurrently once writes stop.
class VectorIndex {
public:
    virtual ~VectorIndex() = default;

    /// Throws std::invalid_argument on a duplicate id or a dimension mismatch.
    virtual void insert(std::uint64_t id, std::span<const float> vector) = 0;

    /// Results sorted by similarity, highest first; at most k of them.
    /// Throws NoEvidenceError on an empty index.
    virtual std::vector<Hit> top_k(std::span<const float> query, std::size_t k) const = 0;

    /// top_k for several queries at once (each of length dim()). Same results
    /// as calling top_k per query.
    virtual std::vector<std::vector<Hit>> top_k_batch(std::span<const float* const> queries, std::size_t k) const;

    virtual std::size_t size() const noexcept = 0;
    virtual std::size_t dim() const noexcept = 0;
    virtual Backend backend() const noexcept = 0;
    virtual std::size_t memory_bytes() const noexcept = 0;
};

/// Exact scan. Ties on similarity go to the smaller id.
class BruteForceIndex final : public VectorIndex {
public:
    explicit BruteForceIndex(std::size_t dim);

    void insert(std::uint64_t id, std::span<const float> vector) override;
    std::vector<Hit> top_k(std::span<const float> query, std::size_t k) const override;
    /// Scans the rows once per block of queries instead of once per query.
    std::vector<std::vector<Hit>> top_k_batch(std::span<const float* const> queries, std::size_t k) const override;

    /// Removes `id` if present; returns whether anything was removed.
    bool erase(std::uint64_t id);
    void reserve(std::size_t n);

    std::size_t size() const noexcept override { return ids_.size(); }
    std::size_t dim() const noexcept override { return dim_; }
    Backend backend() const noexcept override { return Backend::brute; }
    std::size_t memory_bytes() const noexcept override;

private:
    std::size_t dim_;
    std::vector<float> data_;
    std::vector<std::uint64_t> ids_;
    std::unordered_map<std::uint64_t, std::size_t> slot_of_;
};

/// Hierarchical navigable small-world graph (layered proximity graph with
/// greedy descent and a beam search on the bottom layer). Node levels are a
/// pure function of (level_seed, id), so builds are reproducible.
class HnswIndex final : public VectorIndex {
public:
    HnswIndex(std::size_t dim, HnswParams params = {});
    ~HnswIndex() override;

    void insert(std::uint64_t id, std::span<const float> vector) override;
    std::vector<Hit> top_k(std::span<const float> query, std::size_t k) const override;
    std::vector<Hit> top_k(std::span<const float> query, std::size_t k, std::size_t ef) const;

    void reserve(std::size_t n);

    std::size_t size() const noexcept override;
    std::size_t dim() const noexcept override;
    Backend backend() const noexcept override { return Backend::hnsw; }
    std::size_t memory_bytes() const noexcept override;
    const HnswParams& params() const noexcept;
    int max_level() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::unique_ptr<VectorIndex> make_index(const IndexConfig& config);

/// |brute ∩ approx| / k, counting ids.
double recall_at_k(std::span<const std::uint64_t> exact_ids, std::span<const std::uint64_t> approx_ids, std::size_t k);

}  // namespace ocrr
