#include <algorithm>
#include <cmath>
#include <mutex>
#include <queue>
#include <stdexcept>
#include <string>

#include "ocrr/embedding.hpp"
#include "ocrr/index.hpp"
#include "ocrr/rng.hpp"

namespace ocrr {

namespace {

constexpr std::size_t kRowsPerChunk = 1u << 16;
constexpr int kMaxLevel = 31;
// Candidates this close to a kept neighbour add no new direction. Without it
// exact duplicates fill every slot and whole clusters drop out of the graph.
constexpr float kDuplicateDist = 1e-6f;

/// Fixed-width rows in 64k-row chunks, so growth never copies old rows.
template <typename T>
class ChunkedRows {
public:
    explicit ChunkedRows(std::size_t width) : width_(width) {}

    T* row(std::size_t i) noexcept { return chunks_[i / kRowsPerChunk].get() + (i % kRowsPerChunk) * width_; }
    const T* row(std::size_t i) const noexcept {
        return chunks_[i / kRowsPerChunk].get() + (i % kRowsPerChunk) * width_;
    }
    void ensure(std::size_t rows) {
        while (chunks_.size() * kRowsPerChunk < rows) {
            chunks_.push_back(std::make_unique<T[]>(kRowsPerChunk * width_));
        }
    }
    std::size_t bytes() const noexcept { return chunks_.size() * kRowsPerChunk * width_ * sizeof(T); }

private:
    std::size_t width_;
    std::vector<std::unique_ptr<T[]>> chunks_;
};

struct Candidate {
    float dist;
    std::uint32_t node;
};
struct FartherFirst {
    bool operator()(const Candidate& a, const Candidate& b) const { return a.dist < b.dist; }
};
struct CloserFirst {
    bool operator()(const Candidate& a, const Candidate& b) const { return a.dist > b.dist; }
};
using MaxHeap = std::priority_queue<Candidate, std::vector<Candidate>, FartherFirst>;
using MinHeap = std::priority_queue<Candidate, std::vector<Candidate>, CloserFirst>;

// Epoch-tagged visited set; reset is O(1) except on wrap-around.
struct VisitedSet {
    std::vector<std::uint16_t> tags;
    std::uint16_t epoch = 0;

    void reset(std::size_t n) {
        if (tags.size() < n) {
            tags.resize(n + n / 2, 0);
        }
        if (++epoch == 0) {
            std::fill(tags.begin(), tags.end(), 0);
            epoch = 1;
        }
    }
    bool test_and_set(std::uint32_t i) {
        if (tags[i] == epoch) {
            return true;
        }
        tags[i] = epoch;
        return false;
    }
};

}  // namespace

struct HnswIndex::Impl {
    std::size_t dim;
    HnswParams params;
    std::size_t max_m;
    std::size_t max_m0;
    double level_mult;

    ChunkedRows<float> vectors;
    ChunkedRows<std::uint32_t> links0;  // [count, n0, n1, ...]
    std::vector<std::vector<std::uint32_t>> upper_links;  // per node: levels 1..L, each [count, ...]
    std::vector<std::uint8_t> levels;
    std::vector<std::uint64_t> external_ids;
    std::unordered_map<std::uint64_t, std::uint32_t> internal_of;

    std::uint32_t entry = 0;
    int top_level = -1;

    mutable std::mutex pool_mutex;
    mutable std::vector<std::unique_ptr<VisitedSet>> pool;

    Impl(std::size_t d, HnswParams p)
        : dim(d),
          params(p),
          max_m(p.M),
          max_m0(2 * p.M),
          level_mult(1.0 / std::log(static_cast<double>(p.M))),
          vectors(d),
          links0(2 * p.M + 1) {}

    std::size_t count() const noexcept { return levels.size(); }

    float distance(const float* q, std::uint32_t node) const { return 1.0f - dot(q, vectors.row(node), dim); }
    float distance(std::uint32_t a, std::uint32_t b) const {
        return 1.0f - dot(vectors.row(a), vectors.row(b), dim);
    }

    std::uint32_t* links(std::uint32_t node, int level) {
        return level == 0 ? links0.row(node) : upper_links[node].data() + (level - 1) * (max_m + 1);
    }
    const std::uint32_t* links(std::uint32_t node, int level) const {
        return level == 0 ? links0.row(node) : upper_links[node].data() + (level - 1) * (max_m + 1);
    }

    int draw_level(std::uint64_t id) const {
        const std::uint64_t bits = splitmix64(params.level_seed ^ splitmix64(id));
        double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
        if (u <= 0.0) {
            u = 0x1.0p-53;
        }
        return std::min(kMaxLevel, static_cast<int>(-std::log(u) * level_mult));
    }

    std::unique_ptr<VisitedSet> acquire_visited() const {
        std::unique_ptr<VisitedSet> v;
        {
            std::lock_guard lock(pool_mutex);
            if (!pool.empty()) {
                v = std::move(pool.back());
                pool.pop_back();
            }
        }
        if (!v) {
            v = std::make_unique<VisitedSet>();
        }
        v->reset(count());
        return v;
    }
    void release_visited(std::unique_ptr<VisitedSet> v) const {
        std::lock_guard lock(pool_mutex);
        pool.push_back(std::move(v));
    }

    std::uint32_t greedy_descend(const float* q, std::uint32_t cur, int from_level, int to_level) const {
        float cur_dist = distance(q, cur);
        for (int level = from_level; level > to_level; --level) {
            bool changed = true;
            while (changed) {
                changed = false;
                const std::uint32_t* l = links(cur, level);
                for (std::uint32_t i = 1; i <= l[0]; ++i) {
                    const float d = distance(q, l[i]);
                    if (d < cur_dist) {
                        cur_dist = d;
                        cur = l[i];
                        changed = true;
                    }
                }
            }
        }
        return cur;
    }

    // Beam search on one layer. Returns up to `ef` closest found, farthest on top.
    MaxHeap search_layer(const float* q, std::uint32_t start, std::size_t ef, int level) const {
        auto visited = acquire_visited();
        MaxHeap top;
        MinHeap frontier;
        const float d0 = distance(q, start);
        top.push({d0, start});
        frontier.push({d0, start});
        visited->test_and_set(start);
        float bound = d0;
        while (!frontier.empty()) {
            const Candidate c = frontier.top();
            if (c.dist > bound && top.size() >= ef) {
                break;
            }
            frontier.pop();
            const std::uint32_t* l = links(c.node, level);
            for (std::uint32_t i = 1; i <= l[0]; ++i) {
                const std::uint32_t n = l[i];
                if (visited->test_and_set(n)) {
                    continue;
                }
                const float d = distance(q, n);
                if (top.size() < ef || d < bound) {
                    frontier.push({d, n});
                    top.push({d, n});
                    if (top.size() > ef) {
                        top.pop();
                    }
                    bound = top.top().dist;
                }
            }
        }
        release_visited(std::move(visited));
        return top;
    }

    // Keeps a candidate only if it is closer to the base point than to every
    // neighbour already kept (and is not a copy of one). Sorted closest first.
    std::vector<Candidate> select_neighbours(MaxHeap& candidates, std::size_t m) const {
        std::vector<Candidate> sorted;
        sorted.reserve(candidates.size());
        while (!candidates.empty()) {
            sorted.push_back(candidates.top());
            candidates.pop();
        }
        std::reverse(sorted.begin(), sorted.end());
        if (sorted.size() <= m) {
            return sorted;
        }
        std::vector<Candidate> kept;
        kept.reserve(m);
        for (const Candidate& c : sorted) {
            if (kept.size() >= m) {
                break;
            }
            bool good = true;
            for (const Candidate& s : kept) {
                const float d = distance(c.node, s.node);
                if (d < c.dist || d <= kDuplicateDist) {
                    good = false;
                    break;
                }
            }
            if (good) {
                kept.push_back(c);
            }
        }
        return kept;
    }

    std::uint32_t connect(std::uint32_t node, MaxHeap& candidates, int level) {
        const std::size_t cap = level == 0 ? max_m0 : max_m;
        const std::vector<Candidate> chosen = select_neighbours(candidates, params.M);
        std::uint32_t* own = links(node, level);
        own[0] = static_cast<std::uint32_t>(chosen.size());
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            own[i + 1] = chosen[i].node;
        }
        for (const Candidate& c : chosen) {
            std::uint32_t* theirs = links(c.node, level);
            if (theirs[0] < cap) {
                theirs[++theirs[0]] = node;
                continue;
            }
            MaxHeap pool_heap;
            pool_heap.push({c.dist, node});
            for (std::uint32_t i = 1; i <= theirs[0]; ++i) {
                pool_heap.push({distance(c.node, theirs[i]), theirs[i]});
            }
            const std::vector<Candidate> pruned = select_neighbours(pool_heap, cap);
            theirs[0] = static_cast<std::uint32_t>(pruned.size());
            for (std::size_t i = 0; i < pruned.size(); ++i) {
                theirs[i + 1] = pruned[i].node;
            }
        }
        return chosen.front().node;
    }
};

HnswIndex::HnswIndex(std::size_t dim, HnswParams params) {
    if (dim == 0) {
        throw std::invalid_argument("index dim must be positive");
    }
    if (params.M < 2 || params.ef_construction < 1 || params.ef_search < 1) {
        throw std::invalid_argument("HNSW needs M >= 2 and positive ef values");
    }
    impl_ = std::make_unique<Impl>(dim, params);
}

HnswIndex::~HnswIndex() = default;

void HnswIndex::reserve(std::size_t n) {
    impl_->vectors.ensure(n);
    impl_->links0.ensure(n);
    impl_->levels.reserve(n);
    impl_->upper_links.reserve(n);
    impl_->external_ids.reserve(n);
    impl_->internal_of.reserve(n);
}

void HnswIndex::insert(std::uint64_t id, std::span<const float> vector) {
    Impl& s = *impl_;
    if (vector.size() != s.dim) {
        throw std::invalid_argument("vector dim " + std::to_string(vector.size()) + " != index dim " +
                                    std::to_string(s.dim));
    }
    const auto node = static_cast<std::uint32_t>(s.count());
    if (!s.internal_of.emplace(id, node).second) {
        throw std::invalid_argument("duplicate id " + std::to_string(id));
    }
    const int level = s.draw_level(id);
    s.vectors.ensure(node + 1);
    s.links0.ensure(node + 1);
    std::copy(vector.begin(), vector.end(), s.vectors.row(node));
    s.links0.row(node)[0] = 0;
    s.upper_links.emplace_back(static_cast<std::size_t>(level) * (s.max_m + 1), 0u);
    s.levels.push_back(static_cast<std::uint8_t>(level));
    s.external_ids.push_back(id);

    if (s.top_level < 0) {
        s.entry = node;
        s.top_level = level;
        return;
    }
    const float* q = s.vectors.row(node);
    std::uint32_t cur = s.greedy_descend(q, s.entry, s.top_level, level);
    for (int l = std::min(level, s.top_level); l >= 0; --l) {
        MaxHeap found = s.search_layer(q, cur, s.params.ef_construction, l);
        cur = s.connect(node, found, l);
    }
    if (level > s.top_level) {
        s.entry = node;
        s.top_level = level;
    }
}

std::vector<Hit> HnswIndex::top_k(std::span<const float> query, std::size_t k) const {
    return top_k(query, k, impl_->params.ef_search);
}

std::vector<Hit> HnswIndex::top_k(std::span<const float> query, std::size_t k, std::size_t ef) const {
    const Impl& s = *impl_;
    if (s.count() == 0) {
        throw NoEvidenceError("top_k on an empty index");
    }
    if (query.size() != s.dim) {
        throw std::invalid_argument("query dim mismatch");
    }
    const std::uint32_t start = s.greedy_descend(query.data(), s.entry, s.top_level, 0);
    MaxHeap found = s.search_layer(query.data(), start, std::max(ef, k), 0);
    while (found.size() > k) {
        found.pop();
    }
    std::vector<Hit> out;
    out.reserve(found.size());
    while (!found.empty()) {
        const Candidate c = found.top();
        found.pop();
        out.push_back({s.external_ids[c.node], dot(query.data(), s.vectors.row(c.node), s.dim)});
    }
    std::sort(out.begin(), out.end(), [](const Hit& a, const Hit& b) {
        return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
    });
    return out;
}

std::size_t HnswIndex::size() const noexcept { return impl_->count(); }
std::size_t HnswIndex::dim() const noexcept { return impl_->dim; }
const HnswParams& HnswIndex::params() const noexcept { return impl_->params; }
int HnswIndex::max_level() const noexcept { return impl_->top_level; }

std::size_t HnswIndex::memory_bytes() const noexcept {
    std::size_t upper = 0;
    for (const auto& v : impl_->upper_links) {
        upper += v.capacity() * sizeof(std::uint32_t) + sizeof(v);
    }
    return impl_->vectors.bytes() + impl_->links0.bytes() + upper + impl_->levels.capacity() +
           impl_->external_ids.capacity() * sizeof(std::uint64_t) + impl_->internal_of.size() * 32;
}

}  // namespace ocrr
