#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ocrr {

/// Fixed-dimension unit-norm float vector. Construction normalizes once, so
/// cosine similarity between two embeddings is their dot product.
///
/// Normalization is idempotent: a vector whose squared norm is already within
/// 1e-6 of one is stored bit-for-bit, so save/load cycles are exact.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    /// Throws std::invalid_argument on a non-finite component or zero norm.
    static EmbeddingVector normalized(std::vector<float> components);
    /// Keeps the components exactly as given, without checks. For replaying
    /// persisted records, where the stored bits are what gets verified.
    static EmbeddingVector from_raw(std::vector<float> components) { return EmbeddingVector(std::move(components)); }

    std::span<const float> components() const noexcept { return values_; }
    const float* data() const noexcept { return values_.data(); }
    std::size_t dim() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

private:
    explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {}

    std::vector<float> values_;
};

/// Normalizes in place with the same idempotence rule as EmbeddingVector.
/// Returns false (leaving `v` untouched) when `v` has zero norm or a non-finite entry.
bool normalize_in_place(std::span<float> v);

inline float dot(const float* a, const float* b, std::size_t n) {
    // Wide lane-wise accumulators keep several FMA chains in flight.
    constexpr std::size_t kLanes = 64;
    float acc[kLanes] = {};
    const std::size_t body = n - n % kLanes;
    for (std::size_t i = 0; i < body; i += kLanes) {
#pragma omp simd
        for (std::size_t j = 0; j < kLanes; ++j) {
            acc[j] += a[i + j] * b[i + j];
        }
    }
    float s = 0.0f;
    for (std::size_t j = body; j < n; ++j) {
        s += a[j] * b[j];
    }
#pragma omp simd reduction(+ : s)
    for (std::size_t j = 0; j < kLanes; ++j) {
        s += acc[j];
    }
    return s;
}

inline float dot(std::span<const float> a, std::span<const float> b) {
    return dot(a.data(), b.data(), a.size());
}

}  // namespace ocrr
