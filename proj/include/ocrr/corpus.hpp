#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ocrr/embedding.hpp"
#include "ocrr/errors.hpp"
#include "ocrr/rng.hpp"

namespace ocrr {

enum class Split : std::uint8_t { train = 0, test = 1 };

struct LabeledExample {
    EmbeddingVector embedding;
    ClassLabel label;
    Split split = Split::train;
};

/// Held-out-class partition of a corpus. Class sets are kept sorted.
struct HeldOutSplit {
    std::vector<ClassLabel> known_classes;
    std::vector<ClassLabel> held_out_classes;
    std::vector<LabeledExample> seed_set;       // train, known classes, corpus order
    std::vector<LabeledExample> stream_set;     // train, held-out classes, shuffled
    std::vector<LabeledExample> novel_test;     // test, held-out classes
    std::vector<LabeledExample> original_test;  // test, known classes

    std::vector<ClassLabel> all_classes() const;
};

struct SyntheticSpec {
    std::size_t dim = 384;
    std::size_t num_classes = 100;
    std::uint64_t centroid_seed = 0;
    double noise_sigma = 0.05;  // per-component Gaussian std before renormalization
    std::size_t samples_per_class = 100;
    std::size_t test_per_class = 0;  // extra Split::test examples per class

    void validate() const;
};

// --- embedding file (binary, little-endian) ---
//   "OCRREMB1" | u32 dim | u64 count | count x { u32 len | label | u8 split | dim x f32 }

inline constexpr char kEmbeddingMagic[8] = {'O', 'C', 'R', 'R', 'E', 'M', 'B', '1'};

std::vector<LabeledExample> load_embedding_file(const std::filesystem::path& path);
void save_embedding_file(const std::filesystem::path& path, std::span<const LabeledExample> examples);

/// Class names in first-appearance order, one per line.
void write_class_manifest(const std::filesystem::path& path, std::span<const LabeledExample> examples);
std::filesystem::path manifest_path_for(const std::filesystem::path& embedding_path);

/// Parses `label,split,f1,f2,...` rows (split is "train" or "test"). A header
/// row whose second field is not a split name is skipped.
std::vector<LabeledExample> read_embedding_csv(const std::filesystem::path& path);

HeldOutSplit split_held_out(std::span<const LabeledExample> corpus, std::size_t held_out, std::uint64_t seed);

// --- synthetic class-incremental corpora ---

std::string synthetic_label(std::size_t class_index);

/// Draws class centroids once and then samples noisy unit vectors around them.
class SyntheticGenerator {
public:
    explicit SyntheticGenerator(const SyntheticSpec& spec);

    const SyntheticSpec& spec() const noexcept { return spec_; }
    std::span<const float> centroid(std::size_t class_index) const;

    /// Writes one normalized sample of `class_index` into `out` (length dim).
    void sample_into(std::size_t class_index, Rng& rng, std::span<float> out) const;
    EmbeddingVector sample(std::size_t class_index, Rng& rng) const;

private:
    SyntheticSpec spec_;
    std::vector<float> centroids_;
};

/// Class-major corpus: for each class, samples_per_class train examples then
/// test_per_class test examples.
std::vector<LabeledExample> generate_synthetic(const SyntheticSpec& spec, std::uint64_t sample_seed);

}  // namespace ocrr
