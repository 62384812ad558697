#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ocrr/corpus.hpp"
#include "ocrr/index.hpp"
#include "ocrr/vote.hpp"

namespace ocrr {

struct ScaleStudyRow {
    std::size_t scale = 0;
    double brute_acc = 0.0;
    double hnsw_acc = 0.0;
    double gap = 0.0;  // brute_acc - hnsw_acc
    double recall_at_5 = 0.0;
    double agreement = 0.0;
    double hnsw_ms_per_query = 0.0;
    bool skipped = false;
    std::string skip_reason;
};

struct ScaleStudyConfig {
    std::vector<std::size_t> scales{10'000, 100'000, 1'000'000};
    SyntheticSpec spec;  // samples_per_class is ignored; each scale sets it
    VoteConfig vote;
    HnswParams hnsw;
    std::size_t test_queries = 1000;
    std::uint64_t sample_seed = 0;
    /// Skip a scale whose estimated footprint exceeds this; 0 = read MemAvailable.
    std::size_t memory_limit_bytes = 0;
    std::function<void(const std::string&)> progress;
};

/// Rough resident size of both indices for `scale` vectors.
std::size_t scale_study_memory_estimate(std::size_t scale, std::size_t dim, const HnswParams& hnsw);

/// For each scale: one synthetic corpus (classes interleaved) loaded into a
/// brute-force and an HNSW index, then the same query set classified through
/// both with the same vote rule. Scales that do not fit in memory produce a
/// skipped row and the study continues.
std::vector<ScaleStudyRow> run_scale_study(const ScaleStudyConfig& config);

inline constexpr const char* kScaleStudyCsvHeader = "scale,brute_acc,hnsw_acc,gap,recall_at_5,agreement,hnsw_ms_per_query";

std::string format_scale_row(const ScaleStudyRow& row);
void write_scale_study_csv(const std::filesystem::path& path, const std::vector<ScaleStudyRow>& rows);

}  // namespace ocrr
