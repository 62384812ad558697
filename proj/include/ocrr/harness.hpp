#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocrr/corpus.hpp"
#include "ocrr/systems.hpp"

namespace ocrr {

enum class PolicyKind { oracle, random_p };

struct CorrectionPolicy {
    PolicyKind kind = PolicyKind::oracle;
    double p = 1.0;
    std::uint64_t rng_seed = 0;

    static CorrectionPolicy oracle();
    static CorrectionPolicy random(double p, std::uint64_t rng_seed);
    /// "oracle", "random_50", "random_10" (any random_<percent>).
    static CorrectionPolicy parse(std::string_view name, std::uint64_t rng_seed = 0);

    std::string name() const;
    void validate() const;
};

struct CheckpointRecord {
    std::uint64_t step = 0;
    std::uint64_t corrections = 0;
    double novel_acc = 0.0;
    double original_acc = 0.0;
    std::uint64_t footprint_bytes = 0;

    bool operator==(const CheckpointRecord&) const = default;
};

/// Fraction of `examples` the system labels correctly. A NoEvidenceError
/// counts as wrong. An empty set scores 0.
double evaluate_accuracy(const SystemUnderTest& system, std::span<const LabeledExample> examples);

/// Streams split.stream_set through the system. Checkpoints are taken before
/// the first item (step 0), after every `batch` items, and at stream end.
std::vector<CheckpointRecord> run_stream(SystemUnderTest& system, const HeldOutSplit& split,
                                         const CorrectionPolicy& policy, std::size_t batch = 50);

/// Corrections at the first record with novel_acc >= threshold, nullopt for "never".
std::optional<std::uint64_t> corrections_to_threshold(std::span<const CheckpointRecord> records, double threshold);

/// Median with nullopt ordered as +infinity; the lower middle for even counts.
std::optional<std::uint64_t> median_corrections(std::vector<std::optional<std::uint64_t>> values);

struct RunSummary {
    std::vector<double> final_novel;    // per seed
    std::vector<double> final_original;
    std::vector<std::optional<std::uint64_t>> to_10pct;
    std::vector<std::optional<std::uint64_t>> to_70pct;
    double final_novel_mean = 0.0;
    double final_novel_std = 0.0;
    double final_orig_mean = 0.0;
    double final_orig_std = 0.0;
    std::optional<std::uint64_t> to_10pct_median;
    std::optional<std::uint64_t> to_70pct_median;
    double footprint_bytes = 0.0;  // mean of final footprints
};

/// Population mean/std over seeds; one record list per seed.
RunSummary aggregate(std::span<const std::vector<CheckpointRecord>> per_seed);

// --- CSV ---

inline constexpr std::string_view kCheckpointCsvHeader =
    "dataset,system,policy,seed,step,corrections,novel_acc,original_acc,footprint_bytes";
inline constexpr std::string_view kSummaryCsvHeader =
    "dataset,system,policy,final_novel_mean,final_novel_std,final_orig_mean,final_orig_std,to_10pct,to_70pct,"
    "footprint_bytes";

struct CheckpointRow {
    std::string dataset;
    std::string system;
    std::string policy;
    std::uint64_t seed = 0;
    CheckpointRecord record;
};

struct SummaryRow {
    std::string dataset;
    std::string system;
    std::string policy;
    RunSummary summary;
};

std::string format_checkpoint_row(const CheckpointRow& row);
std::string format_summary_row(const SummaryRow& row);
std::string format_corrections(const std::optional<std::uint64_t>& v);

/// Strict parse of a per-checkpoint CSV (header required). Throws ConfigError
/// naming the line on any schema violation.
std::vector<CheckpointRow> parse_checkpoint_csv(std::string_view text);
std::vector<CheckpointRow> read_checkpoint_csv(const std::filesystem::path& path);

struct ParsedSummaryRow {
    std::string dataset, system, policy;
    double final_novel_mean, final_novel_std, final_orig_mean, final_orig_std;
    std::optional<std::uint64_t> to_10pct, to_70pct;
    double footprint_bytes;
};
std::vector<ParsedSummaryRow> parse_summary_csv(std::string_view text);

/// Groups rows by (dataset, system, policy) in first-appearance order and
/// aggregates each group over its seeds.
std::vector<SummaryRow> aggregate_rows(std::span<const CheckpointRow> rows);

}  // namespace ocrr
