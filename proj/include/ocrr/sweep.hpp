#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ocrr/corpus.hpp"
#include "ocrr/harness.hpp"
#include "ocrr/systems.hpp"

namespace ocrr {

struct DatasetSpec {
    std::string name;
    std::optional<std::filesystem::path> path;  // embedding file
    std::optional<SyntheticSpec> synthetic;
    std::uint64_t sample_seed = 0;                // synthetic only
};

/// Declarative sweep description, read from JSON:
///
///   {
///     "datasets": [{"name": "synth", "synthetic": {"num_classes": 100, "samples_per_class": 100,
///                                                  "test_per_class": 20, "noise_sigma": 0.05}},
///                  {"name": "banking77", "path": "banking77.emb"}],
///     "systems":  ["substrate", {"system": "ewc", "name": "ewc_l100", "lambda_ewc": 100}],
///     "policies": ["oracle", "random_50", "random_10"],
///     "seeds": [0, 1, 2], "batch": 50, "held_out": 10
///   }
///
/// Relative paths are resolved against `base_dir`.
struct SweepConfig {
    std::vector<DatasetSpec> datasets;
    std::vector<SystemSpec> systems;
    std::vector<std::string> policies{"oracle", "random_50", "random_10"};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t batch = 50;
    std::size_t held_out = 10;
};

SweepConfig parse_sweep_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
SweepConfig load_sweep_config(const std::filesystem::path& path);

/// Applies {"k": 5, "margin": 0.05, "lambda_ewc": 1000, ...} on top of `hp`.
/// Throws ConfigError on unknown keys or bad values.
void apply_overrides(Hyperparameters& hp, const nlohmann::json& overrides);
nlohmann::json to_json(const Hyperparameters& hp);
nlohmann::json to_json(const SyntheticSpec& spec);

/// Same datasets/seeds/batch/H; systems replaced by the bounded variants at
/// `budgets` x {reservoir, fifo} plus the unbounded substrate, oracle policy only.
SweepConfig storage_sweep_config(SweepConfig base, const std::vector<std::size_t>& budgets = {100, 500, 1000, 5000});

struct SweepOptions {
    std::filesystem::path out_dir;
    std::string prefix = "ocrr_full_sweep";  // output file stem
    std::size_t jobs = 1;
    bool force = false;  // recompute cells that already exist
    std::function<void(const std::string&)> progress;
};

struct SweepResult {
    std::filesystem::path results_csv;
    std::filesystem::path summary_csv;
    std::filesystem::path metadata_json;
    std::vector<SummaryRow> summary;
    std::size_t cells_run = 0;
    std::size_t cells_skipped = 0;
};

/// Runs every (dataset, system, policy, seed) cell. Each finished cell is
/// written under out_dir/cells/ and skipped on a later run, so an interrupted
/// sweep resumes where it stopped. The final CSVs are assembled from the cell
/// files in config order.
SweepResult run_sweep(const SweepConfig& config, const SweepOptions& options);
SweepResult run_storage_sweep(const SweepConfig& config, SweepOptions options);

/// Loads (or generates) a dataset's corpus.
std::vector<LabeledExample> load_dataset(const DatasetSpec& spec);

}  // namespace ocrr
