// ocrr: command-line front end for sweeps, the scale study and file utilities.
//
// Exit codes: 0 success, 1 validation failure, 2 configuration error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ocrr/corpus.hpp"
#include "ocrr/errors.hpp"
#include "ocrr/ledger.hpp"
#include "ocrr/scale_study.hpp"
#include "ocrr/sweep.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kConfig = 2;

fs::path default_out_dir() {
    if (const char* env = std::getenv("OCRR_OUT_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return "results";
}

void progress(const std::string& msg) {
    std::cerr << msg << '\n';
}

void print_summary(const std::vector<ocrr::SummaryRow>& rows) {
    std::printf("%-14s %-24s %-10s %15s %15s %7s %7s %14s\n", "dataset", "system", "policy", "final_novel",
                "final_orig", "->10%", "->70%", "footprint_B");
    for (const auto& r : rows) {
        const auto& s = r.summary;
        std::printf("%-14s %-24s %-10s %7.3f+-%.3f  %7.3f+-%.3f  %7s %7s %14.0f\n", r.dataset.c_str(),
                    r.system.c_str(), r.policy.c_str(), s.final_novel_mean, s.final_novel_std, s.final_orig_mean,
                    s.final_orig_std, ocrr::format_corrections(s.to_10pct_median).c_str(),
                    ocrr::format_corrections(s.to_70pct_median).c_str(), s.footprint_bytes);
    }
}

struct SweepArgs {
    std::string config;
    std::vector<std::uint64_t> seeds;
    std::string out;
    std::size_t jobs = 1;
    bool force = false;
};

void add_sweep_options(CLI::App* cmd, SweepArgs& a) {
    cmd->add_option("--config", a.config, "Sweep config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seeds", a.seeds, "Seeds (overrides the config)");
    cmd->add_option("--out", a.out, "Output directory (default $OCRR_OUT_DIR or ./results)");
    cmd->add_option("--jobs", a.jobs, "Cells to run in parallel")->check(CLI::PositiveNumber);
    cmd->add_flag("--force", a.force, "Recompute cells that already have results");
}

int run_sweep_command(const SweepArgs& a, bool storage) {
    auto config = ocrr::load_sweep_config(a.config);
    if (!a.seeds.empty()) {
        config.seeds = a.seeds;
    }
    ocrr::SweepOptions opts;
    opts.out_dir = a.out.empty() ? default_out_dir() : fs::path(a.out);
    opts.jobs = a.jobs;
    opts.force = a.force;
    opts.progress = progress;
    const auto result = storage ? ocrr::run_storage_sweep(config, opts) : ocrr::run_sweep(config, opts);
    print_summary(result.summary);
    std::cerr << "wrote " << result.results_csv.string() << " and " << result.summary_csv.string() << " ("
              << result.cells_run << " cell(s) run, " << result.cells_skipped << " reused)\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online correction recovery benchmark"};
    app.require_subcommand(1, 1);

    SweepArgs full_args;
    auto* full = app.add_subcommand("full-sweep", "Run every dataset x system x policy x seed cell");
    add_sweep_options(full, full_args);

    SweepArgs storage_args;
    auto* storage = app.add_subcommand("storage-sweep", "Bounded reservoir/FIFO variants under the oracle policy");
    add_sweep_options(storage, storage_args);

    std::vector<std::size_t> scales{10'000, 100'000, 1'000'000};
    ocrr::ScaleStudyConfig scfg;
    bool include_10m = false;
    std::string scale_out;
    bool scale_force = false;
    auto* scale = app.add_subcommand("scale-study", "Brute force vs HNSW on synthetic corpora of growing size");
    scale->add_option("--scales", scales, "Corpus sizes, ascending");
    scale->add_option("--dim", scfg.spec.dim, "Embedding dimension")->check(CLI::PositiveNumber);
    scale->add_option("--classes", scfg.spec.num_classes, "Number of classes")->check(CLI::Range(2, 1 << 30));
    scale->add_option("--noise", scfg.spec.noise_sigma, "Per-component noise sigma")->check(CLI::NonNegativeNumber);
    scale->add_option("--queries", scfg.test_queries, "Test queries")->check(CLI::PositiveNumber);
    scale->add_option("--centroid-seed", scfg.spec.centroid_seed, "Centroid seed");
    scale->add_option("--sample-seed", scfg.sample_seed, "Corpus/query sample seed");
    scale->add_option("--ef-search", scfg.hnsw.ef_search, "HNSW search beam");
    scale->add_flag("--include-10m", include_10m, "Also run the 10M scale");
    scale->add_option("--out", scale_out, "Output directory (default $OCRR_OUT_DIR or ./results)");
    scale->add_flag("--force", scale_force, "Recompute even if the CSV exists");

    std::string ledger_path;
    auto* verify = app.add_subcommand("verify-ledger", "Replay a persisted ledger and check its hash chain");
    verify->add_option("--path", ledger_path, "Ledger file")->required();

    std::string csv_in, emb_out;
    auto* convert = app.add_subcommand("convert-embeddings", "CSV (label,split,floats...) to an embedding file");
    convert->add_option("--csv", csv_in, "Input CSV")->required()->check(CLI::ExistingFile);
    convert->add_option("--out", emb_out, "Output embedding file")->required();

    ocrr::SyntheticSpec gen_spec;
    std::uint64_t gen_sample_seed = 0;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic class-incremental corpus");
    gen->add_option("--dim", gen_spec.dim, "Embedding dimension")->check(CLI::PositiveNumber);
    gen->add_option("--classes", gen_spec.num_classes, "Number of classes");
    gen->add_option("--samples-per-class", gen_spec.samples_per_class, "Train examples per class");
    gen->add_option("--test-per-class", gen_spec.test_per_class, "Test examples per class");
    gen->add_option("--noise", gen_spec.noise_sigma, "Per-component noise sigma");
    gen->add_option("--centroid-seed", gen_spec.centroid_seed, "Centroid seed");
    gen->add_option("--sample-seed", gen_sample_seed, "Sample seed");
    gen->add_option("--out", gen_out, "Output embedding file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*full) {
            return run_sweep_command(full_args, false);
        }
        if (*storage) {
            return run_sweep_command(storage_args, true);
        }
        if (*scale) {
            if (include_10m) {
                scales.push_back(10'000'000);
            }
            for (std::size_t i = 1; i < scales.size(); ++i) {
                if (scales[i] <= scales[i - 1]) {
                    throw ocrr::ConfigError("--scales must be strictly ascending");
                }
            }
            scfg.scales = scales;
            scfg.progress = progress;
            const fs::path dir = scale_out.empty() ? default_out_dir() : fs::path(scale_out);
            const fs::path csv = dir / "ocrr_scale_study.csv";
            if (fs::exists(csv) && !scale_force) {
                std::cerr << csv.string() << " exists; use --force to recompute\n";
                return kOk;
            }
            const auto rows = ocrr::run_scale_study(scfg);
            ocrr::write_scale_study_csv(csv, rows);
            nlohmann::json meta{{"synthetic", ocrr::to_json(scfg.spec)},
                                {"test_queries", scfg.test_queries},
                                {"sample_seed", scfg.sample_seed},
                                {"k", scfg.vote.k},
                                {"margin", scfg.vote.margin},
                                {"M", scfg.hnsw.M},
                                {"ef_construction", scfg.hnsw.ef_construction},
                                {"ef_search", scfg.hnsw.ef_search},
                                {"skipped", nlohmann::json::object()}};
            for (const auto& r : rows) {
                if (r.skipped) meta["skipped"][std::to_string(r.scale)] = r.skip_reason;
            }
            std::ofstream(dir / "ocrr_scale_study_metadata.json") << meta.dump(2) << '\n';
            std::cout << ocrr::kScaleStudyCsvHeader << '\n';
            for (const auto& r : rows) {
                std::cout << ocrr::format_scale_row(r) << '\n';
            }
            return kOk;
        }
        if (*verify) {
            if (!fs::exists(ledger_path)) {
                std::cerr << "no such file: " << ledger_path << '\n';
                return kConfig;
            }
            const auto result = ocrr::verify_ledger_file(ledger_path);
            if (result.ok) {
                std::cout << "ok\n";
                return kOk;
            }
            std::cout << "first_bad_index " << result.first_bad_index << '\n';
            return kValidation;
        }
        if (*convert) {
            const auto examples = ocrr::read_embedding_csv(csv_in);
            ocrr::save_embedding_file(emb_out, examples);
            ocrr::write_class_manifest(ocrr::manifest_path_for(emb_out), examples);
            std::cerr << "wrote " << examples.size() << " record(s) to " << emb_out << '\n';
            return kOk;
        }
        if (*gen) {
            gen_spec.validate();
            const auto examples = ocrr::generate_synthetic(gen_spec, gen_sample_seed);
            ocrr::save_embedding_file(gen_out, examples);
            ocrr::write_class_manifest(ocrr::manifest_path_for(gen_out), examples);
            std::cerr << "wrote " << examples.size() << " record(s) to " << gen_out << '\n';
            return kOk;
        }
    } catch (const ocrr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const ocrr::LoadError& e) {
        std::cerr << "load error: " << e.what() << '\n';
        return kValidation;
    } catch (const ocrr::InvalidSplitError& e) {
        std::cerr << "invalid split: " << e.what() << '\n';
        return kConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    }
    return kOk;
}
