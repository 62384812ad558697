#include "ocrr/sweep.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "ocrr/rng.hpp"

namespace ocrr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_name(const std::string& what, const std::string& name) {
    if (name.empty()) {
        throw ConfigError(what + " name is empty");
    }
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '-' || c == '.';
        if (!ok) {
            throw ConfigError(what + " name '" + name + "' may only use letters, digits, '_', '-' and '.'");
        }
    }
}

template <typename T>
T get_as(const json& j, const char* key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("bad value for '") + key + "': " + j.dump());
    }
}

std::size_t get_count(const json& j, const char* key) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
        throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
    }
    return j.get<std::size_t>();
}

SyntheticSpec parse_synthetic(const json& j) {
    if (!j.is_object()) {
        throw ConfigError("'synthetic' must be an object");
    }
    SyntheticSpec spec;
    for (const auto& [key, v] : j.items()) {
        if (key == "dim") spec.dim = get_count(v, "dim");
        else if (key == "num_classes") spec.num_classes = get_count(v, "num_classes");
        else if (key == "centroid_seed") spec.centroid_seed = get_as<std::uint64_t>(v, "centroid_seed");
        else if (key == "noise_sigma") spec.noise_sigma = get_as<double>(v, "noise_sigma");
        else if (key == "samples_per_class") spec.samples_per_class = get_count(v, "samples_per_class");
        else if (key == "test_per_class") spec.test_per_class = get_count(v, "test_per_class");
        else throw ConfigError("unknown synthetic key '" + key + "'");
    }
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return spec;
}

SystemSpec parse_system(const json& j) {
    if (j.is_string()) {
        return system_spec_from_name(j.get<std::string>());
    }
    if (!j.is_object() || !j.contains("system") || !j["system"].is_string()) {
        throw ConfigError("a system entry must be a name or an object with a \"system\" field");
    }
    SystemSpec spec = system_spec_from_name(j["system"].get<std::string>());
    json overrides = j;
    overrides.erase("system");
    if (overrides.contains("name")) {
        spec.name = get_as<std::string>(overrides["name"], "name");
        overrides.erase("name");
    }
    apply_overrides(spec.hp, overrides);
    return spec;
}

json dataset_json(const DatasetSpec& d) {
    json j{{"name", d.name}};
    if (d.path) {
        j["path"] = d.path->string();
    } else {
        j["synthetic"] = to_json(*d.synthetic);
        j["sample_seed"] = d.sample_seed;
    }
    return j;
}

json system_json(const SystemSpec& s) {
    return {{"name", s.name}, {"kind", to_string(s.kind)}, {"hyperparameters", to_json(s.hp)}};
}

struct Cell {
    std::size_t dataset;
    std::size_t system;
    std::size_t policy;
    std::size_t seed;
    fs::path file;
};

void write_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write " + tmp.string());
        }
        out << content;
        out.flush();
        if (!out) {
            throw Error("write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

std::string read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void apply_overrides(Hyperparameters& hp, const json& overrides) {
    if (!overrides.is_object()) {
        throw ConfigError("hyperparameter overrides must be an object");
    }
    for (const auto& [key, v] : overrides.items()) {
        const char* k = key.c_str();
        if (key == "k") hp.vote.k = get_count(v, k);
        else if (key == "margin") hp.vote.margin = get_as<double>(v, k);
        else if (key == "variant") hp.vote.variant = parse_vote_variant(get_as<std::string>(v, k));
        else if (key == "backend") hp.index.backend = parse_backend(get_as<std::string>(v, k));
        else if (key == "hnsw_M") hp.index.hnsw.M = get_count(v, k);
        else if (key == "ef_construction") hp.index.hnsw.ef_construction = get_count(v, k);
        else if (key == "ef_search") hp.index.hnsw.ef_search = get_count(v, k);
        else if (key == "seed_epochs") hp.seed_epochs = get_count(v, k);
        else if (key == "seed_lr") hp.seed_lr = get_as<float>(v, k);
        else if (key == "online_lr") hp.online_lr = get_as<float>(v, k);
        else if (key == "lambda_ewc") hp.lambda_ewc = get_as<float>(v, k);
        else if (key == "fisher_samples") hp.fisher_samples = get_count(v, k);
        else if (key == "agem_memory") hp.agem_memory = get_count(v, k);
        else if (key == "agem_batch") hp.agem_batch = get_count(v, k);
        else if (key == "lambda_distill") hp.lambda_distill = get_as<float>(v, k);
        else if (key == "temperature") hp.temperature = get_as<float>(v, k);
        else if (key == "lambda_knn") hp.hybrid.lambda_knn = get_as<double>(v, k);
        else if (key == "tau") hp.hybrid.tau = get_as<double>(v, k);
        else if (key == "knn_k") hp.hybrid.k = get_count(v, k);
        else if (key == "knn_score") {
            const auto s = get_as<std::string>(v, k);
            if (s == "max") hp.hybrid.score = KnnScore::max_similarity;
            else if (s == "sum") hp.hybrid.score = KnnScore::sum_similarity;
            else throw ConfigError("knn_score must be \"max\" or \"sum\"");
        } else if (key == "ovr_lr") hp.ovr_lr = get_as<float>(v, k);
        else if (key == "ovr_seed_subsample") hp.ovr_seed_subsample = get_count(v, k);
        else if (key == "ovr_seed_passes") hp.ovr_seed_passes = get_count(v, k);
        else if (key == "budget") hp.budget = get_count(v, k);
        else if (key == "eviction") hp.eviction = parse_eviction(get_as<std::string>(v, k));
        else if (key == "record_chain") hp.record_chain = get_as<bool>(v, k);
        else throw ConfigError("unknown hyperparameter '" + key + "'");
    }
    try {
        hp.vote.validate();
        hp.hybrid.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (hp.budget < 1) throw ConfigError("budget must be >= 1");
    if (hp.temperature <= 0.0f) throw ConfigError("temperature must be > 0");
    if (hp.index.hnsw.M < 2) throw ConfigError("hnsw_M must be >= 2");
}

json to_json(const Hyperparameters& hp) {
    return {
        {"k", hp.vote.k},
        {"margin", hp.vote.margin},
        {"variant", to_string(hp.vote.variant)},
        {"backend", to_string(hp.index.backend)},
        {"hnsw_M", hp.index.hnsw.M},
        {"ef_construction", hp.index.hnsw.ef_construction},
        {"ef_search", hp.index.hnsw.ef_search},
        {"seed_epochs", hp.seed_epochs},
        {"seed_lr", hp.seed_lr},
        {"online_lr", hp.online_lr},
        {"lambda_ewc", hp.lambda_ewc},
        {"fisher_samples", hp.fisher_samples},
        {"agem_memory", hp.agem_memory},
        {"agem_batch", hp.agem_batch},
        {"lambda_distill", hp.lambda_distill},
        {"temperature", hp.temperature},
        {"lambda_knn", hp.hybrid.lambda_knn},
        {"tau", hp.hybrid.tau},
        {"knn_k", hp.hybrid.k},
        {"knn_score", hp.hybrid.score == KnnScore::max_similarity ? "max" : "sum"},
        {"ovr_lr", hp.ovr_lr},
        {"ovr_seed_subsample", hp.ovr_seed_subsample},
        {"ovr_seed_passes", hp.ovr_seed_passes},
        {"budget", hp.budget},
        {"eviction", to_string(hp.eviction)},
        {"record_chain", hp.record_chain},
    };
}

json to_json(const SyntheticSpec& spec) {
    return {{"dim", spec.dim},
            {"num_classes", spec.num_classes},
            {"centroid_seed", spec.centroid_seed},
            {"noise_sigma", spec.noise_sigma},
            {"samples_per_class", spec.samples_per_class},
            {"test_per_class", spec.test_per_class}};
}

SweepConfig parse_sweep_config(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) {
        throw ConfigError("sweep config must be a JSON object");
    }
    SweepConfig cfg;
    for (const auto& [key, v] : j.items()) {
        if (key == "datasets") {
            if (!v.is_array()) throw ConfigError("'datasets' must be an array");
            for (const auto& d : v) {
                if (!d.is_object()) throw ConfigError("each dataset must be an object");
                DatasetSpec ds;
                for (const auto& [dk, dv] : d.items()) {
                    if (dk == "name") ds.name = get_as<std::string>(dv, "name");
                    else if (dk == "path") {
                        fs::path p = get_as<std::string>(dv, "path");
                        ds.path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
                    } else if (dk == "synthetic") ds.synthetic = parse_synthetic(dv);
                    else if (dk == "sample_seed") ds.sample_seed = get_as<std::uint64_t>(dv, "sample_seed");
                    else throw ConfigError("unknown dataset key '" + dk + "'");
                }
                if (ds.path.has_value() == ds.synthetic.has_value()) {
                    throw ConfigError("dataset '" + ds.name + "' needs exactly one of \"path\" or \"synthetic\"");
                }
                if (ds.name.empty() && ds.path) ds.name = ds.path->stem().string();
                check_name("dataset", ds.name);
                cfg.datasets.push_back(std::move(ds));
            }
        } else if (key == "systems") {
            if (!v.is_array()) throw ConfigError("'systems' must be an array");
            for (const auto& s : v) {
                cfg.systems.push_back(parse_system(s));
                check_name("system", cfg.systems.back().name);
            }
        } else if (key == "policies") {
            cfg.policies = get_as<std::vector<std::string>>(v, "policies");
            for (const auto& p : cfg.policies) CorrectionPolicy::parse(p);
        } else if (key == "seeds") {
            cfg.seeds = get_as<std::vector<std::uint64_t>>(v, "seeds");
        } else if (key == "batch") {
            cfg.batch = get_count(v, "batch");
        } else if (key == "held_out") {
            cfg.held_out = get_count(v, "held_out");
        } else {
            throw ConfigError("unknown sweep config key '" + key + "'");
        }
    }
    if (cfg.datasets.empty()) throw ConfigError("sweep config lists no datasets");
    if (cfg.systems.empty()) throw ConfigError("sweep config lists no systems");
    if (cfg.policies.empty()) throw ConfigError("sweep config lists no policies");
    if (cfg.seeds.empty()) throw ConfigError("sweep config lists no seeds");
    if (cfg.batch == 0) throw ConfigError("batch must be >= 1");
    return cfg;
}

SweepConfig load_sweep_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open sweep config " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("sweep config " + path.string() + ": " + e.what());
    }
    return parse_sweep_config(j, path.parent_path());
}

SweepConfig storage_sweep_config(SweepConfig base, const std::vector<std::size_t>& budgets) {
    base.systems.clear();
    for (auto ev : {Eviction::reservoir, Eviction::fifo}) {
        for (auto b : budgets) {
            base.systems.push_back(system_spec_from_name(std::string("bounded_") + to_string(ev) + "_" +
                                                         std::to_string(b)));
        }
    }
    base.systems.push_back(system_spec_from_name("substrate"));
    base.policies = {"oracle"};
    return base;
}

std::vector<LabeledExample> load_dataset(const DatasetSpec& spec) {
    if (spec.synthetic) {
        return generate_synthetic(*spec.synthetic, spec.sample_seed);
    }
    if (!fs::exists(*spec.path)) {
        throw ConfigError("embedding file not found: " + spec.path->string());
    }
    return load_embedding_file(*spec.path);
}

SweepResult run_sweep(const SweepConfig& config, const SweepOptions& options) {
    auto say = [&](const std::string& msg) {
        if (options.progress) options.progress(msg);
    };
    const fs::path cells_dir = options.out_dir / "cells";
    fs::create_directories(cells_dir);

    // Cells in output order: dataset, system, policy, seed.
    std::vector<Cell> cells;
    for (std::size_t d = 0; d < config.datasets.size(); ++d) {
        for (std::size_t s = 0; s < config.systems.size(); ++s) {
            for (std::size_t p = 0; p < config.policies.size(); ++p) {
                for (std::size_t e = 0; e < config.seeds.size(); ++e) {
                    const json key{{"dataset", dataset_json(config.datasets[d])},
                                   {"system", system_json(config.systems[s])},
                                   {"policy", config.policies[p]},
                                   {"seed", config.seeds[e]},
                                   {"batch", config.batch},
                                   {"held_out", config.held_out}};
                    const std::string stem = config.datasets[d].name + "__" + config.systems[s].name + "__" +
                                             config.policies[p] + "__" + std::to_string(config.seeds[e]) + "__" +
                                             hex64(derive_seed(0, key.dump()));
                    cells.push_back({d, s, p, e, cells_dir / (stem + ".csv")});
                }
            }
        }
    }

    std::vector<std::size_t> todo;
    SweepResult result;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (options.force || !fs::exists(cells[i].file)) {
            todo.push_back(i);
        } else {
            ++result.cells_skipped;
        }
    }
    if (result.cells_skipped > 0) {
        say("skipping " + std::to_string(result.cells_skipped) + " completed cell(s)");
    }

    // Corpora and splits are only needed for the cells still to run.
    std::vector<std::vector<std::optional<HeldOutSplit>>> splits(config.datasets.size(),
                                                                 std::vector<std::optional<HeldOutSplit>>(config.seeds.size()));
    for (std::size_t d = 0; d < config.datasets.size(); ++d) {
        bool needed = false;
        for (auto i : todo) needed = needed || cells[i].dataset == d;
        if (!needed) continue;
        say("loading dataset " + config.datasets[d].name);
        const auto corpus = load_dataset(config.datasets[d]);
        for (std::size_t e = 0; e < config.seeds.size(); ++e) {
            splits[d][e] = split_held_out(corpus, config.held_out, config.seeds[e]);
        }
    }

    SeedHeadCache cache;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::mutex io_mutex;
    std::exception_ptr failure;
    std::atomic<bool> failed{false};

    auto worker = [&] {
        while (!failed) {
            const std::size_t t = next++;
            if (t >= todo.size()) return;
            const Cell& cell = cells[todo[t]];
            try {
                const auto start = std::chrono::steady_clock::now();
                const auto& ds = config.datasets[cell.dataset];
                const auto& spec = config.systems[cell.system];
                const auto seed = config.seeds[cell.seed];
                const HeldOutSplit& split = *splits[cell.dataset][cell.seed];
                SeedContext ctx{&split, seed, ds.name + "|H" + std::to_string(config.held_out), &cache};
                auto system = make_system(spec, ctx);
                const auto policy = CorrectionPolicy::parse(config.policies[cell.policy], derive_seed(seed, "policy"));
                const auto records = run_stream(*system, split, policy, config.batch);

                std::string text;
                for (const auto& r : records) {
                    text += format_checkpoint_row({ds.name, spec.name, config.policies[cell.policy], seed, r});
                    text += '\n';
                }
                const auto counters = system->counters();
                fs::path meta = cell.file;
                meta.replace_extension(".meta.json");
                write_atomic(meta, json(counters).dump() + "\n");
                write_atomic(cell.file, text);

                const double secs =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                std::lock_guard lock(io_mutex);
                char buf[64];
                std::snprintf(buf, sizeof buf, " (%.1fs)", secs);
                say("[" + std::to_string(++done) + "/" + std::to_string(todo.size()) + "] " + ds.name + " " +
                    spec.name + " " + config.policies[cell.policy] + " seed=" + std::to_string(seed) +
                    " final novel=" + std::to_string(records.back().novel_acc) + buf);
            } catch (...) {
                std::lock_guard lock(io_mutex);
                if (!failure) failure = std::current_exception();
                failed = true;
                return;
            }
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, todo.size()));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < jobs; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    result.cells_run = todo.size();

    // Assemble final outputs from cell files, in config order.
    std::string results = std::string(kCheckpointCsvHeader) + "\n";
    std::map<std::string, std::map<std::string, std::uint64_t>> counters;
    for (const auto& cell : cells) {
        results += read_all(cell.file);
        fs::path meta = cell.file;
        meta.replace_extension(".meta.json");
        if (fs::exists(meta)) {
            const auto j = json::parse(read_all(meta));
            for (const auto& [k, v] : j.items()) {
                counters[config.systems[cell.system].name][k] += v.get<std::uint64_t>();
            }
        }
    }
    const auto rows = parse_checkpoint_csv(results);
    result.summary = aggregate_rows(rows);
    std::string summary = std::string(kSummaryCsvHeader) + "\n";
    for (const auto& row : result.summary) {
        summary += format_summary_row(row);
        summary += '\n';
    }

    json meta{{"datasets", json::array()},
              {"systems", json::array()},
              {"policies", config.policies},
              {"seeds", config.seeds},
              {"batch", config.batch},
              {"held_out", config.held_out},
              {"policy_rng", "per seed; one uniform draw per wrong prediction"},
              {"step0_checkpoint", "rows with step = 0 are evaluated before any stream item"},
              {"to_n_pct_aggregation", "median over seeds, never = +inf, lower middle for even counts"},
              {"counters", counters}};
    for (const auto& d : config.datasets) meta["datasets"].push_back(dataset_json(d));
    for (const auto& s : config.systems) meta["systems"].push_back(system_json(s));

    result.results_csv = options.out_dir / (options.prefix + "_results.csv");
    result.summary_csv = options.out_dir / (options.prefix + "_summary.csv");
    result.metadata_json = options.out_dir / (options.prefix + "_run_metadata.json");
    write_atomic(result.results_csv, results);
    write_atomic(result.summary_csv, summary);
    write_atomic(result.metadata_json, meta.dump(2) + "\n");
    return result;
}

SweepResult run_storage_sweep(const SweepConfig& config, SweepOptions options) {
    if (options.prefix == "ocrr_full_sweep") {
        options.prefix = "ocrr_storage_sweep";
    }
    return run_sweep(storage_sweep_config(config), options);
}

}  // namespace ocrr
