#include "ocrr/scale_study.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <new>

#include "ocrr/rng.hpp"

namespace ocrr {

namespace {

std::size_t available_memory() {
    std::ifstream in("/proc/meminfo");
    std::string key;
    std::size_t kb = 0;
    std::string unit;
    while (in >> key >> kb >> unit) {
        if (key == "MemAvailable:") {
            return kb * 1024;
        }
    }
    return static_cast<std::size_t>(-1);
}

ClassLabel classify(const std::vector<Hit>& hits, const std::vector<std::uint32_t>& label_of,
                    const std::vector<std::string>& names, const VoteConfig& vote) {
    std::vector<Neighbour> nb;
    nb.reserve(hits.size());
    for (const auto& h : hits) {
        nb.push_back({names[label_of[h.id]], h.similarity, h.id});
    }
    return ocrr::vote(nb, vote);
}

std::string ms(double s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", s);
    return buf;
}

}  // namespace

std::size_t scale_study_memory_estimate(std::size_t scale, std::size_t dim, const HnswParams& hnsw) {
    const std::size_t vectors = 2 * scale * dim * sizeof(float);
    const std::size_t graph = scale * ((2 * hnsw.M + 1) * sizeof(std::uint32_t) + 96);
    const std::size_t brute_ids = scale * 48;
    return vectors + graph + brute_ids;
}

std::vector<ScaleStudyRow> run_scale_study(const ScaleStudyConfig& config) {
    auto say = [&](const std::string& m) {
        if (config.progress) config.progress(m);
    };
    config.vote.validate();
    if (config.test_queries == 0) {
        throw ConfigError("scale study needs at least one test query");
    }
    SyntheticSpec spec = config.spec;
    spec.samples_per_class = 1;
    spec.test_per_class = 0;
    spec.validate();
    const SyntheticGenerator gen(spec);
    const std::size_t dim = spec.dim;
    const std::size_t classes = spec.num_classes;

    std::vector<std::string> names;
    for (std::size_t c = 0; c < classes; ++c) names.push_back(synthetic_label(c));

    // One query set for every scale.
    std::vector<float> queries(config.test_queries * dim);
    std::vector<std::uint32_t> query_label(config.test_queries);
    {
        Rng rng = make_rng(config.sample_seed, "scale_study_queries");
        std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
        for (std::size_t q = 0; q < config.test_queries; ++q) {
            query_label[q] = static_cast<std::uint32_t>(pick(rng));
            gen.sample_into(query_label[q], rng, {queries.data() + q * dim, dim});
        }
    }

    const std::size_t k = config.vote.effective_k();
    std::vector<ScaleStudyRow> rows;
    for (std::size_t scale : config.scales) {
        ScaleStudyRow row;
        row.scale = scale;
        const std::size_t limit = config.memory_limit_bytes != 0 ? config.memory_limit_bytes : available_memory();
        const std::size_t need = scale_study_memory_estimate(scale, dim, config.hnsw);
        if (need > limit) {
            row.skipped = true;
            row.skip_reason = "needs ~" + std::to_string(need >> 20) + " MiB, " + std::to_string(limit >> 20) +
                              " MiB available";
            say("scale " + std::to_string(scale) + ": skipped (" + row.skip_reason + ")");
            rows.push_back(row);
            continue;
        }
        try {
            const auto t0 = std::chrono::steady_clock::now();
            BruteForceIndex brute(dim);
            HnswIndex hnsw(dim, config.hnsw);
            brute.reserve(scale);
            hnsw.reserve(scale);
            std::vector<std::uint32_t> label_of(scale);
            std::vector<float> buf(dim);
            Rng rng = make_rng(config.sample_seed, "scale_study_corpus");
            for (std::size_t i = 0; i < scale; ++i) {
                const auto c = static_cast<std::uint32_t>(i % classes);
                label_of[i] = c;
                gen.sample_into(c, rng, buf);
                brute.insert(i, buf);
                hnsw.insert(i, buf);
                if ((i + 1) % 100'000 == 0) {
                    const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    say("scale " + std::to_string(scale) + ": inserted " + std::to_string(i + 1) + " (" + ms(el) +
                        "s)");
                }
            }

            std::size_t brute_right = 0, hnsw_right = 0, agree = 0;
            double recall_sum = 0.0;
            double hnsw_seconds = 0.0;
            for (std::size_t q = 0; q < config.test_queries; ++q) {
                std::span<const float> query(queries.data() + q * dim, dim);
                const auto exact = brute.top_k(query, k);
                const ClassLabel brute_label = classify(exact, label_of, names, config.vote);

                const auto qs = std::chrono::steady_clock::now();
                const auto approx = hnsw.top_k(query, k);
                const ClassLabel hnsw_label = classify(approx, label_of, names, config.vote);
                hnsw_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - qs).count();

                std::vector<std::uint64_t> a, b;
                for (const auto& h : exact) a.push_back(h.id);
                for (const auto& h : approx) b.push_back(h.id);
                recall_sum += recall_at_k(a, b, k);

                const auto& truth = names[query_label[q]];
                brute_right += brute_label == truth;
                hnsw_right += hnsw_label == truth;
                agree += brute_label == hnsw_label;
            }
            const double n = static_cast<double>(config.test_queries);
            row.brute_acc = brute_right / n;
            row.hnsw_acc = hnsw_right / n;
            row.gap = row.brute_acc - row.hnsw_acc;
            row.recall_at_5 = recall_sum / n;
            row.agreement = agree / n;
            row.hnsw_ms_per_query = 1000.0 * hnsw_seconds / n;
            const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            say("scale " + std::to_string(scale) + ": brute_acc=" + std::to_string(row.brute_acc) +
                " hnsw_acc=" + std::to_string(row.hnsw_acc) + " recall@" + std::to_string(k) + "=" +
                std::to_string(row.recall_at_5) + " (" + ms(el) + "s)");
        } catch (const std::bad_alloc&) {
            row = ScaleStudyRow{};
            row.scale = scale;
            row.skipped = true;
            row.skip_reason = "out of memory";
            say("scale " + std::to_string(scale) + ": skipped (out of memory)");
        }
        rows.push_back(row);
    }
    return rows;
}

std::string format_scale_row(const ScaleStudyRow& row) {
    if (row.skipped) {
        return std::to_string(row.scale) + ",nan,nan,nan,nan,nan,nan";
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%+.6f,%.6f,%.6f,%.6f", row.scale, row.brute_acc, row.hnsw_acc,
                  row.gap, row.recall_at_5, row.agreement, row.hnsw_ms_per_query);
    return buf;
}

void write_scale_study_csv(const std::filesystem::path& path, const std::vector<ScaleStudyRow>& rows) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot write " + tmp.string());
        }
        out << kScaleStudyCsvHeader << '\n';
        for (const auto& r : rows) {
            out << format_scale_row(r) << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace ocrr
