#include "ocrr/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

#include "ocrr/rng.hpp"

namespace ocrr {

CorrectionPolicy CorrectionPolicy::oracle() {
    return {};
}

CorrectionPolicy CorrectionPolicy::random(double p, std::uint64_t rng_seed) {
    CorrectionPolicy policy{PolicyKind::random_p, p, rng_seed};
    policy.validate();
    return policy;
}

CorrectionPolicy CorrectionPolicy::parse(std::string_view name, std::uint64_t rng_seed) {
    if (name == "oracle") {
        return oracle();
    }
    constexpr std::string_view prefix = "random_";
    if (name.substr(0, prefix.size()) == prefix) {
        const auto digits = name.substr(prefix.size());
        unsigned percent = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), percent);
        if (ec == std::errc{} && ptr == digits.data() + digits.size() && percent >= 1 && percent <= 100) {
            return random(percent / 100.0, rng_seed);
        }
    }
    throw ConfigError("unknown correction policy '" + std::string(name) + "'");
}

std::string CorrectionPolicy::name() const {
    if (kind == PolicyKind::oracle) {
        return "oracle";
    }
    return "random_" + std::to_string(static_cast<int>(std::lround(p * 100.0)));
}

void CorrectionPolicy::validate() const {
    if (kind == PolicyKind::random_p && !(p > 0.0 && p <= 1.0)) {
        throw ConfigError("random policy needs p in (0, 1]");
    }
}

double evaluate_accuracy(const SystemUnderTest& system, std::span<const LabeledExample> examples) {
    if (examples.empty()) {
        return 0.0;
    }
    std::size_t right = 0;
    const auto predictions = system.predict_batch(examples);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (predictions[i] && *predictions[i] == examples[i].label) {
            ++right;
        }
    }
    return static_cast<double>(right) / static_cast<double>(examples.size());
}

std::vector<CheckpointRecord> run_stream(SystemUnderTest& system, const HeldOutSplit& split,
                                         const CorrectionPolicy& policy, std::size_t batch) {
    if (batch == 0) {
        throw ConfigError("checkpoint batch must be >= 1");
    }
    policy.validate();
    Rng rng(policy.rng_seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    std::vector<CheckpointRecord> records;
    std::uint64_t corrections = 0;
    auto checkpoint = [&](std::uint64_t step) {
        records.push_back({step, corrections, evaluate_accuracy(system, split.novel_test),
                           evaluate_accuracy(system, split.original_test), system.footprint().bytes});
    };

    checkpoint(0);
    const auto& stream = split.stream_set;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const auto& item = stream[i];
        bool wrong = true;
        try {
            wrong = system.predict(item.embedding) != item.label;
        } catch (const NoEvidenceError&) {
        }
        if (wrong) {
            // one draw per wrong prediction only
            const bool fire = policy.kind == PolicyKind::oracle || uniform(rng) < policy.p;
            if (fire) {
                system.correct(item.embedding, item.label);
                ++corrections;
            }
        }
        const std::uint64_t step = i + 1;
        if (step % batch == 0 || step == stream.size()) {
            checkpoint(step);
        }
    }
    return records;
}

std::optional<std::uint64_t> corrections_to_threshold(std::span<const CheckpointRecord> records, double threshold) {
    for (const auto& r : records) {
        if (r.novel_acc >= threshold) {
            return r.corrections;
        }
    }
    return std::nullopt;
}

std::optional<std::uint64_t> median_corrections(std::vector<std::optional<std::uint64_t>> values) {
    if (values.empty()) {
        return std::nullopt;
    }
    std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) {
        if (!a) return false;
        if (!b) return true;
        return *a < *b;
    });
    return values[(values.size() - 1) / 2];
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) {
        return {0.0, 0.0};
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return {mean, std::sqrt(var)};
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

RunSummary aggregate(std::span<const std::vector<CheckpointRecord>> per_seed) {
    RunSummary s;
    std::vector<double> footprints;
    for (const auto& records : per_seed) {
        if (records.empty()) {
            throw std::invalid_argument("aggregate: a seed has no checkpoints");
        }
        const auto& last = records.back();
        s.final_novel.push_back(last.novel_acc);
        s.final_original.push_back(last.original_acc);
        s.to_10pct.push_back(corrections_to_threshold(records, 0.10));
        s.to_70pct.push_back(corrections_to_threshold(records, 0.70));
        footprints.push_back(static_cast<double>(last.footprint_bytes));
    }
    std::tie(s.final_novel_mean, s.final_novel_std) = mean_std(s.final_novel);
    std::tie(s.final_orig_mean, s.final_orig_std) = mean_std(s.final_original);
    s.to_10pct_median = median_corrections(s.to_10pct);
    s.to_70pct_median = median_corrections(s.to_70pct);
    s.footprint_bytes = mean_std(footprints).first;
    return s;
}

std::string format_corrections(const std::optional<std::uint64_t>& v) {
    return v ? std::to_string(*v) : std::string("never");
}

std::string format_checkpoint_row(const CheckpointRow& row) {
    const auto& r = row.record;
    return row.dataset + "," + row.system + "," + row.policy + "," + std::to_string(row.seed) + "," +
           std::to_string(r.step) + "," + std::to_string(r.corrections) + "," + fmt("%.6f", r.novel_acc) + "," +
           fmt("%.6f", r.original_acc) + "," + std::to_string(r.footprint_bytes);
}

std::string format_summary_row(const SummaryRow& row) {
    const auto& s = row.summary;
    return row.dataset + "," + row.system + "," + row.policy + "," + fmt("%.6f", s.final_novel_mean) + "," +
           fmt("%.6f", s.final_novel_std) + "," + fmt("%.6f", s.final_orig_mean) + "," +
           fmt("%.6f", s.final_orig_std) + "," + format_corrections(s.to_10pct_median) + "," +
           format_corrections(s.to_70pct_median) + "," + fmt("%.0f", s.footprint_bytes);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

[[noreturn]] void bad_line(std::size_t line_no, const std::string& what) {
    throw ConfigError("CSV line " + std::to_string(line_no) + ": " + what);
}

std::uint64_t parse_u64(std::string_view s, std::size_t line_no) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        bad_line(line_no, "expected an unsigned integer, got '" + std::string(s) + "'");
    }
    return v;
}

double parse_double(std::string_view s, std::size_t line_no) {
    const std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || end != tmp.c_str() + tmp.size() || !std::isfinite(v)) {
        bad_line(line_no, "expected a number, got '" + tmp + "'");
    }
    return v;
}

double parse_rate(std::string_view s, std::size_t line_no) {
    const double v = parse_double(s, line_no);
    if (v < 0.0 || v > 1.0) {
        bad_line(line_no, "accuracy outside [0, 1]");
    }
    return v;
}

std::optional<std::uint64_t> parse_corrections(std::string_view s, std::size_t line_no) {
    if (s == "never") {
        return std::nullopt;
    }
    return parse_u64(s, line_no);
}

template <typename Fn>
void for_each_data_line(std::string_view text, std::string_view header, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool saw_header = false;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!saw_header) {
            if (line != header) bad_line(line_no, "header does not match the schema");
            saw_header = true;
            continue;
        }
        if (line.empty()) bad_line(line_no, "empty line");
        fn(line, line_no);
    }
    if (!saw_header) {
        throw ConfigError("CSV is empty (no header)");
    }
}

}  // namespace

std::vector<CheckpointRow> parse_checkpoint_csv(std::string_view text) {
    std::vector<CheckpointRow> rows;
    for_each_data_line(text, kCheckpointCsvHeader, [&](std::string_view line, std::size_t n) {
        const auto f = split_fields(line);
        if (f.size() != 9) bad_line(n, "expected 9 fields");
        if (f[0].empty() || f[1].empty() || f[2].empty()) bad_line(n, "empty key field");
        CheckpointRow row{std::string(f[0]), std::string(f[1]), std::string(f[2]), parse_u64(f[3], n), {}};
        row.record = {parse_u64(f[4], n), parse_u64(f[5], n), parse_rate(f[6], n), parse_rate(f[7], n),
                      parse_u64(f[8], n)};
        if (row.record.corrections > row.record.step) bad_line(n, "more corrections than steps");
        rows.push_back(std::move(row));
    });
    return rows;
}

std::vector<CheckpointRow> read_checkpoint_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint_csv(ss.str());
}

std::vector<ParsedSummaryRow> parse_summary_csv(std::string_view text) {
    std::vector<ParsedSummaryRow> rows;
    for_each_data_line(text, kSummaryCsvHeader, [&](std::string_view line, std::size_t n) {
        const auto f = split_fields(line);
        if (f.size() != 10) bad_line(n, "expected 10 fields");
        rows.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2]), parse_rate(f[3], n),
                        parse_double(f[4], n), parse_rate(f[5], n), parse_double(f[6], n),
                        parse_corrections(f[7], n), parse_corrections(f[8], n), parse_double(f[9], n)});
    });
    return rows;
}

std::vector<SummaryRow> aggregate_rows(std::span<const CheckpointRow> rows) {
    using Key = std::tuple<std::string, std::string, std::string>;
    std::vector<Key> order;
    std::map<Key, std::vector<std::pair<std::uint64_t, std::vector<CheckpointRecord>>>> groups;
    for (const auto& row : rows) {
        Key key{row.dataset, row.system, row.policy};
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) order.push_back(key);
        auto& seeds = it->second;
        auto s = std::find_if(seeds.begin(), seeds.end(), [&](const auto& p) { return p.first == row.seed; });
        if (s == seeds.end()) {
            seeds.emplace_back(row.seed, std::vector<CheckpointRecord>{});
            s = std::prev(seeds.end());
        }
        s->second.push_back(row.record);
    }
    std::vector<SummaryRow> out;
    for (const auto& key : order) {
        std::vector<std::vector<CheckpointRecord>> per_seed;
        for (auto& [seed, records] : groups[key]) per_seed.push_back(records);
        out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), aggregate(per_seed)});
    }
    return out;
}

}  // namespace ocrr
