#include <gtest/gtest.h>

#include "ocrr/harness.hpp"
#include "ocrr/substrate.hpp"
#include "test_util.hpp"

using namespace ocrr;

namespace {

HeldOutSplit small_split(std::size_t stream_items, std::uint64_t seed = 0) {
    SyntheticSpec spec;
    spec.dim = 16;
    spec.num_classes = 10;
    spec.samples_per_class = stream_items / 2;
    spec.test_per_class = 3;
    spec.noise_sigma = 0.05;
    return split_held_out(generate_synthetic(spec, seed), 2, seed);
}

// Always right: echoes a label lookup keyed on the embedding's first component.
class Oracle final : public SystemUnderTest {
public:
    explicit Oracle(const HeldOutSplit& s) {
        for (const auto* set : {&s.seed_set, &s.stream_set, &s.novel_test, &s.original_test})
            for (const auto& e : *set) table_.emplace_back(e.embedding, e.label);
    }
    const std::string& name() const override { return name_; }
    ClassLabel predict(const EmbeddingVector& x) const override {
        for (const auto& [e, l] : table_)
            if (e == x) return l;
        throw NoEvidenceError("unseen");
    }
    void correct(const EmbeddingVector&, const ClassLabel&) override { ++corrections; }
    Footprint footprint() const override { return {0, 0, 7}; }
    int corrections = 0;

private:
    std::string name_ = "oracle";
    std::vector<std::pair<EmbeddingVector, ClassLabel>> table_;
};

class AlwaysWrong final : public SystemUnderTest {
public:
    const std::string& name() const override { return name_; }
    ClassLabel predict(const EmbeddingVector&) const override { throw NoEvidenceError("nothing"); }
    void correct(const EmbeddingVector&, const ClassLabel&) override { ++corrections; }
    Footprint footprint() const override { return {0, 0, static_cast<std::uint64_t>(corrections)}; }
    int corrections = 0;

private:
    std::string name_ = "wrong";
};

}  // namespace

TEST(Policy, Parsing) {
    EXPECT_EQ(CorrectionPolicy::parse("oracle").kind, PolicyKind::oracle);
    const auto p = CorrectionPolicy::parse("random_50", 4);
    EXPECT_EQ(p.kind, PolicyKind::random_p);
    EXPECT_DOUBLE_EQ(p.p, 0.5);
    EXPECT_EQ(p.rng_seed, 4u);
    EXPECT_EQ(p.name(), "random_50");
    EXPECT_EQ(CorrectionPolicy::parse("random_10").name(), "random_10");
    EXPECT_THROW(CorrectionPolicy::parse("random_0"), ConfigError);
    EXPECT_THROW(CorrectionPolicy::parse("noisy"), ConfigError);
    EXPECT_THROW(CorrectionPolicy::random(0.0, 1), ConfigError);
}

TEST(RunStream, PerfectSystemNeverCorrects) {
    const auto split = small_split(20);
    Oracle sys(split);
    const auto records = run_stream(sys, split, CorrectionPolicy::oracle(), 5);
    ASSERT_FALSE(records.empty());
    for (const auto& r : records) {
        EXPECT_EQ(r.corrections, 0u);
        EXPECT_DOUBLE_EQ(r.novel_acc, 1.0);
        EXPECT_DOUBLE_EQ(r.original_acc, 1.0);
    }
    EXPECT_EQ(sys.corrections, 0);
}

TEST(RunStream, AlwaysWrongCorrectsEveryItem) {
    const auto split = small_split(20);  // 2 held-out classes x 10 = 20 stream items
    ASSERT_EQ(split.stream_set.size(), 20u);
    AlwaysWrong sys;
    const auto records = run_stream(sys, split, CorrectionPolicy::oracle(), 5);
    ASSERT_EQ(records.size(), 5u);  // steps 0, 5, 10, 15, 20
    for (std::size_t t = 0; t < records.size(); ++t) {
        EXPECT_EQ(records[t].step, t * 5);
        EXPECT_EQ(records[t].corrections, t * 5);
        EXPECT_EQ(records[t].novel_acc, 0.0);
    }
}

TEST(RunStream, FinalCheckpointOffBoundary) {
    const auto split = small_split(20);
    AlwaysWrong sys;
    const auto records = run_stream(sys, split, CorrectionPolicy::oracle(), 6);
    ASSERT_EQ(records.size(), 5u);  // 0, 6, 12, 18, 20
    EXPECT_EQ(records.back().step, 20u);
    EXPECT_EQ(records.back().corrections, 20u);
    EXPECT_THROW(run_stream(sys, split, CorrectionPolicy::oracle(), 0), ConfigError);
}

TEST(RunStream, RandomPolicyWithPOneEqualsOracle) {
    const auto split = small_split(40, 3);
    auto make = [&] {
        SystemSpec spec = system_spec_from_name("substrate");
        return make_system(spec, SeedContext{&split, 3});
    };
    auto a = make();
    auto b = make();
    const auto ra = run_stream(*a, split, CorrectionPolicy::oracle(), 10);
    const auto rb = run_stream(*b, split, CorrectionPolicy::random(1.0, 99), 10);
    EXPECT_EQ(ra, rb);
}

TEST(RunStream, SparsePolicyCorrectsFewer) {
    const auto split = small_split(200, 4);
    AlwaysWrong a, b;
    const auto full = run_stream(a, split, CorrectionPolicy::oracle(), 50);
    const auto sparse = run_stream(b, split, CorrectionPolicy::random(0.1, 5), 50);
    EXPECT_EQ(full.back().corrections, 200u);
    EXPECT_GT(sparse.back().corrections, 5u);
    EXPECT_LT(sparse.back().corrections, 40u);
    for (std::size_t i = 1; i < sparse.size(); ++i) EXPECT_GE(sparse[i].corrections, sparse[i - 1].corrections);
    // Same seed, same draws.
    AlwaysWrong c;
    EXPECT_EQ(run_stream(c, split, CorrectionPolicy::random(0.1, 5), 50), sparse);
}

TEST(RunStream, EvaluationHasNoSideEffects) {
    const auto split = small_split(20, 6);
    Substrate s(16);
    s.seed(split.seed_set);
    const auto head = s.ledger().head_hash();
    SystemSpec spec = system_spec_from_name("static_knn");
    auto sys = make_system(spec, SeedContext{&split, 6});
    const auto fp = sys->footprint();
    evaluate_accuracy(*sys, split.novel_test);
    evaluate_accuracy(*sys, split.original_test);
    EXPECT_EQ(sys->footprint().bytes, fp.bytes);
    EXPECT_EQ(evaluate_accuracy(*sys, split.novel_test), 0.0);
    s.predict_batch(std::vector<const float*>{split.novel_test[0].embedding.data()});
    EXPECT_EQ(s.ledger().head_hash(), head);
}

TEST(Thresholds, CorrectionsToThreshold) {
    const std::vector<CheckpointRecord> r{{0, 0, 0.0, 1, 0}, {50, 38, 0.2, 1, 0}, {100, 100, 0.8, 1, 0}};
    EXPECT_EQ(corrections_to_threshold(r, 0.7), 100u);
    EXPECT_EQ(corrections_to_threshold(r, 0.1), 38u);
    EXPECT_EQ(corrections_to_threshold(r, 0.0), 0u);
    EXPECT_EQ(corrections_to_threshold(r, 0.9), std::nullopt);
}

TEST(Thresholds, MedianTreatsNeverAsInfinity) {
    EXPECT_EQ(median_corrections({3, std::nullopt, 1}), 3u);
    EXPECT_EQ(median_corrections({std::nullopt, std::nullopt, 1}), std::nullopt);
    EXPECT_EQ(median_corrections({4, 2}), 2u);
    EXPECT_EQ(median_corrections({}), std::nullopt);
}

TEST(Aggregate, PopulationStd) {
    std::vector<std::vector<CheckpointRecord>> seeds = {
        {{0, 0, 0.0, 1.0, 10}, {10, 5, 0.5, 0.8, 20}},
        {{0, 0, 0.0, 1.0, 10}, {10, 5, 0.7, 0.6, 40}},
    };
    const auto s = aggregate(seeds);
    EXPECT_DOUBLE_EQ(s.final_novel_mean, 0.6);
    EXPECT_NEAR(s.final_novel_std, 0.1, 1e-12);
    EXPECT_DOUBLE_EQ(s.final_orig_mean, 0.7);
    EXPECT_NEAR(s.final_orig_std, 0.1, 1e-12);
    EXPECT_EQ(s.to_10pct_median, 5u);
    EXPECT_EQ(s.to_70pct_median, 5u);  // {never, 5}: lower middle of {5, inf}
    EXPECT_DOUBLE_EQ(s.footprint_bytes, 30.0);
}

TEST(Csv, CheckpointRoundTrip) {
    CheckpointRow row{"ds", "substrate", "oracle", 2, {50, 12, 0.25, 1.0, 4096}};
    const std::string text = std::string(kCheckpointCsvHeader) + "\n" + format_checkpoint_row(row) + "\n";
    EXPECT_EQ(format_checkpoint_row(row), "ds,substrate,oracle,2,50,12,0.250000,1.000000,4096");
    const auto parsed = parse_checkpoint_csv(text);
    ASSERT_EQ(parsed.size(), 1u);
    EXPECT_EQ(parsed[0].record, row.record);
    EXPECT_EQ(parsed[0].system, "substrate");
}

TEST(Csv, SchemaViolationsRejected) {
    const std::string h(kCheckpointCsvHeader);
    EXPECT_THROW(parse_checkpoint_csv(""), ConfigError);
    EXPECT_THROW(parse_checkpoint_csv("wrong,header\n"), ConfigError);
    EXPECT_THROW(parse_checkpoint_csv(h + "\na,b,c,0,1,1,0.5,0.5\n"), ConfigError);
    EXPECT_THROW(parse_checkpoint_csv(h + "\na,b,c,0,1,1,1.5,0.5,1\n"), ConfigError);
    EXPECT_THROW(parse_checkpoint_csv(h + "\na,b,c,0,1,2,0.5,0.5,1\n"), ConfigError);
    EXPECT_THROW(parse_checkpoint_csv(h + "\na,b,c,x,1,1,0.5,0.5,1\n"), ConfigError);
}

TEST(Csv, SummaryFormatAndParse) {
    SummaryRow row{"ds", "ewc", "random_10", {}};
    row.summary.final_novel_mean = 0.5;
    row.summary.to_10pct_median = 7;
    row.summary.footprint_bytes = 1234.4;
    const auto line = format_summary_row(row);
    EXPECT_EQ(line, "ds,ewc,random_10,0.500000,0.000000,0.000000,0.000000,7,never,1234");
    const auto parsed = parse_summary_csv(std::string(kSummaryCsvHeader) + "\n" + line + "\n");
    ASSERT_EQ(parsed.size(), 1u);
    EXPECT_EQ(parsed[0].to_10pct, 7u);
    EXPECT_EQ(parsed[0].to_70pct, std::nullopt);
}

TEST(Csv, AggregateRowsGroupsCells) {
    std::vector<CheckpointRow> rows;
    for (std::uint64_t seed : {0, 1}) {
        rows.push_back({"d", "s1", "oracle", seed, {0, 0, 0.0, 1.0, 1}});
        rows.push_back({"d", "s1", "oracle", seed, {10, 3, 0.9, 1.0, 1}});
    }
    rows.push_back({"d", "s2", "oracle", 0, {0, 0, 0.2, 1.0, 1}});
    const auto summary = aggregate_rows(rows);
    ASSERT_EQ(summary.size(), 2u);
    EXPECT_EQ(summary[0].summary.final_novel.size(), 2u);
    EXPECT_DOUBLE_EQ(summary[0].summary.final_novel_mean, 0.9);
    EXPECT_EQ(summary[1].system, "s2");
}
