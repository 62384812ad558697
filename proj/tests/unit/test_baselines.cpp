#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "ocrr/baselines.hpp"
#include "ocrr/linear_head.hpp"
#include "test_util.hpp"

using namespace ocrr;

namespace {

std::vector<ClassLabel> labels(std::size_t n) {
    std::vector<ClassLabel> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
    return out;
}

LinearHead random_head(std::size_t classes, std::size_t dim, std::mt19937_64& rng, float scale = 0.5f) {
    LinearHead h(labels(classes), dim);
    std::normal_distribution<float> g(0.0f, scale);
    for (auto& p : h.parameters()) p = g(rng);
    return h;
}

// --- double-precision loss oracles, written from the formulas directly ---

std::vector<double> logits_d(const LinearHead& h, std::span<const float> x, double temperature = 1.0) {
    const auto p = h.parameters();
    const std::size_t C = h.classes(), d = h.dim();
    std::vector<double> z(C);
    for (std::size_t c = 0; c < C; ++c) {
        double s = p[C * d + c];
        for (std::size_t j = 0; j < d; ++j) s += double(p[c * d + j]) * x[j];
        z[c] = s / temperature;
    }
    return z;
}

std::vector<double> softmax_d(std::vector<double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (auto& v : z) sum += (v = std::exp(v - m));
    for (auto& v : z) v /= sum;
    return z;
}

double ce_loss(const LinearHead& h, std::span<const float> x, std::size_t row) {
    return -std::log(softmax_d(logits_d(h, x))[row]);
}

double ewc_loss(const LinearHead& h, std::span<const float> x, std::size_t row, double lambda,
                const FisherDiagonal& f, std::span<const float> theta0) {
    double pen = 0;
    const auto p = h.parameters();
    for (std::size_t i = 0; i < p.size(); ++i) pen += f.values[i] * std::pow(double(p[i]) - theta0[i], 2);
    return ce_loss(h, x, row) + 0.5 * lambda * pen;
}

double lwf_loss(const LinearHead& h, const LinearHead& teacher, std::span<const float> x, std::size_t row,
                double lambda, double T) {
    const auto pt = softmax_d(logits_d(teacher, x, T));
    const auto ps = softmax_d(logits_d(h, x, T));
    double kl = 0;
    for (std::size_t c = 0; c < pt.size(); ++c) kl += pt[c] * (std::log(pt[c]) - std::log(ps[c]));
    return ce_loss(h, x, row) + lambda * T * T * kl;
}

// Central difference on one float parameter; the actual step is measured
// after rounding to float.
template <typename Loss>
double central_diff(std::span<float> params, std::size_t i, Loss&& loss, double h = 1e-3) {
    const float orig = params[i];
    params[i] = static_cast<float>(orig + h);
    const double up_step = double(params[i]) - orig;
    const double up = loss();
    params[i] = static_cast<float>(orig - h);
    const double down_step = orig - double(params[i]);
    const double down = loss();
    params[i] = orig;
    return (up - down) / (up_step + down_step);
}

void expect_close(double analytic, double numeric, const std::string& what) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < 1e-7) return;  // both vanish
    EXPECT_LT(std::abs(analytic - numeric) / scale, 1e-3) << what << " analytic=" << analytic << " numeric=" << numeric;
}

std::vector<float> random_x(std::size_t dim, std::mt19937_64& rng) {
    const auto v = random_unit(dim, rng);
    return {v.components().begin(), v.components().end()};
}

}  // namespace

TEST(LinearHead, PredictMatchesOracle) {
    std::mt19937_64 rng(1);
    const auto h = random_head(6, 10, rng);
    for (int t = 0; t < 100; ++t) {
        const auto x = random_x(10, rng);
        const auto z = logits_d(h, x);
        const auto want = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
        EXPECT_EQ(linear_predict(h, x), h.class_order()[want]);
    }
}

TEST(LinearHead, RowThreeDominates) {
    LinearHead h(labels(5), 5);
    h.parameters()[3 * 5 + 3] = 10.0f;
    EXPECT_EQ(linear_predict(h, std::vector<float>{0, 0, 0, 1, 0}), "c3");
}

TEST(LinearHead, BiasArgmaxAndTies) {
    LinearHead h(labels(4), 3);
    EXPECT_EQ(linear_predict(h, std::vector<float>{1, 0, 0}), "c0");  // all tied: smaller row
    h.bias()[3] = 1.0f;
    EXPECT_EQ(linear_predict(h, std::vector<float>{0.2f, 0.3f, 0.5f}), "c3");
    const bool allowed[] = {true, true, false, false};
    EXPECT_EQ(argmax_row(h, std::vector<float>{1, 0, 0}, allowed), 0u);
    const bool none[] = {false, false, false, false};
    EXPECT_THROW(argmax_row(h, std::vector<float>{1, 0, 0}, none), NoEvidenceError);
}

TEST(LinearHead, SoftmaxSumsToOne) {
    std::vector<float> z{1000.0f, -1000.0f, 3.0f, 2.5f};
    softmax_in_place(z);
    EXPECT_NEAR(std::accumulate(z.begin(), z.end(), 0.0), 1.0, 1e-5);
    EXPECT_TRUE(std::all_of(z.begin(), z.end(), [](float v) { return std::isfinite(v); }));
}

TEST(CeSgd, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(2);
    auto h = random_head(5, 8, rng);
    const auto x = random_x(8, rng);
    const std::size_t row = 2;
    const auto g = ce_gradient(h, x, row);
    for (int t = 0; t < 10; ++t) {
        const std::size_t i = rng() % h.parameter_count();
        const double num = central_diff(h.parameters(), i, [&] { return ce_loss(h, x, row); });
        expect_close(g[i], num, "ce coord " + std::to_string(i));
    }
}

TEST(CeSgd, StepIsGradientStep) {
    std::mt19937_64 rng(3);
    auto h = random_head(4, 8, rng);
    const auto x = random_x(8, rng);
    const auto g = ce_gradient(h, x, 1);
    const std::vector<float> before(h.parameters().begin(), h.parameters().end());
    ce_sgd_step(h, x, "c1", 0.05f);
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(h.parameters()[i], before[i] - 0.05f * g[i], 1e-6f);
}

TEST(CeSgd, LossDecreasesAndZeroLrIsNoOp) {
    std::mt19937_64 rng(4);
    auto h = random_head(4, 8, rng);
    const auto x = random_x(8, rng);
    double prev = ce_loss(h, x, 3);
    for (int t = 0; t < 50; ++t) {
        ce_sgd_step(h, x, "c3", 0.05f);
        const double now = ce_loss(h, x, 3);
        ASSERT_LT(now, prev);
        prev = now;
    }
    const std::vector<float> before(h.parameters().begin(), h.parameters().end());
    ce_sgd_step(h, x, "c0", 0.0f);
    EXPECT_TRUE(std::equal(before.begin(), before.end(), h.parameters().begin()));
    EXPECT_THROW(ce_sgd_step(h, x, "unknown", 0.1f), std::invalid_argument);
}

TEST(Ewc, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    auto h = random_head(5, 8, rng);
    const auto theta0_head = random_head(5, 8, rng);
    const std::vector<float> theta0(theta0_head.parameters().begin(), theta0_head.parameters().end());
    FisherDiagonal f;
    std::uniform_real_distribution<float> u(0.0f, 0.01f);
    for (std::size_t i = 0; i < h.parameter_count(); ++i) f.values.push_back(u(rng));
    const auto x = random_x(8, rng);
    const double lambda = 1000.0;
    const auto g = ewc_gradient(h, x, 4, static_cast<float>(lambda), f, theta0);
    for (int t = 0; t < 10; ++t) {
        const std::size_t i = rng() % h.parameter_count();
        const double num = central_diff(h.parameters(), i, [&] { return ewc_loss(h, x, 4, lambda, f, theta0); });
        expect_close(g[i], num, "ewc coord " + std::to_string(i));
    }
}

TEST(Ewc, DegenerateCases) {
    std::mt19937_64 rng(6);
    auto h = random_head(3, 8, rng);
    const auto x = random_x(8, rng);
    const std::vector<float> theta0(h.parameters().begin(), h.parameters().end());
    FisherDiagonal f{std::vector<float>(h.parameter_count(), 0.5f)};
    // theta == theta0: penalty gradient vanishes
    const auto g = ewc_gradient(h, x, 1, 1000.0f, f, theta0);
    const auto ce = ce_gradient(h, x, 1);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_FLOAT_EQ(g[i], ce[i]);
    // Fisher zero: same update as plain SGD
    auto a = h, b = h;
    const auto other = random_head(3, 8, rng);
    const std::vector<float> far(other.parameters().begin(), other.parameters().end());
    ewc_step(a, x, "c2", 0.05f, 1000.0f, FisherDiagonal{std::vector<float>(h.parameter_count(), 0.0f)}, far);
    ce_sgd_step(b, x, "c2", 0.05f);
    // same update up to float association order
    for (std::size_t i = 0; i < a.parameter_count(); ++i) EXPECT_NEAR(a.parameters()[i], b.parameters()[i], 1e-6f);
}

TEST(Ewc, FisherIsNonNegativeMeanSquaredGradient) {
    std::mt19937_64 rng(7);
    const auto h = random_head(3, 4, rng);
    std::vector<LabeledExample> samples;
    for (int i = 0; i < 5; ++i) samples.push_back({random_unit(4, rng), "c" + std::to_string(i % 3), Split::train});
    const auto f = fisher_estimate(h, samples, 2000, 1);
    ASSERT_EQ(f.values.size(), h.parameter_count());
    // n larger than the sample count uses all of them: compare to a direct mean.
    std::vector<double> want(h.parameter_count(), 0.0);
    for (const auto& s : samples) {
        const auto g = ce_gradient(h, s.embedding.components(), h.require_row(s.label));
        for (std::size_t i = 0; i < g.size(); ++i) want[i] += double(g[i]) * g[i] / samples.size();
    }
    for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_GE(f.values[i], 0.0f);
        EXPECT_NEAR(f.values[i], want[i], 1e-6 + 1e-4 * want[i]);
    }
}

TEST(Agem, ProjectionProperties) {
    std::mt19937_64 rng(8);
    std::normal_distribution<float> g01;
    for (int t = 0; t < 1000; ++t) {
        std::vector<float> g(40), r(40);
        for (auto& v : g) v = g01(rng);
        for (auto& v : r) v = g01(rng);
        const auto p = agem_project(g, r);
        double dot_pr = 0, dot_gr = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            dot_pr += double(p[i]) * r[i];
            dot_gr += double(g[i]) * r[i];
        }
        ASSERT_GE(dot_pr, -1e-5);
        if (dot_gr >= 0) {
            ASSERT_TRUE(std::equal(g.begin(), g.end(), p.begin()));
        } else {
            ASSERT_NEAR(dot_pr, 0.0, 1e-4);
        }
    }
}

TEST(Agem, OppositeGradientCancels) {
    const std::vector<float> r{1.0f, -2.0f, 0.5f};
    const std::vector<float> g{-1.0f, 2.0f, -0.5f};
    for (float v : agem_project(g, r)) EXPECT_NEAR(v, 0.0f, 1e-6f);
}

TEST(Agem, EmptyMemoryFallsBackToSgd) {
    std::mt19937_64 rng(9);
    auto a = random_head(3, 8, rng);
    auto b = a;
    const auto x = random_x(8, rng);
    MemoryBuffer empty;
    Rng r(1);
    EXPECT_EQ(agem_step(a, x, "c1", 0.05f, empty, r), AgemOutcome::empty_memory);
    ce_sgd_step(b, x, "c1", 0.05f);
    EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
}

TEST(Agem, MemoryBufferIsBounded) {
    std::mt19937_64 rng(10);
    std::vector<LabeledExample> src;
    for (int i = 0; i < 3000; ++i) src.push_back({random_unit(4, rng), "c" + std::to_string(i % 3), Split::train});
    MemoryBuffer m;
    m.fill(src, 1);
    EXPECT_EQ(m.examples.size(), 1000u);
    Rng r(2);
    const auto batch = m.sample_batch(r);
    EXPECT_EQ(batch.size(), 64u);
    std::set<std::size_t> distinct(batch.begin(), batch.end());
    EXPECT_EQ(distinct.size(), 64u);
}

TEST(Lwf, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    auto h = random_head(5, 8, rng);
    const auto teacher = random_head(5, 8, rng);
    const auto x = random_x(8, rng);
    const auto dz = lwf_logit_gradient(h, teacher, x, 0, 1.0f, 2.0f);
    const auto g = outer_gradient(h, dz, x);
    for (int t = 0; t < 10; ++t) {
        const std::size_t i = rng() % h.parameter_count();
        const double num = central_diff(h.parameters(), i, [&] { return lwf_loss(h, teacher, x, 0, 1.0, 2.0); });
        expect_close(g[i], num, "lwf coord " + std::to_string(i));
    }
}

TEST(Lwf, DegenerateCases) {
    std::mt19937_64 rng(12);
    const auto h = random_head(4, 8, rng);
    const auto x = random_x(8, rng);
    const auto ce = ce_logit_gradient(h, x, 2);
    const auto same = lwf_logit_gradient(h, h, x, 2, 1.0f, 2.0f);
    for (std::size_t i = 0; i < ce.size(); ++i) EXPECT_NEAR(same[i], ce[i], 1e-6f);
    const auto other = random_head(4, 8, rng);
    const auto no_distill = lwf_logit_gradient(h, other, x, 2, 0.0f, 2.0f);
    for (std::size_t i = 0; i < ce.size(); ++i) EXPECT_FLOAT_EQ(no_distill[i], ce[i]);
}

TEST(KnnLm, LambdaZeroIsLinear) {
    std::mt19937_64 rng(13);
    const auto h = random_head(4, 8, rng);
    HybridConfig cfg;
    cfg.lambda_knn = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto x = random_x(8, rng);
        const std::vector<LabeledHit> hits{{"c0", 0.99f}, {"c1", 0.98f}};
        EXPECT_EQ(knnlm_predict(h, x, hits, cfg), linear_predict(h, x));
    }
}

TEST(KnnLm, LambdaOneSingleClass) {
    std::mt19937_64 rng(14);
    const auto h = random_head(4, 8, rng);
    HybridConfig cfg;
    cfg.lambda_knn = 1.0;
    const std::vector<LabeledHit> hits{{"c3", 0.5f}, {"c3", 0.4f}, {"c3", 0.3f}};
    EXPECT_EQ(knnlm_predict(h, random_x(8, rng), hits, cfg), "c3");
}

TEST(KnnLm, HandComputedTwoClassMixture) {
    // p_param = softmax(1, 0) = (0.7311, 0.2689); one hit for c1 gives
    // p_knn = (0, 1); the 0.5 mixture is (0.3655, 0.6345) -> c1, while the
    // head alone says c0.
    LinearHead h(labels(2), 2);
    h.bias()[0] = 1.0f;
    const std::vector<float> x{1, 0};
    HybridConfig cfg;  // lambda 0.5, tau 0.1
    const std::vector<LabeledHit> hits{{"c1", 0.5f}};
    const auto p = knnlm_distribution(h, x, hits, cfg);
    EXPECT_NEAR(p[0], 0.5 * std::exp(1.0) / (1 + std::exp(1.0)), 1e-6);
    EXPECT_NEAR(p[1], 0.5 + 0.5 / (1 + std::exp(1.0)), 1e-6);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-6);
    EXPECT_EQ(knnlm_predict(h, x, hits, cfg), "c1");
    EXPECT_EQ(linear_predict(h, x), "c0");

    // Two present classes: softmax of max-similarity / tau.
    const std::vector<LabeledHit> two{{"c0", 0.9f}, {"c1", 0.8f}, {"c1", 0.85f}};
    const auto q = knnlm_distribution(h, x, two, cfg);
    const double k0 = 1.0 / (1.0 + std::exp((0.85 - 0.9) / 0.1));
    EXPECT_NEAR(q[0], 0.5 * k0 + 0.5 * std::exp(1.0) / (1 + std::exp(1.0)), 1e-5);
}

TEST(KnnLm, ConfigValidation) {
    HybridConfig c;
    c.lambda_knn = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c.lambda_knn = 0.5;
    c.tau = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(OvrLogReg, SingleClassAlwaysPredicted) {
    OvrLogisticRegression m(4);
    EXPECT_THROW(m.predict(std::vector<float>{1, 0, 0, 0}), NoEvidenceError);
    m.update(std::vector<float>{1, 0, 0, 0}, "only");
    std::mt19937_64 rng(15);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(m.predict(random_x(4, rng)), "only");
}

TEST(OvrLogReg, RegressorGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(16);
    OvrLogisticRegression m(8);
    m.update(random_x(8, rng), "a");
    m.update(random_x(8, rng), "b");
    std::normal_distribution<float> g(0.0f, 0.7f);
    for (std::size_t c = 0; c < 2; ++c) {
        for (auto& w : m.weights(c)) w = g(rng);
        m.intercept(c) = g(rng);
    }
    const auto x = random_x(8, rng);
    for (float target : {0.0f, 1.0f}) {
        const auto grad = m.regressor_gradient(1, x, target);
        ASSERT_EQ(grad.size(), 9u);
        auto loss = [&] {
            const double z = m.margin(1, x);
            const double s = 1.0 / (1.0 + std::exp(-z));
            return -(target * std::log(s) + (1 - target) * std::log(1 - s));
        };
        for (std::size_t i = 0; i < 9; ++i) {
            std::span<float> p = i < 8 ? m.weights(1).subspan(i, 1) : std::span<float>(&m.intercept(1), 1);
            const double num = central_diff(p, 0, loss);
            expect_close(grad[i], num, "ovr coord " + std::to_string(i));
        }
    }
}

TEST(OvrLogReg, SeparableClassesAreLearned) {
    std::mt19937_64 rng(17);
    std::vector<std::pair<std::vector<float>, std::string>> data;
    std::normal_distribution<float> g(0.0f, 0.1f);
    for (int i = 0; i < 100; ++i) {
        data.push_back({{1.0f + g(rng), g(rng)}, "left"});
        data.push_back({{-1.0f + g(rng), g(rng)}, "right"});
    }
    OvrLogisticRegression m(2, 0.1f);
    for (int pass = 0; pass < 20; ++pass) {
        for (const auto& [x, y] : data) m.update(x, y);
    }
    int right = 0;
    for (const auto& [x, y] : data) right += m.predict(x) == y;
    EXPECT_EQ(right, 200);
}

TEST(SeedTrain, DeterministicAndFitsSeedSet) {
    SyntheticSpec spec;
    spec.dim = 16;
    spec.num_classes = 5;
    spec.samples_per_class = 20;
    spec.noise_sigma = 0.1;
    const auto corpus = generate_synthetic(spec, 1);
    std::vector<ClassLabel> cls;
    for (std::size_t c = 0; c < 5; ++c) cls.push_back(synthetic_label(c));
    LinearHead h1(cls, 16), h2(cls, 16);
    seed_train(h1, corpus, 5, 0.05f, 3);
    seed_train(h2, corpus, 5, 0.05f, 3);
    EXPECT_TRUE(std::equal(h1.parameters().begin(), h1.parameters().end(), h2.parameters().begin()));
    int right = 0;
    for (const auto& e : corpus) right += linear_predict(h1, e.embedding.components()) == e.label;
    EXPECT_EQ(right, 100);
}
