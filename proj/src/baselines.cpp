#include "ocrr/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "ocrr/bounded_store.hpp"
#include "ocrr/embedding.hpp"

namespace ocrr {

void seed_train(LinearHead& head, std::span<const LabeledExample> seed_set, std::size_t epochs, float lr,
                std::uint64_t seed) {
    std::vector<std::size_t> order(seed_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> rows(seed_set.size());
    for (std::size_t i = 0; i < seed_set.size(); ++i) {
        rows[i] = head.require_row(seed_set[i].label);
    }
    Rng rng = make_rng(seed, "seed_train");
    for (std::size_t e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i : order) {
            const auto x = seed_set[i].embedding.components();
            apply_logit_gradient(head, ce_logit_gradient(head, x, rows[i]), x, lr);
        }
    }
}

FisherDiagonal fisher_estimate(const LinearHead& head, std::span<const LabeledExample> seed_samples, std::size_t n,
                               std::uint64_t seed) {
    std::vector<std::size_t> order(seed_samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed, "fisher_samples");
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(std::min(n, order.size()));

    const std::size_t C = head.classes();
    const std::size_t d = head.dim();
    std::vector<double> acc(head.parameter_count(), 0.0);
    for (std::size_t i : order) {
        const auto x = seed_samples[i].embedding.components();
        const auto dz = ce_logit_gradient(head, x, head.require_row(seed_samples[i].label));
        for (std::size_t c = 0; c < C; ++c) {
            const double dz2 = static_cast<double>(dz[c]) * dz[c];
            double* row = acc.data() + c * d;
            for (std::size_t j = 0; j < d; ++j) {
                row[j] += dz2 * x[j] * x[j];
            }
            acc[C * d + c] += dz2;
        }
    }
    FisherDiagonal f;
    f.values.resize(acc.size());
    const double denom = order.empty() ? 1.0 : static_cast<double>(order.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        f.values[i] = static_cast<float>(acc[i] / denom);
    }
    return f;
}

std::vector<float> ewc_gradient(const LinearHead& head, std::span<const float> x, std::size_t row, float lambda,
                                const FisherDiagonal& fisher, std::span<const float> theta0) {
    auto g = ce_gradient(head, x, row);
    const auto theta = head.parameters();
    if (fisher.values.size() != g.size() || theta0.size() != g.size()) {
        throw std::invalid_argument("EWC state does not match the head layout");
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += lambda * fisher.values[i] * (theta[i] - theta0[i]);
    }
    return g;
}

void ewc_step(LinearHead& head, std::span<const float> x, const ClassLabel& label, float lr, float lambda,
              const FisherDiagonal& fisher, std::span<const float> theta0) {
    const auto g = ewc_gradient(head, x, head.require_row(label), lambda, fisher, theta0);
    apply_gradient(head, g, lr);
}

void MemoryBuffer::fill(std::span<const LabeledExample> source, std::uint64_t seed) {
    examples.clear();
    if (capacity == 0) {
        return;
    }
    ReservoirSampler sampler(capacity, derive_seed(seed, "agem_memory"));
    for (const auto& ex : source) {
        if (auto slot = sampler.offer()) {
            if (*slot == examples.size()) {
                examples.push_back(ex);
            } else {
                examples[*slot] = ex;
            }
        }
    }
}

std::vector<std::size_t> MemoryBuffer::sample_batch(Rng& rng) const {
    std::vector<std::size_t> idx(examples.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t m = std::min(batch_size, idx.size());
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(m);
    return idx;
}

std::vector<float> agem_project(std::span<const float> g, std::span<const float> g_ref) {
    if (g.size() != g_ref.size()) {
        throw std::invalid_argument("A-GEM gradient size mismatch");
    }
    double gg = 0.0;
    double rr = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        gg += static_cast<double>(g[i]) * g_ref[i];
        rr += static_cast<double>(g_ref[i]) * g_ref[i];
    }
    std::vector<float> out(g.begin(), g.end());
    if (gg >= 0.0 || rr == 0.0) {
        return out;
    }
    const double scale = gg / rr;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(g[i] - scale * g_ref[i]);
    }
    return out;
}

AgemOutcome agem_step(LinearHead& head, std::span<const float> x, const ClassLabel& label, float lr,
                      const MemoryBuffer& memory, Rng& rng) {
    const std::size_t row = head.require_row(label);
    if (memory.examples.empty()) {
        apply_logit_gradient(head, ce_logit_gradient(head, x, row), x, lr);
        return AgemOutcome::empty_memory;
    }
    const auto g = ce_gradient(head, x, row);
    const auto batch = memory.sample_batch(rng);
    std::vector<float> g_ref(g.size(), 0.0f);
    const float inv = 1.0f / static_cast<float>(batch.size());
    const std::size_t C = head.classes();
    const std::size_t d = head.dim();
    for (std::size_t i : batch) {
        const auto& ex = memory.examples[i];
        const auto mx = ex.embedding.components();
        const auto dz = ce_logit_gradient(head, mx, head.require_row(ex.label));
        for (std::size_t c = 0; c < C; ++c) {
            const float s = dz[c] * inv;
            float* r = g_ref.data() + c * d;
            for (std::size_t j = 0; j < d; ++j) {
                r[j] += s * mx[j];
            }
            g_ref[C * d + c] += s;
        }
    }
    double gg = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        gg += static_cast<double>(g[i]) * g_ref[i];
    }
    if (gg >= 0.0) {
        apply_gradient(head, g, lr);
        return AgemOutcome::plain;
    }
    apply_gradient(head, agem_project(g, g_ref), lr);
    return AgemOutcome::projected;
}

std::vector<float> lwf_logit_gradient(const LinearHead& head, const LinearHead& teacher, std::span<const float> x,
                                      std::size_t row, float lambda, float temperature) {
    if (teacher.classes() != head.classes()) {
        throw std::invalid_argument("teacher and student heads differ in shape");
    }
    auto z = head.logits(x);
    auto zt = teacher.logits(x);
    std::vector<float> p(z);
    softmax_in_place(p);
    for (float& v : z) {
        v /= temperature;
    }
    for (float& v : zt) {
        v /= temperature;
    }
    softmax_in_place(z);   // student at temperature T
    softmax_in_place(zt);  // teacher at temperature T
    std::vector<float> dz(p.size());
    for (std::size_t c = 0; c < p.size(); ++c) {
        dz[c] = p[c] - (c == row ? 1.0f : 0.0f) + lambda * temperature * (z[c] - zt[c]);
    }
    return dz;
}

void lwf_step(LinearHead& head, const LinearHead& teacher, std::span<const float> x, const ClassLabel& label,
              float lr, float lambda, float temperature) {
    const auto dz = lwf_logit_gradient(head, teacher, x, head.require_row(label), lambda, temperature);
    apply_logit_gradient(head, dz, x, lr);
}

void HybridConfig::validate() const {
    if (!(lambda_knn >= 0.0 && lambda_knn <= 1.0)) {
        throw ConfigError("lambda_knn must be in [0, 1]");
    }
    if (!(tau > 0.0)) {
        throw ConfigError("tau must be > 0");
    }
    if (k < 1) {
        throw ConfigError("kNN-LM k must be >= 1");
    }
}

std::vector<double> knnlm_distribution(const LinearHead& head, std::span<const float> x,
                                       std::span<const LabeledHit> hits, const HybridConfig& config) {
    const std::size_t C = head.classes();
    std::vector<double> p_param(C);
    {
        const auto z = head.logits(x);
        const double m = *std::max_element(z.begin(), z.end());
        double total = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            p_param[c] = std::exp(static_cast<double>(z[c]) - m);
            total += p_param[c];
        }
        for (double& v : p_param) {
            v /= total;
        }
    }

    // Per-class score among the hits, keyed by head row.
    std::map<std::size_t, double> score;
    for (const auto& h : hits) {
        auto r = head.row_of(h.label);
        if (!r) {
            continue;
        }
        auto [it, fresh] = score.emplace(*r, h.similarity);
        if (!fresh) {
            it->second = config.score == KnnScore::max_similarity ? std::max(it->second, double{h.similarity})
                                                                  : it->second + h.similarity;
        }
    }
    std::vector<double> p_knn(C, 0.0);
    if (!score.empty()) {
        double m = -1e300;
        for (const auto& [r, s] : score) {
            m = std::max(m, s / config.tau);
        }
        double total = 0.0;
        for (const auto& [r, s] : score) {
            p_knn[r] = std::exp(s / config.tau - m);
            total += p_knn[r];
        }
        for (double& v : p_knn) {
            v /= total;
        }
    }
    std::vector<double> mix(C);
    for (std::size_t c = 0; c < C; ++c) {
        mix[c] = config.lambda_knn * p_knn[c] + (1.0 - config.lambda_knn) * p_param[c];
    }
    return mix;
}

ClassLabel knnlm_predict(const LinearHead& head, const Substrate& datastore, std::span<const float> x,
                         const HybridConfig& config) {
    std::vector<LabeledHit> hits;
    if (!datastore.ledger().empty()) {
        for (const Hit& h : datastore.retrieve(x, config.k)) {
            hits.push_back({datastore.ledger()[h.id].label, h.similarity});
        }
    }
    return knnlm_predict(head, x, hits, config);
}

ClassLabel knnlm_predict(const LinearHead& head, std::span<const float> x, std::span<const LabeledHit> hits,
                         const HybridConfig& config) {
    const auto p = knnlm_distribution(head, x, hits, config);
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    return head.class_order()[best];
}

OvrLogisticRegression::OvrLogisticRegression(std::size_t dim, float lr) : dim_(dim), lr_(lr) {
    if (dim == 0) {
        throw std::invalid_argument("dim must be positive");
    }
}

std::size_t OvrLogisticRegression::ensure_class(const ClassLabel& label) {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it != labels_.end()) {
        return static_cast<std::size_t>(it - labels_.begin());
    }
    labels_.push_back(label);
    weights_.resize(labels_.size() * dim_, 0.0f);
    intercepts_.push_back(0.0f);
    return labels_.size() - 1;
}

double OvrLogisticRegression::margin(std::size_t cls, std::span<const float> x) const {
    return static_cast<double>(dot(weights_.data() + cls * dim_, x.data(), dim_)) + intercepts_[cls];
}

std::vector<float> OvrLogisticRegression::regressor_gradient(std::size_t cls, std::span<const float> x,
                                                             float target) const {
    const double s = 1.0 / (1.0 + std::exp(-margin(cls, x)));
    const auto err = static_cast<float>(s - target);
    std::vector<float> g(dim_ + 1);
    for (std::size_t j = 0; j < dim_; ++j) {
        g[j] = err * x[j];
    }
    g[dim_] = err;
    return g;
}

void OvrLogisticRegression::update(std::span<const float> x, const ClassLabel& label) {
    if (x.size() != dim_) {
        throw std::invalid_argument("input dim mismatch");
    }
    const std::size_t truth = ensure_class(label);
    for (std::size_t c = 0; c < labels_.size(); ++c) {
        const auto g = regressor_gradient(c, x, c == truth ? 1.0f : 0.0f);
        float* w = weights_.data() + c * dim_;
        for (std::size_t j = 0; j < dim_; ++j) {
            w[j] -= lr_ * g[j];
        }
        intercepts_[c] -= lr_ * g[dim_];
    }
}

ClassLabel OvrLogisticRegression::predict(std::span<const float> x) const {
    if (labels_.empty()) {
        throw NoEvidenceError("one-vs-rest model has seen no classes");
    }
    std::size_t best = 0;
    double best_margin = margin(0, x);
    for (std::size_t c = 1; c < labels_.size(); ++c) {
        const double m = margin(c, x);
        if (m > best_margin) {
            best_margin = m;
            best = c;
        }
    }
    return labels_[best];
}

}  // namespace ocrr
