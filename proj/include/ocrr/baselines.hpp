#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ocrr/corpus.hpp"
#include "ocrr/linear_head.hpp"
#include "ocrr/rng.hpp"
#include "ocrr/substrate.hpp"

namespace ocrr {

// ---- seed training -------------------------------------------------------

/// `epochs` shuffled passes of ce_sgd_step over the seed set.
void seed_train(LinearHead& head, std::span<const LabeledExample> seed_set, std::size_t epochs, float lr,
                std::uint64_t seed);

// ---- EWC -----------------------------------------------------------------

struct FisherDiagonal {
    std::vector<float> values;  // same layout as LinearHead::parameters()
};

/// Empirical diagonal Fisher: mean squared CE gradient over `n` seed samples
/// drawn without replacement (all of them if fewer).
FisherDiagonal fisher_estimate(const LinearHead& head, std::span<const LabeledExample> seed_samples, std::size_t n,
                               std::uint64_t seed);

/// Gradient of CE + (lambda/2) * sum F (theta - theta0)^2.
std::vector<float> ewc_gradient(const LinearHead& head, std::span<const float> x, std::size_t row, float lambda,
                                const FisherDiagonal& fisher, std::span<const float> theta0);

void ewc_step(LinearHead& head, std::span<const float> x, const ClassLabel& label, float lr, float lambda,
              const FisherDiagonal& fisher, std::span<const float> theta0);

// ---- A-GEM ---------------------------------------------------------------

struct MemoryBuffer {
    std::size_t capacity = 1000;
    std::size_t batch_size = 64;
    std::vector<LabeledExample> examples;

    /// Reservoir-samples up to `capacity` examples from `source` in order.
    void fill(std::span<const LabeledExample> source, std::uint64_t seed);
    /// Up to batch_size distinct examples chosen uniformly.
    std::vector<std::size_t> sample_batch(Rng& rng) const;
};

/// g' = g - (g.g_ref / g_ref.g_ref) g_ref when g.g_ref < 0, else g.
std::vector<float> agem_project(std::span<const float> g, std::span<const float> g_ref);

enum class AgemOutcome { plain, projected, empty_memory };

/// One A-GEM step; falls back to a plain CE step when the memory is empty.
AgemOutcome agem_step(LinearHead& head, std::span<const float> x, const ClassLabel& label, float lr,
                      const MemoryBuffer& memory, Rng& rng);

// ---- LwF -----------------------------------------------------------------

/// d/dz of CE(z, row) + lambda * T^2 * KL(softmax(z_t / T) || softmax(z / T)).
std::vector<float> lwf_logit_gradient(const LinearHead& head, const LinearHead& teacher, std::span<const float> x,
                                      std::size_t row, float lambda, float temperature);

void lwf_step(LinearHead& head, const LinearHead& teacher, std::span<const float> x, const ClassLabel& label,
              float lr, float lambda, float temperature);

// ---- kNN-LM hybrid -------------------------------------------------------

enum class KnnScore { max_similarity, sum_similarity };

struct HybridConfig {
    double lambda_knn = 0.5;
    double tau = 0.1;
    std::size_t k = 5;
    KnnScore score = KnnScore::max_similarity;

    void validate() const;
};

struct LabeledHit {
    ClassLabel label;
    float similarity = 0.0f;
};

/// p(y|x) = lambda * p_knn(y|x) + (1 - lambda) * p_param(y|x) over the head's
/// classes. p_knn is a softmax of per-class scores / tau over the classes
/// present among the hits; absent classes get zero mass.
std::vector<double> knnlm_distribution(const LinearHead& head, std::span<const float> x,
                                       std::span<const LabeledHit> hits, const HybridConfig& config);

ClassLabel knnlm_predict(const LinearHead& head, const Substrate& datastore, std::span<const float> x,
                         const HybridConfig& config);
/// Same, with the datastore hits already retrieved.
ClassLabel knnlm_predict(const LinearHead& head, std::span<const float> x, std::span<const LabeledHit> hits,
                         const HybridConfig& config);

// ---- one-vs-rest online logistic regression ------------------------------

/// Independent binary logistic regressors, one per class, created the first
/// time a class is seen (as an online one-vs-rest wrapper does).
class OvrLogisticRegression {
public:
    OvrLogisticRegression(std::size_t dim, float lr = 0.01f);

    void update(std::span<const float> x, const ClassLabel& label);
    /// argmax of per-class sigmoid scores; ties to the earlier class.
    /// Throws NoEvidenceError before any update.
    ClassLabel predict(std::span<const float> x) const;

    std::size_t classes() const noexcept { return labels_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t parameter_count() const noexcept { return labels_.size() * (dim_ + 1); }
    const std::vector<ClassLabel>& labels() const noexcept { return labels_; }
    std::span<float> weights(std::size_t cls) noexcept { return {weights_.data() + cls * dim_, dim_}; }
    float& intercept(std::size_t cls) noexcept { return intercepts_[cls]; }

    double margin(std::size_t cls, std::span<const float> x) const;
    /// Gradient of binary CE for one regressor: (sigmoid(m) - target) * [x, 1].
    std::vector<float> regressor_gradient(std::size_t cls, std::span<const float> x, float target) const;

private:
    std::size_t ensure_class(const ClassLabel& label);

    std::size_t dim_;
    float lr_;
    std::vector<ClassLabel> labels_;
    std::vector<float> weights_;
    std::vector<float> intercepts_;
};

}  // namespace ocrr
