#pragma once

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ocrr/errors.hpp"

namespace ocrr {

/// C x d softmax-regression head with bias. Parameters live in one flat
/// buffer, weights row-major first and then the C biases, so gradients and
/// per-parameter state (Fisher, anchors) share the same layout.
class LinearHead {
public:
    LinearHead(std::vector<ClassLabel> class_order, std::size_t dim);

    std::size_t classes() const noexcept { return class_order_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    std::span<float> parameters() noexcept { return params_; }
    std::span<const float> parameters() const noexcept { return params_; }
    std::span<float> weights() noexcept { return {params_.data(), classes() * dim_}; }
    std::span<const float> weights() const noexcept { return {params_.data(), classes() * dim_}; }
    std::span<float> bias() noexcept { return {params_.data() + classes() * dim_, classes()}; }
    std::span<const float> bias() const noexcept { return {params_.data() + classes() * dim_, classes()}; }
    std::span<const float> row(std::size_t c) const noexcept { return {params_.data() + c * dim_, dim_}; }

    const std::vector<ClassLabel>& class_order() const noexcept { return class_order_; }
    std::optional<std::size_t> row_of(const ClassLabel& label) const;
    /// Throws std::invalid_argument for labels outside class_order.
    std::size_t require_row(const ClassLabel& label) const;

    std::vector<float> logits(std::span<const float> x) const;

private:
    std::vector<ClassLabel> class_order_;
    std::unordered_map<ClassLabel, std::size_t> rows_;
    std::size_t dim_;
    std::vector<float> params_;
};

/// Numerically stable in-place softmax (max-shifted, double accumulation).
void softmax_in_place(std::span<float> z);

/// argmax of W x + b, ties to the smaller row. `allowed` (if non-empty)
/// restricts the candidate rows.
std::size_t argmax_row(const LinearHead& head, std::span<const float> x, std::span<const bool> allowed = {});
ClassLabel linear_predict(const LinearHead& head, std::span<const float> x);

/// d(CE)/d(logits) = softmax(z) - onehot(row).
std::vector<float> ce_logit_gradient(const LinearHead& head, std::span<const float> x, std::size_t row);

/// Dense flat gradient of CE(W x + b, row) in the head's parameter layout.
std::vector<float> ce_gradient(const LinearHead& head, std::span<const float> x, std::size_t row);

/// Expands a logit gradient into the flat parameter layout: dW = dz x^T, db = dz.
std::vector<float> outer_gradient(const LinearHead& head, std::span<const float> dz, std::span<const float> x);

/// W -= lr * dz x^T, b -= lr * dz, without materializing the dense gradient.
void apply_logit_gradient(LinearHead& head, std::span<const float> dz, std::span<const float> x, float lr);
void apply_gradient(LinearHead& head, std::span<const float> grad, float lr);

/// One plain SGD step on softmax cross-entropy.
void ce_sgd_step(LinearHead& head, std::span<const float> x, const ClassLabel& label, float lr);

}  // namespace ocrr
