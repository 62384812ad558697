#include "ocrr/linear_head.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ocrr/embedding.hpp"

namespace ocrr {

LinearHead::LinearHead(std::vector<ClassLabel> class_order, std::size_t dim)
    : class_order_(std::move(class_order)), dim_(dim), params_(class_order_.size() * (dim + 1), 0.0f) {
    if (class_order_.empty() || dim == 0) {
        throw std::invalid_argument("linear head needs at least one class and a positive dim");
    }
    for (std::size_t i = 0; i < class_order_.size(); ++i) {
        if (!rows_.emplace(class_order_[i], i).second) {
            throw std::invalid_argument("duplicate class '" + class_order_[i] + "'");
        }
    }
}

std::optional<std::size_t> LinearHead::row_of(const ClassLabel& label) const {
    auto it = rows_.find(label);
    if (it == rows_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t LinearHead::require_row(const ClassLabel& label) const {
    auto r = row_of(label);
    if (!r) {
        throw std::invalid_argument("label '" + label + "' is not a head output");
    }
    return *r;
}

std::vector<float> LinearHead::logits(std::span<const float> x) const {
    if (x.size() != dim_) {
        throw std::invalid_argument("input dim mismatch");
    }
    std::vector<float> z(classes());
    const auto b = bias();
    for (std::size_t c = 0; c < classes(); ++c) {
        z[c] = dot(params_.data() + c * dim_, x.data(), dim_) + b[c];
    }
    return z;
}

void softmax_in_place(std::span<float> z) {
    if (z.empty()) {
        return;
    }
    const float m = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (float& v : z) {
        const double e = std::exp(static_cast<double>(v) - m);
        v = static_cast<float>(e);
        total += e;
    }
    for (float& v : z) {
        v = static_cast<float>(v / total);
    }
}

std::size_t argmax_row(const LinearHead& head, std::span<const float> x, std::span<const bool> allowed) {
    const auto z = head.logits(x);
    std::size_t best = z.size();
    for (std::size_t c = 0; c < z.size(); ++c) {
        if (!allowed.empty() && !allowed[c]) {
            continue;
        }
        if (best == z.size() || z[c] > z[best]) {
            best = c;
        }
    }
    if (best == z.size()) {
        throw NoEvidenceError("no admissible output rows");
    }
    return best;
}

ClassLabel linear_predict(const LinearHead& head, std::span<const float> x) {
    return head.class_order()[argmax_row(head, x)];
}

std::vector<float> ce_logit_gradient(const LinearHead& head, std::span<const float> x, std::size_t row) {
    auto dz = head.logits(x);
    softmax_in_place(dz);
    dz[row] -= 1.0f;
    return dz;
}

std::vector<float> outer_gradient(const LinearHead& head, std::span<const float> dz, std::span<const float> x) {
    const std::size_t d = head.dim();
    std::vector<float> g(head.parameter_count());
    for (std::size_t c = 0; c < head.classes(); ++c) {
        float* row = g.data() + c * d;
        for (std::size_t j = 0; j < d; ++j) {
            row[j] = dz[c] * x[j];
        }
        g[head.classes() * d + c] = dz[c];
    }
    return g;
}

std::vector<float> ce_gradient(const LinearHead& head, std::span<const float> x, std::size_t row) {
    return outer_gradient(head, ce_logit_gradient(head, x, row), x);
}

void apply_logit_gradient(LinearHead& head, std::span<const float> dz, std::span<const float> x, float lr) {
    const std::size_t d = head.dim();
    auto w = head.weights();
    auto b = head.bias();
    for (std::size_t c = 0; c < head.classes(); ++c) {
        const float s = lr * dz[c];
        if (s == 0.0f) {
            continue;
        }
        float* row = w.data() + c * d;
        for (std::size_t j = 0; j < d; ++j) {
            row[j] -= s * x[j];
        }
        b[c] -= s;
    }
}

void apply_gradient(LinearHead& head, std::span<const float> grad, float lr) {
    auto p = head.parameters();
    if (grad.size() != p.size()) {
        throw std::invalid_argument("gradient size mismatch");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] -= lr * grad[i];
    }
}

void ce_sgd_step(LinearHead& head, std::span<const float> x, const ClassLabel& label, float lr) {
    const auto dz = ce_logit_gradient(head, x, head.require_row(label));
    apply_logit_gradient(head, dz, x, lr);
}

}  // namespace ocrr
