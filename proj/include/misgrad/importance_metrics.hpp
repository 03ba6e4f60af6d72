#pragma once

#include <cmath>
#include <vector>

#include "misgrad/errors.hpp"
#include "misgrad/linalg.hpp"
#include "misgrad/net.hpp"

namespace misgrad {

// How per-datum importance is derived from a sample's backward pass.
//
//   output_grad_norm          L2 norm of the loss gradient at the output layer
//   per_node_grads            signed output-layer gradient components (vector)
//   cross_entropy_closed_form softmax(z) - onehot(y) norm, no backprop needed
//   loss_value                the raw per-sample loss (baseline)
//   param_group_grads         L2 norms of J contiguous slices of the full
//                             parameter gradient; covers vector importance
//                             when the output layer has fewer nodes than
//                             requested techniques
enum class MetricKind {
    output_grad_norm,
    per_node_grads,
    cross_entropy_closed_form,
    loss_value,
    param_group_grads,
};

struct ImportanceMetric {
    MetricKind kind = MetricKind::output_grad_norm;
    std::vector<int> node_subset; // per_node_grads only; empty = all nodes
    int groups = 1;               // param_group_grads only
};

inline double output_grad_norm(const SampleGrad& sg) { return norm2(sg.output_grad); }

// Projection of the signed output-layer gradient onto a node subset.
inline Vec per_node_importances(const SampleGrad& sg, const std::vector<int>& subset) {
    if (subset.empty()) return sg.output_grad;
    Vec out;
    out.reserve(subset.size());
    for (int node : subset) {
        if (node < 0 || node >= static_cast<int>(sg.output_grad.size()))
            throw IndexOutOfRange("per_node_importances: node index out of range");
        out.push_back(sg.output_grad[static_cast<std::size_t>(node)]);
    }
    return out;
}

// Closed-form cross-entropy importance from logits alone: the L2 norm of
// softmax(z) minus the one-hot target.
inline double cross_entropy_importance(const Vec& logits, int target) {
    if (target < 0 || target >= static_cast<int>(logits.size()))
        throw InvalidTarget("cross_entropy_importance: class index out of range");
    Vec s = softmax(logits);
    s[static_cast<std::size_t>(target)] -= 1.0;
    return norm2(s);
}

inline double loss_importance(const SampleGrad& sg) { return sg.loss > 0.0 ? sg.loss : 0.0; }

// Boundaries of `groups` contiguous, near-equal slices of a length-p vector.
inline std::vector<int> param_group_bounds(int p, int groups) {
    std::vector<int> bounds(static_cast<std::size_t>(groups) + 1, 0);
    const int base = p / groups;
    const int extra = p % groups;
    for (int g = 0; g < groups; ++g) bounds[static_cast<std::size_t>(g) + 1] = bounds[g] + base + (g < extra ? 1 : 0);
    return bounds;
}

// Per-group L2 norms of the flattened parameter gradient.
inline Vec param_group_importances(const SampleGrad& sg, int groups) {
    const int p = static_cast<int>(sg.param_grad.size());
    if (groups < 1 || groups > p) throw IndexOutOfRange("param_group_importances: bad group count");
    const std::vector<int> bounds = param_group_bounds(p, groups);
    Vec out(static_cast<std::size_t>(groups), 0.0);
    for (int g = 0; g < groups; ++g) {
        double s = 0.0;
        for (int i = bounds[g]; i < bounds[static_cast<std::size_t>(g) + 1]; ++i)
            s += sg.param_grad[static_cast<std::size_t>(i)] * sg.param_grad[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(g)] = std::sqrt(s);
    }
    return out;
}

// Scalar importance for single-distribution sampling.
inline double scalar_importance(const ImportanceMetric& metric, const SampleGrad& sg) {
    switch (metric.kind) {
        case MetricKind::output_grad_norm: return output_grad_norm(sg);
        // For cross-entropy loss the output gradient is softmax - onehot, so
        // its norm equals the closed form.
        case MetricKind::cross_entropy_closed_form: return output_grad_norm(sg);
        case MetricKind::loss_value: return loss_importance(sg);
        default: throw Error("scalar_importance: metric is not scalar");
    }
}

// Vector importance for multi-distribution sampling; length J.
inline Vec vector_importance(const ImportanceMetric& metric, const SampleGrad& sg) {
    switch (metric.kind) {
        case MetricKind::per_node_grads: return per_node_importances(sg, metric.node_subset);
        case MetricKind::param_group_grads: return param_group_importances(sg, metric.groups);
        default: throw Error("vector_importance: metric is not vector-valued");
    }
}

inline bool is_vector_metric(MetricKind kind) {
    return kind == MetricKind::per_node_grads || kind == MetricKind::param_group_grads;
}

} // namespace misgrad
