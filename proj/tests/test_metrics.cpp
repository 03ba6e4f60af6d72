#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "misgrad/importance_metrics.hpp"
#include "misgrad/net.hpp"
#include "support/netutil.hpp"
#include "support/oracles.hpp"

using namespace misgrad;

TEST_CASE("output_grad_norm basics") {
    SampleGrad sg;
    sg.output_grad = {0.5, -0.5};
    CHECK(output_grad_norm(sg) == doctest::Approx(0.70710678).epsilon(1e-8));
    sg.output_grad = {0.0, 0.0, 0.0};
    CHECK(output_grad_norm(sg) == 0.0);
}

TEST_CASE("output_grad_norm tracks the full gradient norm (rank correlation)") {
    // On a 2-D three-class task the output-layer gradient norm should order
    // samples roughly like the full parameter gradient norm does.
    Rng rng(31);
    Network net = make_mlp(2, {16}, 3, Activation::relu, 0, rng);
    Vec out_norms, full_norms;
    for (int i = 0; i < 200; ++i) {
        Vec x{rng.uniform(), rng.uniform()};
        const int y = static_cast<int>(rng.below(3));
        SampleGrad sg = per_sample_backward(net, x, y, LossKind::cross_entropy);
        out_norms.push_back(output_grad_norm(sg));
        full_norms.push_back(norm2(sg.param_grad));
    }
    CHECK(oracle::rank_correlation(out_norms, full_norms) > 0.5);
}

TEST_CASE("per_node_importances: projection and MSE closed form") {
    SampleGrad sg;
    sg.output_grad = {1.5, -2.0, 0.25};
    Vec proj = per_node_importances(sg, {0, 2});
    CHECK(proj == Vec{1.5, 0.25});
    CHECK(per_node_importances(sg, {}) == sg.output_grad);
    CHECK_THROWS_AS(per_node_importances(sg, {3}), IndexOutOfRange);

    // Scalar MSE output: the single component is 2(m - y).
    Network net;
    net.raw_input_dim = 1;
    Layer l;
    l.w = Mat(1, 1);
    l.w(0, 0) = 1.0;
    l.b = {0.0};
    net.layers.push_back(l);
    SampleGrad s = per_sample_backward(net, Vec{0.7}, Vec{0.2}, LossKind::mse);
    Vec one = per_node_importances(s, {0});
    CHECK(one[0] == doctest::Approx(2.0 * (0.7 - 0.2)).epsilon(1e-14));
}

TEST_CASE("per_node_importances: RGB residual derivatives match finite differences") {
    Rng rng(12);
    Network net = make_mlp(2, {8}, 3, Activation::sine, 2, rng);
    Vec x{0.3, 0.6};
    Vec y{0.2, 0.9, 0.5};
    SampleGrad sg = per_sample_backward(net, x, y, LossKind::mse);
    Vec nodes = per_node_importances(sg, {0, 1, 2});

    // Independent: finite differences of the loss w.r.t. each output value.
    Vec m = forward(net, x);
    const double h = 1e-6;
    for (int c = 0; c < 3; ++c) {
        auto loss_at = [&](double mc) {
            double l = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double v = (k == c ? mc : m[static_cast<std::size_t>(k)]) - y[static_cast<std::size_t>(k)];
                l += v * v;
            }
            return l;
        };
        const double fd = (loss_at(m[static_cast<std::size_t>(c)] + h) - loss_at(m[static_cast<std::size_t>(c)] - h)) / (2.0 * h);
        CHECK(nodes[static_cast<std::size_t>(c)] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("cross_entropy_importance: closed form examples") {
    CHECK(cross_entropy_importance({0.0, 0.0}, 0) == doctest::Approx(0.70710678).epsilon(1e-8));

    // Confident, correct prediction: importance collapses toward zero.
    CHECK(cross_entropy_importance({30.0, 0.0, 0.0}, 0) < 1e-10);

    CHECK_THROWS_AS(cross_entropy_importance({0.0, 0.0}, 2), InvalidTarget);
    CHECK_THROWS_AS(cross_entropy_importance({0.0, 0.0}, -1), InvalidTarget);
}

TEST_CASE("cross_entropy_importance equals backprop output gradient norm") {
    Rng rng(303);
    Network net = make_mlp(3, {8}, 5, Activation::relu, 0, rng);
    for (int trial = 0; trial < 1000; ++trial) {
        Vec x{rng.normal(), rng.normal(), rng.normal()};
        const int y = static_cast<int>(rng.below(5));
        SampleGrad sg = per_sample_backward(net, x, y, LossKind::cross_entropy);
        const double closed = cross_entropy_importance(forward(net, x), y);
        CHECK(std::abs(closed - output_grad_norm(sg)) < 1e-10);
    }
}

TEST_CASE("cross_entropy_importance stays within [0, sqrt(2)]") {
    Rng rng(55);
    for (int trial = 0; trial < 2000; ++trial) {
        const int c = 2 + static_cast<int>(rng.below(9));
        Vec z(static_cast<std::size_t>(c));
        for (double& v : z) v = 50.0 * (2.0 * rng.uniform() - 1.0);
        const double q = cross_entropy_importance(z, static_cast<int>(rng.below(static_cast<std::uint32_t>(c))));
        CHECK(q >= 0.0);
        CHECK(q <= std::sqrt(2.0) + 1e-12);
    }
}

TEST_CASE("loss_importance") {
    SampleGrad sg;
    sg.loss = 0.0;
    CHECK(loss_importance(sg) == 0.0);
    sg.loss = 1.5;
    CHECK(loss_importance(sg) == 1.5);
    sg.loss = -0.25; // clamped
    CHECK(loss_importance(sg) == 0.0);

    // Ordering of importances equals ordering of (nonnegative) losses.
    Vec losses{0.3, 1.2, 0.0, 0.9};
    Vec imps;
    for (double l : losses) {
        SampleGrad s;
        s.loss = l;
        imps.push_back(loss_importance(s));
    }
    CHECK(oracle::rank_correlation(losses, imps) == doctest::Approx(1.0));
}

TEST_CASE("per-node importances over all nodes recover the output norm") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        SampleGrad sg;
        sg.output_grad.resize(1 + rng.below(6));
        for (double& v : sg.output_grad) v = rng.normal();
        Vec all = per_node_importances(sg, {});
        CHECK(std::abs(norm2(all) - output_grad_norm(sg)) < 1e-12);
    }
}

TEST_CASE("param_group_importances: slices cover the gradient exactly") {
    SampleGrad sg;
    sg.param_grad = {3.0, 4.0, -12.0, 0.0, 5.0};
    Vec g = param_group_importances(sg, 2);
    REQUIRE(g.size() == 2);
    CHECK(g[0] == doctest::Approx(13.0)); // sqrt(9+16+144)
    CHECK(g[1] == doctest::Approx(5.0));

    // Concatenated group norms preserve the total L2 norm.
    for (int groups = 1; groups <= 5; ++groups) {
        Vec v = param_group_importances(sg, groups);
        CHECK(norm2(v) == doctest::Approx(norm2(sg.param_grad)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(param_group_importances(sg, 6), IndexOutOfRange);
    CHECK_THROWS_AS(param_group_importances(sg, 0), IndexOutOfRange);
}

TEST_CASE("metric dispatch") {
    SampleGrad sg;
    sg.loss = 2.0;
    sg.output_grad = {0.6, -0.8};
    sg.param_grad = {1.0, 2.0, 2.0};

    ImportanceMetric m;
    m.kind = MetricKind::output_grad_norm;
    CHECK(scalar_importance(m, sg) == doctest::Approx(1.0));
    m.kind = MetricKind::cross_entropy_closed_form;
    CHECK(scalar_importance(m, sg) == doctest::Approx(1.0));
    m.kind = MetricKind::loss_value;
    CHECK(scalar_importance(m, sg) == 2.0);

    m.kind = MetricKind::per_node_grads;
    CHECK(vector_importance(m, sg) == sg.output_grad);
    m.kind = MetricKind::param_group_grads;
    m.groups = 3;
    CHECK(vector_importance(m, sg) == Vec{1.0, 2.0, 2.0});

    CHECK(is_vector_metric(MetricKind::per_node_grads));
    CHECK(!is_vector_metric(MetricKind::loss_value));
}
