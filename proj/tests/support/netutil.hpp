#pragma once

// Shared helpers for building small test networks and loss closures.

#include <functional>
#include <vector>

#include "misgrad/linalg.hpp"
#include "misgrad/net.hpp"

namespace netutil {

using misgrad::Activation;
using misgrad::LossKind;
using misgrad::Network;
using misgrad::Rng;
using misgrad::Vec;

// Loss of one sample as a pure function of the flat parameter vector; used to
// drive the finite-difference oracle without touching backprop.
inline std::function<double(const Vec&)> loss_of_params(Network net, Vec x, Vec y) {
    return [net, x, y](const Vec& params) mutable {
        net.set_params(params);
        const Vec out = misgrad::forward(net, x);
        double l = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double d = out[i] - y[i];
            l += d * d;
        }
        return l;
    };
}

inline std::function<double(const Vec&)> ce_loss_of_params(Network net, Vec x, int y) {
    return [net, x, y](const Vec& params) mutable {
        net.set_params(params);
        const Vec z = misgrad::forward(net, x);
        double zmax = z[0];
        for (double v : z) zmax = std::max(zmax, v);
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        return std::log(sum) - (z[static_cast<std::size_t>(y)] - zmax);
    };
}

struct Arch {
    const char* name;
    int input;
    std::vector<int> hidden;
    int output;
    Activation act;
    int posenc;
};

inline std::vector<Arch> test_architectures() {
    return {
        {"linear", 3, {}, 1, Activation::identity, 0},
        {"relu-mlp", 4, {8, 6}, 3, Activation::relu, 0},
        {"deep-relu", 2, {16, 16, 8}, 2, Activation::relu, 0},
        {"sine-coord", 2, {12, 12}, 3, Activation::sine, 3},
        {"identity-deep", 3, {5, 5}, 2, Activation::identity, 0},
    };
}

} // namespace netutil
