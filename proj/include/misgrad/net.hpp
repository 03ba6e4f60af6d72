#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "misgrad/errors.hpp"
#include "misgrad/linalg.hpp"

namespace misgrad {

enum class Activation { identity, relu, sine };
enum class LossKind { mse, cross_entropy };

// Dense layer computing act(pre_scale * (W x + b)). pre_scale is 1 except on
// a sine first layer, which uses the SIREN frequency factor.
struct Layer {
    Mat w; // out x in
    Vec b; // out
    Activation act = Activation::identity;
    double pre_scale = 1.0;

    int in_dim() const { return w.cols; }
    int out_dim() const { return w.rows; }
};

// Per-coordinate positional encoding: each input coordinate x becomes
// [x, sin(2^k pi x), cos(2^k pi x)] for k = 0..freqs-1.
inline Vec positional_encoding(const Vec& x, int freqs) {
    if (freqs <= 0) return x;
    Vec out;
    out.reserve(x.size() * (1 + 2 * static_cast<std::size_t>(freqs)));
    constexpr double pi = 3.14159265358979323846;
    for (double v : x) {
        out.push_back(v);
        double f = pi;
        for (int k = 0; k < freqs; ++k) {
            out.push_back(std::sin(f * v));
            out.push_back(std::cos(f * v));
            f *= 2.0;
        }
    }
    return out;
}

struct Network {
    std::vector<Layer> layers;
    int raw_input_dim = 0; // before positional encoding
    int posenc_freqs = 0;

    int input_dim() const { return layers.front().in_dim(); }
    int output_dim() const { return layers.back().out_dim(); }

    int param_count() const {
        int p = 0;
        for (const Layer& l : layers) p += l.out_dim() * l.in_dim() + l.out_dim();
        return p;
    }

    // Flattening walks the layers in order, W row-major then b. set_params is
    // the exact inverse, so flatten/unflatten round-trips bit for bit.
    Vec params() const {
        Vec p;
        p.reserve(static_cast<std::size_t>(param_count()));
        for (const Layer& l : layers) {
            p.insert(p.end(), l.w.data.begin(), l.w.data.end());
            p.insert(p.end(), l.b.begin(), l.b.end());
        }
        return p;
    }

    void set_params(const Vec& p) {
        if (static_cast<int>(p.size()) != param_count())
            throw ShapeMismatch("set_params: expected " + std::to_string(param_count()) + " values");
        std::size_t at = 0;
        for (Layer& l : layers) {
            std::copy(p.begin() + at, p.begin() + at + l.w.data.size(), l.w.data.begin());
            at += l.w.data.size();
            std::copy(p.begin() + at, p.begin() + at + l.b.size(), l.b.begin());
            at += l.b.size();
        }
    }
};

// Fully-connected network. Hidden layers use hidden_act, the output layer is
// linear. With sine activations the first layer carries the SIREN factor.
inline Network make_mlp(int input_dim, const std::vector<int>& hidden, int output_dim,
                        Activation hidden_act, int posenc_freqs, Rng& rng) {
    Network net;
    net.raw_input_dim = input_dim;
    net.posenc_freqs = posenc_freqs;
    int in = posenc_freqs > 0 ? input_dim * (1 + 2 * posenc_freqs) : input_dim;
    std::vector<int> widths = hidden;
    widths.push_back(output_dim);
    for (std::size_t i = 0; i < widths.size(); ++i) {
        Layer l;
        l.w = Mat(widths[i], in);
        l.b = Vec(widths[i], 0.0);
        l.act = i + 1 == widths.size() ? Activation::identity : hidden_act;
        if (i == 0 && l.act == Activation::sine) l.pre_scale = 30.0;
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& v : l.w.data) v = bound * (2.0 * rng.uniform() - 1.0);
        for (double& v : l.b) v = bound * (2.0 * rng.uniform() - 1.0);
        net.layers.push_back(std::move(l));
        in = widths[i];
    }
    return net;
}

namespace detail {

inline double activate(Activation a, double u) {
    switch (a) {
        case Activation::identity: return u;
        case Activation::relu: return u > 0.0 ? u : 0.0;
        case Activation::sine: return std::sin(u);
    }
    return u;
}

inline double activate_grad(Activation a, double u) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return u > 0.0 ? 1.0 : 0.0;
        case Activation::sine: return std::cos(u);
    }
    return 1.0;
}

// Forward pass keeping pre-activations and activations for backprop.
struct Trace {
    std::vector<Vec> inputs; // activation entering each layer (inputs[0] = encoded x)
    std::vector<Vec> pre;    // scaled pre-activation u per layer
    Vec output;
};

inline Trace forward_trace(const Network& net, const Vec& x) {
    if (static_cast<int>(x.size()) != net.raw_input_dim)
        throw ShapeMismatch("forward: input length mismatch");
    Trace t;
    t.inputs.reserve(net.layers.size());
    t.pre.reserve(net.layers.size());
    Vec a = positional_encoding(x, net.posenc_freqs);
    for (const Layer& l : net.layers) {
        t.inputs.push_back(a);
        Vec u(l.out_dim());
        for (int i = 0; i < l.out_dim(); ++i) {
            double s = l.b[i];
            const double* wrow = &l.w.data[static_cast<std::size_t>(i) * l.in_dim()];
            for (int j = 0; j < l.in_dim(); ++j) s += wrow[j] * a[j];
            u[i] = l.pre_scale * s;
        }
        Vec next(l.out_dim());
        for (int i = 0; i < l.out_dim(); ++i) next[i] = activate(l.act, u[i]);
        t.pre.push_back(std::move(u));
        a = std::move(next);
    }
    t.output = std::move(a);
    return t;
}

} // namespace detail

inline Vec forward(const Network& net, const Vec& x) { return detail::forward_trace(net, x).output; }

// Numerically stable softmax (max subtraction).
inline Vec softmax(const Vec& z) {
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    Vec s(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        s[i] = std::exp(z[i] - zmax);
        sum += s[i];
    }
    for (double& v : s) v /= sum;
    return s;
}

// One sample's contribution: loss value, gradient with respect to every
// parameter (flatten order), and the loss gradient at the network output.
struct SampleGrad {
    double loss = 0.0;
    Vec param_grad;
    Vec output_grad;
    int index = -1;
};

namespace detail {

inline SampleGrad backward_from_output(const Network& net, const Trace& trace, double loss,
                                       Vec output_grad, int index) {
    SampleGrad sg;
    sg.loss = loss;
    sg.output_grad = std::move(output_grad);
    sg.index = index;
    sg.param_grad.assign(static_cast<std::size_t>(net.param_count()), 0.0);

    // Offsets of each layer's W block in the flat parameter vector.
    std::vector<std::size_t> offset(net.layers.size());
    std::size_t at = 0;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        offset[l] = at;
        at += net.layers[l].w.data.size() + net.layers[l].b.size();
    }

    Vec da = sg.output_grad; // dL/da for the current layer
    for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
        const Layer& layer = net.layers[static_cast<std::size_t>(l)];
        const Vec& u = trace.pre[static_cast<std::size_t>(l)];
        const Vec& in = trace.inputs[static_cast<std::size_t>(l)];
        // dL/d(Wx+b) = dL/da * act'(u) * pre_scale
        Vec g(layer.out_dim());
        for (int i = 0; i < layer.out_dim(); ++i)
            g[i] = da[i] * activate_grad(layer.act, u[i]) * layer.pre_scale;

        double* wg = &sg.param_grad[offset[static_cast<std::size_t>(l)]];
        double* bg = wg + layer.w.data.size();
        for (int i = 0; i < layer.out_dim(); ++i) {
            const double gi = g[i];
            double* wrow = wg + static_cast<std::size_t>(i) * layer.in_dim();
            for (int j = 0; j < layer.in_dim(); ++j) wrow[j] = gi * in[j];
            bg[i] = gi;
        }
        if (l > 0) {
            Vec prev(layer.in_dim(), 0.0);
            for (int i = 0; i < layer.out_dim(); ++i) {
                const double gi = g[i];
                const double* wrow = &layer.w.data[static_cast<std::size_t>(i) * layer.in_dim()];
                for (int j = 0; j < layer.in_dim(); ++j) prev[j] += wrow[j] * gi;
            }
            da = std::move(prev);
        }
    }
    return sg;
}

} // namespace detail

// Squared-error loss, summed over output coordinates.
inline SampleGrad per_sample_backward(const Network& net, const Vec& x, const Vec& y, LossKind loss,
                                      int index = -1) {
    if (loss != LossKind::mse) throw InvalidTarget("vector target requires mse loss");
    if (y.size() != static_cast<std::size_t>(net.output_dim()))
        throw ShapeMismatch("per_sample_backward: target length mismatch");
    detail::Trace t = detail::forward_trace(net, x);
    double l = 0.0;
    Vec og(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = t.output[i] - y[i];
        l += d * d;
        og[i] = 2.0 * d;
    }
    return detail::backward_from_output(net, t, l, std::move(og), index);
}

// Categorical cross entropy with softmax applied to the network output.
inline SampleGrad per_sample_backward(const Network& net, const Vec& x, int y, LossKind loss,
                                      int index = -1) {
    if (loss != LossKind::cross_entropy) throw InvalidTarget("class target requires cross_entropy loss");
    if (y < 0 || y >= net.output_dim()) throw InvalidTarget("class index out of range");
    detail::Trace t = detail::forward_trace(net, x);
    const Vec& z = t.output;
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double l = std::log(sum) - (z[static_cast<std::size_t>(y)] - zmax);
    Vec og = softmax(z);
    og[static_cast<std::size_t>(y)] -= 1.0;
    return detail::backward_from_output(net, t, l, std::move(og), index);
}

inline void sgd_step(Network& net, const Vec& grad, double lr) {
    if (static_cast<int>(grad.size()) != net.param_count())
        throw ShapeMismatch("sgd_step: gradient length mismatch");
    if (!all_finite(grad)) throw NonFiniteGradient("sgd_step: non-finite gradient");
    Vec p = net.params();
    axpy(-lr, grad, p);
    net.set_params(p);
}

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Vec m, v;
    long t = 0;
};

inline void adam_step(Network& net, const Vec& grad, AdamState& state, const AdamHyper& hyper) {
    const std::size_t p = static_cast<std::size_t>(net.param_count());
    if (grad.size() != p) throw ShapeMismatch("adam_step: gradient length mismatch");
    if (!all_finite(grad)) throw NonFiniteGradient("adam_step: non-finite gradient");
    if (state.m.size() != p) {
        state.m.assign(p, 0.0);
        state.v.assign(p, 0.0);
        state.t = 0;
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
    Vec params = net.params();
    for (std::size_t i = 0; i < p; ++i) {
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grad[i];
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
    net.set_params(params);
}

// Checkpoint format: one text header line "MISGRAD1 <P>" followed by P
// little-endian 64-bit floats in flatten order.
inline void save_checkpoint(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_checkpoint: cannot open " + path);
    const Vec p = net.params();
    out << "MISGRAD1 " << p.size() << "\n";
    for (double v : p) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
        out.write(bytes, 8);
    }
}

inline Vec load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_checkpoint: cannot open " + path);
    std::string magic;
    std::size_t count = 0;
    in >> magic >> count;
    if (magic != "MISGRAD1" || !in) throw Error("load_checkpoint: bad header in " + path);
    in.get(); // newline
    Vec p(count);
    for (std::size_t i = 0; i < count; ++i) {
        char bytes[8];
        in.read(bytes, 8);
        if (!in) throw Error("load_checkpoint: truncated payload in " + path);
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[k])) << (8 * k);
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        p[i] = v;
    }
    return p;
}

} // namespace misgrad
