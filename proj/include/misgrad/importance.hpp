#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <ostream>
#include <vector>

#include "misgrad/errors.hpp"
#include "misgrad/linalg.hpp"

namespace misgrad {

// Normalized categorical distribution over dataset indices with a cumulative
// table for O(log N) inverse-CDF sampling.
struct DiscretePdf {
    std::vector<double> probs;
    std::vector<double> cumulative;

    // Normalizes absolute values of the weights. Throws AllZeroImportance
    // when every magnitude is zero.
    static DiscretePdf from_weights(const double* w, std::size_t n, std::size_t stride = 1) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += std::abs(w[i * stride]);
        if (total <= 0.0) throw AllZeroImportance("normalize: all importance magnitudes are zero");
        DiscretePdf pdf;
        pdf.probs.resize(n);
        pdf.cumulative.resize(n);
        double run = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            pdf.probs[i] = std::abs(w[i * stride]) / total;
            run += pdf.probs[i];
            pdf.cumulative[i] = run;
        }
        pdf.cumulative.back() = 1.0; // pin the tail against accumulated roundoff
        return pdf;
    }

    static DiscretePdf from_weights(const std::vector<double>& w) {
        return from_weights(w.data(), w.size());
    }

    static DiscretePdf uniform(std::size_t n) {
        std::vector<double> w(n, 1.0);
        return from_weights(w);
    }

    int size() const { return static_cast<int>(probs.size()); }
    double prob(int i) const { return probs[static_cast<std::size_t>(i)]; }

    int sample(Rng& rng) const {
        const double u = rng.uniform();
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        if (it == cumulative.end()) --it; // u == 1 cannot occur, but stay in range
        return static_cast<int>(it - cumulative.begin());
    }
};

inline std::vector<int> sample_with_replacement(const DiscretePdf& pdf, int count, Rng& rng) {
    std::vector<int> ids(static_cast<std::size_t>(count));
    for (int& id : ids) id = pdf.sample(rng);
    return ids;
}

// Persistent per-datum un-normalized importance. Scalar mode stores one value
// per datum; vector mode stores one value per technique. Vector entries may
// be signed; normalization consumes absolute values.
class ImportanceTable {
  public:
    ImportanceTable(int n, int width, double momentum)
        : n_(n), width_(width), momentum_(momentum), values_(static_cast<std::size_t>(n) * width, 0.0) {
        if (n < 1 || width < 1) throw Error("ImportanceTable: empty table");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("ImportanceTable: momentum must be in [0,1)");
        if (momentum > 0.3)
            std::cerr << "misgrad: importance momentum " << momentum
                      << " is above the recommended range [0,0.3]\n";
    }

    int size() const { return n_; }
    int width() const { return width_; }
    double momentum() const { return momentum_; }

    const double* row(int idx) const { return &values_[static_cast<std::size_t>(idx) * width_]; }

    // Overwrites without blending; used by the initialization epoch that
    // touches every datum exactly once.
    void set_initial(int idx, const double* v, int len) {
        check(idx, v, len);
        std::copy(v, v + len, &values_[static_cast<std::size_t>(idx) * width_]);
    }
    void set_initial(int idx, double v) { set_initial(idx, &v, 1); }
    void set_initial(int idx, const Vec& v) { set_initial(idx, v.data(), static_cast<int>(v.size())); }

    // Momentum blend: stored <- m * stored + (1 - m) * value, per component.
    void update(int idx, const double* v, int len) {
        check(idx, v, len);
        double* row = &values_[static_cast<std::size_t>(idx) * width_];
        for (int k = 0; k < len; ++k) row[k] = momentum_ * row[k] + (1.0 - momentum_) * v[k];
    }
    void update(int idx, double v) { update(idx, &v, 1); }
    void update(int idx, const Vec& v) { update(idx, v.data(), static_cast<int>(v.size())); }

    // Every stored magnitude grows by eps, keeping signs, so that every datum
    // keeps a strictly positive sampling probability.
    void accumulate_epsilon(double eps) {
        if (eps == 0.0) return;
        for (double& v : values_) v += v < 0.0 ? -eps : eps;
    }

    double mean_abs() const {
        double s = 0.0;
        for (double v : values_) s += std::abs(v);
        return s / static_cast<double>(values_.size());
    }

    DiscretePdf normalize_scalar() const {
        if (width_ != 1) throw Error("normalize_scalar: table is in vector mode");
        return DiscretePdf::from_weights(values_.data(), static_cast<std::size_t>(n_));
    }

    DiscretePdf normalize_technique(int j) const {
        if (j < 0 || j >= width_) throw IndexOutOfRange("normalize_technique: bad technique index");
        return DiscretePdf::from_weights(values_.data() + j, static_cast<std::size_t>(n_),
                                         static_cast<std::size_t>(width_));
    }

    // Keeps only the given columns, in order. Used after the initialization
    // epoch selects a node subset.
    void keep_columns(const std::vector<int>& cols) {
        std::vector<double> next(static_cast<std::size_t>(n_) * cols.size());
        for (int i = 0; i < n_; ++i)
            for (std::size_t c = 0; c < cols.size(); ++c) {
                if (cols[c] < 0 || cols[c] >= width_) throw IndexOutOfRange("keep_columns: bad column");
                next[static_cast<std::size_t>(i) * cols.size() + c] =
                    values_[static_cast<std::size_t>(i) * width_ + cols[c]];
            }
        values_ = std::move(next);
        width_ = static_cast<int>(cols.size());
    }

    void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

    // Debug dump, one line per datum: idx,importance[,q_1..q_J].
    void dump(std::ostream& out) const {
        for (int i = 0; i < n_; ++i) {
            const double* r = row(i);
            if (width_ == 1) {
                out << i << ',' << r[0] << '\n';
            } else {
                double norm = 0.0;
                for (int k = 0; k < width_; ++k) norm += r[k] * r[k];
                out << i << ',' << std::sqrt(norm);
                for (int k = 0; k < width_; ++k) out << ',' << r[k];
                out << '\n';
            }
        }
    }

  private:
    void check(int idx, const double* v, int len) const {
        if (idx < 0 || idx >= n_) throw IndexOutOfRange("importance update: index out of range");
        if (len != width_) throw ShapeMismatch("importance update: value width mismatch");
        for (int k = 0; k < len; ++k)
            if (!std::isfinite(v[k])) throw NonFiniteImportance("importance update: non-finite value");
    }

    int n_;
    int width_;
    double momentum_;
    std::vector<double> values_;
};

} // namespace misgrad
