#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "misgrad/errors.hpp"
#include "misgrad/importance.hpp"
#include "misgrad/linalg.hpp"
#include "misgrad/net.hpp"

namespace misgrad {

// Per-step estimator telemetry.
struct EstimatorDiagnostics {
    std::string kind;
    double min_weight = 0.0; // smallest per-sample weight seen this step
    double max_weight = 0.0;
    double ridge_used = 0.0;
    double beta = 0.0;
    int techniques = 1;
    bool biased = false;
    double system_diag_ratio = 0.0; // max/min diagonal of the OMIS matrix
    // Smallest per-datum sampling probability seen this epoch (importance
    // trainers only); stays > 0 when the epsilon policy is active.
    double min_probability = std::numeric_limits<double>::quiet_NaN();
};

// All estimators below target the gradient of the dataset-total loss
// (the sum over all data of the per-sample loss). Trainers divide by the
// dataset size when they want the mean-loss gradient.
struct GradEstimate {
    Vec grad;
    EstimatorDiagnostics diag;
};

// Importance-sampled estimate from B i.i.d. draws of pdf p:
// grad = (1/B) * sum_i gradL(x_i) / p(x_i).
inline GradEstimate is_estimate(const std::vector<SampleGrad>& samples, const DiscretePdf& pdf, int B) {
    if (static_cast<int>(samples.size()) != B) throw ShapeMismatch("is_estimate: sample count != B");
    GradEstimate est;
    est.diag.kind = "is";
    est.diag.min_weight = std::numeric_limits<double>::infinity();
    est.grad.assign(samples.front().param_grad.size(), 0.0);
    for (const SampleGrad& sg : samples) {
        const double p = pdf.prob(sg.index);
        if (p <= 0.0) throw ZeroProbabilitySample("is_estimate: sampled datum has zero probability");
        const double w = 1.0 / (static_cast<double>(B) * p);
        axpy(w, sg.param_grad, est.grad);
        est.diag.min_weight = std::min(est.diag.min_weight, w);
        est.diag.max_weight = std::max(est.diag.max_weight, w);
    }
    return est;
}

// Adaptive-sampling variant: samples are drawn non-uniformly but each
// contribution is weighted as if drawn uniformly (the probability division is
// dropped). Biased unless the pdf is uniform; kept as a heuristic baseline.
inline GradEstimate as_estimate(const std::vector<SampleGrad>& samples, int B, int dataset_size) {
    if (static_cast<int>(samples.size()) != B) throw ShapeMismatch("as_estimate: sample count != B");
    GradEstimate est;
    est.diag.kind = "as";
    est.diag.biased = true;
    const double w = static_cast<double>(dataset_size) / static_cast<double>(B);
    est.diag.min_weight = est.diag.max_weight = w;
    est.grad.assign(samples.front().param_grad.size(), 0.0);
    for (const SampleGrad& sg : samples) axpy(w, sg.param_grad, est.grad);
    return est;
}

// Per-technique sample mass at datum x: S(x) = sum_k n_k p_k(x).
inline double technique_mass(int datum, const std::vector<DiscretePdf>& pdfs, const std::vector<int>& counts) {
    double s = 0.0;
    for (std::size_t k = 0; k < pdfs.size(); ++k) s += static_cast<double>(counts[k]) * pdfs[k].prob(datum);
    return s;
}

// Balance-heuristic weights w_j(x) = n_j p_j(x) / S(x); they sum to one.
inline Vec balance_weights(int datum, const std::vector<DiscretePdf>& pdfs, const std::vector<int>& counts) {
    const double s = technique_mass(datum, pdfs, counts);
    if (s <= 0.0) throw AllTechniquesZero("balance_weights: no technique can sample this datum");
    Vec w(pdfs.size());
    for (std::size_t j = 0; j < pdfs.size(); ++j)
        w[j] = static_cast<double>(counts[j]) * pdfs[j].prob(datum) / s;
    return w;
}

// Multi-technique estimate with balance-heuristic weighting, from exactly
// n_j samples of each technique j:
// grad = sum_j sum_i w_j(x_ij) * gradL(x_ij) / (n_j p_j(x_ij)).
inline GradEstimate balance_mis_estimate(const std::vector<std::vector<SampleGrad>>& per_technique,
                                         const std::vector<DiscretePdf>& pdfs,
                                         const std::vector<int>& counts) {
    const std::size_t techniques = pdfs.size();
    if (per_technique.size() != techniques || counts.size() != techniques)
        throw ShapeMismatch("balance_mis_estimate: technique count mismatch");
    GradEstimate est;
    est.diag.kind = "balance_mis";
    est.diag.techniques = static_cast<int>(techniques);
    est.diag.min_weight = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < techniques; ++j) {
        if (static_cast<int>(per_technique[j].size()) != counts[j])
            throw ShapeMismatch("balance_mis_estimate: stratified sample count mismatch");
        for (const SampleGrad& sg : per_technique[j]) {
            const double pj = pdfs[j].prob(sg.index);
            if (pj <= 0.0)
                throw ZeroProbabilitySample("balance_mis_estimate: drawing technique has zero probability");
            if (est.grad.empty()) est.grad.assign(sg.param_grad.size(), 0.0);
            const Vec w = balance_weights(sg.index, pdfs, counts);
            axpy(w[j] / (static_cast<double>(counts[j]) * pj), sg.param_grad, est.grad);
            for (double wj : w) {
                est.diag.min_weight = std::min(est.diag.min_weight, wj);
                est.diag.max_weight = std::max(est.diag.max_weight, wj);
            }
        }
    }
    return est;
}

// Momentum-accumulated estimates of the optimal-MIS linear system. a_hat is
// the J x J technique matrix, b_hat holds one length-J contribution vector
// per parameter dimension (stored as J x P so one factorization serves every
// right-hand side).
struct MisSystem {
    Mat a_hat;
    Mat b_hat;
    double beta = 0.7;
    std::vector<int> counts;
    long batches = 0;
    bool bias_correction = true;

    // Telemetry from the latest accumulation.
    double last_min_weight = 0.0;
    double last_max_weight = 0.0;

    MisSystem(int techniques, int param_dim, double beta_, std::vector<int> counts_)
        : a_hat(techniques, techniques), b_hat(techniques, param_dim), beta(beta_), counts(std::move(counts_)) {
        if (static_cast<int>(counts.size()) != techniques)
            throw ShapeMismatch("MisSystem: counts length != techniques");
        for (int n : counts)
            if (n < 1) throw ConfigInvalid("MisSystem: every technique needs at least one sample");
        if (!(beta >= 0.0 && beta < 1.0)) throw ConfigInvalid("MisSystem: beta must be in [0,1)");
    }

    int techniques() const { return a_hat.rows; }
    int param_dim() const { return b_hat.cols; }
};

// Folds one stratified mini-batch into the system. Every sample x, whichever
// technique drew it, contributes with the weight vector v_j = p_j(x) / S(x):
//   a_hat += (1-beta) * v v^T         (after decaying the old state by beta)
//   b_hat += (1-beta) * gradL(x) v / S(x)
// These are unbiased one-sample estimates of the optimal-MIS system
// integrals, so the solved alpha sums to the gradient estimate directly.
inline void omis_accumulate(MisSystem& sys, const std::vector<std::vector<SampleGrad>>& per_technique,
                            const std::vector<DiscretePdf>& pdfs) {
    const int techniques = sys.techniques();
    if (static_cast<int>(per_technique.size()) != techniques || static_cast<int>(pdfs.size()) != techniques)
        throw ShapeMismatch("omis_accumulate: technique count mismatch");
    for (int j = 0; j < techniques; ++j)
        if (static_cast<int>(per_technique[j].size()) != sys.counts[j])
            throw ShapeMismatch("omis_accumulate: stratified sample count mismatch");

    const double keep = sys.beta;
    const double blend = 1.0 - sys.beta;
    for (double& v : sys.a_hat.data) v *= keep;
    for (double& v : sys.b_hat.data) v *= keep;
    ++sys.batches;
    sys.last_min_weight = std::numeric_limits<double>::infinity();
    sys.last_max_weight = 0.0;

    Vec v(static_cast<std::size_t>(techniques));
    for (int j = 0; j < techniques; ++j) {
        for (const SampleGrad& sg : per_technique[j]) {
            const double pj = pdfs[static_cast<std::size_t>(j)].prob(sg.index);
            if (pj <= 0.0)
                throw ZeroProbabilitySample("omis_accumulate: drawing technique has zero probability");
            const double s = technique_mass(sg.index, pdfs, sys.counts);
            for (int k = 0; k < techniques; ++k) v[static_cast<std::size_t>(k)] = pdfs[static_cast<std::size_t>(k)].prob(sg.index) / s;

            const double balance_j = static_cast<double>(sys.counts[j]) * v[static_cast<std::size_t>(j)];
            sys.last_min_weight = std::min(sys.last_min_weight, balance_j);
            sys.last_max_weight = std::max(sys.last_max_weight, balance_j);

            for (int r = 0; r < techniques; ++r)
                for (int c = 0; c < techniques; ++c)
                    sys.a_hat(r, c) += blend * v[static_cast<std::size_t>(r)] * v[static_cast<std::size_t>(c)];
            for (int r = 0; r < techniques; ++r) {
                const double f = blend * v[static_cast<std::size_t>(r)] / s;
                if (f == 0.0) continue;
                double* row = &sys.b_hat.data[static_cast<std::size_t>(r) * sys.b_hat.cols];
                for (int p = 0; p < sys.b_hat.cols; ++p) row[p] += f * sg.param_grad[static_cast<std::size_t>(p)];
            }
        }
    }
}

// Solves the accumulated system once per parameter dimension through a shared
// factorization and sums the technique coefficients into the estimate.
//
// ridge < 0 selects the automatic policy: factor without regularization
// first, then walk a x10 ridge ladder starting at 1e-8 * trace/J until the
// factorization both succeeds and is acceptably conditioned. Overlapping
// techniques leave a_hat near rank-deficient, where an unregularized solve
// amplifies sampling noise into the estimate; the conditioning cap pulls
// those solves toward the technique-mixture behavior instead.
inline GradEstimate omis_estimate(const MisSystem& sys, double ridge = -1.0) {
    if (sys.batches == 0) throw Error("omis_estimate: nothing accumulated");
    const int techniques = sys.techniques();

    // EMA bias correction; scales both sides equally, so the solution is
    // unchanged, but the stored system keeps its running-average meaning.
    double corr = 1.0;
    if (sys.bias_correction && sys.beta > 0.0)
        corr = 1.0 / (1.0 - std::pow(sys.beta, static_cast<double>(sys.batches)));

    Mat a = sys.a_hat;
    for (double& x : a.data) x *= corr;

    std::optional<Cholesky> ch;
    double ridge_used = 0.0;
    if (ridge >= 0.0) {
        ch = Cholesky::factor(a, ridge);
        ridge_used = ridge;
        if (!ch) {
            ridge_used = ridge > 0.0 ? 10.0 * ridge : 1e-10 * a.trace() / techniques;
            ch = Cholesky::factor(a, ridge_used);
        }
    } else {
        constexpr double cond_cap = 1e8;
        ch = Cholesky::factor(a, 0.0);
        if (!ch || ch->pivot_ratio_sq() > cond_cap) {
            ch.reset();
            for (double r = 1e-8 * a.trace() / techniques; r <= a.trace() + 1e-300; r *= 10.0) {
                auto attempt = Cholesky::factor(a, r);
                if (attempt && attempt->pivot_ratio_sq() <= cond_cap) {
                    ch = std::move(attempt);
                    ridge_used = r;
                    break;
                }
            }
        }
    }
    if (!ch) throw SingularSystem("omis_estimate: system singular after ridge escalation");

    GradEstimate est;
    est.grad.assign(static_cast<std::size_t>(sys.param_dim()), 0.0);
    Vec rhs(static_cast<std::size_t>(techniques));
    for (int p = 0; p < sys.param_dim(); ++p) {
        for (int j = 0; j < techniques; ++j) rhs[static_cast<std::size_t>(j)] = corr * sys.b_hat(j, p);
        const Vec alpha = ch->solve(rhs);
        double sum = 0.0;
        for (double v : alpha) sum += v;
        est.grad[static_cast<std::size_t>(p)] = sum;
    }

    est.diag.kind = "omis";
    est.diag.techniques = techniques;
    est.diag.beta = sys.beta;
    est.diag.ridge_used = ridge_used;
    est.diag.min_weight = sys.last_min_weight;
    est.diag.max_weight = sys.last_max_weight;
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
    for (int j = 0; j < techniques; ++j) {
        dmin = std::min(dmin, a(j, j));
        dmax = std::max(dmax, a(j, j));
    }
    est.diag.system_diag_ratio = dmin > 0.0 ? dmax / dmin : std::numeric_limits<double>::infinity();
    return est;
}

} // namespace misgrad
