#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "misgrad/errors.hpp"
#include "misgrad/estimators.hpp"
#include "misgrad/importance.hpp"
#include "misgrad/importance_metrics.hpp"
#include "misgrad/linalg.hpp"
#include "misgrad/net.hpp"
#include "misgrad/parallel.hpp"
#include "misgrad/tasks.hpp"

namespace misgrad {

enum class EstimatorKind { uniform, exact, is, as, balance_mis, omis };
enum class OptimizerKind { sgd, adam };
enum class ImportanceInit { sgd_epoch, frozen_uniform };

struct EpsilonPolicy {
    enum class Mode { relative, fixed, none };
    Mode mode = Mode::relative;
    double value = 0.01;

    double epsilon_for(const ImportanceTable& table) const {
        switch (mode) {
            case Mode::relative: return value * table.mean_abs();
            case Mode::fixed: return value;
            case Mode::none: return 0.0;
        }
        return 0.0;
    }
};

struct TrainConfig {
    std::string task = "poly";
    EstimatorKind estimator = EstimatorKind::is;
    int batch_size = 32;
    int techniques = 1;
    std::vector<int> technique_counts; // filled to an equal split when empty
    double momentum_m = 0.3;
    double beta = 0.7;
    EpsilonPolicy epsilon;
    double lr = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    int epochs = 20;
    long max_steps = 0; // 0 = bounded by epochs only
    std::uint64_t seed = 1;
    MetricKind metric = MetricKind::output_grad_norm;
    std::vector<int> node_subset; // optional explicit per-node subset
    bool uniform_with_replacement = false;
    ImportanceInit importance_init = ImportanceInit::sgd_epoch;
    bool omis_bias_correction = true;
    double omis_ridge = -1.0; // <0 = automatic escalation policy
    int eval_every = 1;

    // network
    std::vector<int> hidden;
    Activation hidden_act = Activation::relu;
    int posenc_freqs = 0;

    // task parameters
    int poly_order = 6;
    int poly_points = 256;
    double poly_noise = 0.25;
    double poly_lo = -2.0, poly_hi = 2.0;
    int toy_points = 512;
    std::string image_path;
    int image_resolution = 0;
    std::string idx_images, idx_labels, idx_eval_images, idx_eval_labels;
    int idx_take = 1024, idx_eval_take = 512;
};

inline bool is_mis_estimator(EstimatorKind k) {
    return k == EstimatorKind::balance_mis || k == EstimatorKind::omis;
}

// Equal split of B across J techniques; the first B % J techniques absorb
// the remainder.
inline std::vector<int> equal_counts(int batch, int techniques) {
    std::vector<int> counts(static_cast<std::size_t>(techniques), batch / techniques);
    for (int j = 0; j < batch % techniques; ++j) ++counts[static_cast<std::size_t>(j)];
    return counts;
}

inline void validate_config(const TrainConfig& cfg) {
    if (cfg.batch_size < 1) throw ConfigInvalid("B >= 1");
    if (cfg.epochs < 1) throw ConfigInvalid("epochs >= 1");
    if (cfg.max_steps < 0) throw ConfigInvalid("max_steps >= 0");
    if (cfg.techniques < 1) throw ConfigInvalid("J >= 1");
    if (!(cfg.momentum_m >= 0.0 && cfg.momentum_m < 1.0)) throw ConfigInvalid("momentum m in [0,1)");
    if (!(cfg.beta >= 0.0 && cfg.beta < 1.0)) throw ConfigInvalid("beta in [0,1)");
    if (!(cfg.lr > 0.0)) throw ConfigInvalid("lr > 0");
    if (cfg.eval_every < 1) throw ConfigInvalid("eval.every >= 1");
    if (cfg.epsilon.value < 0.0) throw ConfigInvalid("epsilon >= 0");
    if (is_mis_estimator(cfg.estimator)) {
        if (!is_vector_metric(cfg.metric))
            throw ConfigInvalid("multi-distribution estimators need a vector importance metric");
        if (!cfg.technique_counts.empty()) {
            if (static_cast<int>(cfg.technique_counts.size()) != cfg.techniques)
                throw ConfigInvalid("technique_counts length must equal J");
            int sum = 0;
            for (int n : cfg.technique_counts) {
                if (n < 1) throw ConfigInvalid("every n_j >= 1");
                sum += n;
            }
            if (sum != cfg.batch_size) throw ConfigInvalid("sum of n_j must equal B");
        } else if (cfg.batch_size < cfg.techniques) {
            throw ConfigInvalid("B must cover at least one sample per technique");
        }
        if (!cfg.node_subset.empty() && static_cast<int>(cfg.node_subset.size()) != cfg.techniques)
            throw ConfigInvalid("node subset size must equal J");
    } else {
        if (is_vector_metric(cfg.metric))
            throw ConfigInvalid("single-distribution estimators need a scalar importance metric");
    }
}

struct EpochLog {
    int epoch = 0;
    double wall_ms = 0.0; // cumulative training time, eval excluded
    long steps = 0;       // cumulative optimizer steps
    double train_loss = 0.0;
    double eval_loss = 0.0;
    double eval_error = std::numeric_limits<double>::quiet_NaN(); // classification only
    EstimatorDiagnostics diag;
};

struct TrainData {
    const Dataset* train = nullptr;
    const Dataset* eval = nullptr; // defaults to the training set
    const Dataset& eval_set() const { return *(eval ? eval : train); }
};

// Invoked right after each epoch's log row is finalized; lets callers stream
// metrics to disk while the run is still going.
using EpochObserver = std::function<void(const EpochLog&)>;

// Backward pass for one datum, dispatching on the task kind.
inline SampleGrad dataset_sample_grad(const Network& net, const Dataset& ds, int i) {
    if (ds.kind == TaskKind::classification)
        return per_sample_backward(net, ds.inputs[static_cast<std::size_t>(i)],
                                   ds.labels[static_cast<std::size_t>(i)], LossKind::cross_entropy, i);
    return per_sample_backward(net, ds.inputs[static_cast<std::size_t>(i)],
                               ds.targets[static_cast<std::size_t>(i)], LossKind::mse, i);
}

// Per-sample backward over a batch of dataset indices. Work may run on
// several threads; results land in draw order either way.
inline std::vector<SampleGrad> backward_batch(const Network& net, const Dataset& ds,
                                              const std::vector<int>& ids) {
    std::vector<SampleGrad> out(ids.size());
    parallel_for(static_cast<int>(ids.size()),
                 [&](int k) { out[static_cast<std::size_t>(k)] = dataset_sample_grad(net, ds, ids[static_cast<std::size_t>(k)]); });
    return out;
}

struct EvalResult {
    double loss = 0.0;
    double error_rate = std::numeric_limits<double>::quiet_NaN();
};

inline EvalResult evaluate(const Network& net, const Dataset& ds) {
    std::vector<double> losses(static_cast<std::size_t>(ds.size()), 0.0);
    std::vector<int> misses(static_cast<std::size_t>(ds.size()), 0);
    parallel_for(ds.size(), [&](int i) {
        const Vec out = forward(net, ds.inputs[static_cast<std::size_t>(i)]);
        if (ds.kind == TaskKind::classification) {
            const int y = ds.labels[static_cast<std::size_t>(i)];
            double zmax = out[0];
            int arg = 0;
            for (int c = 1; c < static_cast<int>(out.size()); ++c)
                if (out[static_cast<std::size_t>(c)] > zmax) {
                    zmax = out[static_cast<std::size_t>(c)];
                    arg = c;
                }
            double sum = 0.0;
            for (double v : out) sum += std::exp(v - zmax);
            losses[static_cast<std::size_t>(i)] = std::log(sum) - (out[static_cast<std::size_t>(y)] - zmax);
            misses[static_cast<std::size_t>(i)] = arg != y ? 1 : 0;
        } else {
            double l = 0.0;
            const Vec& y = ds.targets[static_cast<std::size_t>(i)];
            for (std::size_t c = 0; c < y.size(); ++c) {
                const double d = out[c] - y[c];
                l += d * d;
            }
            losses[static_cast<std::size_t>(i)] = l;
        }
    });
    EvalResult r;
    for (double l : losses) r.loss += l;
    r.loss /= ds.size();
    if (ds.kind == TaskKind::classification) {
        int m = 0;
        for (int v : misses) m += v;
        r.error_rate = static_cast<double>(m) / ds.size();
    }
    return r;
}

namespace detail {

struct Optimizer {
    OptimizerKind kind;
    double lr;
    AdamHyper hyper;
    AdamState state;

    explicit Optimizer(const TrainConfig& cfg) : kind(cfg.optimizer), lr(cfg.lr) {
        hyper.lr = cfg.lr;
        hyper.beta1 = cfg.adam_beta1;
        hyper.beta2 = cfg.adam_beta2;
        hyper.eps = cfg.adam_eps;
    }

    void step(Network& net, const Vec& grad) {
        if (kind == OptimizerKind::sgd)
            sgd_step(net, grad, lr);
        else
            adam_step(net, grad, state, hyper);
    }
};

struct Stopwatch {
    std::chrono::steady_clock::time_point begin = std::chrono::steady_clock::now();
    double take_ms() {
        const auto now = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(now - begin).count();
        begin = now;
        return ms;
    }
};

// Shared bookkeeping for one training run: cumulative wall time (eval
// excluded), per-epoch loss accumulation, the global step budget.
struct RunState {
    const TrainConfig& cfg;
    const TrainData& data;
    Network& net;
    Optimizer opt;
    Rng sample_rng;
    long steps_taken = 0;
    double wall_ms = 0.0;
    std::vector<EpochLog> logs;
    EvalResult last_eval;
    bool evaluated_once = false;
    EpochObserver observer;

    RunState(const TrainConfig& c, Network& n, const TrainData& d, EpochObserver obs = {})
        : cfg(c), data(d), net(n), opt(c), sample_rng(c.seed, 0x5A40), observer(std::move(obs)) {}

    bool budget_left() const { return cfg.max_steps == 0 || steps_taken < cfg.max_steps; }

    void finish_epoch(int epoch, double loss_sum, long loss_count, double epoch_ms,
                      const EstimatorDiagnostics& diag) {
        wall_ms += epoch_ms;
        EpochLog log;
        log.epoch = epoch;
        log.wall_ms = wall_ms;
        log.steps = steps_taken;
        log.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
        if (!evaluated_once || epoch % cfg.eval_every == 0 || !budget_left() ||
            epoch == cfg.epochs) {
            last_eval = evaluate(net, data.eval_set());
            evaluated_once = true;
        }
        log.eval_loss = last_eval.loss;
        log.eval_error = last_eval.error_rate;
        log.diag = diag;
        logs.push_back(log);
        if (observer) observer(logs.back());
    }

    // Applies a total-loss gradient estimate as a mean-loss step.
    void apply(const GradEstimate& est) {
        Vec grad = est.grad;
        scale(grad, 1.0 / data.train->size());
        opt.step(net, grad);
        ++steps_taken;
    }
};

inline double batch_loss_sum(const std::vector<SampleGrad>& sgs) {
    double s = 0.0;
    for (const SampleGrad& sg : sgs) s += sg.loss;
    return s;
}

// One uniform in-order pass over the data (the classical first epoch): a
// gradient step per batch, and the importance of every datum recorded exactly
// once from the already-computed backward results. The final batch absorbs
// the division remainder so coverage is complete in floor(N/B) steps.
template <typename Record>
void init_epoch_pass(RunState& rs, Record&& record) {
    const Dataset& ds = *rs.data.train;
    const int n = ds.size();
    const int steps = std::max(n / rs.cfg.batch_size, 1);
    Stopwatch watch;
    double loss_sum = 0.0;
    long loss_count = 0;
    EstimatorDiagnostics diag;
    diag.kind = "init";
    for (int t = 0; t < steps && rs.budget_left(); ++t) {
        const int begin = t * rs.cfg.batch_size;
        const int end = t + 1 == steps ? n : begin + rs.cfg.batch_size;
        std::vector<int> ids(static_cast<std::size_t>(end - begin));
        for (int i = begin; i < end; ++i) ids[static_cast<std::size_t>(i - begin)] = i;
        std::vector<SampleGrad> sgs = backward_batch(rs.net, ds, ids);
        Vec grad(static_cast<std::size_t>(rs.net.param_count()), 0.0);
        for (const SampleGrad& sg : sgs) axpy(1.0 / static_cast<double>(sgs.size()), sg.param_grad, grad);
        rs.opt.step(rs.net, grad);
        ++rs.steps_taken;
        for (const SampleGrad& sg : sgs) record(sg);
        loss_sum += batch_loss_sum(sgs);
        loss_count += static_cast<long>(sgs.size());
    }
    rs.finish_epoch(1, loss_sum, loss_count, watch.take_ms(), diag);
}

} // namespace detail

// Initialization pass for single-distribution importance sampling: one
// classical uniform epoch that also fills the scalar importance table.
inline ImportanceTable init_epoch_is(detail::RunState& rs, const ImportanceMetric& metric) {
    ImportanceTable table(rs.data.train->size(), 1, rs.cfg.momentum_m);
    detail::init_epoch_pass(rs, [&](const SampleGrad& sg) {
        table.set_initial(sg.index, scalar_importance(metric, sg));
    });
    return table;
}

// Initialization pass for multi-distribution sampling: stores the full
// importance vector per datum and, if a node subset must be chosen, tracks
// mean gradient magnitudes per output node to pick the strongest J.
inline ImportanceTable init_epoch_mis(detail::RunState& rs, ImportanceMetric& metric) {
    const int n = rs.data.train->size();
    const int width = metric.kind == MetricKind::per_node_grads ? rs.net.output_dim() : metric.groups;
    ImportanceTable table(n, width, rs.cfg.momentum_m);
    Vec node_mass(static_cast<std::size_t>(width), 0.0);
    ImportanceMetric full = metric;
    full.node_subset.clear(); // record all nodes during initialization
    detail::init_epoch_pass(rs, [&](const SampleGrad& sg) {
        const Vec v = vector_importance(full, sg);
        table.set_initial(sg.index, v);
        for (std::size_t k = 0; k < v.size(); ++k) node_mass[k] += std::abs(v[k]);
    });

    if (metric.kind == MetricKind::per_node_grads && width != rs.cfg.techniques) {
        std::vector<int> subset = metric.node_subset;
        if (subset.empty()) {
            // Highest mean |gradient| nodes carry the most signal.
            std::vector<int> order(static_cast<std::size_t>(width));
            for (int i = 0; i < width; ++i) order[static_cast<std::size_t>(i)] = i;
            std::stable_sort(order.begin(), order.end(),
                             [&](int a, int b) { return node_mass[static_cast<std::size_t>(a)] > node_mass[static_cast<std::size_t>(b)]; });
            subset.assign(order.begin(), order.begin() + rs.cfg.techniques);
            std::sort(subset.begin(), subset.end());
        }
        table.keep_columns(subset);
        metric.node_subset = subset;
    }
    return table;
}

namespace detail {

// Builds the importance metric a trainer actually uses, resolving defaults
// against the network shape.
inline ImportanceMetric resolve_metric(const TrainConfig& cfg, const Network& net) {
    ImportanceMetric metric;
    metric.kind = cfg.metric;
    metric.node_subset = cfg.node_subset;
    metric.groups = cfg.techniques;
    if (metric.kind == MetricKind::per_node_grads) {
        if (cfg.techniques > net.output_dim())
            throw ConfigInvalid("per-node importance needs J <= output width; use param_group_grads");
        if (cfg.techniques == net.output_dim()) metric.node_subset.clear();
    }
    return metric;
}

inline std::vector<int> resolve_counts(const TrainConfig& cfg) {
    return cfg.technique_counts.empty() ? equal_counts(cfg.batch_size, cfg.techniques)
                                        : cfg.technique_counts;
}

} // namespace detail

// Classical SGD baseline. Default is the conventional without-replacement
// epoch shuffle; with-replacement sampling through the categorical sampler is
// available for reduction checks against the importance-sampled paths.
inline std::vector<EpochLog> train_uniform(const TrainConfig& cfg, Network& net, const TrainData& data,
                                            EpochObserver observer = {}) {
    validate_config(cfg);
    detail::RunState rs(cfg, net, data, std::move(observer));
    const Dataset& ds = *data.train;
    const int n = ds.size();
    const int steps = std::max(n / cfg.batch_size, 1);
    const DiscretePdf uniform_pdf = DiscretePdf::uniform(static_cast<std::size_t>(n));
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;

    for (int epoch = 1; epoch <= cfg.epochs && rs.budget_left(); ++epoch) {
        detail::Stopwatch watch;
        double loss_sum = 0.0;
        long loss_count = 0;
        EstimatorDiagnostics diag;
        diag.kind = "uniform";
        if (!cfg.uniform_with_replacement)
            for (int i = n - 1; i > 0; --i)
                std::swap(perm[static_cast<std::size_t>(i)], perm[rs.sample_rng.below(static_cast<std::uint32_t>(i) + 1)]);
        for (int t = 0; t < steps && rs.budget_left(); ++t) {
            std::vector<int> ids;
            if (cfg.uniform_with_replacement) {
                ids = sample_with_replacement(uniform_pdf, cfg.batch_size, rs.sample_rng);
            } else {
                ids.assign(perm.begin() + static_cast<long>(t) * cfg.batch_size,
                           perm.begin() + static_cast<long>(t + 1) * cfg.batch_size);
            }
            std::vector<SampleGrad> sgs = backward_batch(net, ds, ids);
            GradEstimate est = is_estimate(sgs, uniform_pdf, cfg.batch_size);
            est.diag.kind = "uniform";
            rs.apply(est);
            loss_sum += detail::batch_loss_sum(sgs);
            loss_count += static_cast<long>(sgs.size());
            diag = est.diag;
        }
        rs.finish_epoch(epoch, loss_sum, loss_count, watch.take_ms(), diag);
    }
    return rs.logs;
}

// Full-batch gradient descent; each epoch is one exact step.
inline std::vector<EpochLog> train_exact(const TrainConfig& cfg, Network& net, const TrainData& data,
                                          EpochObserver observer = {}) {
    validate_config(cfg);
    detail::RunState rs(cfg, net, data, std::move(observer));
    const Dataset& ds = *data.train;
    std::vector<int> all(static_cast<std::size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) all[static_cast<std::size_t>(i)] = i;

    for (int epoch = 1; epoch <= cfg.epochs && rs.budget_left(); ++epoch) {
        detail::Stopwatch watch;
        std::vector<SampleGrad> sgs = backward_batch(net, ds, all);
        GradEstimate est;
        est.diag.kind = "exact";
        est.grad.assign(static_cast<std::size_t>(net.param_count()), 0.0);
        for (const SampleGrad& sg : sgs) axpy(1.0, sg.param_grad, est.grad);
        rs.apply(est);
        rs.finish_epoch(epoch, detail::batch_loss_sum(sgs), ds.size(), watch.take_ms(), est.diag);
    }
    return rs.logs;
}

// Importance-sampled SGD with a persistent scalar importance table: normalize
// to a pdf, draw the batch with replacement, weight contributions by their
// probability (unless running the biased adaptive-sampling variant), update
// the table with momentum, and widen it by epsilon at every epoch end.
inline std::vector<EpochLog> train_is(const TrainConfig& cfg, Network& net, const TrainData& data,
                                       EpochObserver observer = {}) {
    validate_config(cfg);
    detail::RunState rs(cfg, net, data, std::move(observer));
    const Dataset& ds = *data.train;
    const int n = ds.size();
    const int steps = std::max(n / cfg.batch_size, 1);
    ImportanceMetric metric = detail::resolve_metric(cfg, net);

    const bool frozen = cfg.importance_init == ImportanceInit::frozen_uniform;
    int first_epoch = 1;
    ImportanceTable table = [&] {
        if (frozen) {
            ImportanceTable t(n, 1, cfg.momentum_m);
            t.fill(1.0);
            return t;
        }
        first_epoch = 2; // epoch 1 is the initialization pass
        return init_epoch_is(rs, metric);
    }();

    for (int epoch = first_epoch; epoch <= cfg.epochs && rs.budget_left(); ++epoch) {
        detail::Stopwatch watch;
        double loss_sum = 0.0;
        long loss_count = 0;
        double min_prob = std::numeric_limits<double>::infinity();
        EstimatorDiagnostics diag;
        for (int t = 0; t < steps && rs.budget_left(); ++t) {
            const DiscretePdf pdf = table.normalize_scalar();
            for (double p : pdf.probs) min_prob = std::min(min_prob, p);
            const std::vector<int> ids = sample_with_replacement(pdf, cfg.batch_size, rs.sample_rng);
            std::vector<SampleGrad> sgs = backward_batch(net, ds, ids);
            GradEstimate est = cfg.estimator == EstimatorKind::as
                                   ? as_estimate(sgs, cfg.batch_size, n)
                                   : is_estimate(sgs, pdf, cfg.batch_size);
            rs.apply(est);
            if (!frozen)
                for (const SampleGrad& sg : sgs) table.update(sg.index, scalar_importance(metric, sg));
            loss_sum += detail::batch_loss_sum(sgs);
            loss_count += static_cast<long>(sgs.size());
            diag = est.diag;
        }
        if (!frozen) table.accumulate_epsilon(cfg.epsilon.epsilon_for(table));
        diag.min_probability = min_prob;
        rs.finish_epoch(epoch, loss_sum, loss_count, watch.take_ms(), diag);
    }
    return rs.logs;
}

// Multi-distribution SGD: one persistent importance vector per datum defines
// J categorical distributions; every step draws a stratified batch, combines
// the per-sample gradients either with balance-heuristic weights or through
// the momentum-accumulated optimal-weighting linear system, and refreshes the
// importance of the visited data.
inline std::vector<EpochLog> train_mis(const TrainConfig& cfg, Network& net, const TrainData& data,
                                        EpochObserver observer = {}) {
    validate_config(cfg);
    detail::RunState rs(cfg, net, data, std::move(observer));
    const Dataset& ds = *data.train;
    const int n = ds.size();
    const int steps = std::max(n / cfg.batch_size, 1);
    ImportanceMetric metric = detail::resolve_metric(cfg, net);
    const std::vector<int> counts = detail::resolve_counts(cfg);
    const int techniques = cfg.techniques;

    const bool frozen = cfg.importance_init == ImportanceInit::frozen_uniform;
    int first_epoch = 1;
    ImportanceTable table = [&] {
        if (frozen) {
            ImportanceTable t(n, techniques, cfg.momentum_m);
            t.fill(1.0);
            if (metric.kind == MetricKind::per_node_grads && metric.node_subset.empty() &&
                techniques < net.output_dim()) {
                metric.node_subset.resize(static_cast<std::size_t>(techniques));
                for (int j = 0; j < techniques; ++j) metric.node_subset[static_cast<std::size_t>(j)] = j;
            }
            return t;
        }
        first_epoch = 2;
        return init_epoch_mis(rs, metric);
    }();

    MisSystem sys(techniques, net.param_count(), cfg.beta, counts);
    sys.bias_correction = cfg.omis_bias_correction;

    for (int epoch = first_epoch; epoch <= cfg.epochs && rs.budget_left(); ++epoch) {
        detail::Stopwatch watch;
        double loss_sum = 0.0;
        long loss_count = 0;
        double min_prob = std::numeric_limits<double>::infinity();
        EstimatorDiagnostics diag;
        for (int t = 0; t < steps && rs.budget_left(); ++t) {
            std::vector<DiscretePdf> pdfs;
            pdfs.reserve(static_cast<std::size_t>(techniques));
            for (int j = 0; j < techniques; ++j) pdfs.push_back(table.normalize_technique(j));
            for (const DiscretePdf& pdf : pdfs)
                for (double p : pdf.probs) min_prob = std::min(min_prob, p);

            std::vector<std::vector<SampleGrad>> strat(static_cast<std::size_t>(techniques));
            for (int j = 0; j < techniques; ++j) {
                const std::vector<int> ids =
                    sample_with_replacement(pdfs[static_cast<std::size_t>(j)], counts[static_cast<std::size_t>(j)], rs.sample_rng);
                strat[static_cast<std::size_t>(j)] = backward_batch(net, ds, ids);
                if (!frozen)
                    for (const SampleGrad& sg : strat[static_cast<std::size_t>(j)])
                        table.update(sg.index, vector_importance(metric, sg));
                loss_sum += detail::batch_loss_sum(strat[static_cast<std::size_t>(j)]);
                loss_count += counts[static_cast<std::size_t>(j)];
            }

            GradEstimate est;
            if (cfg.estimator == EstimatorKind::balance_mis) {
                est = balance_mis_estimate(strat, pdfs, counts);
            } else {
                omis_accumulate(sys, strat, pdfs);
                est = omis_estimate(sys, cfg.omis_ridge);
            }
            rs.apply(est);
            diag = est.diag;
        }
        if (!frozen) table.accumulate_epsilon(cfg.epsilon.epsilon_for(table));
        diag.min_probability = min_prob;
        rs.finish_epoch(epoch, loss_sum, loss_count, watch.take_ms(), diag);
    }
    return rs.logs;
}

inline std::vector<EpochLog> train(const TrainConfig& cfg, Network& net, const TrainData& data,
                                   EpochObserver observer = {}) {
    switch (cfg.estimator) {
        case EstimatorKind::uniform: return train_uniform(cfg, net, data, std::move(observer));
        case EstimatorKind::exact: return train_exact(cfg, net, data, std::move(observer));
        case EstimatorKind::is:
        case EstimatorKind::as: return train_is(cfg, net, data, std::move(observer));
        case EstimatorKind::balance_mis:
        case EstimatorKind::omis: return train_mis(cfg, net, data, std::move(observer));
    }
    throw ConfigInvalid("unknown estimator");
}

} // namespace misgrad
