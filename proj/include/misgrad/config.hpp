#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "misgrad/errors.hpp"
#include "misgrad/trainers.hpp"

namespace misgrad {

// ---------------------------------------------------------------------------
// Enum <-> string
// ---------------------------------------------------------------------------

inline std::string to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::uniform: return "uniform";
        case EstimatorKind::exact: return "exact";
        case EstimatorKind::is: return "is";
        case EstimatorKind::as: return "as";
        case EstimatorKind::balance_mis: return "balance_mis";
        case EstimatorKind::omis: return "omis";
    }
    return "?";
}

inline EstimatorKind estimator_from_string(const std::string& s) {
    if (s == "uniform") return EstimatorKind::uniform;
    if (s == "exact") return EstimatorKind::exact;
    if (s == "is") return EstimatorKind::is;
    if (s == "as") return EstimatorKind::as;
    if (s == "balance_mis") return EstimatorKind::balance_mis;
    if (s == "omis") return EstimatorKind::omis;
    throw ConfigParse("estimator: unknown value '" + s + "'");
}

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw ConfigParse("optimizer: unknown value '" + s + "'");
}

inline std::string to_string(MetricKind k) {
    switch (k) {
        case MetricKind::output_grad_norm: return "output_grad_norm";
        case MetricKind::per_node_grads: return "per_node_grads";
        case MetricKind::cross_entropy_closed_form: return "cross_entropy_closed_form";
        case MetricKind::loss_value: return "loss_value";
        case MetricKind::param_group_grads: return "param_group_grads";
    }
    return "?";
}

inline MetricKind metric_from_string(const std::string& s) {
    if (s == "output_grad_norm") return MetricKind::output_grad_norm;
    if (s == "per_node_grads") return MetricKind::per_node_grads;
    if (s == "cross_entropy_closed_form") return MetricKind::cross_entropy_closed_form;
    if (s == "loss_value") return MetricKind::loss_value;
    if (s == "param_group_grads") return MetricKind::param_group_grads;
    throw ConfigParse("metric: unknown value '" + s + "'");
}

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::sine: return "sine";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "sine") return Activation::sine;
    throw ConfigParse("net.activation: unknown value '" + s + "'");
}

inline std::string to_string(EpsilonPolicy::Mode m) {
    switch (m) {
        case EpsilonPolicy::Mode::relative: return "relative";
        case EpsilonPolicy::Mode::fixed: return "fixed";
        case EpsilonPolicy::Mode::none: return "none";
    }
    return "?";
}

inline EpsilonPolicy::Mode epsilon_mode_from_string(const std::string& s) {
    if (s == "relative") return EpsilonPolicy::Mode::relative;
    if (s == "fixed") return EpsilonPolicy::Mode::fixed;
    if (s == "none") return EpsilonPolicy::Mode::none;
    throw ConfigParse("epsilon.mode: unknown value '" + s + "'");
}

inline std::string to_string(ImportanceInit i) {
    return i == ImportanceInit::sgd_epoch ? "sgd_epoch" : "frozen_uniform";
}

inline ImportanceInit importance_init_from_string(const std::string& s) {
    if (s == "sgd_epoch") return ImportanceInit::sgd_epoch;
    if (s == "frozen_uniform") return ImportanceInit::frozen_uniform;
    throw ConfigParse("importance.init: unknown value '" + s + "'");
}

// ---------------------------------------------------------------------------
// Flat JSON config with dotted keys
// ---------------------------------------------------------------------------

namespace detail {

struct ConfigReader {
    const nlohmann::json& j;
    std::set<std::string> seen;

    bool has(const std::string& key) {
        seen.insert(key);
        return j.contains(key);
    }

    template <typename T>
    void read(const std::string& key, T& out, const char* type_name) {
        if (!has(key)) return;
        try {
            out = j.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigParse("key '" + key + "': expected " + type_name);
        }
    }

    void read_string(const std::string& key, std::string& out) { read(key, out, "a string"); }
    void read_int(const std::string& key, int& out) { read(key, out, "an integer"); }
    void read_long(const std::string& key, long& out) { read(key, out, "an integer"); }
    void read_u64(const std::string& key, std::uint64_t& out) { read(key, out, "an integer"); }
    void read_double(const std::string& key, double& out) { read(key, out, "a number"); }
    void read_bool(const std::string& key, bool& out) { read(key, out, "a boolean"); }
    void read_ints(const std::string& key, std::vector<int>& out) { read(key, out, "an integer array"); }

    void reject_unknown() const {
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!seen.count(it.key())) throw ConfigParse("unknown key '" + it.key() + "'");
    }
};

// Per-task defaults land before explicit keys override them. Estimator
// defaults that depend on the task (learning rate, metric, batch shape) live
// here so a minimal config is runnable.
inline void apply_task_defaults(TrainConfig& cfg) {
    const bool mis = is_mis_estimator(cfg.estimator);
    if (cfg.task.rfind("poly", 0) == 0) {
        if (cfg.task.size() > 4) {
            try {
                cfg.poly_order = std::stoi(cfg.task.substr(4));
            } catch (...) {
                throw ConfigParse("task: bad polynomial order in '" + cfg.task + "'");
            }
        }
        cfg.batch_size = 32;
        cfg.epochs = 125;
        cfg.lr = 0.05;
        cfg.hidden = {};
        cfg.hidden_act = Activation::identity;
        cfg.metric = mis ? MetricKind::param_group_grads : MetricKind::output_grad_norm;
        cfg.techniques = mis ? 4 : 1;
    } else if (cfg.task == "toy2d") {
        cfg.batch_size = 32;
        cfg.epochs = 60;
        cfg.lr = 3e-3;
        cfg.hidden = {32, 32};
        cfg.hidden_act = Activation::relu;
        cfg.metric = mis ? MetricKind::per_node_grads : MetricKind::cross_entropy_closed_form;
        cfg.techniques = mis ? 3 : 1;
    } else if (cfg.task == "image") {
        cfg.batch_size = 256;
        cfg.epochs = 500;
        cfg.lr = 2e-3;
        cfg.hidden = {48, 48, 48, 48};
        cfg.hidden_act = Activation::sine;
        cfg.posenc_freqs = 4;
        cfg.metric = mis ? MetricKind::per_node_grads : MetricKind::output_grad_norm;
        cfg.techniques = mis ? 3 : 1;
    } else if (cfg.task == "idx") {
        cfg.batch_size = 32;
        cfg.epochs = 20;
        cfg.lr = 1e-3;
        cfg.hidden = {64, 32};
        cfg.hidden_act = Activation::relu;
        cfg.metric = mis ? MetricKind::per_node_grads : MetricKind::cross_entropy_closed_form;
        cfg.techniques = mis ? 2 : 1;
    } else {
        throw ConfigParse("task: unknown value '" + cfg.task + "'");
    }
}

} // namespace detail

inline TrainConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigParse("config root must be a JSON object");
    detail::ConfigReader r{j, {}};

    TrainConfig cfg;
    std::string task = "poly6", estimator = "is";
    r.read_string("task", task);
    r.read_string("estimator", estimator);
    cfg.task = task;
    cfg.estimator = estimator_from_string(estimator);
    detail::apply_task_defaults(cfg);

    r.read_int("batch_size", cfg.batch_size);
    r.read_int("techniques", cfg.techniques);
    r.read_ints("technique_counts", cfg.technique_counts);
    r.read_double("momentum", cfg.momentum_m);
    r.read_double("beta", cfg.beta);
    std::string eps_mode = to_string(cfg.epsilon.mode);
    r.read_string("epsilon.mode", eps_mode);
    cfg.epsilon.mode = epsilon_mode_from_string(eps_mode);
    r.read_double("epsilon.value", cfg.epsilon.value);
    r.read_double("lr", cfg.lr);
    std::string optimizer = to_string(cfg.optimizer);
    r.read_string("optimizer", optimizer);
    cfg.optimizer = optimizer_from_string(optimizer);
    r.read_double("adam.beta1", cfg.adam_beta1);
    r.read_double("adam.beta2", cfg.adam_beta2);
    r.read_double("adam.eps", cfg.adam_eps);
    r.read_int("epochs", cfg.epochs);
    r.read_long("max_steps", cfg.max_steps);
    r.read_u64("seed", cfg.seed);
    std::string metric = to_string(cfg.metric);
    r.read_string("metric", metric);
    cfg.metric = metric_from_string(metric);
    r.read_ints("metric.node_subset", cfg.node_subset);
    r.read_bool("uniform.with_replacement", cfg.uniform_with_replacement);
    std::string init = to_string(cfg.importance_init);
    r.read_string("importance.init", init);
    cfg.importance_init = importance_init_from_string(init);
    r.read_bool("omis.bias_correction", cfg.omis_bias_correction);
    r.read_double("omis.ridge", cfg.omis_ridge);
    r.read_int("eval.every", cfg.eval_every);

    r.read_ints("net.hidden", cfg.hidden);
    std::string act = to_string(cfg.hidden_act);
    r.read_string("net.activation", act);
    cfg.hidden_act = activation_from_string(act);
    r.read_int("net.posenc_freqs", cfg.posenc_freqs);

    r.read_int("poly.order", cfg.poly_order);
    r.read_int("poly.points", cfg.poly_points);
    r.read_double("poly.noise_sd", cfg.poly_noise);
    r.read_double("poly.lo", cfg.poly_lo);
    r.read_double("poly.hi", cfg.poly_hi);
    r.read_int("toy.points", cfg.toy_points);
    r.read_string("image.path", cfg.image_path);
    r.read_int("image.resolution", cfg.image_resolution);
    r.read_string("idx.images", cfg.idx_images);
    r.read_string("idx.labels", cfg.idx_labels);
    r.read_string("idx.eval_images", cfg.idx_eval_images);
    r.read_string("idx.eval_labels", cfg.idx_eval_labels);
    r.read_int("idx.take", cfg.idx_take);
    r.read_int("idx.eval_take", cfg.idx_eval_take);

    r.reject_unknown();
    validate_config(cfg);
    if (cfg.task == "image" && cfg.image_path.empty()) throw ConfigInvalid("image.path is required");
    if (cfg.task == "idx" && (cfg.idx_images.empty() || cfg.idx_labels.empty()))
        throw ConfigInvalid("idx.images and idx.labels are required");
    return cfg;
}

// Serializes every effective field; parse(serialize(cfg)) reproduces cfg.
inline nlohmann::json config_to_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["task"] = cfg.task;
    j["estimator"] = to_string(cfg.estimator);
    j["batch_size"] = cfg.batch_size;
    j["techniques"] = cfg.techniques;
    if (!cfg.technique_counts.empty()) j["technique_counts"] = cfg.technique_counts;
    j["momentum"] = cfg.momentum_m;
    j["beta"] = cfg.beta;
    j["epsilon.mode"] = to_string(cfg.epsilon.mode);
    j["epsilon.value"] = cfg.epsilon.value;
    j["lr"] = cfg.lr;
    j["optimizer"] = to_string(cfg.optimizer);
    j["adam.beta1"] = cfg.adam_beta1;
    j["adam.beta2"] = cfg.adam_beta2;
    j["adam.eps"] = cfg.adam_eps;
    j["epochs"] = cfg.epochs;
    j["max_steps"] = cfg.max_steps;
    j["seed"] = cfg.seed;
    j["metric"] = to_string(cfg.metric);
    if (!cfg.node_subset.empty()) j["metric.node_subset"] = cfg.node_subset;
    j["uniform.with_replacement"] = cfg.uniform_with_replacement;
    j["importance.init"] = to_string(cfg.importance_init);
    j["omis.bias_correction"] = cfg.omis_bias_correction;
    j["omis.ridge"] = cfg.omis_ridge;
    j["eval.every"] = cfg.eval_every;
    j["net.hidden"] = cfg.hidden;
    j["net.activation"] = to_string(cfg.hidden_act);
    j["net.posenc_freqs"] = cfg.posenc_freqs;
    j["poly.order"] = cfg.poly_order;
    j["poly.points"] = cfg.poly_points;
    j["poly.noise_sd"] = cfg.poly_noise;
    j["poly.lo"] = cfg.poly_lo;
    j["poly.hi"] = cfg.poly_hi;
    j["toy.points"] = cfg.toy_points;
    j["image.path"] = cfg.image_path;
    j["image.resolution"] = cfg.image_resolution;
    j["idx.images"] = cfg.idx_images;
    j["idx.labels"] = cfg.idx_labels;
    j["idx.eval_images"] = cfg.idx_eval_images;
    j["idx.eval_labels"] = cfg.idx_eval_labels;
    j["idx.take"] = cfg.idx_take;
    j["idx.eval_take"] = cfg.idx_eval_take;
    return j;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigParse("cannot open config file " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigParse("config " + path + ": " + e.what());
    }
}

inline TrainConfig parse_config_file(const std::string& path) { return config_from_json(read_json_file(path)); }

} // namespace misgrad
