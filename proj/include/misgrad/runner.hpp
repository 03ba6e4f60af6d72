#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "misgrad/config.hpp"
#include "misgrad/errors.hpp"
#include "misgrad/tasks.hpp"
#include "misgrad/trainers.hpp"
#include "misgrad/version.hpp"

namespace misgrad {

// ---------------------------------------------------------------------------
// Dataset and network construction from a config
// ---------------------------------------------------------------------------

struct TaskData {
    Dataset train;
    std::optional<Dataset> eval; // empty: evaluate on the training data
};

inline TaskData build_task(const TrainConfig& cfg) {
    TaskData td;
    if (cfg.task.rfind("poly", 0) == 0) {
        td.train = gen_polynomial(cfg.poly_order, cfg.poly_points, cfg.poly_lo, cfg.poly_hi,
                                  cfg.poly_noise, cfg.seed)
                       .data;
    } else if (cfg.task == "toy2d") {
        td.train = gen_toy_classification(cfg.toy_points, cfg.seed);
        td.eval = gen_toy_classification(std::max(cfg.toy_points / 2, 3), cfg.seed + 1);
    } else if (cfg.task == "image") {
        td.train = load_image_regression(cfg.image_path, cfg.image_resolution);
    } else if (cfg.task == "idx") {
        td.train = load_idx_subset(cfg.idx_images, cfg.idx_labels, cfg.idx_take, cfg.seed);
        if (!cfg.idx_eval_images.empty())
            td.eval = load_idx_subset(cfg.idx_eval_images, cfg.idx_eval_labels, cfg.idx_eval_take,
                                      cfg.seed + 1);
    } else {
        throw ConfigInvalid("unknown task '" + cfg.task + "'");
    }
    return td;
}

inline Network build_network(const TrainConfig& cfg, const Dataset& train) {
    Rng rng(cfg.seed, 0xA11CE);
    return make_mlp(train.input_dim(), cfg.hidden, train.target_dim(), cfg.hidden_act,
                    cfg.posenc_freqs, rng);
}

// ---------------------------------------------------------------------------
// Metrics files
// ---------------------------------------------------------------------------

inline std::string metrics_header(const TrainConfig& cfg, const Dataset& train) {
    std::ostringstream out;
    out << "# misgrad task=" << train.name << " estimator=" << to_string(cfg.estimator)
        << " seed=" << cfg.seed << "\n";
    out << "epoch,wall_ms,train_loss,eval_loss,eval_error\n";
    return out.str();
}

inline std::string metrics_row(const EpochLog& log) {
    std::ostringstream out;
    out << log.epoch << ',' << std::setprecision(17) << log.wall_ms << ',' << log.train_loss << ','
        << log.eval_loss << ',' << log.eval_error << "\n";
    return out.str();
}

struct MetricsFile {
    std::string task;
    std::string estimator;
    std::uint64_t seed = 0;
    std::vector<EpochLog> rows;
};

inline MetricsFile read_metrics_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open metrics file " + path);
    MetricsFile mf;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# misgrad ", 0) != 0)
        throw Error("metrics file " + path + " is missing its header");
    std::istringstream meta(line.substr(10));
    std::string field;
    while (meta >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "task") mf.task = value;
        if (key == "estimator") mf.estimator = value;
        if (key == "seed") mf.seed = std::stoull(value);
    }
    std::getline(in, line); // column header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        // Manual field split: stream extraction rejects "nan".
        std::vector<std::string> parts;
        std::istringstream row(line);
        std::string field;
        while (std::getline(row, field, ',')) parts.push_back(field);
        if (parts.size() != 5) break; // keep the parseable prefix
        EpochLog log;
        char* end = nullptr;
        log.epoch = static_cast<int>(std::strtol(parts[0].c_str(), &end, 10));
        if (end == parts[0].c_str()) break;
        bool ok = true;
        double* slots[4] = {&log.wall_ms, &log.train_loss, &log.eval_loss, &log.eval_error};
        for (int i = 0; i < 4; ++i) {
            *slots[i] = std::strtod(parts[static_cast<std::size_t>(i) + 1].c_str(), &end);
            if (end == parts[static_cast<std::size_t>(i) + 1].c_str()) ok = false;
        }
        if (!ok) break;
        mf.rows.push_back(log);
    }
    return mf;
}

// ---------------------------------------------------------------------------
// run / sweep
// ---------------------------------------------------------------------------

struct RunResult {
    std::filesystem::path dir;
    std::filesystem::path metrics_path;
    TrainConfig cfg;
    std::vector<EpochLog> logs;
};

inline std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

inline std::filesystem::path unique_run_dir(const TrainConfig& cfg, const std::string& base) {
    namespace fs = std::filesystem;
    const fs::path root = base.empty() ? fs::path("runs") : fs::path(base);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    for (int salt = 0;; ++salt) {
        std::ostringstream name;
        name << cfg.task << '-' << to_string(cfg.estimator) << "-s" << cfg.seed << '-' << ms;
        if (salt > 0) name << '.' << salt;
        const fs::path dir = root / name.str();
        if (!fs::exists(dir)) return dir;
    }
}

// Executes one training run: writes manifest.json up front, streams metric
// rows as epochs finish, and saves a final checkpoint.
inline RunResult run(const TrainConfig& cfg, const std::string& out_dir = "") {
    namespace fs = std::filesystem;
    validate_config(cfg);
    RunResult result;
    result.cfg = cfg;
    result.dir = out_dir.empty() ? unique_run_dir(cfg, "") : fs::path(out_dir);
    fs::create_directories(result.dir);

    TaskData td = build_task(cfg);
    Network net = build_network(cfg, td.train);
    TrainData data{&td.train, td.eval ? &*td.eval : nullptr};

    nlohmann::json manifest;
    manifest["config"] = config_to_json(cfg);
    manifest["version"] = MISGRAD_VERSION;
    manifest["seed"] = cfg.seed;
    manifest["started_at"] = iso_timestamp();
    manifest["out_dir"] = result.dir.string();
    manifest["dataset"] = td.train.manifest_line();
    {
        std::ofstream mout(result.dir / "manifest.json");
        mout << manifest.dump(2) << "\n";
    }

    result.metrics_path = result.dir / "metrics.csv";
    std::ofstream metrics(result.metrics_path);
    if (!metrics) throw Error("cannot write " + result.metrics_path.string());
    metrics << metrics_header(cfg, td.train);
    metrics.flush();

    result.logs = train(cfg, net, data, [&](const EpochLog& log) {
        metrics << metrics_row(log);
        metrics.flush();
    });

    save_checkpoint(net, (result.dir / "final.ckpt").string());
    return result;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareRow {
    std::string label;
    std::string estimator;
    double loss_at_equal_epoch = 0.0;
    double loss_at_equal_time = 0.0;
    int rank_epoch = 0;
    int rank_time = 0;
};

struct CompareTable {
    int equal_epoch = 0;
    double equal_time_ms = 0.0;
    std::vector<CompareRow> rows;
};

// Linear interpolation of eval loss against cumulative wall time.
inline double loss_at_time(const std::vector<EpochLog>& rows, double t_ms) {
    if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (t_ms <= rows.front().wall_ms) return rows.front().eval_loss;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (t_ms <= rows[i].wall_ms) {
            const double t0 = rows[i - 1].wall_ms, t1 = rows[i].wall_ms;
            const double f = t1 > t0 ? (t_ms - t0) / (t1 - t0) : 1.0;
            return rows[i - 1].eval_loss + f * (rows[i].eval_loss - rows[i - 1].eval_loss);
        }
    }
    return rows.back().eval_loss;
}

inline CompareTable compare(const std::vector<std::string>& paths) {
    if (paths.size() < 2) throw Error("compare needs at least two metrics files");
    std::vector<MetricsFile> files;
    for (const std::string& p : paths) {
        files.push_back(read_metrics_file(p));
        if (files.back().rows.empty()) throw Error("metrics file " + p + " has no rows");
        if (files.back().task != files.front().task)
            throw TaskMismatch("metrics files mix tasks '" + files.front().task + "' and '" +
                               files.back().task + "'");
    }

    CompareTable table;
    table.equal_epoch = files.front().rows.back().epoch;
    table.equal_time_ms = files.front().rows.back().wall_ms;
    for (const MetricsFile& f : files) {
        table.equal_epoch = std::min(table.equal_epoch, f.rows.back().epoch);
        table.equal_time_ms = std::min(table.equal_time_ms, f.rows.back().wall_ms);
    }

    for (std::size_t i = 0; i < files.size(); ++i) {
        CompareRow row;
        row.label = paths[i];
        row.estimator = files[i].estimator;
        row.loss_at_equal_epoch = files[i].rows.front().eval_loss;
        for (const EpochLog& log : files[i].rows)
            if (log.epoch <= table.equal_epoch) row.loss_at_equal_epoch = log.eval_loss;
        row.loss_at_equal_time = loss_at_time(files[i].rows, table.equal_time_ms);
        table.rows.push_back(row);
    }

    // Ranks, ties sharing a rank.
    auto assign_ranks = [&](auto value, auto rank_field) {
        std::vector<std::size_t> order(table.rows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return value(table.rows[a]) < value(table.rows[b]);
        });
        int rank = 0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (i == 0 || value(table.rows[order[i]]) > value(table.rows[order[i - 1]])) rank = static_cast<int>(i) + 1;
            table.rows[order[i]].*rank_field = rank;
        }
    };
    assign_ranks([](const CompareRow& r) { return r.loss_at_equal_epoch; }, &CompareRow::rank_epoch);
    assign_ranks([](const CompareRow& r) { return r.loss_at_equal_time; }, &CompareRow::rank_time);
    return table;
}

inline std::string format_compare(const CompareTable& table) {
    std::ostringstream out;
    out << "equal-epoch point: " << table.equal_epoch << ", equal-time point: " << table.equal_time_ms
        << " ms\n";
    out << std::left << std::setw(14) << "estimator" << std::setw(10) << "rank@ep" << std::setw(16)
        << "loss@epoch" << std::setw(10) << "rank@t" << std::setw(16) << "loss@time"
        << "file\n";
    for (const CompareRow& r : table.rows) {
        out << std::left << std::setw(14) << r.estimator << std::setw(10) << r.rank_epoch << std::setw(16)
            << std::setprecision(6) << r.loss_at_equal_epoch << std::setw(10) << r.rank_time
            << std::setw(16) << r.loss_at_equal_time << r.label << "\n";
    }
    return out.str();
}

} // namespace misgrad
