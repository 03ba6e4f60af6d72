// Command-line front end: run one configured training run, sweep several
// estimators on the same task, compare metric files, or generate synthetic
// IDX classification data.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "misgrad/config.hpp"
#include "misgrad/runner.hpp"
#include "misgrad/version.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void print_run_summary(const misgrad::RunResult& rr) {
    const auto& last = rr.logs.back();
    std::cout << "run " << rr.dir.string() << ": " << last.epoch << " epochs, " << last.steps
              << " steps, train_loss=" << last.train_loss << ", eval_loss=" << last.eval_loss;
    if (std::isfinite(last.eval_error)) std::cout << ", eval_error=" << last.eval_error;
    std::cout << "\n  metrics: " << rr.metrics_path.string() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"misgrad - importance-sampled and optimally-weighted multi-distribution "
                 "gradient estimation for small training experiments"};
    app.set_version_flag("--version", std::string(MISGRAD_VERSION));
    app.require_subcommand(1);
    app.footer("Per-sample backprop workers are capped by the MISGRAD_THREADS environment variable.");

    std::string config_path, out_dir;
    std::uint64_t seed = 0;

    CLI::App* cmd_run = app.add_subcommand("run", "execute one training run from a JSON config");
    cmd_run->add_option("--config", config_path, "flat JSON config file")->required();
    CLI::Option* run_seed = cmd_run->add_option("--seed", seed, "override the config seed");
    cmd_run->add_option("--out", out_dir, "output directory (default: unique dir under runs/)");

    std::string estimators_csv;
    std::string seeds_csv;
    CLI::App* cmd_sweep =
        app.add_subcommand("sweep", "run several estimators on the same task and compare them");
    cmd_sweep->add_option("--config", config_path, "flat JSON config file")->required();
    cmd_sweep->add_option("--estimators", estimators_csv, "comma-separated estimator list")->required();
    cmd_sweep->add_option("--seeds", seeds_csv, "comma-separated seed list (default: config seed)");
    cmd_sweep->add_option("--out", out_dir, "sweep output directory");

    std::vector<std::string> compare_files;
    CLI::App* cmd_compare = app.add_subcommand("compare", "rank metric files at equal epochs and time");
    cmd_compare->add_option("files", compare_files, "metrics.csv files of the same task")
        ->required()
        ->expected(2, -1);

    std::string gen_dir = "data";
    int gen_train = 8192, gen_test = 2048;
    std::uint64_t gen_seed = 7;
    CLI::App* cmd_gen =
        app.add_subcommand("gen-idx", "write synthetic glyph classification data in IDX format");
    cmd_gen->add_option("--out", gen_dir, "output directory (default: data/)");
    cmd_gen->add_option("--train", gen_train, "training sample count");
    cmd_gen->add_option("--test", gen_test, "test sample count");
    cmd_gen->add_option("--seed", gen_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_run) {
            nlohmann::json j = misgrad::read_json_file(config_path);
            if (run_seed->count() > 0) j["seed"] = seed;
            const misgrad::TrainConfig cfg = misgrad::config_from_json(j);
            print_run_summary(misgrad::run(cfg, out_dir));
        } else if (*cmd_sweep) {
            const nlohmann::json base = misgrad::read_json_file(config_path);
            std::vector<std::uint64_t> seeds;
            for (const std::string& s : split_csv(seeds_csv)) seeds.push_back(std::stoull(s));
            if (seeds.empty())
                seeds.push_back(base.contains("seed") ? base.at("seed").get<std::uint64_t>() : 1);

            if (out_dir.empty()) {
                const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::system_clock::now().time_since_epoch())
                                    .count();
                out_dir = "runs/sweep-" + std::to_string(ms);
            }
            fs::create_directories(out_dir);

            std::vector<std::string> metric_files;
            for (const std::string& estimator : split_csv(estimators_csv)) {
                for (std::uint64_t s : seeds) {
                    nlohmann::json j = base;
                    j["estimator"] = estimator;
                    j["seed"] = s;
                    const misgrad::TrainConfig cfg = misgrad::config_from_json(j);
                    const fs::path dir = fs::path(out_dir) / (estimator + "-s" + std::to_string(s));
                    const misgrad::RunResult rr = misgrad::run(cfg, dir.string());
                    print_run_summary(rr);
                    metric_files.push_back(rr.metrics_path.string());
                }
            }
            const std::string table = misgrad::format_compare(misgrad::compare(metric_files));
            std::cout << "\n" << table;
            std::ofstream out(fs::path(out_dir) / "comparison.txt");
            out << table;
            std::cout << "comparison table: " << (fs::path(out_dir) / "comparison.txt").string() << "\n";
        } else if (*cmd_compare) {
            std::cout << misgrad::format_compare(misgrad::compare(compare_files));
        } else if (*cmd_gen) {
            fs::create_directories(gen_dir);
            const fs::path dir(gen_dir);
            misgrad::write_synth_idx((dir / "train-images.idx").string(),
                                     (dir / "train-labels.idx").string(), gen_train, gen_seed);
            misgrad::write_synth_idx((dir / "test-images.idx").string(),
                                     (dir / "test-labels.idx").string(), gen_test, gen_seed + 1);
            std::cout << "wrote " << gen_train << " train and " << gen_test << " test samples under "
                      << dir.string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "misgrad: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
