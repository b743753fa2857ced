// pclbench: dataset generation, estimator fitting, causal-MSE evaluation, and
// multi-seed benchmark sweeps for the proxy bridge estimators.

#include "pclnet/bench.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace pclnet;
using bench::RunConfig;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string benchmark, estimator, target, preset, loss, ratio, out, seeds;
    std::vector<long> n;
    std::vector<double> anchors;
    int grid_points = 0;
    int workers = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "config file (key = value with [run] section)");
    cmd->add_option("--benchmark", f.benchmark, "benchmark tag, e.g. lowdim-ate, noisy-proxy-1");
    cmd->add_option("--estimator", f.estimator,
                    "outcome-net | treatment-net | drpclnet-v1 | drpclnet-v2 | kpv | kap | drkpv");
    cmd->add_option("--target", f.target, "ate | cate | att");
    cmd->add_option("--preset", f.preset, "hyperparameter preset name");
    cmd->add_option("--loss", f.loss, "second-stage loss: logcosh | huber | mse | mse-cf");
    cmd->add_option("--ratio", f.ratio, "density-ratio method: kde | kliep");
    cmd->add_option("--n", f.n, "sample sizes");
    cmd->add_option("--seeds", f.seeds, "seed spec: 0..9 or 1,4,7");
    cmd->add_option("--anchor", f.anchors, "ATT anchor values");
    cmd->add_option("--grid-points", f.grid_points, "evaluation grid size");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--workers", f.workers, "parallel seed workers (env PCLBENCH_WORKERS)");
}

RunConfig build_config(const CommonFlags& f) {
    RunConfig c;
    if (!f.config_path.empty()) {
        auto tables = cfg::parse_file(f.config_path);
        auto it = tables.find("run");
        if (it == tables.end()) throw ConfigError("config file has no [run] section");
        c = RunConfig::from_table(it->second);
    }
    if (!f.benchmark.empty()) c.benchmark = f.benchmark;
    if (!f.estimator.empty()) c.estimator = f.estimator;
    if (!f.target.empty()) c.target = f.target;
    if (!f.preset.empty()) c.preset = f.preset;
    if (!f.loss.empty()) c.loss = f.loss;
    if (!f.ratio.empty()) c.ratio_method = f.ratio;
    if (!f.n.empty()) c.n_list = f.n;
    if (!f.seeds.empty()) c.seeds = RunConfig::parse_seeds(f.seeds);
    if (!f.anchors.empty()) c.anchors = f.anchors;
    if (f.grid_points > 0) c.grid_points = f.grid_points;
    if (!f.out.empty()) c.out_dir = f.out;
    if (f.workers > 0) c.workers = f.workers;
    return c;
}

int cmd_gen(const RunConfig& c) {
    std::filesystem::create_directories(c.out_dir);
    for (long n : c.n_list) {
        for (auto seed : c.seeds) {
            auto d = dgp::generate(c.benchmark, n, seed);
            std::string base = c.out_dir + "/" + c.benchmark + "-n" + std::to_string(n) + "-s" +
                               std::to_string(seed);
            write_dataset_csv(d, base + ".csv", base + ".json");
            std::cout << "wrote " << base << ".csv (" << n << " rows)\n";
        }
    }
    return 0;
}

int cmd_fit(const RunConfig& c) {
    c.validate();
    for (long n : c.n_list) {
        for (auto seed : c.seeds) {
            std::string dir = c.out_dir + "/" + c.benchmark + "-" + c.estimator + "-" + c.target +
                              "-n" + std::to_string(n) + "-s" + std::to_string(seed);
            auto run = bench::run_seed(c, n, seed, dir);
            std::cout << "fit " << c.estimator << " n=" << n << " seed=" << seed << " in "
                      << run.seconds << "s; checkpoints:";
            for (const auto& [name, hash] : run.checkpoints) std::cout << ' ' << name << '=' << hash;
            std::cout << "\n";
        }
    }
    return 0;
}

int cmd_eval(const RunConfig& c) {
    c.validate();
    bench::SweepResult res;
    for (long n : c.n_list) {
        for (auto seed : c.seeds) {
            std::string dir = c.out_dir + "/" + c.benchmark + "-" + c.estimator + "-" + c.target +
                              "-n" + std::to_string(n) + "-s" + std::to_string(seed);
            auto run = bench::run_seed(c, n, seed, {}, bench::ModelSource::Load, dir);
            for (std::size_t k = 0; k < run.mses.size(); ++k) {
                bench::SweepRow row;
                row.estimator = c.estimator;
                row.benchmark = c.benchmark;
                row.target = c.target;
                row.n = n;
                row.seed = seed;
                row.has_anchor = run.estimates[k].has_anchor;
                row.anchor = run.estimates[k].anchor;
                row.mse = run.mses[k];
                row.seconds = run.seconds;
                res.rows.push_back(row);
                std::cout << "eval " << c.estimator << " n=" << n << " seed=" << seed;
                if (row.has_anchor) std::cout << " anchor=" << row.anchor;
                std::cout << " mse=" << row.mse << "\n";
            }
        }
    }
    bench::write_long_csv(res, c.out_dir + "/eval.csv");
    return 0;
}

int cmd_bench(const RunConfig& c) {
    c.validate();
    std::filesystem::create_directories(c.out_dir);
    auto res = bench::run_sweep(c, /*persist=*/true);
    bench::write_long_csv(res, c.out_dir + "/results.csv");
    bench::write_timings_csv(res, c.out_dir + "/timings.csv");
    auto cells = bench::summarize(res);
    bench::write_summary_csv(cells, c.out_dir + "/summary.csv");
    if (c.n_list.size() > 1) bench::write_svg_plot(cells, c.out_dir + "/mse-vs-n.svg");
    for (const auto& cell : cells) {
        std::cout << cell.estimator << " n=" << cell.n;
        if (cell.has_anchor) std::cout << " anchor=" << cell.anchor;
        std::cout << " mse=" << cell.mean << " +- " << cell.se << " (" << cell.count
                  << " seeds)\n";
    }
    for (const auto& r : res.rows)
        if (r.failed)
            std::cerr << "seed " << r.seed << " n=" << r.n << " failed: " << r.error << "\n";
    return res.any_cell_all_failed ? 1 : 0;
}

int cmd_plot(const RunConfig& c, const std::string& summary_path) {
    // re-plot from a summary csv produced by bench
    std::ifstream f(summary_path);
    if (!f) throw DataError("cannot open " + summary_path);
    std::string line;
    std::getline(f, line);
    std::vector<bench::SummaryCell> cells;
    while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string field;
        bench::SummaryCell cell;
        std::getline(ss, cell.estimator, ',');
        std::getline(ss, cell.benchmark, ',');
        std::getline(ss, cell.target, ',');
        std::getline(ss, field, ',');
        cell.n = std::stol(field);
        std::getline(ss, field, ',');
        cell.has_anchor = !field.empty();
        cell.anchor = field.empty() ? 0.0 : std::stod(field);
        std::getline(ss, field, ',');
        cell.mean = std::stod(field);
        std::getline(ss, field, ',');
        cell.se = std::stod(field);
        std::getline(ss, field, ',');
        cell.count = std::stol(field);
        cells.push_back(cell);
    }
    std::filesystem::create_directories(c.out_dir);
    bench::write_svg_plot(cells, c.out_dir + "/mse-vs-n.svg");
    std::cout << "wrote " << c.out_dir << "/mse-vs-n.svg\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"proxy bridge estimator benchmarks"};
    app.require_subcommand(1);

    CommonFlags gen_f, fit_f, eval_f, bench_f, plot_f;
    std::string summary_path;

    auto* gen = app.add_subcommand("gen", "generate benchmark datasets as CSV + JSON sidecar");
    add_common(gen, gen_f);
    auto* fit = app.add_subcommand("fit", "train an estimator and persist checkpoints");
    add_common(fit, fit_f);
    auto* eval = app.add_subcommand("eval", "reload checkpoints and score against the oracle");
    add_common(eval, eval_f);
    auto* bench_cmd = app.add_subcommand("bench", "gen->fit->eval sweep with summary outputs");
    add_common(bench_cmd, bench_f);
    auto* plot = app.add_subcommand("plot", "render the SVG plot from a summary csv");
    add_common(plot, plot_f);
    plot->add_option("--summary", summary_path, "summary.csv path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(build_config(gen_f));
        if (fit->parsed()) return cmd_fit(build_config(fit_f));
        if (eval->parsed()) return cmd_eval(build_config(eval_f));
        if (bench_cmd->parsed()) return cmd_bench(build_config(bench_f));
        if (plot->parsed()) return cmd_plot(build_config(plot_f), summary_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
