#pragma once

#include "pclnet/checkpoint.hpp"
#include "pclnet/config_file.hpp"
#include "pclnet/dr.hpp"
#include "pclnet/presets.hpp"

#include <chrono>
#include <filesystem>
#include <mutex>
#include <thread>

namespace pclnet::bench {

namespace fs = std::filesystem;
using ckpt::json;

inline const std::vector<std::string>& estimator_tags() {
    static const std::vector<std::string> tags = {
        "outcome-net", "treatment-net", "drpclnet-v1", "drpclnet-v2", "kpv", "kap", "drkpv"};
    return tags;
}

struct RunConfig {
    std::string benchmark = "lowdim-ate";
    std::string estimator = "drpclnet-v1";
    std::string target = "ate";
    std::string preset;               // empty: desk preset chosen by benchmark
    std::vector<long> n_list{5000};
    std::vector<std::uint64_t> seeds{0};
    std::string loss;                 // empty: preset default
    std::string ratio_method = "kde";
    int grid_points = 100;
    std::vector<double> anchors{-1.0, -0.5, 0.5, 1.0};
    std::string out_dir = "runs";
    int workers = 0;                  // 0: PCLBENCH_WORKERS or 1

    std::string preset_name() const {
        return preset.empty() ? default_preset_for(benchmark) : preset;
    }

    void validate() const {
        bool known = false;
        for (const auto& t : estimator_tags()) known = known || t == estimator;
        if (!known) throw ConfigError("unknown estimator: " + estimator);
        if (target != "ate" && target != "cate" && target != "att")
            throw ConfigError("unknown target: " + target);
        if (n_list.empty() || seeds.empty()) throw ConfigError("need at least one n and one seed");
        for (long n : n_list)
            if (n < 20) throw ConfigError("n too small");
        bool benchmark_has_x = benchmark == "highdim-ate" || benchmark.rfind("cate", 0) == 0;
        bool is_kernel = estimator == "kpv" || estimator == "kap" || estimator == "drkpv";
        if ((estimator == "kap" || estimator == "drkpv") && benchmark_has_x)
            throw ConfigError(estimator + " requires a benchmark without observed covariates");
        if (is_kernel && target != "ate")
            throw ConfigError("kernel baselines support the population target only");
        if (target == "cate" && benchmark.rfind("cate", 0) != 0)
            throw ConfigError("target cate requires a heterogeneous benchmark");
        if (benchmark.rfind("cate", 0) == 0 && target != "cate")
            throw ConfigError("heterogeneous benchmarks require target cate");
        if (target == "att" && !(benchmark == "att" || benchmark == "lowdim-ate"))
            throw ConfigError("target att runs on the low-dimensional process");
        if (ratio_method != "kde" && ratio_method != "kliep")
            throw ConfigError("unknown ratio method: " + ratio_method);
        if (ratio_method == "kliep" && target != "ate")
            throw ConfigError("kliep ratio estimation supports the population target only");
        if (grid_points < 1) throw ConfigError("grid_points must be positive");
    }

    json to_json() const {
        return {{"benchmark", benchmark}, {"estimator", estimator}, {"target", target},
                {"preset", preset_name()}, {"n_list", n_list},      {"seeds", seeds},
                {"loss", loss},            {"ratio_method", ratio_method},
                {"grid_points", grid_points}, {"anchors", anchors}, {"out_dir", out_dir}};
    }

    std::string canonical() const { return to_json().dump(); }
    std::uint64_t hash() const { return ckpt::fnv1a(canonical().data(), canonical().size()); }

    static RunConfig from_table(const cfg::Table& t) {
        RunConfig c;
        if (t.has("benchmark")) c.benchmark = t.at("benchmark").as_string();
        if (t.has("estimator")) c.estimator = t.at("estimator").as_string();
        if (t.has("target")) c.target = t.at("target").as_string();
        if (t.has("preset")) c.preset = t.at("preset").as_string();
        if (t.has("n")) {
            c.n_list.clear();
            for (double v : t.at("n").as_doubles()) c.n_list.push_back(static_cast<long>(v));
        }
        if (t.has("seeds")) c.seeds = parse_seeds(t.at("seeds").as_string());
        if (t.has("loss")) c.loss = t.at("loss").as_string();
        if (t.has("ratio")) c.ratio_method = t.at("ratio").as_string();
        if (t.has("grid_points")) c.grid_points = static_cast<int>(t.at("grid_points").as_long());
        if (t.has("anchors")) c.anchors = t.at("anchors").as_doubles();
        if (t.has("out")) c.out_dir = t.at("out").as_string();
        if (t.has("workers")) c.workers = static_cast<int>(t.at("workers").as_long());
        return c;
    }

    // "0..9" or "3" or "1,4,7"
    static std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
        std::vector<std::uint64_t> out;
        auto dots = spec.find("..");
        if (dots != std::string::npos) {
            auto lo = std::stoull(spec.substr(0, dots));
            auto hi = std::stoull(spec.substr(dots + 2));
            if (hi < lo) throw ConfigError("seed range is empty: " + spec);
            for (auto s = lo; s <= hi; ++s) out.push_back(s);
            return out;
        }
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(std::stoull(cfg::trim(item)));
        if (out.empty()) throw ConfigError("empty seed list");
        return out;
    }
};

// ---------------------------------------------------------------------------
// grids and oracles
// ---------------------------------------------------------------------------

struct GridSpec {
    std::vector<double> points; // treatment grid, or v grid for CATE
    double cate_a = 1.0;
};

inline GridSpec make_grid(const RunConfig& c, const Dataset& d) {
    GridSpec g;
    if (c.target == "cate")
        g.points = default_grid(Vec(d.v.col(0)), c.grid_points);
    else
        g.points = default_grid(d.a, c.grid_points);
    return g;
}

inline std::vector<DoseResponseCurve> oracles_for(const RunConfig& c, const GridSpec& grid) {
    std::vector<DoseResponseCurve> out;
    if (c.target == "att") {
        for (double anchor : c.anchors) out.push_back(dgp::oracle_att(grid.points, anchor));
    } else {
        out.push_back(dgp::oracle_for(c.benchmark, grid.points));
    }
    return out;
}

// ---------------------------------------------------------------------------
// ratio targets for the treatment-bridge paths
// ---------------------------------------------------------------------------

struct FittedRatio {
    std::shared_ptr<ratio::AteRatio> ate;
    std::shared_ptr<ratio::CateRatio> cate;
};

inline FittedRatio fit_ratio(const RunConfig& c, const Dataset& d, const SplitPlan& plan,
                             std::uint64_t seed) {
    FittedRatio out;
    Dataset d1 = d.rows(plan.d1);
    if (c.target == "cate") {
        Mat sw(d1.n(), d1.s.cols() + d1.w.cols());
        if (d1.s.cols() > 0) sw.leftCols(d1.s.cols()) = d1.s;
        sw.rightCols(d1.w.cols()) = d1.w;
        out.cate = std::make_shared<ratio::CateRatio>(
            ratio::CateRatio::fit_kde(d1.a, d1.v, sw, ratio::default_bandwidth_grid()));
        return out;
    }
    Mat xw(d1.n(), d1.x().cols() + d1.w.cols());
    if (d1.x().cols() > 0) xw.leftCols(d1.x().cols()) = d1.x();
    xw.rightCols(d1.w.cols()) = d1.w;
    Mat a_col(d1.n(), 1);
    a_col.col(0) = d1.a;
    if (c.ratio_method == "kliep") {
        ratio::KliepConfig kc;
        kc.seed = seed ^ 0x11e9;
        out.ate = std::make_shared<ratio::AteRatio>(ratio::AteRatio::fit_kliep(a_col, xw, kc));
    } else {
        out.ate = std::make_shared<ratio::AteRatio>(
            ratio::AteRatio::fit_kde(a_col, xw, ratio::default_bandwidth_grid()));
    }
    return out;
}

inline Vec ratio_targets_ate(const FittedRatio& r, const Dataset& d, const std::vector<int>& rows) {
    Dataset de = d.rows(rows);
    Mat xw(de.n(), de.x().cols() + de.w.cols());
    if (de.x().cols() > 0) xw.leftCols(de.x().cols()) = de.x();
    xw.rightCols(de.w.cols()) = de.w;
    return r.ate->at_rows(de.a, xw);
}

inline Vec ratio_targets_cate(const FittedRatio& r, const Dataset& d, const std::vector<int>& rows) {
    Dataset de = d.rows(rows);
    Mat sw(de.n(), de.s.cols() + de.w.cols());
    if (de.s.cols() > 0) sw.leftCols(de.s.cols()) = de.s;
    sw.rightCols(de.w.cols()) = de.w;
    return r.cate->at_rows(de.a, de.v, sw);
}

inline Vec ratio_targets_att(const FittedRatio& r, const Dataset& d, const std::vector<int>& rows,
                             double anchor) {
    Dataset de = d.rows(rows);
    Vec out(de.n());
    Mat xw(de.n(), de.x().cols() + de.w.cols());
    if (de.x().cols() > 0) xw.leftCols(de.x().cols()) = de.x();
    xw.rightCols(de.w.cols()) = de.w;
    for (long i = 0; i < de.n(); ++i)
        out(i) = ratio::att_ratio_from_ate(*r.ate, de.a(i), anchor, xw.row(i));
    return out;
}

// ---------------------------------------------------------------------------
// fitted-run artifacts
// ---------------------------------------------------------------------------

struct SeedRun {
    long n = 0;
    std::uint64_t seed = 0;
    std::vector<DoseResponseCurve> estimates; // aligned with oracles_for()
    std::vector<double> mses;
    double seconds = 0.0;
    std::vector<std::pair<std::string, std::string>> checkpoints; // (component, content hash)
};

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline NeuralPreset preset_with_overrides(const RunConfig& c, std::uint64_t seed) {
    NeuralPreset p = make_preset(c.preset_name(), seed);
    if (!c.loss.empty()) {
        LossKind kind = loss_kind_from_string(c.loss);
        p.outcome.hyper.loss.kind = kind;
        p.treatment.hyper.loss.kind = kind;
    }
    return p;
}

inline std::string seed_dir(const RunConfig& c, long n, std::uint64_t seed) {
    return c.out_dir + "/" + c.benchmark + "-" + c.estimator + "-" + c.target + "-n" +
           std::to_string(n) + "-s" + std::to_string(seed);
}

inline void note_checkpoint(SeedRun& run, const std::string& component, std::uint64_t hash) {
    run.checkpoints.push_back({component, ckpt::hash_hex(hash)});
}

} // namespace detail

inline void write_curves_csv(const SeedRun& run, const std::vector<DoseResponseCurve>& oracles,
                             const std::string& path, const RunConfig& c) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << "curve,anchor,grid,estimate,oracle\n";
    for (std::size_t k = 0; k < run.estimates.size(); ++k) {
        const auto& e = run.estimates[k];
        for (std::size_t i = 0; i < e.values.size(); ++i) {
            double gp = c.target == "cate" ? e.grid_v[i] : e.grid_a[i];
            f << k << ',' << (e.has_anchor ? detail::fmt(e.anchor) : std::string()) << ','
              << detail::fmt(gp) << ',' << detail::fmt(e.values[i]) << ','
              << detail::fmt(oracles[k].values[i]) << "\n";
        }
    }
}


enum class ModelSource { Train, Load };

// Trains (or reloads) the configured estimator on one generated dataset and
// evaluates the resulting curves against the oracle. When persist_dir is
// nonempty, model checkpoints and the fitted curves are written there. The
// final-stage regressions are recomputed deterministically either way, so a
// Load pass reproduces the fit-time curves exactly.
inline SeedRun run_seed(const RunConfig& c, long n, std::uint64_t seed,
                        const std::string& persist_dir = {},
                        ModelSource source = ModelSource::Train,
                        const std::string& load_dir = {}) {
    auto t0 = std::chrono::steady_clock::now();
    SeedRun run;
    run.n = n;
    run.seed = seed;
    if (!persist_dir.empty()) fs::create_directories(persist_dir);

    Dataset d = dgp::generate(c.benchmark, n, seed);
    SplitPlan plan = SplitPlan::halves(d.n());
    GridSpec grid = make_grid(c, d);
    auto oracles = oracles_for(c, grid);

    NeuralPreset preset = detail::preset_with_overrides(c, seed);
    auto persist = [&](const std::string& component, std::uint64_t hash) {
        detail::note_checkpoint(run, component, hash);
    };
    const bool load = source == ModelSource::Load;

    if (c.estimator == "kpv") {
        auto m = load ? ckpt::load_kpv(load_dir + "/kpv") : kernel::KpvModel::fit(d, plan, {});
        run.estimates.push_back(m.curve(grid.points));
        if (!persist_dir.empty()) persist("kpv", ckpt::save_kpv(m, persist_dir + "/kpv"));
    } else if (c.estimator == "kap") {
        auto m = load ? ckpt::load_kap(load_dir + "/kap") : kernel::KapModel::fit(d, plan, {});
        run.estimates.push_back(m.curve(grid.points));
        if (!persist_dir.empty()) persist("kap", ckpt::save_kap(m, persist_dir + "/kap"));
    } else if (c.estimator == "drkpv") {
        auto kpv = load ? ckpt::load_kpv(load_dir + "/kpv") : kernel::KpvModel::fit(d, plan, {});
        auto kap = load ? ckpt::load_kap(load_dir + "/kap") : kernel::KapModel::fit(d, plan, {});
        run.estimates.push_back(kernel::drkpv_curve(kpv, kap, d, plan.d3, 1e-3, grid.points));
        if (!persist_dir.empty()) {
            persist("kpv", ckpt::save_kpv(kpv, persist_dir + "/kpv"));
            persist("kap", ckpt::save_kap(kap, persist_dir + "/kap"));
        }
    } else if (c.estimator == "outcome-net") {
        OutcomeBridge h = load ? ckpt::load_outcome_bridge(load_dir + "/outcome")
                               : OutcomeBridge(preset.outcome);
        if (!load) h.fit(d, plan);
        if (c.target == "ate") {
            run.estimates.push_back(h.ate_curve(d, plan.d3, grid.points));
        } else if (c.target == "cate") {
            auto ev = h.cate_regression(d, plan.d3, preset.embed);
            run.estimates.push_back(ev.curve(grid.cate_a, grid.points));
            if (!persist_dir.empty())
                persist("cate-embed", ckpt::save_regressor(ev.embed, persist_dir + "/cate-embed",
                                                           "cate-embed"));
        } else {
            auto ev = h.att_regression(d, plan.d3, preset.embed);
            for (double anchor : c.anchors) run.estimates.push_back(ev.curve(grid.points, anchor));
            if (!persist_dir.empty())
                persist("att-embed",
                        ckpt::save_regressor(ev.embed, persist_dir + "/att-embed", "att-embed"));
        }
        if (!persist_dir.empty())
            persist("outcome", ckpt::save_outcome_bridge(h, persist_dir + "/outcome"));
    } else if (c.estimator == "treatment-net") {
        FittedRatio r;
        if (!load) r = fit_ratio(c, d, plan, seed);
        if (c.target == "ate") {
            TreatmentBridge phi = load ? ckpt::load_treatment_bridge(load_dir + "/treatment")
                                       : TreatmentBridge(preset.treatment);
            if (!load) phi.fit(d, plan, ratio_targets_ate(r, d, plan.d2));
            run.estimates.push_back(phi.ate_curve(d, plan.d3, preset.third, grid.points));
            if (!persist_dir.empty())
                persist("treatment", ckpt::save_treatment_bridge(phi, persist_dir + "/treatment"));
        } else if (c.target == "cate") {
            TreatmentBridge phi = load ? ckpt::load_treatment_bridge(load_dir + "/treatment")
                                       : TreatmentBridge(preset.treatment);
            if (!load) phi.fit(d, plan, ratio_targets_cate(r, d, plan.d2));
            auto ev = phi.cate_curve(d, plan.d3, preset.third);
            run.estimates.push_back(ev.curve(grid.cate_a, grid.points));
            if (!persist_dir.empty()) {
                persist("treatment", ckpt::save_treatment_bridge(phi, persist_dir + "/treatment"));
                persist("cate-third",
                        ckpt::save_regressor(ev.reg, persist_dir + "/cate-third", "cate-third"));
            }
        } else {
            TreatmentBridge shared(preset.treatment);
            if (!load)
                shared.fit(d, plan, Vec::Zero(static_cast<long>(plan.d2.size())),
                           FitPhase::Stage1Only);
            int k = 0;
            for (double anchor : c.anchors) {
                TreatmentBridge phi =
                    load ? ckpt::load_treatment_bridge(load_dir + "/treatment-a" + std::to_string(k))
                         : TreatmentBridge(preset.treatment);
                if (!load) {
                    phi.copy_state_from(shared);
                    phi.fit(d, plan, ratio_targets_att(r, d, plan.d2, anchor),
                            FitPhase::Stage2Only);
                }
                run.estimates.push_back(
                    phi.att_curve(d, plan.d3, preset.third, grid.points, anchor));
                if (!persist_dir.empty())
                    persist("treatment-a" + std::to_string(k),
                            ckpt::save_treatment_bridge(
                                phi, persist_dir + "/treatment-a" + std::to_string(k)));
                ++k;
            }
        }
    } else { // drpclnet-v1 / drpclnet-v2
        DrVersion version = c.estimator == "drpclnet-v2" ? DrVersion::V2 : DrVersion::V1;
        FittedRatio r;
        if (!load) r = fit_ratio(c, d, plan, seed);
        OutcomeBridge h = load ? ckpt::load_outcome_bridge(load_dir + "/outcome")
                               : OutcomeBridge(preset.outcome);
        if (!load) h.fit(d, plan);
        if (!persist_dir.empty())
            persist("outcome", ckpt::save_outcome_bridge(h, persist_dir + "/outcome"));
        if (c.target == "ate") {
            TreatmentBridge phi = load ? ckpt::load_treatment_bridge(load_dir + "/treatment")
                                       : TreatmentBridge(preset.treatment);
            if (!load) phi.fit(d, plan, ratio_targets_ate(r, d, plan.d2));
            if (!persist_dir.empty())
                persist("treatment", ckpt::save_treatment_bridge(phi, persist_dir + "/treatment"));
            DoseResponseCurve t_curve;
            if (version == DrVersion::V2)
                t_curve = phi.ate_curve(d, plan.d3, preset.third, grid.points);
            auto dr = fit_dr_ate(h, phi, d, plan.d3, preset.third, version, grid.points,
                                 version == DrVersion::V2 ? &t_curve : nullptr);
            run.estimates.push_back(dr.curve(grid.points));
            if (!persist_dir.empty())
                persist("correction", ckpt::save_regressor(dr.correction,
                                                           persist_dir + "/correction",
                                                           "dr-correction"));
        } else if (c.target == "cate") {
            TreatmentBridge phi = load ? ckpt::load_treatment_bridge(load_dir + "/treatment")
                                       : TreatmentBridge(preset.treatment);
            if (!load) phi.fit(d, plan, ratio_targets_cate(r, d, plan.d2));
            if (!persist_dir.empty())
                persist("treatment", ckpt::save_treatment_bridge(phi, persist_dir + "/treatment"));
            auto dr = fit_dr_cate(h, phi, d, plan.d3, preset.third, preset.embed, preset.third,
                                  version);
            run.estimates.push_back(dr.curve(grid.cate_a, grid.points));
            if (!persist_dir.empty())
                persist("correction", ckpt::save_regressor(dr.correction,
                                                           persist_dir + "/correction",
                                                           "dr-correction"));
        } else {
            auto h_att = h.att_regression(d, plan.d3, preset.embed);
            TreatmentBridge shared(preset.treatment);
            if (!load)
                shared.fit(d, plan, Vec::Zero(static_cast<long>(plan.d2.size())),
                           FitPhase::Stage1Only);
            int k = 0;
            for (double anchor : c.anchors) {
                TreatmentBridge phi =
                    load ? ckpt::load_treatment_bridge(load_dir + "/treatment-a" + std::to_string(k))
                         : TreatmentBridge(preset.treatment);
                if (!load) {
                    phi.copy_state_from(shared);
                    phi.fit(d, plan, ratio_targets_att(r, d, plan.d2, anchor),
                            FitPhase::Stage2Only);
                }
                DoseResponseCurve t_curve;
                if (version == DrVersion::V2)
                    t_curve = phi.att_curve(d, plan.d3, preset.third, grid.points, anchor);
                auto dr = fit_dr_att(h, h_att, phi, d, plan.d3, preset.third, version, grid.points,
                                     anchor, version == DrVersion::V2 ? &t_curve : nullptr);
                run.estimates.push_back(dr.curve(grid.points));
                if (!persist_dir.empty())
                    persist("treatment-a" + std::to_string(k),
                            ckpt::save_treatment_bridge(
                                phi, persist_dir + "/treatment-a" + std::to_string(k)));
                ++k;
            }
        }
    }

    require(run.estimates.size() == oracles.size(), "run_seed: curve/oracle count mismatch");
    for (std::size_t i = 0; i < oracles.size(); ++i)
        run.mses.push_back(causal_mse(run.estimates[i], oracles[i]));
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!persist_dir.empty()) {
        json meta = c.to_json();
        meta["n"] = n;
        meta["seed"] = seed;
        meta["config_hash"] = ckpt::hash_hex(c.hash());
        json comps = json::array();
        for (const auto& [name, hash] : run.checkpoints)
            comps.push_back({{"component", name}, {"content_hash", hash}});
        meta["components"] = comps;
        std::ofstream f(persist_dir + "/run.json", std::ios::binary);
        f << meta.dump(2) << "\n";
        write_curves_csv(run, oracles, persist_dir + "/curves.csv", c);
    }
    return run;
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
    std::string estimator, benchmark, target;
    long n;
    std::uint64_t seed;
    double anchor;
    bool has_anchor;
    double mse, seconds;
    bool failed = false;
    std::string error;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    bool any_cell_all_failed = false;
};

inline int worker_count(const RunConfig& c) {
    if (c.workers > 0) return c.workers;
    if (const char* env = std::getenv("PCLBENCH_WORKERS")) {
        int w = std::atoi(env);
        if (w > 0) return w;
    }
    return 1;
}

// gen -> fit -> eval per (n, seed); failures are recorded and the sweep continues
inline SweepResult run_sweep(const RunConfig& c, bool persist) {
    c.validate();
    SweepResult result;
    struct Job {
        long n;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (long n : c.n_list)
        for (auto s : c.seeds) jobs.push_back({n, s});
    result.rows.resize(0);

    std::vector<std::vector<SweepRow>> per_job(jobs.size());
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&]() {
        for (;;) {
            std::size_t j;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= jobs.size()) return;
                j = next++;
            }
            const auto& job = jobs[j];
            std::vector<SweepRow> rows;
            try {
                auto run = run_seed(c, job.n, job.seed,
                                    persist ? detail::seed_dir(c, job.n, job.seed) : std::string());
                for (std::size_t k = 0; k < run.mses.size(); ++k) {
                    SweepRow row;
                    row.estimator = c.estimator;
                    row.benchmark = c.benchmark;
                    row.target = c.target;
                    row.n = job.n;
                    row.seed = job.seed;
                    row.has_anchor = run.estimates[k].has_anchor;
                    row.anchor = run.estimates[k].anchor;
                    row.mse = run.mses[k];
                    row.seconds = run.seconds;
                    rows.push_back(row);
                }
            } catch (const std::exception& e) {
                SweepRow row;
                row.estimator = c.estimator;
                row.benchmark = c.benchmark;
                row.target = c.target;
                row.n = job.n;
                row.seed = job.seed;
                row.has_anchor = false;
                row.anchor = 0.0;
                row.mse = std::numeric_limits<double>::quiet_NaN();
                row.seconds = 0.0;
                row.failed = true;
                row.error = e.what();
                rows.push_back(row);
            }
            per_job[j] = std::move(rows);
        }
    };
    int nw = std::min<int>(worker_count(c), static_cast<int>(jobs.size()));
    std::vector<std::thread> pool;
    for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& rows : per_job)
        result.rows.insert(result.rows.end(), rows.begin(), rows.end());

    // a cell is (n, anchor); the sweep fails hard only if some cell lost every seed
    for (long n : c.n_list) {
        long ok = 0, bad = 0;
        for (const auto& r : result.rows)
            if (r.n == n) (r.failed ? bad : ok)++;
        if (ok == 0 && bad > 0) result.any_cell_all_failed = true;
    }
    return result;
}

// ---------------------------------------------------------------------------
// CSV / SVG reporting
// ---------------------------------------------------------------------------

// Wall times live in a separate file: the long results stay byte-identical
// across reruns of the same config.
inline void write_long_csv(const SweepResult& res, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << "estimator,benchmark,target,n,seed,anchor,mse\n";
    for (const auto& r : res.rows) {
        f << r.estimator << ',' << r.benchmark << ',' << r.target << ',' << r.n << ',' << r.seed
          << ',' << (r.has_anchor ? detail::fmt(r.anchor) : std::string()) << ','
          << (r.failed ? std::string("nan") : detail::fmt(r.mse)) << "\n";
    }
}

inline void write_timings_csv(const SweepResult& res, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << "estimator,benchmark,target,n,seed,seconds\n";
    for (const auto& r : res.rows)
        f << r.estimator << ',' << r.benchmark << ',' << r.target << ',' << r.n << ',' << r.seed
          << ',' << detail::fmt(r.seconds) << "\n";
}

struct SummaryCell {
    std::string estimator, benchmark, target;
    long n;
    bool has_anchor;
    double anchor;
    double mean, se;
    long count;
};

inline std::vector<SummaryCell> summarize(const SweepResult& res) {
    std::vector<SummaryCell> cells;
    auto key_match = [](const SweepRow& r, const SummaryCell& c) {
        return r.estimator == c.estimator && r.n == c.n && r.has_anchor == c.has_anchor &&
               (!r.has_anchor || r.anchor == c.anchor);
    };
    for (const auto& r : res.rows) {
        if (r.failed) continue;
        bool found = false;
        for (auto& c : cells)
            if (key_match(r, c)) found = true;
        if (found) continue;
        SummaryCell cell;
        cell.estimator = r.estimator;
        cell.benchmark = r.benchmark;
        cell.target = r.target;
        cell.n = r.n;
        cell.has_anchor = r.has_anchor;
        cell.anchor = r.anchor;
        std::vector<double> vals;
        for (const auto& q : res.rows)
            if (!q.failed && key_match(q, cell)) vals.push_back(q.mse);
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        // SE = sample std / sqrt(#seeds)
        double se = vals.size() > 1
                        ? std::sqrt(var / static_cast<double>(vals.size() - 1)) /
                              std::sqrt(static_cast<double>(vals.size()))
                        : 0.0;
        cell.mean = mean;
        cell.se = se;
        cell.count = static_cast<long>(vals.size());
        cells.push_back(cell);
    }
    return cells;
}

inline void write_summary_csv(const std::vector<SummaryCell>& cells, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << "estimator,benchmark,target,n,anchor,mean_mse,se_mse,seeds\n";
    for (const auto& c : cells) {
        f << c.estimator << ',' << c.benchmark << ',' << c.target << ',' << c.n << ','
          << (c.has_anchor ? detail::fmt(c.anchor) : std::string()) << ',' << detail::fmt(c.mean)
          << ',' << detail::fmt(c.se) << ',' << c.count << "\n";
    }
}

// one polyline per estimator, log10 MSE against sample size
inline void write_svg_plot(const std::vector<SummaryCell>& cells, const std::string& path) {
    const double width = 640, height = 420, ml = 70, mr = 20, mt = 20, mb = 50;
    std::vector<std::string> estimators;
    std::vector<long> ns;
    for (const auto& c : cells) {
        if (std::find(estimators.begin(), estimators.end(), c.estimator) == estimators.end())
            estimators.push_back(c.estimator);
        if (std::find(ns.begin(), ns.end(), c.n) == ns.end()) ns.push_back(c.n);
    }
    std::sort(ns.begin(), ns.end());
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& c : cells) {
        if (c.mean <= 0.0) continue;
        lo = std::min(lo, std::log10(c.mean));
        hi = std::max(hi, std::log10(c.mean));
    }
    if (!std::isfinite(lo)) {
        lo = -1;
        hi = 1;
    }
    if (hi - lo < 1e-9) hi = lo + 1.0;
    auto sx = [&](long n) {
        double t = ns.size() == 1 ? 0.5
                                  : static_cast<double>(std::find(ns.begin(), ns.end(), n) -
                                                        ns.begin()) /
                                        static_cast<double>(ns.size() - 1);
        return ml + t * (width - ml - mr);
    };
    auto sy = [&](double mse) {
        double t = (std::log10(std::max(mse, 1e-300)) - lo) / (hi - lo);
        return height - mb - t * (height - mt - mb);
    };
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf"};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
    f << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
      << "\" stroke=\"black\"/>\n";
    f << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">sample size</text>\n";
    f << "<text x=\"16\" y=\"" << height / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " << height / 2
      << ")\">log10 causal MSE</text>\n";
    for (long n : ns)
        f << "<text x=\"" << sx(n) << "\" y=\"" << height - mb + 18
          << "\" text-anchor=\"middle\" font-size=\"11\">" << n << "</text>\n";
    int color = 0;
    for (const auto& est : estimators) {
        std::string pts;
        for (long n : ns)
            for (const auto& c : cells)
                if (c.estimator == est && c.n == n)
                    pts += detail::fmt(sx(n)) + "," + detail::fmt(sy(c.mean)) + " ";
        const char* col = palette[color % 7];
        f << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"" << pts
          << "\"/>\n";
        f << "<text x=\"" << width - mr - 5 << "\" y=\"" << mt + 16 * (color + 1)
          << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << col << "\">" << est
          << "</text>\n";
        ++color;
    }
    f << "</svg>\n";
}

} // namespace pclnet::bench
