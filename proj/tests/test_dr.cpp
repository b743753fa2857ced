#include <catch2/catch.hpp>

#include "pclnet/dgp.hpp"
#include "pclnet/dr.hpp"

using namespace pclnet;

namespace {

Dataset linear_dgp(long n, std::uint64_t seed, bool y_depends_on_w = true) {
    Dataset d;
    d.benchmark = "linear-test";
    d.seed = seed;
    Rng rng(seed);
    d.a.resize(n);
    d.y.resize(n);
    d.z.resize(n, 1);
    d.w.resize(n, 1);
    d.v.resize(n, 0);
    d.s.resize(n, 0);
    d.x_plain.resize(n, 0);
    for (long i = 0; i < n; ++i) {
        double u = rng.normal();
        d.w(i, 0) = u;
        d.z(i, 0) = u;
        d.a(i) = 0.5 * u + rng.normal();
        d.y(i) = y_depends_on_w ? 2.0 * d.a(i) + 3.0 * u : 2.0 * d.a(i);
    }
    return d;
}

OutcomeBridgeConfig exact_outcome_config(std::uint64_t seed) {
    OutcomeBridgeConfig cfg;
    FeatArch lin;
    lin.widths = {3};
    lin.ln = false;
    lin.act = Act::None;
    lin.dropout = 0.0;
    cfg.stage1 = cfg.feat_a = cfg.feat_x = cfg.feat_v = cfg.feat_s = cfg.feat_w = lin;
    cfg.hyper.epochs = 60;
    cfg.hyper.t1 = 4;
    cfg.hyper.lr1 = cfg.hyper.lr2 = 1e-2;
    cfg.hyper.loss = {LossKind::MSEClosedForm, 1.0};
    cfg.hyper.lam2 = {1e-5, 1e-6, AnnealKind::Exponential};
    cfg.seed = seed;
    return cfg;
}

TreatmentBridgeConfig small_treatment_config(std::uint64_t seed) {
    TreatmentBridgeConfig cfg;
    FeatArch a;
    a.widths = {32, 8};
    a.ln = true;
    a.act = Act::Gelu;
    a.dropout = 0.0;
    cfg.stage1 = a;
    cfg.feat_ax = FeatArch{{32, 4}, true, false, Act::Gelu, 0.0, true};
    cfg.feat_z = FeatArch{{32, 8}, true, false, Act::Gelu, 0.0, true};
    cfg.hyper.epochs = 20;
    cfg.hyper.t1 = 4;
    cfg.hyper.loss = {LossKind::MSE, 1.0};
    cfg.seed = seed;
    return cfg;
}

RegressorConfig reg_cfg(std::uint64_t seed, int epochs = 120) {
    RegressorConfig rc;
    rc.hidden = {32, 32};
    rc.dropout = 0.0;
    rc.epochs = epochs;
    rc.seed = seed;
    return rc;
}

} // namespace

TEST_CASE("dr v1 with a null treatment bridge equals the outcome curve", "[dr]") {
    auto d = linear_dgp(2000, 3);
    auto plan = SplitPlan::halves(d.n());
    OutcomeBridge h(exact_outcome_config(5));
    h.fit(d, plan);
    TreatmentBridge phi(small_treatment_config(7));
    phi.fit(d, plan, Vec::Ones(static_cast<long>(plan.d2.size())));
    phi.core().set_head(Vec::Zero(phi.core().head().size())); // phi == 0

    auto grid = linspace(-1.5, 1.5, 9);
    auto dr = fit_dr_ate(h, phi, d, plan.d3, reg_cfg(9), DrVersion::V1, grid);
    auto dr_curve = dr.curve(grid);
    auto h_curve = h.ate_curve(d, plan.d3, grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        REQUIRE(std::abs(dr_curve.values[i] - h_curve.values[i]) < 1e-3);
}

TEST_CASE("dr v1 with an interpolating outcome bridge equals the outcome curve", "[dr]") {
    // the exact-fit construction leaves residuals at numerical zero
    auto d = linear_dgp(2000, 11);
    auto plan = SplitPlan::halves(d.n());
    OutcomeBridge h(exact_outcome_config(13));
    h.fit(d, plan);
    TreatmentBridge phi(small_treatment_config(15));
    phi.fit(d, plan, Vec::Ones(static_cast<long>(plan.d2.size())));

    Dataset d2 = d.rows(plan.d2);
    Vec resid = d2.y - h.eval_h_rows(d2.a, d2.x(), d2.w);
    REQUIRE(resid.cwiseAbs().maxCoeff() < 1e-4);

    auto grid = linspace(-1.5, 1.5, 9);
    auto dr = fit_dr_ate(h, phi, d, plan.d3, reg_cfg(17), DrVersion::V1, grid);
    auto dr_curve = dr.curve(grid);
    auto h_curve = h.ate_curve(d, plan.d3, grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        REQUIRE(std::abs(dr_curve.values[i] - h_curve.values[i]) < 1e-3);
}

TEST_CASE("dr v1 curve decomposes exactly into outcome curve plus correction", "[dr]") {
    auto d = linear_dgp(800, 19);
    auto plan = SplitPlan::halves(d.n());
    OutcomeBridge h(exact_outcome_config(21));
    h.fit(d, plan);
    TreatmentBridge phi(small_treatment_config(23));
    phi.fit(d, plan, Vec::Ones(static_cast<long>(plan.d2.size())));

    auto grid = linspace(-1, 1, 7);
    auto dr = fit_dr_ate(h, phi, d, plan.d3, reg_cfg(25, 30), DrVersion::V1, grid);
    auto c = dr.curve(grid);
    auto h_curve = h.ate_curve(d, plan.d3, grid);
    Mat g(grid.size(), 1);
    for (std::size_t i = 0; i < grid.size(); ++i) g(i, 0) = grid[i];
    Vec k = dr.correction.predict(g).col(0);
    for (std::size_t i = 0; i < grid.size(); ++i)
        REQUIRE(c.values[i] == Approx(h_curve.values[i] + k(i)).margin(1e-12));
}

TEST_CASE("dr v2 with a null outcome bridge equals the treatment curve", "[dr]") {
    auto d = linear_dgp(2000, 27);
    auto plan = SplitPlan::halves(d.n());
    OutcomeBridge h(exact_outcome_config(29));
    h.fit(d, plan);
    h.core().set_head(Vec::Zero(h.core().head().size())); // h == 0
    TreatmentBridge phi(small_treatment_config(31));
    phi.fit(d, plan, Vec::Ones(static_cast<long>(plan.d2.size())));

    auto grid = linspace(-1.5, 1.5, 9);
    auto t_curve = phi.ate_curve(d, plan.d3, reg_cfg(33), grid);
    auto dr = fit_dr_ate(h, phi, d, plan.d3, reg_cfg(35), DrVersion::V2, grid, &t_curve);
    auto c = dr.curve(grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        REQUIRE(std::abs(c.values[i] - t_curve.values[i]) < 1e-3);
}

TEST_CASE("dr v2 cancellation when the bridge depends on the dose only", "[dr]") {
    // y = 2a exactly: the fitted h is a function of a alone, so the
    // interaction regression reproduces it and DR-V2 collapses onto the
    // treatment-bridge curve
    auto d = linear_dgp(3000, 37, /*y_depends_on_w=*/false);
    auto plan = SplitPlan::halves(d.n());
    OutcomeBridge h(exact_outcome_config(39));
    h.fit(d, plan);
    TreatmentBridge phi(small_treatment_config(41));
    phi.fit(d, plan, Vec::Ones(static_cast<long>(plan.d2.size())));

    auto grid = linspace(-1.0, 1.0, 9);
    auto t_curve = phi.ate_curve(d, plan.d3, reg_cfg(43), grid);
    auto dr = fit_dr_ate(h, phi, d, plan.d3, reg_cfg(45), DrVersion::V2, grid, &t_curve);
    auto c = dr.curve(grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        REQUIRE(std::abs(c.values[i] - t_curve.values[i]) < 0.05);
}

TEST_CASE("head perturbation utility", "[dr]") {
    Rng rng(47);
    Vec head(64);
    for (long i = 0; i < head.size(); ++i) head(i) = rng.normal();

    // sigma = 0: identical
    REQUIRE(perturbed_head(head, 0.0, 5) == head);

    // fixed seed: reproducible
    REQUIRE(perturbed_head(head, 0.5, 5) == perturbed_head(head, 0.5, 5));
    REQUIRE(perturbed_head(head, 0.5, 5) != perturbed_head(head, 0.5, 6));

    // folded-normal second moment: E |eps|^2 = sigma^2
    const double sigma = 0.5;
    double sum_sq = 0.0;
    long count = 0;
    Vec base = Vec::Zero(100);
    for (int rep = 0; rep < 100; ++rep) {
        Vec p = perturbed_head(base, sigma, 1000 + rep);
        sum_sq += p.squaredNorm();
        count += p.size();
    }
    double second_moment = sum_sq / static_cast<double>(count);
    REQUIRE(second_moment == Approx(sigma * sigma).epsilon(0.05));

    // perturbations are nonnegative shifts
    Vec p = perturbed_head(base, 1.0, 3);
    REQUIRE(p.minCoeff() >= 0.0);

    REQUIRE_THROWS_AS(perturbed_head(head, -0.1, 1), ConfigError);
}

TEST_CASE("dr cate decomposition identity", "[dr]") {
    auto d = dgp::gen_cate(1200, 49);
    auto plan = SplitPlan::halves(d.n());

    OutcomeBridgeConfig hc = exact_outcome_config(51);
    hc.hyper.epochs = 8;
    OutcomeBridge h(hc);
    h.fit(d, plan);
    TreatmentBridge phi(small_treatment_config(53));
    TreatmentBridgeConfig pc = small_treatment_config(53);
    pc.hyper.epochs = 6;
    phi = TreatmentBridge(pc);
    phi.fit(d, plan, Vec::Ones(static_cast<long>(plan.d2.size())));

    auto dr = fit_dr_cate(h, phi, d, plan.d3, reg_cfg(55, 30), reg_cfg(57, 30), reg_cfg(59, 30),
                          DrVersion::V1);
    auto v_grid = linspace(-0.4, 0.4, 5);
    auto c = dr.curve(1.0, v_grid);
    for (std::size_t i = 0; i < v_grid.size(); ++i) {
        Mat in(1, 2);
        in(0, 0) = 1.0;
        in(0, 1) = v_grid[i];
        double expect = dr.outcome_eval.at(1.0, v_grid[i]) + dr.correction.predict(in)(0, 0);
        REQUIRE(c.values[i] == Approx(expect).margin(1e-12));
    }
}

TEST_CASE("dr att decomposition identity", "[dr]") {
    auto d = linear_dgp(1000, 61);
    auto plan = SplitPlan::halves(d.n());
    OutcomeBridge h(exact_outcome_config(63));
    h.fit(d, plan);
    auto h_att = h.att_regression(d, plan.d3, reg_cfg(65, 40));
    TreatmentBridge phi(small_treatment_config(67));
    phi.fit(d, plan, Vec::Ones(static_cast<long>(plan.d2.size())));

    auto grid = linspace(-1, 1, 5);
    const double anchor = 0.3;
    auto dr = fit_dr_att(h, h_att, phi, d, plan.d3, reg_cfg(69, 30), DrVersion::V1, grid, anchor);
    auto c = dr.curve(grid);
    REQUIRE(c.has_anchor);
    Mat g(grid.size(), 1);
    for (std::size_t i = 0; i < grid.size(); ++i) g(i, 0) = grid[i];
    Vec k = dr.correction.predict(g).col(0);
    for (std::size_t i = 0; i < grid.size(); ++i)
        REQUIRE(c.values[i] == Approx(dr.outcome_curve.values[i] + k(i)).margin(1e-12));
}

TEST_CASE("dr rejects schema mismatches and unfitted bridges", "[dr]") {
    auto d = linear_dgp(400, 71);
    auto plan = SplitPlan::halves(d.n());
    OutcomeBridge h(exact_outcome_config(73));
    TreatmentBridge phi(small_treatment_config(75));
    auto grid = linspace(-1, 1, 3);
    REQUIRE_THROWS_AS(fit_dr_ate(h, phi, d, plan.d3, reg_cfg(77), DrVersion::V1, grid), StateError);

    h.fit(d, plan);
    phi.fit(d, plan, Vec::Ones(static_cast<long>(plan.d2.size())));
    auto d_other = dgp::gen_lowdim_ate(100, 1); // z, w have two columns here
    REQUIRE_THROWS_AS(
        fit_dr_ate(h, phi, d_other, SplitPlan::halves(100).d2, reg_cfg(79), DrVersion::V1, grid),
        ConfigError);
}
