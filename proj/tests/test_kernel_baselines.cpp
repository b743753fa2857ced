#include <catch2/catch.hpp>

#include "pclnet/dgp.hpp"
#include "pclnet/kernel_baselines.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

using namespace pclnet;
using namespace pclnet::kernel;

namespace {

Dataset small_lowdim(long n, std::uint64_t seed) { return dgp::gen_lowdim_ate(n, seed); }

} // namespace

TEST_CASE("rbf gram values", "[kernel]") {
    Rng rng(1);
    Mat x(3, 2);
    for (long i = 0; i < 3; ++i)
        for (long j = 0; j < 2; ++j) x(i, j) = rng.uniform(-1, 1);
    Mat k = rbf_gram(x, x, 0.7);
    for (long i = 0; i < 3; ++i) REQUIRE(k(i, i) == Approx(1.0));

    // points {0, 1} with sigma^2 = 0.5: off-diagonal exp(-1)
    Mat p(2, 1);
    p << 0.0, 1.0;
    Mat k2 = rbf_gram(p, p, std::sqrt(0.5));
    REQUIRE(k2(0, 1) == Approx(std::exp(-1.0)).margin(1e-12));

    // sigma -> inf: all ones
    Mat k3 = rbf_gram(p, p, 1e9);
    REQUIRE((k3.array() - 1.0).abs().maxCoeff() < 1e-12);

    REQUIRE_THROWS_AS(rbf_gram(Mat::Zero(2, 1), Mat::Zero(2, 2), 1.0), ShapeError);
    REQUIRE_THROWS_AS(rbf_gram(p, p, 0.0), ConfigError);
}

TEST_CASE("hadamard gram assembly stays positive definite after ridge", "[kernel]") {
    auto d = small_lowdim(30, 5);
    Mat a(30, 1);
    a.col(0) = d.a;
    Mat g = rbf_gram(a, a, median_heuristic(a))
                .cwiseProduct(rbf_gram(d.z, d.z, median_heuristic(d.z)));
    REQUIRE((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    g.diagonal().array() += 30.0 * 1e-3;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(g)};
    REQUIRE(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("kpv closed form matches a generic quadratic solver on a tiny instance", "[kernel]") {
    auto d = small_lowdim(40, 7); // 20/20 split
    auto plan = SplitPlan::halves(40);
    auto model = KpvModel::fit(d, plan, {});

    // direct route: minimize (1/m)||y - M alpha||^2 + lambda alpha^T M alpha
    const Mat& m = model.m_matrix();
    Dataset d2 = d.rows(plan.d2);
    const double mm = static_cast<double>(d2.n());
    Mat lhs = m * m + mm * 1e-3 * m;
    Vec rhs = m * d2.y;
    Vec alpha_gen = Eigen::FullPivLU<Eigen::MatrixXd>(Eigen::MatrixXd(lhs)).solve(Eigen::VectorXd(rhs));

    // coefficient vectors may differ in null space; predicted values agree
    Rng rng(3);
    for (int probe = 0; probe < 12; ++probe) {
        double a = rng.uniform(-2, 2);
        Eigen::RowVectorXd w(2), x(0);
        w << rng.uniform(-2, 2), rng.uniform(-2, 2);
        Vec feat = model.bridge_features(a, x, w);
        REQUIRE(std::abs(alpha_gen.dot(feat) - model.eval_h(a, x, w)) < 1e-6);
    }

    // second-stage normal equations hold at the returned alpha
    Vec resid = (m + mm * 1e-3 * Mat::Identity(m.rows(), m.cols())) * model.alpha() - d2.y;
    REQUIRE(resid.norm() <= 1e-8 * d2.y.norm());
}

TEST_CASE("kpv large ridge flattens the curve to zero", "[kernel]") {
    auto d = small_lowdim(60, 9);
    auto model = KpvModel::fit(d, SplitPlan::halves(60), {.lambda1 = 1e-3, .lambda2 = 1e9});
    auto c = model.curve(linspace(-2, 2, 9));
    for (double v : c.values) REQUIRE(std::abs(v) < 1e-5);
}

TEST_CASE("kpv duplicated rows leave the curve unchanged under the averaged-loss scaling",
          "[kernel]") {
    // The closed forms regularize the averaged losses with K + n lambda I, so
    // duplicating every row (which leaves the average loss unchanged) must
    // reproduce the same bridge at the same lambdas.
    auto d = small_lowdim(30, 11);
    auto plan = SplitPlan::halves(30);
    KpvModel::Config cfg;
    cfg.bw_a = cfg.bw_z = cfg.bw_w = 1.0; // hold bandwidths fixed across the two fits
    auto base = KpvModel::fit(d, plan, cfg);

    // duplicate every row inside each split
    std::vector<int> rows;
    for (int i = 0; i < 30; ++i) {
        rows.push_back(i);
        rows.push_back(i);
    }
    Dataset dd = d.rows(rows);
    SplitPlan plan2;
    for (int i = 0; i < 30; ++i)
        (i < 15 ? plan2.d1 : plan2.d2).insert((i < 15 ? plan2.d1 : plan2.d2).end(),
                                              {2 * i, 2 * i + 1});
    plan2.d3 = plan2.d2;
    auto doubled = KpvModel::fit(dd, plan2, cfg);

    auto grid = linspace(-2, 2, 7);
    auto c1 = base.curve(grid);
    auto c2 = doubled.curve(grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        REQUIRE(std::abs(c1.values[i] - c2.values[i]) < 1e-8);
}

TEST_CASE("kpv and kap curves are invariant to row order", "[kernel]") {
    auto d = small_lowdim(40, 13);
    auto plan = SplitPlan::halves(40);
    auto grid = linspace(-2, 2, 5);
    auto kpv1 = KpvModel::fit(d, plan, {}).curve(grid);
    auto kap1 = KapModel::fit(d, plan, {}).curve(grid);

    // permute rows within each fold
    std::vector<int> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(5);
    std::vector<int> head(perm.begin(), perm.begin() + 20), tail(perm.begin() + 20, perm.end());
    rng.shuffle(head);
    rng.shuffle(tail);
    std::vector<int> rows = head;
    rows.insert(rows.end(), tail.begin(), tail.end());
    Dataset dp = d.rows(rows);
    auto kpv2 = KpvModel::fit(dp, plan, {}).curve(grid);
    auto kap2 = KapModel::fit(dp, plan, {}).curve(grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        REQUIRE(std::abs(kpv1.values[i] - kpv2.values[i]) < 1e-8);
        REQUIRE(std::abs(kap1.values[i] - kap2.values[i]) < 1e-8);
    }
}

TEST_CASE("kap second-stage objective is minimal at the returned bridge", "[kernel]") {
    auto d = small_lowdim(8, 17); // m = 4 keeps the objective evaluation cheap
    auto plan = SplitPlan::halves(8);
    KapModel::Config cfg;
    cfg.keep_test_matrices = true;
    auto model = KapModel::fit(d, plan, cfg);
    Mat c_star = model.coefficient_matrix();
    double at_min = model.stage2_objective(c_star);

    Rng rng(23);
    double scale = std::max(c_star.cwiseAbs().maxCoeff(), 0.1);
    for (int k = 0; k < 50; ++k) {
        Mat cand(c_star.rows(), c_star.cols());
        for (long i = 0; i < cand.rows(); ++i)
            for (long j = 0; j < cand.cols(); ++j)
                cand(i, j) = c_star(i, j) + scale * rng.uniform(-1.0, 1.0);
        REQUIRE(model.stage2_objective(cand) >= at_min - 1e-10);
    }
}

TEST_CASE("kap closed form matches brute-force quadratic minimization", "[kernel]") {
    auto d = small_lowdim(30, 19); // n = m = 15
    auto plan = SplitPlan::halves(30);
    KapModel::Config cfg;
    cfg.keep_test_matrices = true;
    auto model = KapModel::fit(d, plan, cfg);

    const long mm = 15, nn = 15;
    const long dim = mm * nn;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
    auto vec_of = [&](const Mat& m) {
        Eigen::VectorXd v(dim);
        for (long j = 0; j < nn; ++j)
            for (long i = 0; i < mm; ++i) v(j * mm + i) = m(i, j);
        return v;
    };
    for (long i = 0; i < mm; ++i) {
        Eigen::VectorXd dii = vec_of(model.design_vector(i, i));
        h += (2.0 / mm) * dii * dii.transpose();
        for (long j = 0; j < mm; ++j) {
            if (i == j) continue;
            b += (2.0 / (static_cast<double>(mm) * (mm - 1))) * vec_of(model.design_vector(i, j));
        }
    }
    // lambda * (Kz kron Ka) from the RKHS norm, column-major vec convention
    Mat kaa = rbf_gram(model.a2(), model.a2(), model.bandwidth_a());
    const Mat& kzz = model.kzz();
    for (long j1 = 0; j1 < nn; ++j1)
        for (long j2 = 0; j2 < nn; ++j2)
            for (long i1 = 0; i1 < mm; ++i1)
                for (long i2 = 0; i2 < mm; ++i2)
                    h(j1 * mm + i1, j2 * mm + i2) += 2.0 * 1e-3 * kzz(j1, j2) * kaa(i1, i2);

    Eigen::VectorXd c_flat = Eigen::LDLT<Eigen::MatrixXd>(0.5 * (h + h.transpose())).solve(b);
    Mat c_brute(mm, nn);
    for (long j = 0; j < nn; ++j)
        for (long i = 0; i < mm; ++i) c_brute(i, j) = c_flat(j * mm + i);

    // compare bridge function values on probes
    Dataset d1 = d.rows(plan.d1);
    Dataset d2 = d.rows(plan.d2);
    Mat ka_basis(mm, 1), kz_basis(nn, 1);
    Rng rng(29);
    for (int probe = 0; probe < 10; ++probe) {
        double a = rng.uniform(-2, 2);
        Eigen::RowVectorXd z(2);
        z << rng.uniform(-2, 2), rng.uniform(-2, 2);
        Mat pa(1, 1);
        pa(0, 0) = a;
        Mat a2m(mm, 1);
        a2m.col(0) = d2.a;
        Vec ka = rbf_gram(a2m, pa, model.bandwidth_a()).col(0);
        Vec kz = rbf_gram(d1.z, Mat(z), median_heuristic(d1.z)).col(0);
        double brute_val = ka.transpose() * c_brute * kz;
        REQUIRE(std::abs(brute_val - model.eval_phi(a, z)) < 1e-6);
    }
}

TEST_CASE("kap large ridge gives a zero curve and small m is rejected", "[kernel]") {
    auto d = small_lowdim(40, 23);
    auto model = KapModel::fit(d, SplitPlan::halves(40), {.lambda1 = 1e-3, .lambda2 = 1e9, .lambda3 = 1e-3});
    for (double v : model.curve(linspace(-2, 2, 7)).values) REQUIRE(std::abs(v) < 1e-5);

    SplitPlan tiny;
    tiny.d1 = {0, 1, 2};
    tiny.d2 = {3};
    tiny.d3 = {3};
    REQUIRE_THROWS_AS(KapModel::fit(d, tiny, {}), DataError);

    auto dx = dgp::gen_highdim_ate(30, 1, {.dx = 2, .dz = 2, .dw = 2});
    REQUIRE_THROWS_AS(KapModel::fit(dx, SplitPlan::halves(30), {}), ConfigError);
}

TEST_CASE("drkpv reduces to the surviving bridge when the other is null", "[kernel]") {
    auto d = small_lowdim(60, 31);
    auto plan = SplitPlan::halves(60);
    auto grid = linspace(-2, 2, 7);

    auto kpv = KpvModel::fit(d, plan, {});
    auto kap = KapModel::fit(d, plan, {});
    auto kpv_null = KpvModel::fit(d, plan, {.lambda1 = 1e-3, .lambda2 = 1e12});
    auto kap_null = KapModel::fit(d, plan, {.lambda1 = 1e-3, .lambda2 = 1e12, .lambda3 = 1e-3});

    // h == 0: cross term vanishes, DR equals the KAP curve
    auto dr1 = drkpv_curve(kpv_null, kap, d, plan.d3, 1e-3, grid);
    auto kap_curve = kap.curve(grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        REQUIRE(std::abs(dr1.values[i] - kap_curve.values[i]) < 1e-5);

    // phi == 0: DR equals the KPV curve
    auto dr2 = drkpv_curve(kpv, kap_null, d, plan.d3, 1e-3, grid);
    auto kpv_curve = kpv.curve(grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        REQUIRE(std::abs(dr2.values[i] - kpv_curve.values[i]) < 1e-5);

    REQUIRE_THROWS_AS(drkpv_curve(kpv, kap, d, {}, 1e-3, grid), DataError);
}

TEST_CASE("drkpv interpolation weights sum to one at training points", "[kernel]") {
    Rng rng(37);
    Vec a3(10);
    for (long i = 0; i < 10; ++i) a3(i) = rng.uniform(-2, 2);
    for (long i = 0; i < 10; ++i) {
        Vec xi = drkpv_xi(a3, a3(i), 1e-10);
        REQUIRE(xi.sum() == Approx(1.0).margin(1e-4));
    }
}
