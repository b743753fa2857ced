#include <catch2/catch.hpp>

#include "pclnet/dgp.hpp"

#include <filesystem>
#include <fstream>

using namespace pclnet;
using namespace pclnet::dgp;

TEST_CASE("lowdim oracle amplitude and periodicity", "[dgp]") {
    auto grid = linspace(-3.0, 3.0, 21);
    auto c = oracle_lowdim_ate(grid);
    for (double v : c.values) REQUIRE(std::abs(v) <= 3.0);

    // shifting a by 4 pi / 3 shifts the cosine phase by 2 pi
    const double period = 4.0 * std::numbers::pi / 3.0;
    for (double a : {-1.0, 0.0, 0.7}) {
        auto c1 = oracle_lowdim_ate({a});
        auto c2 = oracle_lowdim_ate({a + period});
        REQUIRE(std::abs(c1.values[0] - c2.values[0]) < 1e-10);
    }
}

TEST_CASE("lowdim quadrature oracle matches Monte Carlo within 3 SE", "[dgp]") {
    std::vector<double> grid = {-1.0, 0.0, 1.5};
    auto quad = oracle_lowdim_ate(grid);
    auto [mc, se] = oracle_lowdim_ate_mc(grid, 1000000, 99);
    for (std::size_t i = 0; i < grid.size(); ++i)
        REQUIRE(std::abs(quad.values[i] - mc.values[i]) <= 3.0 * se[i] + 1e-12);
}

TEST_CASE("lowdim generator schema and proxy relevance", "[dgp]") {
    auto d = gen_lowdim_ate(10000, 3);
    d.validate();
    REQUIRE(d.n() == 10000);
    REQUIRE(d.z.cols() == 2);
    REQUIRE(d.w.cols() == 2);
    REQUIRE_FALSE(d.has_x());

    // corr(A, Z2) > 0: both load on U1
    auto corr = [](const Vec& u, const Vec& v) {
        double mu = u.mean(), mv = v.mean();
        double c = ((u.array() - mu) * (v.array() - mv)).mean();
        double su = std::sqrt((u.array() - mu).square().mean());
        double sv = std::sqrt((v.array() - mv).square().mean());
        return c / (su * sv);
    };
    REQUIRE(corr(d.a, Vec(d.z.col(1))) > 0.3);

    // Y (whose structure loads on U1 through the cosine) stays correlated
    // with the U1 proxy W2
    REQUIRE(std::abs(corr(d.y, Vec(d.w.col(1)))) > 0.05);

    // determinism per seed
    auto d2 = gen_lowdim_ate(100, 3);
    auto d3 = gen_lowdim_ate(100, 3);
    REQUIRE(d2.a == d3.a);
    REQUIRE(d2.w == d3.w);
    auto d4 = gen_lowdim_ate(100, 4);
    REQUIRE(d2.a != d4.a);
}

TEST_CASE("highdim oracle spot values", "[dgp]") {
    auto c = oracle_highdim_ate({0.5, 0.0, -0.6});
    REQUIRE(c.values[0] == Approx(0.85));
    REQUIRE(c.values[1] == Approx(0.0).margin(1e-15));
    REQUIRE(c.values[2] == Approx(-0.36));
}

TEST_CASE("highdim generator shape and link range", "[dgp]") {
    auto d = gen_highdim_ate(500, 11, {.dx = 20, .dz = 5, .dw = 5});
    d.validate();
    REQUIRE(d.x_plain.cols() == 20);
    REQUIRE(d.z.cols() == 5);
    REQUIRE_THROWS_AS(gen_highdim_ate(10, 1, {.dx = 0, .dz = 1, .dw = 1}), ConfigError);
}

TEST_CASE("cate oracle spot values", "[dgp]") {
    auto c = oracle_cate({1.0, 0.0, 2.0});
    REQUIRE(c.values[0] == Approx(0.0).margin(1e-15));
    REQUIRE(c.values[1] == Approx(0.0).margin(1e-15));
    REQUIRE(c.values[2] == Approx(50.0));
}

TEST_CASE("cate generator matches its oracle on binned treated means", "[dgp]") {
    auto d = gen_cate(40000, 5);
    d.validate();
    auto oracle = oracle_cate({-0.3, 0.0, 0.3});
    for (std::size_t g = 0; g < oracle.grid_v.size(); ++g) {
        double v0 = oracle.grid_v[g];
        double s = 0.0;
        long count = 0;
        for (long i = 0; i < d.n(); ++i) {
            if (d.a(i) == 1.0 && std::abs(d.v(i, 0) - v0) < 0.02) {
                s += d.y(i);
                ++count;
            }
        }
        REQUIRE(count > 100);
        REQUIRE(std::abs(s / count - oracle.values[g]) < 0.05);
    }
}

TEST_CASE("att oracle posterior normalizes and matches importance sampling", "[dgp]") {
    double norm = phi_cdf(2.0 - 0.0) - phi_cdf(-1.0 - 0.0);
    double mass = integrate([&](double u) { return phi_pdf(0.0 - u) / norm; }, -1.0, 2.0, 1e-10);
    REQUIRE(std::abs(mass - 1.0) < 1e-8);

    auto c = oracle_att({0.0}, 0.0);
    auto [mc, se] = oracle_att_mc_point(0.0, 0.0, 1000000, 7);
    REQUIRE(std::abs(c.values[0] - mc) <= 3.0 * se + 1e-12);
}

TEST_CASE("att oracle collapses toward the boundary for large anchors", "[dgp]") {
    // Posterior of U1 | A = a' concentrates near u = 2 as a' grows, with a
    // boundary layer of width ~ 1/(a'-2); the gap to m(a,2) shrinks at that rate.
    for (double a : {0.0, 1.0}) {
        double g10 = std::abs(oracle_att({a}, 10.0).values[0] - lowdim_m(a, 2.0));
        double g40 = std::abs(oracle_att({a}, 40.0).values[0] - lowdim_m(a, 2.0));
        REQUIRE(g10 < 0.3);
        REQUIRE(g40 < 0.35 * g10);
    }
}

TEST_CASE("noisy proxy setting 1 oracle analytic value", "[dgp]") {
    // U ~ Beta(5,4): f(a) = 2 E[U] - 1 + cos(1.5 a) = 1/9 + cos(1.5 a)
    auto c = oracle_noisy_proxy(1, {0.0}, 400000, 42);
    REQUIRE(c.values[0] == Approx(1.0 / 9.0 + 1.0).margin(5e-3));

    auto c3 = oracle_noisy_proxy(3, {0.7}, 400000, 42);
    REQUIRE(c3.values[0] == Approx(2.0 * 8.0 / 12.0 - 1.0 + std::cos(1.05)).margin(5e-3));
}

TEST_CASE("noisy proxy link outputs stay in (0.1, 0.9)", "[dgp]") {
    auto d = gen_noisy_proxy(6, 2000, 9);
    d.validate();
    // the link saturates to its bounds at double precision under the huge
    // uniform noise, so the check is inclusive
    for (long i = 0; i < d.n(); ++i) {
        REQUIRE(d.w(i, 0) >= 0.1);
        REQUIRE(d.w(i, 0) <= 0.9);
    }
    auto d1 = gen_noisy_proxy(1, 100, 17);
    auto d1b = gen_noisy_proxy(1, 100, 17);
    REQUIRE(d1.y == d1b.y);
    REQUIRE_THROWS_AS(gen_noisy_proxy(7, 10, 1), ConfigError);
}

TEST_CASE("broken-link variants", "[dgp]") {
    auto base = gen_cate(10000, 21);
    auto dw = gen_cate_broken(BrokenLink::W, 10000, 21);
    REQUIRE(dw.z == base.z); // variant W leaves Z bitwise unchanged
    REQUIRE(dw.w != base.w);

    // perturbed columns pick up std ~ 100
    for (long j = 0; j < dw.w.cols(); ++j) {
        double mu = dw.w.col(j).mean();
        double sd = std::sqrt((dw.w.col(j).array() - mu).square().mean());
        REQUIRE(sd == Approx(100.0).margin(5.0));
    }

    auto dz1 = gen_cate_broken(BrokenLink::Z, 500, 3);
    auto dz2 = gen_cate_broken(BrokenLink::Z, 500, 3);
    REQUIRE(dz1.z == dz2.z);
    REQUIRE(dz1.w == gen_cate(500, 3).w);
}

TEST_CASE("dataset csv round trip and determinism", "[dgp]") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "pclnet_dgp_test";
    fs::create_directories(dir);
    auto d = gen_cate(50, 7);
    auto csv = (dir / "d.csv").string();
    auto side = (dir / "d.json").string();
    write_dataset_csv(d, csv, side);
    auto loaded = load_dataset_csv(csv, side);
    REQUIRE(loaded.a == d.a);
    REQUIRE(loaded.w == d.w);
    REQUIRE(loaded.v == d.v);
    REQUIRE(loaded.benchmark == d.benchmark);

    // rewriting the same dataset is byte-identical
    auto csv2 = (dir / "d2.csv").string();
    write_dataset_csv(d, csv2, (dir / "d2.json").string());
    std::ifstream f1(csv, std::ios::binary), f2(csv2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(s1 == s2);
    fs::remove_all(dir);
}

TEST_CASE("generate dispatch covers every benchmark tag", "[dgp]") {
    for (const auto* tag :
         {"lowdim-ate", "cate", "att", "noisy-proxy-1", "noisy-proxy-5", "cate-broken-both"}) {
        auto d = dgp::generate(tag, 40, 5);
        d.validate();
        REQUIRE(d.n() == 40);
    }
    auto dh = dgp::generate("highdim-ate", 10, 5);
    REQUIRE(dh.x_plain.cols() == 100);
    REQUIRE_THROWS_AS(dgp::generate("nope", 10, 1), ConfigError);
}
