#pragma once

#include "pclnet/curve.hpp"
#include "pclnet/dataset.hpp"
#include "pclnet/quadrature.hpp"
#include "pclnet/rng.hpp"

#include <numbers>

namespace pclnet::dgp {

inline double phi_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// truncated logistic link mapping into (0.1, 0.9)
inline double logistic_link(double t) { return 0.8 / (1.0 + std::exp(-t)) + 0.1; }

// ---------------------------------------------------------------------------
// low-dimensional continuous-treatment benchmark
// ---------------------------------------------------------------------------

// Y depends on the latent pair through 3 cos(2(0.3 U2 + 0.3 U1 + 0.2) + 1.5 A).
// Integrating U2 | U1 = u over its unit interval gives the inner mean below.
inline double lowdim_c(double a, double u) {
    return 0.6 * u - 0.6 * (u >= 0.0 && u <= 1.0 ? 1.0 : 0.0) + 0.4 + 1.5 * a;
}

inline double lowdim_m(double a, double u) {
    double c = lowdim_c(a, u);
    return 5.0 * (std::sin(c + 0.6) - std::sin(c));
}

struct LowdimOptions {
    bool unconfounded = false; // Y uses fresh latent noise, for sanity checks
};

inline Dataset gen_lowdim_ate(long n, std::uint64_t seed, LowdimOptions opt = {}) {
    Dataset d;
    d.benchmark = opt.unconfounded ? "lowdim-unconfounded" : "lowdim-ate";
    d.seed = seed;
    Rng base(seed);
    auto r_u1 = base.fork("u1");
    auto r_u2 = base.fork("u2");
    auto r_w1 = base.fork("w1");
    auto r_w2 = base.fork("w2");
    auto r_z1 = base.fork("z1");
    auto r_z2 = base.fork("z2");
    auto r_a = base.fork("a");
    auto r_y = base.fork("y");
    auto r_uf = base.fork("u-fresh");

    d.a.resize(n);
    d.y.resize(n);
    d.z.resize(n, 2);
    d.w.resize(n, 2);
    d.v.resize(n, 0);
    d.s.resize(n, 0);
    d.x_plain.resize(n, 0);
    for (long i = 0; i < n; ++i) {
        double u1 = r_u1.uniform(-1.0, 2.0);
        double u2 = r_u2.uniform(0.0, 1.0) - ((u1 >= 0.0 && u1 <= 1.0) ? 1.0 : 0.0);
        d.w(i, 0) = u2 + r_w1.uniform(-1.0, 1.0);
        d.w(i, 1) = u1 + r_w2.normal();
        d.z(i, 0) = u2 + r_z1.normal();
        d.z(i, 1) = u1 + r_z2.uniform(-1.0, 1.0);
        d.a(i) = u1 + r_a.normal();
        double uy1 = u1, uy2 = u2;
        if (opt.unconfounded) {
            uy1 = r_uf.uniform(-1.0, 2.0);
            uy2 = r_uf.uniform(0.0, 1.0) - ((uy1 >= 0.0 && uy1 <= 1.0) ? 1.0 : 0.0);
        }
        d.y(i) = 3.0 * std::cos(2.0 * (0.3 * uy2 + 0.3 * uy1 + 0.2) + 1.5 * d.a(i)) + r_y.normal();
    }
    return d;
}

inline DoseResponseCurve oracle_lowdim_ate(const std::vector<double>& grid) {
    DoseResponseCurve c;
    c.grid_a = grid;
    c.tag = "quadrature";
    for (double a : grid)
        c.values.push_back(integrate([a](double u) { return lowdim_m(a, u); }, -1.0, 2.0, 1e-9) / 3.0);
    return c;
}

// Monte Carlo counterpart used to cross-check the quadrature oracle.
// Returns mean and standard error at each grid point.
inline std::pair<DoseResponseCurve, std::vector<double>> oracle_lowdim_ate_mc(
    const std::vector<double>& grid, long m_samples, std::uint64_t seed) {
    Rng rng(seed, 0xa7e);
    std::vector<double> u(m_samples);
    for (auto& ui : u) ui = rng.uniform(-1.0, 2.0);
    DoseResponseCurve c;
    c.grid_a = grid;
    c.tag = "monte-carlo";
    std::vector<double> se;
    for (double a : grid) {
        double s = 0.0, s2 = 0.0;
        for (double ui : u) {
            double m = lowdim_m(a, ui);
            s += m;
            s2 += m * m;
        }
        double mean = s / static_cast<double>(m_samples);
        double var = s2 / static_cast<double>(m_samples) - mean * mean;
        c.values.push_back(mean);
        se.push_back(std::sqrt(var / static_cast<double>(m_samples)));
    }
    return {c, se};
}

// ---------------------------------------------------------------------------
// conditional (ATT) oracle over the same observational process
// ---------------------------------------------------------------------------

inline Dataset gen_att(long n, std::uint64_t seed) {
    Dataset d = gen_lowdim_ate(n, seed);
    d.benchmark = "att";
    return d;
}

// Posterior weights are computed relative to their maximum over the latent
// support so far-out anchors do not underflow the Gaussian tail.
inline DoseResponseCurve oracle_att(const std::vector<double>& grid, double anchor) {
    double u_peak = std::clamp(anchor, -1.0, 2.0);
    auto logw = [anchor, u_peak](double u) {
        double du = anchor - u, dp = anchor - u_peak;
        return -0.5 * du * du + 0.5 * dp * dp;
    };
    double norm = integrate([&](double u) { return std::exp(logw(u)); }, -1.0, 2.0, 1e-12);
    if (!(norm > 0.0)) throw DataError("oracle_att: degenerate posterior normalization");
    DoseResponseCurve c;
    c.grid_a = grid;
    c.anchor = anchor;
    c.has_anchor = true;
    c.tag = "quadrature";
    for (double a : grid) {
        double num = integrate(
            [&](double u) { return lowdim_m(a, u) * std::exp(logw(u)); }, -1.0, 2.0, 1e-10);
        c.values.push_back(num / norm);
    }
    return c;
}

// Self-normalized importance sampling cross-check for the ATT oracle.
// The standard error uses the weighted variance over the effective sample size.
inline std::pair<double, double> oracle_att_mc_point(double a, double anchor, long m_samples,
                                                     std::uint64_t seed) {
    Rng rng(seed, 0xa77);
    double sw = 0.0, sw2 = 0.0, swf = 0.0, swf2 = 0.0;
    for (long i = 0; i < m_samples; ++i) {
        double u = rng.uniform(-1.0, 2.0);
        double wgt = phi_pdf(anchor - u);
        double f = lowdim_m(a, u);
        sw += wgt;
        sw2 += wgt * wgt;
        swf += wgt * f;
        swf2 += wgt * f * f;
    }
    double mean = swf / sw;
    double ess = sw * sw / sw2;
    double var = (swf2 / sw - mean * mean) / ess;
    return {mean, std::sqrt(std::max(var, 0.0))};
}

// ---------------------------------------------------------------------------
// high-dimensional benchmark
// ---------------------------------------------------------------------------

struct HighdimDims {
    int dx = 100;
    int dz = 10;
    int dw = 10;
};

inline Dataset gen_highdim_ate(long n, std::uint64_t seed, HighdimDims dims = {}) {
    if (dims.dx < 1 || dims.dz < 1 || dims.dw < 1)
        throw ConfigError("gen_highdim_ate: dims must be >= 1");
    Dataset d;
    d.benchmark = "highdim-ate";
    d.seed = seed;
    Rng base(seed);
    auto r_eps = base.fork("eps");
    auto r_nz = base.fork("nu-z");
    auto r_nw = base.fork("nu-w");
    auto r_x = base.fork("x");

    // Cholesky factor of the tridiagonal covariance
    Mat sigma = Mat::Identity(dims.dx, dims.dx);
    for (int i = 0; i + 1 < dims.dx; ++i) {
        sigma(i, i + 1) = 0.5;
        sigma(i + 1, i) = 0.5;
    }
    Eigen::MatrixXd sig_cm = sigma;
    Eigen::LLT<Eigen::MatrixXd> llt(sig_cm);
    if (llt.info() != Eigen::Success) throw NumericError("gen_highdim_ate: covariance not SPD");
    Eigen::MatrixXd chol = llt.matrixL();

    d.a.resize(n);
    d.y.resize(n);
    d.z.resize(n, dims.dz);
    d.w.resize(n, dims.dw);
    d.x_plain.resize(n, dims.dx);
    d.v.resize(n, 0);
    d.s.resize(n, 0);
    const double sdx = std::sqrt(static_cast<double>(dims.dx));
    const double sdz = std::sqrt(static_cast<double>(dims.dz));
    const double sdw = std::sqrt(static_cast<double>(dims.dw));
    for (long i = 0; i < n; ++i) {
        double e1 = r_eps.normal(), e2 = r_eps.normal(), e3 = r_eps.normal();
        double uz = e1 + e3, uw = e2 + e3;
        for (int j = 0; j < dims.dz; ++j) d.z(i, j) = r_nz.uniform(-1.0, 1.0) + 0.25 * uz;
        for (int j = 0; j < dims.dw; ++j) d.w(i, j) = r_nw.uniform(-1.0, 1.0) + 0.25 * uw;
        Eigen::VectorXd g(dims.dx);
        for (int j = 0; j < dims.dx; ++j) g(j) = r_x.normal();
        d.x_plain.row(i) = (chol * g).transpose();
        double xs = d.x_plain.row(i).sum() / sdx;
        double zs = d.z.row(i).sum() / sdz;
        double ws = d.w.row(i).sum() / sdw;
        d.a(i) = logistic_link(3.0 * xs + 3.0 * zs) + 0.25 * uw;
        d.y(i) = (d.a(i) * d.a(i) + 1.2 * d.a(i)) + 1.2 * (xs + ws) + d.a(i) * d.x_plain(i, 0) +
                 0.25 * uz;
    }
    return d;
}

// The latent terms and covariate summaries are mean zero, so the population
// dose-response is the structural component itself.
inline DoseResponseCurve oracle_highdim_ate(const std::vector<double>& grid) {
    DoseResponseCurve c;
    c.grid_a = grid;
    c.tag = "analytic";
    for (double a : grid) c.values.push_back(a * a + 1.2 * a);
    return c;
}

// ---------------------------------------------------------------------------
// heterogeneous (CATE) benchmark, binary treatment
// ---------------------------------------------------------------------------

inline Dataset gen_cate(long n, std::uint64_t seed) {
    Dataset d;
    d.benchmark = "cate";
    d.seed = seed;
    Rng base(seed);
    auto r_v = base.fork("v");
    auto r_e = base.fork("eps");
    auto r_nu = base.fork("nu");
    auto r_a = base.fork("a");
    auto r_wn = base.fork("w-noise");
    auto r_zn = base.fork("z-noise");
    const double b = 0.1, sig = 0.1;

    d.a.resize(n);
    d.y.resize(n);
    d.z.resize(n, 3);
    d.w.resize(n, 3);
    d.v.resize(n, 1);
    d.s.resize(n, 0);
    d.x_plain.resize(n, 0);
    for (long i = 0; i < n; ++i) {
        double v = r_v.uniform(-0.5, 0.5);
        double u1 = 1.0 + 2.0 * v + r_e.uniform(-0.5, 0.5);
        double u2 = 1.0 + 2.0 * v + r_e.uniform(-0.5, 0.5);
        double u3 = (v - 1.0) * (v - 1.0) + r_e.uniform(-0.5, 0.5);
        d.v(i, 0) = v;
        d.w(i, 0) = u1 + r_wn.uniform(-b, b);
        d.w(i, 1) = u2 + r_wn.normal(0.0, sig);
        d.w(i, 2) = u3 + r_wn.normal(0.0, sig);
        d.z(i, 0) = u1 + r_zn.normal(0.0, sig);
        d.z(i, 1) = u2 + r_zn.uniform(-b, b);
        d.z(i, 2) = u3 + r_zn.uniform(-b, b);
        double a = r_a.uniform() < 0.5 ? 1.0 : 0.0;
        d.a(i) = a;
        d.y(i) = a == 1.0 ? v * u1 * u2 * u3 + r_nu.normal(0.0, 0.25) : 0.0;
    }
    return d;
}

inline DoseResponseCurve oracle_cate(const std::vector<double>& v_grid) {
    DoseResponseCurve c;
    c.grid_a.assign(v_grid.size(), 1.0);
    c.grid_v = v_grid;
    c.tag = "analytic";
    for (double v : v_grid) {
        double onep = 1.0 + 2.0 * v;
        double vm1 = v - 1.0;
        c.values.push_back(v * onep * onep * vm1 * vm1);
    }
    return c;
}

enum class BrokenLink { W, Z, Both };

// stress variant: break proxy-confounder links with entrywise |.| + large noise
inline Dataset gen_cate_broken(BrokenLink variant, long n, std::uint64_t seed) {
    Dataset d = gen_cate(n, seed);
    Rng base(seed);
    auto r_bw = base.fork("break-w");
    auto r_bz = base.fork("break-z");
    if (variant == BrokenLink::W || variant == BrokenLink::Both) {
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < d.w.cols(); ++j)
                d.w(i, j) = std::abs(d.w(i, j)) + r_bw.normal(0.0, 100.0);
        d.benchmark = variant == BrokenLink::Both ? "cate-broken-both" : "cate-broken-w";
    }
    if (variant == BrokenLink::Z || variant == BrokenLink::Both) {
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < d.z.cols(); ++j)
                d.z(i, j) = std::abs(d.z(i, j)) + r_bz.normal(0.0, 100.0);
        if (variant == BrokenLink::Z) d.benchmark = "cate-broken-z";
    }
    return d;
}

// ---------------------------------------------------------------------------
// noisy-proxy settings 1..6
// ---------------------------------------------------------------------------

namespace detail_np {

struct Latents {
    double u, z1, z2, w1, w2, eps_w, eps_z, eps_a, xi_z, xi_w, xi_w_pm;
};

inline Latents draw_latents(int setting, Rng& ru, Rng& rn) {
    Latents l{};
    if (setting <= 2) l.u = ru.beta(5.0, 4.0);
    else if (setting <= 4) l.u = ru.beta(8.0, 4.0);
    else l.u = ru.beta(3.0, 5.0);
    l.z1 = rn.normal(-1.0, 0.1);
    l.z2 = rn.normal(1.0, 0.1);
    l.w1 = rn.normal(-1.0, 0.1);
    l.w2 = rn.normal(1.0, 0.1);
    l.eps_w = rn.uniform(0.0, 1.0);
    l.eps_z = rn.uniform(0.0, 1.0);
    l.eps_a = rn.uniform(0.0, 1.0);
    l.xi_z = rn.uniform(0.0, 100.0);
    l.xi_w = rn.uniform(0.0, 100.0);
    l.xi_w_pm = rn.uniform(-100.0, 100.0);
    return l;
}

struct Obs {
    double w, z, a, y;
};

inline double np_w(int setting, const Latents& l) {
    switch (setting) {
        case 1: return logistic_link(l.u) + l.eps_w;
        case 2: return (1.0 - l.u) * l.w1 + l.u * l.w2 + l.xi_w;
        case 3: return l.u + l.eps_w;
        case 4: return logistic_link((1.0 - l.u) * l.w1 + l.u * l.w2) + l.xi_w;
        case 5: return -l.u * l.u + l.eps_w;
        case 6: return logistic_link((1.0 - l.u) * l.w1 + l.u * l.w2 + l.xi_w_pm);
    }
    throw ConfigError("noisy-proxy: invalid setting");
}

inline double np_z(int setting, const Latents& l) {
    switch (setting) {
        case 1: return (1.0 - l.u) * l.z1 + l.u * l.z2 + l.xi_z;
        case 2: return logistic_link(l.u) + l.eps_z;
        case 3: return logistic_link((1.0 - l.u) * l.z1 + l.u * l.z2) + l.xi_z;
        case 4: return l.u + l.eps_z;
        case 5: return logistic_link((1.0 - l.u) * l.z1 + l.u * l.z2) + l.xi_z;
        case 6: return -l.u * l.u + l.eps_z;
    }
    throw ConfigError("noisy-proxy: invalid setting");
}

inline double np_a(int setting, double u, double z, double eps_a) {
    if (setting <= 4) return 0.1 * u + 0.1 * z + eps_a;
    return 0.25 * std::sqrt(std::abs(u)) - 0.2 * z + eps_a;
}

inline double np_y(int setting, double u, double w, double a) {
    switch (setting) {
        case 1:
        case 2:
        case 3:
        case 4: return (2.0 * u - 1.0) + std::cos(1.5 * a);
        case 5: return 3.0 * w - 0.1 * a - std::cos(0.5 * a + 5.0 * u);
        case 6: return 3.0 * w - 2.0 * a - std::cos(10.0 * a + 5.0 * u);
    }
    throw ConfigError("noisy-proxy: invalid setting");
}

inline Obs draw_obs(int setting, const Latents& l) {
    Obs o{};
    o.w = np_w(setting, l);
    o.z = np_z(setting, l);
    o.a = np_a(setting, l.u, o.z, l.eps_a);
    o.y = np_y(setting, l.u, o.w, o.a);
    return o;
}

// potential outcome under do(A = a); W keeps its observational law
inline double draw_potential(int setting, const Latents& l, double a) {
    return np_y(setting, l.u, np_w(setting, l), a);
}

} // namespace detail_np

inline Dataset gen_noisy_proxy(int setting, long n, std::uint64_t seed) {
    if (setting < 1 || setting > 6) throw ConfigError("gen_noisy_proxy: setting must be 1..6");
    Dataset d;
    d.benchmark = "noisy-proxy-" + std::to_string(setting);
    d.seed = seed;
    Rng base(seed);
    auto ru = base.fork("u");
    auto rn = base.fork("noise");
    d.a.resize(n);
    d.y.resize(n);
    d.z.resize(n, 1);
    d.w.resize(n, 1);
    d.v.resize(n, 0);
    d.s.resize(n, 0);
    d.x_plain.resize(n, 0);
    for (long i = 0; i < n; ++i) {
        auto l = detail_np::draw_latents(setting, ru, rn);
        auto o = detail_np::draw_obs(setting, l);
        d.w(i, 0) = o.w;
        d.z(i, 0) = o.z;
        d.a(i) = o.a;
        d.y(i) = o.y;
    }
    return d;
}

// Monte Carlo oracle over the latent law; settings 1-4 admit the analytic
// form 2 E[U] - 1 + cos(1.5 a) used to cross-check it.
inline DoseResponseCurve oracle_noisy_proxy(int setting, const std::vector<double>& grid,
                                            long m_samples = 1000000, std::uint64_t seed = 20240) {
    if (setting < 1 || setting > 6) throw ConfigError("oracle_noisy_proxy: setting must be 1..6");
    DoseResponseCurve c;
    c.grid_a = grid;
    c.tag = "monte-carlo";
    Rng base(seed);
    auto ru = base.fork("oracle-u");
    auto rn = base.fork("oracle-noise");
    std::vector<detail_np::Latents> ls(m_samples);
    for (auto& l : ls) l = detail_np::draw_latents(setting, ru, rn);
    for (double a : grid) {
        double s = 0.0;
        for (const auto& l : ls) s += detail_np::draw_potential(setting, l, a);
        c.values.push_back(s / static_cast<double>(m_samples));
    }
    return c;
}

// ---------------------------------------------------------------------------
// dispatch by benchmark tag
// ---------------------------------------------------------------------------

inline Dataset generate(const std::string& benchmark, long n, std::uint64_t seed) {
    if (benchmark == "lowdim-ate") return gen_lowdim_ate(n, seed);
    if (benchmark == "lowdim-unconfounded") return gen_lowdim_ate(n, seed, {.unconfounded = true});
    if (benchmark == "highdim-ate") return gen_highdim_ate(n, seed);
    if (benchmark == "cate") return gen_cate(n, seed);
    if (benchmark == "att") return gen_att(n, seed);
    if (benchmark == "cate-broken-w") return gen_cate_broken(BrokenLink::W, n, seed);
    if (benchmark == "cate-broken-z") return gen_cate_broken(BrokenLink::Z, n, seed);
    if (benchmark == "cate-broken-both") return gen_cate_broken(BrokenLink::Both, n, seed);
    if (benchmark.rfind("noisy-proxy-", 0) == 0) {
        int setting = std::stoi(benchmark.substr(12));
        return gen_noisy_proxy(setting, n, seed);
    }
    throw ConfigError("unknown benchmark: " + benchmark);
}

inline DoseResponseCurve oracle_for(const std::string& benchmark, const std::vector<double>& grid,
                                    double anchor = 0.0, bool has_anchor = false) {
    if (has_anchor) {
        if (benchmark == "att" || benchmark == "lowdim-ate") return oracle_att(grid, anchor);
        throw ConfigError("anchor oracle only defined for the low-dimensional benchmark");
    }
    if (benchmark == "lowdim-ate" || benchmark == "lowdim-unconfounded" || benchmark == "att")
        return oracle_lowdim_ate(grid);
    if (benchmark == "highdim-ate") return oracle_highdim_ate(grid);
    if (benchmark == "cate" || benchmark.rfind("cate-broken", 0) == 0) return oracle_cate(grid);
    if (benchmark.rfind("noisy-proxy-", 0) == 0)
        return oracle_noisy_proxy(std::stoi(benchmark.substr(12)), grid);
    throw ConfigError("no oracle for benchmark: " + benchmark);
}

} // namespace pclnet::dgp
