#pragma once

#include "pclnet/dataset.hpp"
#include "pclnet/rng.hpp"

#include <atomic>
#include <functional>
#include <memory>
#include <numbers>

namespace pclnet::ratio {

inline std::vector<double> default_bandwidth_grid() {
    // 20 log-spaced multipliers in [1e-2, 1e1], applied to per-column stds
    std::vector<double> g(20);
    for (int i = 0; i < 20; ++i)
        g[i] = std::pow(10.0, -2.0 + 3.0 * static_cast<double>(i) / 19.0);
    return g;
}

// ---------------------------------------------------------------------------
// product-Gaussian KDE over one variable block
// ---------------------------------------------------------------------------

class KdeBlock {
public:
    // Bandwidths are multiplier * column std; the multiplier maximizing the
    // held-out log-likelihood on a deterministic 80/20 split wins.
    static KdeBlock fit(const Mat& samples, const std::vector<double>& bw_grid) {
        if (bw_grid.empty()) throw DataError("kde_fit: empty bandwidth grid");
        if (samples.rows() < 20) throw DataError("kde_fit: need at least 20 samples per block");
        KdeBlock k;
        Eigen::RowVectorXd mean = samples.colwise().mean();
        Eigen::RowVectorXd sd =
            ((samples.rowwise() - mean).array().square().colwise().mean()).sqrt();
        for (long j = 0; j < sd.size(); ++j)
            if (sd(j) <= 0.0) throw DataError("kde_fit: zero-variance column " + std::to_string(j));

        const long n = samples.rows();
        const long n_train = std::max<long>(1, (n * 8) / 10);
        Mat scaled = (samples.array().rowwise() / sd.array()).matrix(); // unit-std coordinates
        Mat train = scaled.topRows(n_train);
        Mat hold = scaled.bottomRows(n - n_train);

        // squared distances in unit-std coordinates, shared across multipliers
        Mat d2(hold.rows(), train.rows());
        {
            Vec tn = train.rowwise().squaredNorm();
            Vec hn = hold.rowwise().squaredNorm();
            d2.noalias() = -2.0 * hold * train.transpose();
            d2.colwise() += hn;
            d2.rowwise() += tn.transpose();
            d2 = d2.cwiseMax(0.0);
        }

        double best_ll = -std::numeric_limits<double>::infinity();
        double best_mult = bw_grid.front();
        const double d = static_cast<double>(samples.cols());
        for (double mult : bw_grid) {
            double log_norm = -std::log(static_cast<double>(n_train)) -
                              d * std::log(mult * std::sqrt(2.0 * std::numbers::pi)) -
                              sd.array().log().sum();
            double inv2m2 = 1.0 / (2.0 * mult * mult);
            double ll = 0.0;
            for (long i = 0; i < d2.rows(); ++i) {
                double mx = -d2.row(i).minCoeff() * inv2m2;
                double s = 0.0;
                for (long t = 0; t < d2.cols(); ++t) s += std::exp(-d2(i, t) * inv2m2 - mx);
                ll += mx + std::log(s) + log_norm;
            }
            if (ll > best_ll) {
                best_ll = ll;
                best_mult = mult;
            }
        }

        k.multiplier_ = best_mult;
        k.bw_ = best_mult * sd;
        k.scaled_train_ = std::move(scaled); // full sample as the final estimator
        k.sd_ = sd;
        k.log_norm_ = -std::log(static_cast<double>(n)) -
                      d * std::log(best_mult * std::sqrt(2.0 * std::numbers::pi)) -
                      sd.array().log().sum();
        return k;
    }

    double log_density(const Eigen::RowVectorXd& point) const {
        Eigen::RowVectorXd p = (point.array() / sd_.array()).matrix();
        const double inv2m2 = 1.0 / (2.0 * multiplier_ * multiplier_);
        Vec d2 = (scaled_train_.rowwise() - p).rowwise().squaredNorm();
        double mx = -d2.minCoeff() * inv2m2;
        double s = 0.0;
        for (long i = 0; i < d2.size(); ++i) s += std::exp(-d2(i) * inv2m2 - mx);
        return mx + std::log(s) + log_norm_;
    }

    Vec log_density_rows(const Mat& points) const {
        Vec out(points.rows());
        Mat p = (points.array().rowwise() / sd_.array()).matrix();
        const double inv2m2 = 1.0 / (2.0 * multiplier_ * multiplier_);
        Vec tn = scaled_train_.rowwise().squaredNorm();
        const long chunk = 512;
        for (long start = 0; start < p.rows(); start += chunk) {
            long len = std::min(chunk, p.rows() - start);
            Mat block = p.middleRows(start, len);
            Mat d2 = -2.0 * block * scaled_train_.transpose();
            d2.rowwise() += tn.transpose();
            d2.colwise() += Vec(block.rowwise().squaredNorm());
            d2 = d2.cwiseMax(0.0);
            for (long i = 0; i < len; ++i) {
                double mx = -d2.row(i).minCoeff() * inv2m2;
                double s = 0.0;
                for (long t = 0; t < d2.cols(); ++t) s += std::exp(-d2(i, t) * inv2m2 - mx);
                out(start + i) = mx + std::log(s) + log_norm_;
            }
        }
        return out;
    }

    double bandwidth_multiplier() const { return multiplier_; }
    const Eigen::RowVectorXd& bandwidths() const { return bw_; }

private:
    Mat scaled_train_;
    Eigen::RowVectorXd sd_;
    Eigen::RowVectorXd bw_;
    double multiplier_ = 1.0;
    double log_norm_ = 0.0;
};

struct ClipBounds {
    double lo = 1e-6;
    double hi = 1e6;
};

// ---------------------------------------------------------------------------
// KLIEP: direct ratio estimation with a nonnegative kernel expansion
// ---------------------------------------------------------------------------

struct KliepConfig {
    int centers = 100;
    std::vector<double> width_grid;  // absolute widths; empty = median-heuristic multiples
    int cv_folds = 5;
    int max_iters = 500;
    double step = 1e-2;
    std::uint64_t seed = 0;
};

class KliepModel {
public:
    static KliepModel fit(const Mat& numerator, const Mat& denominator, KliepConfig cfg = {}) {
        if (numerator.rows() == 0 || denominator.rows() == 0)
            throw DataError("kliep_fit: empty sample set");
        const long b = std::min<long>(cfg.centers, numerator.rows());

        // centers: random numerator points
        Rng rng(cfg.seed, 0x11eb);
        std::vector<int> idx(numerator.rows());
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        Mat centers(b, numerator.cols());
        for (long i = 0; i < b; ++i) centers.row(i) = numerator.row(idx[i]);

        std::vector<double> widths = cfg.width_grid;
        if (widths.empty()) {
            double med = median_pairwise(numerator, rng);
            for (double m : {0.25, 0.5, 1.0, 2.0, 4.0}) widths.push_back(m * med);
        }

        double best_width = widths.front();
        double best_cv = -std::numeric_limits<double>::infinity();
        if (widths.size() > 1) {
            for (double w : widths) {
                double cv = cv_loglik(numerator, denominator, centers, w, cfg);
                if (cv > best_cv) {
                    best_cv = cv;
                    best_width = w;
                }
            }
        }

        KliepModel m;
        m.centers_ = centers;
        m.sigma_ = best_width;
        auto [alpha, converged] =
            solve_alpha(kernel(numerator, centers, best_width), kernel(denominator, centers, best_width), cfg);
        m.alpha_ = alpha;
        m.converged_ = converged;
        return m;
    }

    Vec evaluate(const Mat& points) const { return kernel(points, centers_, sigma_) * alpha_; }
    double evaluate_one(const Eigen::RowVectorXd& p) const {
        Mat m(1, p.size());
        m.row(0) = p;
        return evaluate(m)(0);
    }

    const Vec& alpha() const { return alpha_; }
    double width() const { return sigma_; }
    bool converged() const { return converged_; }

    static Mat kernel(const Mat& pts, const Mat& centers, double sigma) {
        Mat k(pts.rows(), centers.rows());
        const double inv = 1.0 / (2.0 * sigma * sigma);
        for (long i = 0; i < pts.rows(); ++i)
            for (long j = 0; j < centers.rows(); ++j)
                k(i, j) = std::exp(-(pts.row(i) - centers.row(j)).squaredNorm() * inv);
        return k;
    }

private:
    static double median_pairwise(const Mat& pts, Rng& rng) {
        const long cap = std::min<long>(pts.rows(), 300);
        std::vector<int> idx(pts.rows());
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        std::vector<double> d;
        for (long i = 0; i < cap; ++i)
            for (long j = i + 1; j < cap; ++j)
                d.push_back((pts.row(idx[i]) - pts.row(idx[j])).norm());
        if (d.empty()) return 1.0;
        std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
        double med = d[d.size() / 2];
        return med > 0.0 ? med : 1.0;
    }

    // projected gradient ascent on the numerator log-likelihood with the
    // denominator normalization constraint re-imposed every step
    static std::pair<Vec, bool> solve_alpha(const Mat& k_num, const Mat& k_den, const KliepConfig& cfg) {
        const long b = k_num.cols();
        Vec alpha = Vec::Ones(b);
        Vec den_mean = k_den.colwise().mean().transpose();
        auto normalize = [&](Vec& a) {
            double m = a.dot(den_mean);
            if (m > 0.0) a /= m;
        };
        normalize(alpha);
        auto objective = [&](const Vec& a) {
            Vec w = k_num * a;
            double s = 0.0;
            for (long i = 0; i < w.size(); ++i) s += std::log(std::max(w(i), 1e-300));
            return s / static_cast<double>(w.size());
        };
        double prev = objective(alpha);
        bool converged = false;
        for (int it = 0; it < cfg.max_iters; ++it) {
            Vec w = (k_num * alpha).cwiseMax(1e-300);
            Vec grad = k_num.transpose() * w.cwiseInverse() / static_cast<double>(k_num.rows());
            alpha += cfg.step * grad;
            alpha = alpha.cwiseMax(0.0);
            normalize(alpha);
            double cur = objective(alpha);
            if (std::abs(cur - prev) < 1e-10 * (1.0 + std::abs(prev))) {
                converged = true;
                break;
            }
            prev = cur;
        }
        return {alpha, converged};
    }

    static double cv_loglik(const Mat& numerator, const Mat& denominator, const Mat& centers,
                            double width, const KliepConfig& cfg) {
        const long n = numerator.rows();
        const int folds = std::max(2, cfg.cv_folds);
        Mat k_num = kernel(numerator, centers, width);
        Mat k_den = kernel(denominator, centers, width);
        double total = 0.0;
        for (int f = 0; f < folds; ++f) {
            std::vector<int> train_rows, test_rows;
            for (long i = 0; i < n; ++i)
                ((i % folds) == f ? test_rows : train_rows).push_back(static_cast<int>(i));
            Mat k_train(train_rows.size(), centers.rows());
            for (std::size_t i = 0; i < train_rows.size(); ++i) k_train.row(i) = k_num.row(train_rows[i]);
            KliepConfig sub = cfg;
            sub.max_iters = std::min(cfg.max_iters, 200);
            auto [alpha, conv] = solve_alpha(k_train, k_den, sub);
            (void)conv;
            for (int t : test_rows) total += std::log(std::max(k_num.row(t).dot(alpha), 1e-300));
        }
        return total / static_cast<double>(n);
    }

    Mat centers_;
    Vec alpha_;
    double sigma_ = 1.0;
    bool converged_ = false;
};

// ---------------------------------------------------------------------------
// estimand-specific ratio evaluators
// ---------------------------------------------------------------------------

enum class RatioMethod { Kde, Kliep };

inline RatioMethod ratio_method_from_string(const std::string& s) {
    if (s == "kde") return RatioMethod::Kde;
    if (s == "kliep") return RatioMethod::Kliep;
    throw ConfigError("unknown ratio method: " + s);
}

// r(a, x, w) = p(a) p(x,w) / p(a,x,w), fitted by block KDE or direct KLIEP
class AteRatio {
public:
    static AteRatio fit_kde(const Mat& a_col, const Mat& xw, const std::vector<double>& bw_grid,
                            ClipBounds clip = {}) {
        AteRatio r;
        r.provenance_ = "kde";
        r.clip_ = clip;
        r.has_xw_ = xw.cols() > 0;
        r.kde_a_ = std::make_shared<KdeBlock>(KdeBlock::fit(a_col, bw_grid));
        if (r.has_xw_) {
            Mat joint(a_col.rows(), 1 + xw.cols());
            joint.col(0) = a_col.col(0);
            joint.rightCols(xw.cols()) = xw;
            r.kde_xw_ = std::make_shared<KdeBlock>(KdeBlock::fit(xw, bw_grid));
            r.kde_joint_ = std::make_shared<KdeBlock>(KdeBlock::fit(joint, bw_grid));
            // E[r] over the joint law is one; self-normalize on the fit sample
            double mean = r.at_rows(Vec(a_col.col(0)), xw).mean();
            if (mean > 0.0) r.calibration_ = 1.0 / mean;
        }
        return r;
    }

    static AteRatio fit_kliep(const Mat& a_col, const Mat& xw, KliepConfig cfg,
                              ClipBounds clip = {}) {
        AteRatio r;
        r.provenance_ = "kliep";
        r.clip_ = clip;
        r.has_xw_ = xw.cols() > 0;
        const long n = a_col.rows();
        // numerator: product of marginals via a seeded permutation of A
        Rng rng(cfg.seed, 0x9e9e);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        Mat numer(n, 1 + xw.cols());
        Mat denom(n, 1 + xw.cols());
        for (long i = 0; i < n; ++i) {
            numer(i, 0) = a_col(perm[i], 0);
            denom(i, 0) = a_col(i, 0);
            if (xw.cols() > 0) {
                numer.row(i).tail(xw.cols()) = xw.row(i);
                denom.row(i).tail(xw.cols()) = xw.row(i);
            }
        }
        r.kliep_ = std::make_shared<KliepModel>(KliepModel::fit(numer, denom, cfg));
        return r;
    }

    double at(double a, const Eigen::RowVectorXd& xw) const {
        double v;
        if (kliep_) {
            Eigen::RowVectorXd p(1 + xw.size());
            p(0) = a;
            p.tail(xw.size()) = xw;
            v = kliep_->evaluate_one(p);
        } else if (!has_xw_) {
            v = 1.0; // no covariate/proxy block: numerator and denominator coincide
        } else {
            Eigen::RowVectorXd pa(1);
            pa(0) = a;
            Eigen::RowVectorXd joint(1 + xw.size());
            joint(0) = a;
            joint.tail(xw.size()) = xw;
            v = std::exp(kde_a_->log_density(pa) + kde_xw_->log_density(xw) -
                         kde_joint_->log_density(joint));
        }
        return clamp(v * calibration_);
    }

    Vec at_rows(const Vec& a, const Mat& xw) const {
        require(a.size() == xw.rows() || xw.cols() == 0, "AteRatio: row mismatch");
        const long n = a.size();
        Vec out(n);
        if (kliep_) {
            Mat p(n, 1 + xw.cols());
            p.col(0) = a;
            if (xw.cols() > 0) p.rightCols(xw.cols()) = xw;
            Vec v = kliep_->evaluate(p);
            for (long i = 0; i < n; ++i) out(i) = clamp(v(i));
            return out;
        }
        if (!has_xw_) {
            for (long i = 0; i < n; ++i) out(i) = clamp(1.0);
            return out;
        }
        Mat a_m(n, 1);
        a_m.col(0) = a;
        Mat joint(n, 1 + xw.cols());
        joint.col(0) = a;
        joint.rightCols(xw.cols()) = xw;
        Vec la = kde_a_->log_density_rows(a_m);
        Vec lxw = kde_xw_->log_density_rows(xw);
        Vec lj = kde_joint_->log_density_rows(joint);
        for (long i = 0; i < n; ++i)
            out(i) = clamp(std::exp(la(i) + lxw(i) - lj(i)) * calibration_);
        return out;
    }

    long clip_events() const { return clip_count_->load(); }
    const std::string& provenance() const { return provenance_; }

private:
    double clamp(double v) const {
        if (v < clip_.lo || v > clip_.hi) {
            clip_count_->fetch_add(1, std::memory_order_relaxed);
            return std::min(std::max(v, clip_.lo), clip_.hi);
        }
        return v;
    }

    std::string provenance_;
    ClipBounds clip_;
    double calibration_ = 1.0;
    bool has_xw_ = false;
    std::shared_ptr<KdeBlock> kde_a_, kde_xw_, kde_joint_;
    std::shared_ptr<KliepModel> kliep_;
    std::shared_ptr<std::atomic<long>> clip_count_ = std::make_shared<std::atomic<long>>(0);
};

// r(a, v, s, w) = p(a,v) p(v,s,w) / (p(a,v,s,w) p(v))
class CateRatio {
public:
    static CateRatio fit_kde(const Vec& a, const Mat& v, const Mat& sw,
                             const std::vector<double>& bw_grid, ClipBounds clip = {}) {
        require(v.cols() > 0, "CateRatio: needs a heterogeneity block");
        CateRatio r;
        r.clip_ = clip;
        const long n = a.size();
        Mat av(n, 1 + v.cols());
        av.col(0) = a;
        av.rightCols(v.cols()) = v;
        Mat vsw(n, v.cols() + sw.cols());
        vsw.leftCols(v.cols()) = v;
        vsw.rightCols(sw.cols()) = sw;
        Mat avsw(n, 1 + v.cols() + sw.cols());
        avsw.col(0) = a;
        avsw.middleCols(1, v.cols()) = v;
        avsw.rightCols(sw.cols()) = sw;
        r.kde_v_ = std::make_shared<KdeBlock>(KdeBlock::fit(v, bw_grid));
        r.kde_av_ = std::make_shared<KdeBlock>(KdeBlock::fit(av, bw_grid));
        r.kde_vsw_ = std::make_shared<KdeBlock>(KdeBlock::fit(vsw, bw_grid));
        r.kde_avsw_ = std::make_shared<KdeBlock>(KdeBlock::fit(avsw, bw_grid));
        double mean = r.at_rows(a, v, sw).mean();
        if (mean > 0.0) r.calibration_ = 1.0 / mean;
        return r;
    }

    Vec at_rows(const Vec& a, const Mat& v, const Mat& sw) const {
        const long n = a.size();
        Mat av(n, 1 + v.cols());
        av.col(0) = a;
        av.rightCols(v.cols()) = v;
        Mat vsw(n, v.cols() + sw.cols());
        vsw.leftCols(v.cols()) = v;
        vsw.rightCols(sw.cols()) = sw;
        Mat avsw(n, 1 + v.cols() + sw.cols());
        avsw.col(0) = a;
        avsw.middleCols(1, v.cols()) = v;
        avsw.rightCols(sw.cols()) = sw;
        Vec lv = kde_v_->log_density_rows(v);
        Vec lav = kde_av_->log_density_rows(av);
        Vec lvsw = kde_vsw_->log_density_rows(vsw);
        Vec lavsw = kde_avsw_->log_density_rows(avsw);
        Vec out(n);
        for (long i = 0; i < n; ++i) {
            double x = std::exp(lav(i) + lvsw(i) - lavsw(i) - lv(i)) * calibration_;
            if (x < clip_.lo || x > clip_.hi) {
                clip_count_->fetch_add(1, std::memory_order_relaxed);
                x = std::min(std::max(x, clip_.lo), clip_.hi);
            }
            out(i) = x;
        }
        return out;
    }

    long clip_events() const { return clip_count_->load(); }

private:
    ClipBounds clip_;
    double calibration_ = 1.0;
    std::shared_ptr<KdeBlock> kde_v_, kde_av_, kde_vsw_, kde_avsw_;
    std::shared_ptr<std::atomic<long>> clip_count_ = std::make_shared<std::atomic<long>>(0);
};

// r_ATT(a, a', x, w) = r_ATE(a, x, w) / r_ATE(a', x, w)
inline double att_ratio_from_ate(const AteRatio& r, double a, double a_prime,
                                 const Eigen::RowVectorXd& xw) {
    double denom = r.at(a_prime, xw);
    if (!(denom > 0.0)) throw DataError("att_ratio_from_ate: zero denominator after clipping");
    return r.at(a, xw) / denom;
}

} // namespace pclnet::ratio
