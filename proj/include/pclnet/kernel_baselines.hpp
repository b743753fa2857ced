#pragma once

#include "pclnet/curve.hpp"
#include "pclnet/dataset.hpp"
#include "pclnet/serialize.hpp"

#include <memory>

namespace pclnet::kernel {

// K[i,j] = exp(-||x_i - y_j||^2 / (2 sigma^2))
inline Mat rbf_gram(const Mat& xa, const Mat& xb, double bandwidth) {
    require(xa.cols() == xb.cols(), "rbf_gram: dimension mismatch");
    if (bandwidth <= 0.0) throw ConfigError("rbf_gram: bandwidth must be positive");
    Mat k(xa.rows(), xb.rows());
    Vec na = xa.rowwise().squaredNorm();
    Vec nb = xb.rowwise().squaredNorm();
    k.noalias() = -2.0 * xa * xb.transpose();
    k.colwise() += na;
    k.rowwise() += nb.transpose();
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    return (-k.cwiseMax(0.0) * inv).array().exp().matrix();
}

// Median pairwise distance, permutation invariant: when the sample exceeds
// the cap, rows are ranked lexicographically before striding.
inline double median_heuristic(const Mat& x, long cap = 400) {
    const long n = x.rows();
    if (n < 2) return 1.0;
    std::vector<long> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (n > cap) {
        std::sort(idx.begin(), idx.end(), [&](long a, long b) {
            for (long j = 0; j < x.cols(); ++j) {
                if (x(a, j) < x(b, j)) return true;
                if (x(a, j) > x(b, j)) return false;
            }
            return false;
        });
        std::vector<long> strided;
        for (long i = 0; i < cap; ++i)
            strided.push_back(idx[(i * n) / cap]);
        idx = std::move(strided);
    }
    std::vector<double> d;
    d.reserve(idx.size() * (idx.size() - 1) / 2);
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = i + 1; j < idx.size(); ++j)
            d.push_back((x.row(idx[i]) - x.row(idx[j])).norm());
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    double med = d[d.size() / 2];
    return med > 0.0 ? med : 1.0;
}

namespace detail {

inline Mat spd_solve(const Mat& a, const Mat& b, const char* where) {
    Eigen::MatrixXd a_cm = a;
    Eigen::LLT<Eigen::MatrixXd> llt(a_cm);
    if (llt.info() != Eigen::Success)
        throw NumericError(std::string(where) + ": ridge system not positive definite");
    Mat x = llt.solve(Eigen::MatrixXd(b));
    x += Mat(llt.solve(Eigen::MatrixXd(b - a * x)));
    return x;
}

inline Mat hadamard3(const Mat& a, const Mat& b, const Mat& c) {
    return a.cwiseProduct(b).cwiseProduct(c);
}

inline Vec vec_of(const Mat& col) { return Vec(col.col(0)); }

} // namespace detail

// ---------------------------------------------------------------------------
// KPV: two-stage outcome-bridge estimator with fixed RBF features
// ---------------------------------------------------------------------------

class KpvModel {
public:
    struct Config {
        double lambda1 = 1e-3;
        double lambda2 = 1e-3;
        // explicit bandwidths override the median heuristic (0 = heuristic)
        double bw_a = 0.0, bw_x = 0.0, bw_z = 0.0, bw_w = 0.0;
    };

    static KpvModel fit(const Dataset& d, const SplitPlan& plan, Config cfg) {
        plan.validate(d.n());
        if (cfg.lambda1 <= 0.0 || cfg.lambda2 <= 0.0)
            throw ConfigError("kpv_fit: regularizers must be positive");
        KpvModel m;
        m.has_x_ = d.has_x();
        Dataset d1 = d.rows(plan.d1);
        Dataset d2 = d.rows(plan.d2);
        Dataset d3 = d.rows(plan.d3.empty() ? plan.d2 : plan.d3);
        const long n = d1.n(), mm = d2.n();

        Mat a1(n, 1), a2(mm, 1);
        a1.col(0) = d1.a;
        a2.col(0) = d2.a;
        m.bw_a_ = cfg.bw_a > 0.0 ? cfg.bw_a : median_heuristic(a1);
        m.bw_z_ = cfg.bw_z > 0.0 ? cfg.bw_z : median_heuristic(d1.z);
        m.bw_w_ = cfg.bw_w > 0.0 ? cfg.bw_w : median_heuristic(d1.w);
        Mat x1 = d1.x(), x2 = d2.x();
        if (m.has_x_) m.bw_x_ = cfg.bw_x > 0.0 ? cfg.bw_x : median_heuristic(x1);

        Mat g1 = rbf_gram(a1, a1, m.bw_a_).cwiseProduct(rbf_gram(d1.z, d1.z, m.bw_z_));
        Mat g12 = rbf_gram(a1, a2, m.bw_a_).cwiseProduct(rbf_gram(d1.z, d2.z, m.bw_z_));
        if (m.has_x_) {
            g1 = g1.cwiseProduct(rbf_gram(x1, x1, m.bw_x_));
            g12 = g12.cwiseProduct(rbf_gram(x1, x2, m.bw_x_));
        }
        g1.diagonal().array() += static_cast<double>(n) * cfg.lambda1;
        m.b_ = detail::spd_solve(g1, g12, "kpv stage 1");

        Mat kww = rbf_gram(d1.w, d1.w, m.bw_w_);
        Mat mmat = rbf_gram(a2, a2, m.bw_a_).cwiseProduct(Mat(m.b_.transpose() * kww * m.b_));
        if (m.has_x_) mmat = mmat.cwiseProduct(rbf_gram(x2, x2, m.bw_x_));
        m.m_matrix_ = mmat;
        Mat sys = mmat;
        sys.diagonal().array() += static_cast<double>(mm) * cfg.lambda2;
        Mat y2(mm, 1);
        y2.col(0) = d2.y;
        m.alpha_ = detail::vec_of(detail::spd_solve(sys, y2, "kpv stage 2"));

        m.a2_ = a2;
        m.x2_ = x2;
        m.w1_ = d1.w;
        // evaluation-sample summary: s = mean_j K_XX° (.) (B^T K_W W°)
        Mat bw_eval = m.b_.transpose() * rbf_gram(d1.w, d3.w, m.bw_w_); // m x t
        if (m.has_x_) bw_eval = bw_eval.cwiseProduct(rbf_gram(x2, d3.x(), m.bw_x_));
        m.eval_summary_ = bw_eval.rowwise().mean();
        return m;
    }

    double eval_h(double a, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& w) const {
        Mat pa(1, 1);
        pa(0, 0) = a;
        Vec ka = detail::vec_of(rbf_gram(a2_, pa, bw_a_));
        Vec kw = detail::vec_of(Mat(b_.transpose() * rbf_gram(w1_, Mat(w), bw_w_)));
        Vec feat = ka.cwiseProduct(kw);
        if (has_x_) feat = feat.cwiseProduct(detail::vec_of(rbf_gram(x2_, Mat(x), bw_x_)));
        return alpha_.dot(feat);
    }

    // h(a, x_i, w_i) for a fixed treatment over rows of (x, w)
    Vec eval_h_rows(double a, const Mat& x, const Mat& w) const {
        Mat pa(1, 1);
        pa(0, 0) = a;
        Vec ka = detail::vec_of(rbf_gram(a2_, pa, bw_a_));
        Mat kw = b_.transpose() * rbf_gram(w1_, w, bw_w_); // m x rows
        if (has_x_) kw = kw.cwiseProduct(rbf_gram(x2_, x, bw_x_));
        return kw.transpose() * alpha_.cwiseProduct(ka);
    }

    DoseResponseCurve curve(const std::vector<double>& grid) const {
        DoseResponseCurve c;
        c.grid_a = grid;
        c.tag = "kpv";
        Mat ga(grid.size(), 1);
        for (std::size_t i = 0; i < grid.size(); ++i) ga(i, 0) = grid[i];
        Mat ka = rbf_gram(a2_, ga, bw_a_); // m x G
        Vec weights = alpha_.cwiseProduct(eval_summary_);
        for (std::size_t i = 0; i < grid.size(); ++i) c.values.push_back(ka.col(i).dot(weights));
        return c;
    }

    const Mat& m_matrix() const { return m_matrix_; }
    const Vec& alpha() const { return alpha_; }

    void save_state(nlohmann::json& manifest, ckpt::Blob& blob) const {
        manifest["component"] = "kpv";
        manifest["has_x"] = has_x_;
        manifest["bandwidths"] = {bw_a_, bw_x_, bw_z_, bw_w_};
        blob.add("b", b_);
        blob.add("alpha", Mat(alpha_));
        blob.add("a2", a2_);
        blob.add("x2", x2_);
        blob.add("w1", w1_);
        blob.add("eval_summary", Mat(eval_summary_));
    }

    static KpvModel load_state(const nlohmann::json& manifest, const ckpt::Blob& blob) {
        KpvModel m;
        m.has_x_ = manifest.at("has_x").get<bool>();
        auto bw = manifest.at("bandwidths").get<std::vector<double>>();
        m.bw_a_ = bw[0];
        m.bw_x_ = bw[1];
        m.bw_z_ = bw[2];
        m.bw_w_ = bw[3];
        m.b_ = blob.get("b");
        m.alpha_ = blob.get("alpha").col(0);
        m.a2_ = blob.get("a2");
        m.x2_ = blob.get("x2");
        m.w1_ = blob.get("w1");
        m.eval_summary_ = blob.get("eval_summary").col(0);
        return m;
    }

    // representer feature vector k(probe) with h(probe) = alpha . k(probe)
    Vec bridge_features(double a, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& w) const {
        Mat pa(1, 1);
        pa(0, 0) = a;
        Vec feat = detail::vec_of(rbf_gram(a2_, pa, bw_a_))
                       .cwiseProduct(detail::vec_of(Mat(b_.transpose() * rbf_gram(w1_, Mat(w), bw_w_))));
        if (has_x_) feat = feat.cwiseProduct(detail::vec_of(rbf_gram(x2_, Mat(x), bw_x_)));
        return feat;
    }

private:
    bool has_x_ = false;
    double bw_a_ = 1.0, bw_x_ = 1.0, bw_z_ = 1.0, bw_w_ = 1.0;
    Mat b_;       // n x m first-stage coefficients
    Mat m_matrix_; // second-stage Gram of the bridge features
    Vec alpha_;
    Mat a2_, x2_, w1_;
    Vec eval_summary_;
};

// ---------------------------------------------------------------------------
// KAP: treatment-bridge estimator in the no-covariate setting
// ---------------------------------------------------------------------------

// The second-stage objective couples a diagonal quadratic term with a
// U-statistic cross term. Stationarity places the minimizer in the span of
// the m diagonal features psi_ii plus the cross-term mean element, which is
// what the closed form below solves for.
class KapModel {
public:
    struct Config {
        double lambda1 = 1e-3;
        double lambda2 = 1e-3;
        double lambda3 = 1e-3;          // third-stage ridge for E[Y phi_Z(Z) | A = a]
        bool keep_test_matrices = false; // retain small-instance matrices for the test hooks
        // explicit bandwidths override the median heuristic (0 = heuristic)
        double bw_a = 0.0, bw_z = 0.0, bw_w = 0.0;
    };

    static KapModel fit(const Dataset& d, const SplitPlan& plan, Config cfg) {
        plan.validate(d.n());
        if (d.has_x()) throw ConfigError("kap_fit: developed for the no-covariate setting");
        if (cfg.lambda1 <= 0.0 || cfg.lambda2 <= 0.0 || cfg.lambda3 <= 0.0)
            throw ConfigError("kap_fit: regularizers must be positive");
        Dataset d1 = d.rows(plan.d1);
        Dataset d2 = d.rows(plan.d2);
        const long n = d1.n(), mm = d2.n();
        if (mm < 2) throw DataError("kap_fit: cross term needs at least two stage-2 samples");

        KapModel k;
        Mat a1(n, 1), a2(mm, 1);
        a1.col(0) = d1.a;
        a2.col(0) = d2.a;
        k.bw_a_ = cfg.bw_a > 0.0 ? cfg.bw_a : median_heuristic(a1);
        k.bw_z_ = cfg.bw_z > 0.0 ? cfg.bw_z : median_heuristic(d1.z);
        k.bw_w_ = cfg.bw_w > 0.0 ? cfg.bw_w : median_heuristic(d1.w);
        k.lambda2_ = cfg.lambda2;

        Mat m1 = rbf_gram(a1, a1, k.bw_a_).cwiseProduct(rbf_gram(d1.w, d1.w, k.bw_w_));
        m1.diagonal().array() += static_cast<double>(n) * cfg.lambda1;
        Eigen::MatrixXd m1_cm = m1;
        k.m1_llt_ = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(m1_cm);
        if (k.m1_llt_->info() != Eigen::Success)
            throw NumericError("kap_fit: first-stage system not positive definite");

        Mat kzz = rbf_gram(d1.z, d1.z, k.bw_z_);
        Mat ka12 = rbf_gram(a1, a2, k.bw_a_);
        Mat kw12 = rbf_gram(d1.w, d2.w, k.bw_w_);
        k.t_ = ka12.cwiseProduct(kw12); // n x m
        Vec rowsum_w = kw12.rowwise().sum();
        k.r_ = ka12.array().colwise() * rowsum_w.array(); // n x m
        if (cfg.keep_test_matrices) {
            k.k_a12_ = ka12;
            k.k_w12_ = kw12;
            k.kzz_ = kzz;
        }

        // P T with P = M1^{-1} Kzz M1^{-1}
        Mat pt = k.m1_llt_->solve(Eigen::MatrixXd(kzz * Mat(k.m1_llt_->solve(Eigen::MatrixXd(k.t_)))));
        Mat kaa2 = rbf_gram(a2, a2, k.bw_a_);
        Mat h2 = k.t_.transpose() * pt; // <psi_ii, psi_jj> factors
        Mat h1 = k.r_.transpose() * pt;
        k.gram_psi_ = kaa2.cwiseProduct(h2);

        const double pair_norm = static_cast<double>(mm) * static_cast<double>(mm - 1);
        Vec q_vec = (kaa2.cwiseProduct(h1 - h2)).colwise().sum().transpose() / pair_norm;

        Mat sys = k.gram_psi_;
        sys.diagonal().array() += static_cast<double>(mm) * cfg.lambda2;
        Mat qm(q_vec.size(), 1);
        qm.col(0) = q_vec;
        k.c_ = -detail::vec_of(detail::spd_solve(sys, qm, "kap stage 2")) / cfg.lambda2;

        k.a1_ = a1;
        k.a2_ = a2;
        k.z1_ = d1.z;
        k.w2_sum_weight_ = rowsum_w;

        // third stage on the D3 rows: gamma(a) = (K_AA + t lambda3 I)^{-1} K_Aa
        Dataset d3 = d.rows(plan.d3.empty() ? plan.d2 : plan.d3);
        Mat a3(d3.n(), 1);
        a3.col(0) = d3.a;
        k.a3_ = a3;
        Vec pseudo = d3.y.cwiseProduct(k.eval_phi_rows(d3.a, d3.z));
        Mat g3 = rbf_gram(a3, a3, k.bw_a_);
        g3.diagonal().array() += static_cast<double>(d3.n()) * cfg.lambda3;
        Mat p3(pseudo.size(), 1);
        p3.col(0) = pseudo;
        k.third_coef_ = detail::vec_of(detail::spd_solve(g3, p3, "kap stage 3"));
        return k;
    }

    double eval_phi(double a, const Eigen::RowVectorXd& z) const {
        Vec a_one(1);
        a_one(0) = a;
        return eval_phi_rows(a_one, Mat(z))(0);
    }

    Vec eval_phi_rows(const Vec& a, const Mat& z) const {
        const long rows = a.size();
        const long mm = a2_.rows();
        Mat va = m1_llt_->solve(Eigen::MatrixXd(rbf_gram(z1_, z, bw_z_))); // n x rows
        Mat e1 = r_.transpose() * va;                                      // m x rows
        Mat e2 = t_.transpose() * va;
        Mat pa(rows, 1);
        pa.col(0) = a;
        Mat ka = rbf_gram(a2_, pa, bw_a_); // m x rows
        const double pair_scale = 1.0 / (lambda2_ * static_cast<double>(mm) * static_cast<double>(mm - 1));
        Vec out(rows);
        for (long i = 0; i < rows; ++i) {
            Vec weight = pair_scale * (e1.col(i) - e2.col(i)) + c_.cwiseProduct(e2.col(i));
            out(i) = ka.col(i).dot(weight);
        }
        return out;
    }

    DoseResponseCurve curve(const std::vector<double>& grid) const {
        DoseResponseCurve c;
        c.grid_a = grid;
        c.tag = "kap";
        Mat ga(grid.size(), 1);
        for (std::size_t i = 0; i < grid.size(); ++i) ga(i, 0) = grid[i];
        Mat k3 = rbf_gram(a3_, ga, bw_a_);
        for (std::size_t i = 0; i < grid.size(); ++i) c.values.push_back(k3.col(i).dot(third_coef_));
        return c;
    }

    // coefficients over the span { phi_A(a2_i) (x) phi_Z(z1_k) }, m x n (tests)
    Mat coefficient_matrix() const {
        const long mm = a2_.rows();
        Mat rmt = m1_llt_->solve(Eigen::MatrixXd(Mat(r_ - t_))); // n x m
        Mat tm = m1_llt_->solve(Eigen::MatrixXd(t_));
        const double pair_scale = 1.0 / (lambda2_ * static_cast<double>(mm) * static_cast<double>(mm - 1));
        Mat c(mm, a1_.rows());
        for (long i = 0; i < mm; ++i)
            c.row(i) = pair_scale * rmt.col(i).transpose() + c_(i) * tm.col(i).transpose();
        return c;
    }

    // Second-stage objective evaluated at an arbitrary coefficient matrix over
    // the same span. Quadratic in coeff; only meant for tiny test instances.
    double stage2_objective(const Mat& coeff) const {
        if (k_a12_.size() == 0) throw StateError("kap: fit with keep_test_matrices for this hook");
        const long mm = a2_.rows();
        Mat kaa = rbf_gram(a2_, a2_, bw_a_);
        double quad = 0.0, cross = 0.0;
        for (long i = 0; i < mm; ++i) {
            for (long j = 0; j < mm; ++j) {
                Vec u = k_a12_.col(i).cwiseProduct(k_w12_.col(j));
                Vec emb = kzz_ * Mat(m1_llt_->solve(Eigen::MatrixXd(Mat(u)))).col(0);
                double s_ij = kaa.col(i).transpose() * coeff * emb;
                if (i == j)
                    quad += s_ij * s_ij;
                else
                    cross += s_ij;
            }
        }
        double reg = (coeff.transpose() * kaa * coeff * kzz_).trace();
        return quad / static_cast<double>(mm) -
               2.0 * cross / (static_cast<double>(mm) * static_cast<double>(mm - 1)) +
               lambda2_ * reg;
    }

    // s_ij design vectors over vec(coeff), for the brute-force test route
    Mat design_vector(long i, long j) const {
        if (k_a12_.size() == 0) throw StateError("kap: fit with keep_test_matrices for this hook");
        Mat kaa = rbf_gram(a2_, a2_, bw_a_);
        Vec u = k_a12_.col(i).cwiseProduct(k_w12_.col(j));
        Vec emb = kzz_ * Mat(m1_llt_->solve(Eigen::MatrixXd(Mat(u)))).col(0);
        return kaa.col(i) * emb.transpose(); // m x n rank-one design
    }

    const Mat& gram_psi() const { return gram_psi_; }
    const Mat& kzz() const { return kzz_; }
    const Mat& a2() const { return a2_; }
    double bandwidth_a() const { return bw_a_; }

    void save_state(nlohmann::json& manifest, ckpt::Blob& blob) const {
        manifest["component"] = "kap";
        manifest["bandwidths"] = {bw_a_, bw_z_, bw_w_};
        manifest["lambda2"] = lambda2_;
        blob.add("m1", Mat(m1_llt_->reconstructedMatrix()));
        blob.add("t", t_);
        blob.add("r", r_);
        blob.add("c", Mat(c_));
        blob.add("a1", a1_);
        blob.add("a2", a2_);
        blob.add("z1", z1_);
        blob.add("a3", a3_);
        blob.add("third_coef", Mat(third_coef_));
    }

    static KapModel load_state(const nlohmann::json& manifest, const ckpt::Blob& blob) {
        KapModel k;
        auto bw = manifest.at("bandwidths").get<std::vector<double>>();
        k.bw_a_ = bw[0];
        k.bw_z_ = bw[1];
        k.bw_w_ = bw[2];
        k.lambda2_ = manifest.at("lambda2").get<double>();
        Eigen::MatrixXd m1 = blob.get("m1");
        k.m1_llt_ = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(m1);
        if (k.m1_llt_->info() != Eigen::Success)
            throw NumericError("kap load: stored system not positive definite");
        k.t_ = blob.get("t");
        k.r_ = blob.get("r");
        k.c_ = blob.get("c").col(0);
        k.a1_ = blob.get("a1");
        k.a2_ = blob.get("a2");
        k.z1_ = blob.get("z1");
        k.a3_ = blob.get("a3");
        k.third_coef_ = blob.get("third_coef").col(0);
        return k;
    }

private:
    double bw_a_ = 1.0, bw_z_ = 1.0, bw_w_ = 1.0;
    double lambda2_ = 1e-3;
    std::shared_ptr<Eigen::LLT<Eigen::MatrixXd>> m1_llt_;
    Mat t_, r_;
    Mat gram_psi_;
    Vec c_;
    Mat a1_, a2_, z1_, a3_;
    Mat k_a12_, k_w12_, kzz_;
    Vec w2_sum_weight_;
    Vec third_coef_;
};

// ---------------------------------------------------------------------------
// DRKPV: doubly robust combination with a kernel-smoothed cross term
// ---------------------------------------------------------------------------

inline DoseResponseCurve drkpv_curve(const KpvModel& kpv, const KapModel& kap, const Dataset& d,
                                     const std::vector<int>& third_split, double lambda_dr,
                                     const std::vector<double>& grid) {
    if (third_split.empty()) throw DataError("drkpv_curve: empty third split");
    if (lambda_dr <= 0.0) throw ConfigError("drkpv_curve: lambda must be positive");
    Dataset d3 = d.rows(third_split);
    const long t = d3.n();
    Mat a3(t, 1);
    a3.col(0) = d3.a;
    double bw_a = median_heuristic(a3);
    Mat g = rbf_gram(a3, a3, bw_a);
    g.diagonal().array() += static_cast<double>(t) * lambda_dr;
    Eigen::MatrixXd g_cm = g;
    Eigen::LLT<Eigen::MatrixXd> llt(g_cm);
    if (llt.info() != Eigen::Success) throw NumericError("drkpv_curve: ridge system failed");

    auto f_h = kpv.curve(grid);
    auto f_phi = kap.curve(grid);
    DoseResponseCurve c;
    c.grid_a = grid;
    c.tag = "drkpv";
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        double a = grid[gi];
        Vec phi_vals(t), h_vals(t);
        phi_vals = kap.eval_phi_rows(Vec::Constant(t, a), d3.z);
        h_vals = kpv.eval_h_rows(a, d3.x(), d3.w);
        Mat pa(1, 1);
        pa(0, 0) = a;
        Vec xi = llt.solve(Eigen::MatrixXd(rbf_gram(a3, pa, bw_a))).col(0);
        double cross = xi.dot(phi_vals.cwiseProduct(h_vals));
        c.values.push_back(f_h.values[gi] + f_phi.values[gi] - cross);
    }
    return c;
}

// interpolation weights used by the cross term (tests)
inline Vec drkpv_xi(const Vec& a3, double a, double lambda_dr) {
    Mat am(a3.size(), 1);
    am.col(0) = a3;
    double bw = median_heuristic(am);
    Mat g = rbf_gram(am, am, bw);
    g.diagonal().array() += static_cast<double>(a3.size()) * lambda_dr;
    Mat pa(1, 1);
    pa(0, 0) = a;
    return detail::spd_solve(g, rbf_gram(am, pa, bw), "drkpv_xi").col(0);
}

} // namespace pclnet::kernel
