#pragma once

#include "pclnet/graph.hpp"

namespace pclnet {

// History-centered ridge: minimize (1/n)||T - V^T Phi||_F^2 + lambda ||V - prev||_F^2
// over V, with Phi holding one sample per column. The normal equations are
// (Phi Phi^T + n lambda I) V = Phi T^T + n lambda prev.
struct ProxRidgeProblem {
    Mat phi;    // d x n features
    Mat targets; // k x n
    double lambda = 0.0;
    Mat prev;   // d x k
    double n = 0.0; // batch-size factor from the averaged loss

    void validate() const {
        require(phi.cols() == targets.cols(), "prox_ridge: sample counts differ");
        require(prev.rows() == phi.rows() && prev.cols() == targets.rows(),
                "prox_ridge: prev has wrong shape");
        if (lambda <= 0.0) throw ConfigError("prox_ridge: lambda must be positive");
    }
};

namespace detail {
// small diagonal jitter absorbs rank deficiency of tiny batches
inline Mat ridge_system(const Mat& phi, double n_lambda) {
    const long d = phi.rows();
    Mat a = phi * phi.transpose();
    double jitter = 1e-12 * (a.trace() / static_cast<double>(d) + 1.0);
    a.diagonal().array() += n_lambda + jitter;
    return a;
}
} // namespace detail

inline Mat prox_ridge_solve(const ProxRidgeProblem& p) {
    p.validate();
    Mat a = detail::ridge_system(p.phi, p.n * p.lambda);
    Mat b = p.phi * p.targets.transpose() + (p.n * p.lambda) * p.prev;
    Eigen::MatrixXd a_cm = a;
    Eigen::LLT<Eigen::MatrixXd> llt(a_cm);
    if (llt.info() != Eigen::Success)
        throw NumericError("prox_ridge_solve: factorization failed at pivot " +
                           std::to_string(ad::failing_pivot(a)));
    Mat v = llt.solve(Eigen::MatrixXd(b));
    v += Mat(llt.solve(Eigen::MatrixXd(b - a * v)));
    check_finite(v, "prox_ridge_solve output");
    return v;
}

// Batch-local first-stage operator, recomputed on the second-stage batch and
// centered at the persistent iterate. The proxy-feature node keeps its
// gradient path; the first-stage features enter as constants, so stage-2
// gradients reach the proxy featurizer through the solve and nothing else.
//   phi1: b x d1 (rows are samples), proxy_feats: b x dw node, vhat: d1 x dw
inline ad::NodePtr aux_first_stage(const Mat& phi1, const ad::NodePtr& proxy_feats,
                                   double lambda1, const Mat& vhat) {
    require(phi1.rows() == proxy_feats->rows(), "aux_first_stage: batch sizes differ");
    require(vhat.rows() == phi1.cols() && vhat.cols() == proxy_feats->cols(),
            "aux_first_stage: persistent operator has wrong shape");
    if (lambda1 <= 0.0) throw ConfigError("aux_first_stage: lambda must be positive");
    const double b = static_cast<double>(phi1.rows());
    Mat a = detail::ridge_system(phi1.transpose(), b * lambda1);
    auto a_node = ad::constant(std::move(a));
    auto phi1_t = ad::constant(Mat(phi1.transpose()));
    auto rhs = ad::add(ad::matmul(phi1_t, proxy_feats),
                       ad::constant(Mat((b * lambda1) * vhat)));
    return ad::solve_spd(a_node, rhs);
}

// plain (no-graph) variant used for the recompute before head refinement
inline Mat aux_first_stage_value(const Mat& phi1, const Mat& proxy_feats, double lambda1,
                                 const Mat& vhat) {
    ProxRidgeProblem p;
    p.phi = phi1.transpose();
    p.targets = proxy_feats.transpose();
    p.lambda = lambda1;
    p.prev = vhat;
    p.n = static_cast<double>(phi1.rows());
    return prox_ridge_solve(p);
}

// second-stage head update: (Psi Psi^T + m lambda2 I) h = Psi y + m lambda2 prev
inline Vec prox_head_solve(const Mat& psi, const Vec& y, double lambda2, const Vec& prev) {
    require(psi.cols() == y.size(), "prox_head_solve: sample counts differ");
    require(psi.rows() == prev.size(), "prox_head_solve: prev has wrong length");
    ProxRidgeProblem p;
    p.phi = psi;
    p.targets = Mat(y.transpose());
    p.lambda = lambda2;
    p.prev = Mat(prev);
    p.n = static_cast<double>(y.size());
    return Vec(prox_ridge_solve(p).col(0));
}

} // namespace pclnet
