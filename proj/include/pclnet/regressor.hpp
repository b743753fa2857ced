#pragma once

#include "pclnet/losses.hpp"
#include "pclnet/mlp.hpp"
#include "pclnet/prox.hpp"

namespace pclnet {

// Final-stage regression network: MLP with a linear output layer trained by
// AdamW on MSE, or a ridge head over frozen random features when an exactly
// target-linear regressor is wanted.
struct RegressorConfig {
    std::vector<int> hidden{32, 64};
    double dropout = 0.01;
    double lr = 1e-3;
    double weight_decay = 1e-6;
    int epochs = 100;
    int batch = 256;
    std::uint64_t seed = 0;
    enum class Mode { MlpAdamW, RidgeFixedFeatures } mode = Mode::MlpAdamW;
    double ridge_lambda = 1e-8;
};

class Regressor {
public:
    Regressor() = default;

    Regressor(RegressorConfig cfg, int in_dim, int out_dim, std::string name = "reg")
        : cfg_(std::move(cfg)), in_dim_(in_dim), out_dim_(out_dim) {
        MLPConfig mc;
        mc.seed = cfg_.seed;
        int d = in_dim;
        for (int w : cfg_.hidden) {
            mc.layers.push_back({d, w, false, false, Act::Gelu, cfg_.dropout});
            d = w;
        }
        // ridge mode keeps the random hidden stack as a frozen feature map
        if (cfg_.mode == RegressorConfig::Mode::MlpAdamW)
            mc.layers.push_back({d, out_dim, false, false, Act::None, 0.0});
        net_ = Featurizer(std::move(mc), in_dim, std::move(name));
    }

    void fit(const Mat& x, const Mat& y) {
        require(x.rows() == y.rows(), "regressor: row mismatch");
        require(x.cols() == in_dim_ && y.cols() == out_dim_, "regressor: dim mismatch");
        check_finite(y, "regressor targets");
        x_scaler_ = Scaler::fit(x);
        y_mean_ = y.colwise().mean();
        Eigen::RowVectorXd var = (y.rowwise() - y_mean_).array().square().colwise().mean();
        y_sd_ = (var.array() + 1e-12).sqrt();
        Mat xs = x_scaler_.apply(x);
        Mat ys = ((y.rowwise() - y_mean_).array().rowwise() / y_sd_.array()).matrix();

        if (cfg_.mode == RegressorConfig::Mode::RidgeFixedFeatures) {
            // frozen random features + closed-form ridge head: linear in targets
            Mat f = net_.eval(xs);
            Mat fb(f.rows(), f.cols() + 1);
            fb.leftCols(f.cols()) = f;
            fb.col(f.cols()).setOnes();
            ProxRidgeProblem p;
            p.phi = fb.transpose();
            p.targets = ys.transpose();
            p.lambda = cfg_.ridge_lambda;
            p.prev = Mat::Zero(fb.cols(), out_dim_);
            p.n = static_cast<double>(fb.rows());
            ridge_w_ = prox_ridge_solve(p);
            fitted_ = true;
            return;
        }

        AdamW opt({.lr = cfg_.lr, .weight_decay = cfg_.weight_decay});
        auto params = net_.params();
        Rng shuffle_rng(cfg_.seed, 0xba7c);
        std::vector<int> idx(x.rows());
        std::iota(idx.begin(), idx.end(), 0);
        LossSpec mse{LossKind::MSE, 1.0};
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            shuffle_rng.shuffle(idx);
            for (std::size_t start = 0; start < idx.size(); start += cfg_.batch) {
                std::size_t len = std::min<std::size_t>(cfg_.batch, idx.size() - start);
                Mat bx(len, in_dim_), by(len, out_dim_);
                for (std::size_t i = 0; i < len; ++i) {
                    bx.row(i) = xs.row(idx[start + i]);
                    by.row(i) = ys.row(idx[start + i]);
                }
                auto pred = net_.forward(bx, Mode::Train);
                auto loss = loss_node(mse, ad::constant(by), pred);
                AdamW::zero_grad(params);
                ad::backward(loss);
                opt.step(params);
            }
        }
        fitted_ = true;
    }

    Mat predict(const Mat& x) {
        if (!fitted_) throw StateError("regressor: predict before fit");
        Mat xs = x_scaler_.apply(x);
        Mat out;
        if (cfg_.mode == RegressorConfig::Mode::RidgeFixedFeatures) {
            Mat f = net_.eval(xs);
            Mat fb(f.rows(), f.cols() + 1);
            fb.leftCols(f.cols()) = f;
            fb.col(f.cols()).setOnes();
            out = fb * ridge_w_;
        } else {
            out = net_.eval(xs);
        }
        return ((out.array().rowwise() * y_sd_.array()).rowwise() + y_mean_.array()).matrix();
    }

    Vec predict_vec(const Vec& x1col) {
        Mat x(x1col.size(), 1);
        x.col(0) = x1col;
        return Vec(predict(x).col(0));
    }

    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }

    // persistence surface
    const RegressorConfig& config() const { return cfg_; }
    Featurizer& net() { return net_; }
    Scaler& x_scaler() { return x_scaler_; }
    Eigen::RowVectorXd& y_mean() { return y_mean_; }
    Eigen::RowVectorXd& y_sd() { return y_sd_; }
    Mat& ridge_w() { return ridge_w_; }
    bool& fitted_flag() { return fitted_; }

private:
    RegressorConfig cfg_;
    int in_dim_ = 0, out_dim_ = 0;
    Featurizer net_;
    Scaler x_scaler_;
    Eigen::RowVectorXd y_mean_, y_sd_;
    Mat ridge_w_;
    bool fitted_ = false;
};

} // namespace pclnet
