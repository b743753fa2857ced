#pragma once

#include "pclnet/dgp.hpp"
#include "pclnet/losses.hpp"
#include "pclnet/mlp.hpp"
#include "pclnet/optim.hpp"
#include "pclnet/prox.hpp"
#include "pclnet/regressor.hpp"

namespace pclnet {

// ---------------------------------------------------------------------------
// architecture and training hyperparameters
// ---------------------------------------------------------------------------

// Widths include the output dimension; empty widths mean the identity map.
struct FeatArch {
    std::vector<int> widths;
    bool ln = true;
    bool bn = false;
    Act act = Act::Gelu;
    double dropout = 0.05;
    bool last_act = true; // some configurations end on a bare LN
};

inline MLPConfig make_mlp(const FeatArch& a, int in_dim, std::uint64_t seed) {
    MLPConfig cfg;
    cfg.seed = seed;
    int d = in_dim;
    for (std::size_t i = 0; i < a.widths.size(); ++i) {
        bool last = (i + 1 == a.widths.size());
        LayerSpec l;
        l.in = d;
        l.out = a.widths[i];
        l.layer_norm = a.ln;
        l.batch_norm = a.bn;
        l.act = (last && !a.last_act) ? Act::None : a.act;
        l.dropout = last ? 0.0 : a.dropout;
        cfg.layers.push_back(l);
        d = a.widths[i];
    }
    return cfg;
}

struct BridgeHyper {
    double lr1 = 1e-3;
    double lr2 = 1e-3;
    double weight_decay = 1e-5;
    Anneal lam1{1e-4, 1e-2, AnnealKind::Exponential};    // persistent first-stage solve
    Anneal lam_aux{1e-5, 1e-3, AnnealKind::Exponential}; // on-the-fly solve in stage 2
    Anneal lam2{1e-3, 10.0, AnnealKind::Exponential};    // second-stage head
    int t1 = 10;
    int t2 = 1;
    int k_head = 10;
    int epochs = 100;
    int batch1 = 256;
    int batch2 = 256;
    LossSpec loss{LossKind::LogCosh, 1.0};
    double head_lbfgs_lr = 1.0;
};

enum class FitPhase { Full, Stage1Only, Stage2Only };

// ---------------------------------------------------------------------------
// shared two-stage trainer
// ---------------------------------------------------------------------------

struct CoreData {
    Mat in1_d1;              // stage-1 featurizer inputs on the D1 fold
    Mat target_d1;           // proxy inputs whose features are the stage-1 targets
    Mat in1_d2;              // stage-1 featurizer inputs on the D2 fold
    Mat target_d2;           // proxy inputs feeding the auxiliary solve
    std::vector<Mat> left_d2; // second-stage featurizer inputs on D2
    Vec targets2;            // stage-2 regression targets
};

class TwoStageCore {
public:
    TwoStageCore() = default;

    TwoStageCore(const FeatArch& stage1, const std::vector<FeatArch>& left, const FeatArch& target,
                 int in1_dim, const std::vector<int>& left_dims, int target_in_dim,
                 BridgeHyper hyper, std::uint64_t seed, const std::string& tag)
        : hyper_(hyper) {
        stage1_f_ = Featurizer(make_mlp(stage1, in1_dim, seed ^ 0x51a6e1), in1_dim, tag + ".stage1");
        for (std::size_t k = 0; k < left.size(); ++k)
            left_f_.push_back(Featurizer(make_mlp(left[k], left_dims[k], seed ^ (0x1ef7 + 31 * k)),
                                         left_dims[k], tag + ".left" + std::to_string(k)));
        target_f_ = Featurizer(make_mlp(target, target_in_dim, seed ^ 0x7a26e7), target_in_dim, tag + ".target");
        const int d1 = stage1_f_.out_dim();
        const int dt = target_f_.out_dim();
        vhat_ = Mat::Zero(d1, dt);
        int head_dim = dt;
        for (auto& f : left_f_) head_dim *= f.out_dim();
        head_ = Vec::Zero(head_dim);
        shuffle_rng_ = Rng(seed, 0x5afe);
    }

    void train(const CoreData& data, FitPhase phase) {
        const long n1 = data.in1_d1.rows();
        const long n2 = data.in1_d2.rows();
        if ((phase != FitPhase::Stage2Only && n1 == 0) || (phase != FitPhase::Stage1Only && n2 == 0))
            throw ConfigError("bridge training: empty split");
        AdamW opt1({.lr = hyper_.lr1, .weight_decay = hyper_.weight_decay});
        AdamW opt2({.lr = hyper_.lr2, .weight_decay = hyper_.weight_decay});
        auto params1 = stage1_f_.params();
        std::vector<ad::NodePtr> params2 = target_f_.params();
        for (auto& f : left_f_) {
            auto p = f.params();
            params2.insert(params2.end(), p.begin(), p.end());
        }

        std::vector<int> idx1(n1), idx2(n2);
        std::iota(idx1.begin(), idx1.end(), 0);
        std::iota(idx2.begin(), idx2.end(), 0);
        const long nb1 = n1 > 0 ? (n1 + hyper_.batch1 - 1) / hyper_.batch1 : 0;
        const long nb2 = n2 > 0 ? (n2 + hyper_.batch2 - 1) / hyper_.batch2 : 0;
        const long n_outer = std::max(nb1, nb2);

        stage2_loss_trace_.clear();
        for (int epoch = 0; epoch < hyper_.epochs; ++epoch) {
            const double lam1 = hyper_.lam1.at(epoch, hyper_.epochs);
            const double lam_aux = hyper_.lam_aux.at(epoch, hyper_.epochs);
            const double lam2 = hyper_.lam2.at(epoch, hyper_.epochs);
            shuffle_rng_.shuffle(idx1);
            shuffle_rng_.shuffle(idx2);
            double epoch_loss = 0.0;
            long epoch_batches = 0;
            for (long outer = 0; outer < n_outer; ++outer) {
                if (phase != FitPhase::Stage2Only) {
                    auto b1 = chunk(idx1, outer % nb1, hyper_.batch1);
                    Mat in1 = take(data.in1_d1, b1);
                    Mat tg1 = take(data.target_d1, b1);
                    for (int t = 0; t < hyper_.t1; ++t) {
                        Mat target_feats = target_f_.eval(tg1);
                        auto phi1 = stage1_f_.forward(in1, Mode::Train);
                        auto resid = ad::sub(ad::matmul(phi1, ad::constant(vhat_)),
                                             ad::constant(target_feats));
                        auto loss = ad::scale(ad::sum_all(ad::cwise_mul(resid, resid)),
                                              1.0 / static_cast<double>(b1.size()));
                        AdamW::zero_grad(params1);
                        ad::backward(loss);
                        opt1.step(params1);

                        Mat phi1_eval = stage1_f_.eval(in1);
                        ProxRidgeProblem p;
                        p.phi = phi1_eval.transpose();
                        p.targets = target_feats.transpose();
                        p.lambda = lam1;
                        p.prev = vhat_;
                        p.n = static_cast<double>(b1.size());
                        Mat prev = vhat_;
                        vhat_ = prox_ridge_solve(p);
                        const double bsz = static_cast<double>(b1.size());
                        Mat lhs = (phi1_eval.transpose() * phi1_eval +
                                   bsz * lam1 * Mat::Identity(vhat_.rows(), vhat_.rows())) * vhat_;
                        Mat rhs = phi1_eval.transpose() * target_feats + bsz * lam1 * prev;
                        last_stage1_residual_ = (lhs - rhs).norm() / (rhs.norm() + 1e-300);
                    }
                }
                if (phase != FitPhase::Stage1Only) {
                    auto b2 = chunk(idx2, outer % nb2, hyper_.batch2);
                    Mat in1_b2 = take(data.in1_d2, b2);
                    Mat tg2 = take(data.target_d2, b2);
                    std::vector<Mat> lefts;
                    for (const auto& l : data.left_d2) lefts.push_back(take(l, b2));
                    Vec y2 = take_vec(data.targets2, b2);
                    Mat y2m(y2.size(), 1);
                    y2m.col(0) = y2;

                    for (int t = 0; t < hyper_.t2; ++t) {
                        // featurizer gradient step through the on-the-fly solve
                        Mat phi1_eval = stage1_f_.eval(in1_b2);
                        auto wf = target_f_.forward(tg2, Mode::Train);
                        auto vcheck = aux_first_stage(phi1_eval, wf, lam_aux, vhat_);
                        auto pred_embed = ad::matmul(ad::constant(phi1_eval), vcheck);
                        ad::NodePtr psi = left_f_.empty() ? pred_embed : nullptr;
                        if (!left_f_.empty()) {
                            psi = left_f_[0].forward(lefts[0], Mode::Train);
                            for (std::size_t k = 1; k < left_f_.size(); ++k)
                                psi = ad::row_kron(psi, left_f_[k].forward(lefts[k], Mode::Train));
                            psi = ad::row_kron(psi, pred_embed);
                        }
                        Mat head_m(head_.size(), 1);
                        head_m.col(0) = head_;
                        auto pred = ad::matmul(psi, ad::constant(head_m));
                        auto loss = loss_node(hyper_.loss, ad::constant(y2m), pred);
                        epoch_loss += loss->value(0, 0);
                        ++epoch_batches;
                        AdamW::zero_grad(params2);
                        ad::backward(loss);
                        opt2.step(params2);

                        // head refinement on the recomputed features
                        Mat psi_eval = stage2_features_eval(in1_b2, tg2, lefts, lam_aux);
                        if (hyper_.loss.closed_form_head()) {
                            head_ = prox_head_solve(psi_eval.transpose(), y2, lam2, head_);
                        } else {
                            const Vec head_prev = head_;
                            auto objective = [&](const Vec& h, Vec& g) {
                                Vec pred_v = psi_eval * h;
                                Vec dpred;
                                double val = loss_value(hyper_.loss, y2, pred_v, &dpred);
                                g = psi_eval.transpose() * dpred + 2.0 * lam2 * (h - head_prev);
                                return val + lam2 * (h - head_prev).squaredNorm();
                            };
                            auto res = lbfgs_minimize(objective, head_, hyper_.k_head,
                                                      hyper_.head_lbfgs_lr);
                            head_ = res.x;
                        }
                    }
                }
            }
            if (epoch_batches > 0)
                stage2_loss_trace_.push_back(epoch_loss / static_cast<double>(epoch_batches));
        }
    }

    // second-stage feature matrix Psi in eval mode (deterministic heads)
    Mat stage2_features_eval(const Mat& in1, const Mat& target_in, const std::vector<Mat>& lefts,
                             double lam_aux) {
        Mat phi1 = stage1_f_.eval(in1);
        Mat wfe = target_f_.eval(target_in);
        Mat vcheck = aux_first_stage_value(phi1, wfe, lam_aux, vhat_);
        Mat pred_embed = phi1 * vcheck;
        return assemble_psi(lefts, pred_embed);
    }

    // bridge features phi_left (x) phi_target at evaluation time: the learned
    // target featurizer is applied directly to observed proxies
    Mat bridge_features(const std::vector<Mat>& lefts, const Mat& target_in) {
        Mat tf = target_f_.eval(target_in);
        return assemble_psi(lefts, tf);
    }

    Mat assemble_psi(const std::vector<Mat>& lefts, const Mat& rightmost) {
        if (left_f_.empty()) return rightmost;
        Mat acc = left_f_[0].eval(lefts[0]);
        for (std::size_t k = 1; k < left_f_.size(); ++k) {
            auto node = ad::row_kron(ad::constant(acc), ad::constant(left_f_[k].eval(lefts[k])));
            acc = node->value;
        }
        return ad::row_kron(ad::constant(acc), ad::constant(rightmost))->value;
    }

    Mat left_features(std::size_t k, const Mat& cols) { return left_f_[k].eval(cols); }
    Mat target_features(const Mat& cols) { return target_f_.eval(cols); }

    const Vec& head() const { return head_; }
    void set_head(Vec h) {
        require(h.size() == head_.size(), "set_head: wrong length");
        head_ = std::move(h);
    }
    const Mat& vhat() const { return vhat_; }
    double last_stage1_residual() const { return last_stage1_residual_; }
    const std::vector<double>& stage2_loss_trace() const { return stage2_loss_trace_; }
    std::size_t left_count() const { return left_f_.size(); }
    Featurizer& stage1_featurizer() { return stage1_f_; }
    Featurizer& left_featurizer(std::size_t k) { return left_f_[k]; }
    Featurizer& target_featurizer() { return target_f_; }
    Mat& vhat_mutable() { return vhat_; }
    const BridgeHyper& hyper() const { return hyper_; }

private:
    static std::vector<int> chunk(const std::vector<int>& idx, long batch_no, int batch_size) {
        std::size_t start = static_cast<std::size_t>(batch_no) * batch_size;
        std::size_t end = std::min(idx.size(), start + batch_size);
        return std::vector<int>(idx.begin() + start, idx.begin() + end);
    }
    static Mat take(const Mat& m, const std::vector<int>& rows) {
        Mat out(static_cast<long>(rows.size()), m.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
        return out;
    }
    static Vec take_vec(const Vec& v, const std::vector<int>& rows) {
        Vec out(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) out(i) = v(rows[i]);
        return out;
    }
    BridgeHyper hyper_;
    Featurizer stage1_f_;
    std::vector<Featurizer> left_f_;
    Featurizer target_f_;
    Mat vhat_;
    Vec head_;
    Rng shuffle_rng_{0};
    double last_stage1_residual_ = 0.0;
    std::vector<double> stage2_loss_trace_;
};

// ---------------------------------------------------------------------------
// OutcomeNet: h(a, x, w) = head . (phi_A (x) [phi_V (x) phi_S | phi_X] (x) phi_W)
// ---------------------------------------------------------------------------

struct OutcomeBridgeConfig {
    FeatArch stage1;
    FeatArch feat_a;
    FeatArch feat_x; // used when covariates are not split
    FeatArch feat_v;
    FeatArch feat_s;
    FeatArch feat_w;
    BridgeHyper hyper;
    std::uint64_t seed = 0;
};

class OutcomeBridge {
public:
    explicit OutcomeBridge(OutcomeBridgeConfig cfg) : cfg_(std::move(cfg)) {}

    void fit(const Dataset& d, const SplitPlan& plan) {
        plan.validate(d.n());
        d.validate();
        has_v_ = d.has_v();
        has_s_ = d.s.cols() > 0;
        has_x_ = d.has_x();
        Dataset d1 = d.rows(plan.d1);
        Dataset d2 = d.rows(plan.d2);

        fit_scalers(d1, d2);
        const int dz = static_cast<int>(d.z.cols());
        const int dw = static_cast<int>(d.w.cols());
        const int dx = static_cast<int>(d.x().cols());

        std::vector<int> left_dims = {1};
        if (has_v_) {
            left_dims.push_back(static_cast<int>(d.v.cols()));
            if (has_s_) left_dims.push_back(static_cast<int>(d.s.cols()));
        } else if (has_x_) {
            left_dims.push_back(dx);
        }
        build_core(1 + dx + dz, left_dims, dw);

        CoreData data;
        data.in1_d1 = stage1_input(d1);
        data.target_d1 = w_scaler_.apply(d1.w);
        data.in1_d2 = stage1_input(d2);
        data.target_d2 = w_scaler_.apply(d2.w);
        data.left_d2 = left_inputs(d2);
        data.targets2 = d2.y / y_sd_;
        core_.train(data, FitPhase::Full);
        fitted_ = true;
    }

    // raw-unit bridge evaluation; x carries [v s] when the covariates are split
    Vec eval_h_rows(const Vec& a, const Mat& x, const Mat& w) {
        if (!fitted_) throw StateError("outcome bridge: eval before fit");
        Mat psi = core_.bridge_features(left_inputs_raw(a, x), w_scaler_.apply(w));
        return y_sd_ * (psi * core_.head());
    }

    double eval_h(double a, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& w) {
        Vec av(1);
        av(0) = a;
        return eval_h_rows(av, Mat(x), Mat(w))(0);
    }

    // f(a) = mean_i h(a, x_i, w_i) over the evaluation rows
    DoseResponseCurve ate_curve(const Dataset& d, const std::vector<int>& rows,
                                const std::vector<double>& grid) {
        if (rows.empty()) throw ConfigError("ate_curve: empty evaluation sample");
        Dataset de = d.rows(rows);
        Mat right = core_.target_features(w_scaler_.apply(de.w)); // t x dW
        Mat mean_embed;
        if (core_.left_count() >= 2) {
            Mat acc = core_.left_features(1, block_input(de, 1));
            for (std::size_t k = 2; k < core_.left_count(); ++k)
                acc = ad::row_kron(ad::constant(acc),
                                   ad::constant(core_.left_features(k, block_input(de, k))))->value;
            mean_embed = ad::row_kron(ad::constant(acc), ad::constant(right))->value.colwise().mean();
        } else {
            mean_embed = right.colwise().mean();
        }
        DoseResponseCurve c;
        c.grid_a = grid;
        c.tag = "outcome-net";
        for (double a : grid) {
            Mat am(1, 1);
            am(0, 0) = (a - a_mean_) * a_inv_sd_;
            Mat fa = core_.left_features(0, am);
            Mat full = ad::row_kron(ad::constant(fa), ad::constant(mean_embed))->value;
            c.values.push_back(y_sd_ * (full.row(0).dot(core_.head())));
        }
        return c;
    }

    // heterogeneous evaluator: regress phi_S (x) phi_W (or phi_W) on V
    struct CateEvaluator {
        OutcomeBridge* model = nullptr;
        Regressor embed;

        double at(double a, double v) {
            Mat vm(1, 1);
            vm(0, 0) = v;
            Mat emb = embed.predict(vm);
            Mat am(1, 1);
            am(0, 0) = (a - model->a_mean_) * model->a_inv_sd_;
            Mat fa = model->core_.left_features(0, am);
            Mat fv = model->core_.left_features(1, model->v_scaler_.apply(vm));
            Mat acc = ad::row_kron(ad::constant(fa), ad::constant(fv))->value;
            Mat full = ad::row_kron(ad::constant(acc), ad::constant(emb))->value;
            return model->y_sd_ * full.row(0).dot(model->core_.head());
        }

        DoseResponseCurve curve(double a, const std::vector<double>& v_grid) {
            DoseResponseCurve c;
            c.grid_a.assign(v_grid.size(), a);
            c.grid_v = v_grid;
            c.tag = "outcome-net";
            for (double v : v_grid) c.values.push_back(at(a, v));
            return c;
        }
    };

    CateEvaluator cate_regression(const Dataset& d, const std::vector<int>& rows,
                                  RegressorConfig rc) {
        if (!has_v_) throw ConfigError("cate_regression: dataset has no V column");
        Dataset de = d.rows(rows);
        Mat right = core_.target_features(w_scaler_.apply(de.w));
        Mat targets;
        if (has_s_) {
            Mat fs = core_.left_features(2, s_scaler_.apply(de.s));
            targets = ad::row_kron(ad::constant(fs), ad::constant(right))->value;
        } else {
            targets = right;
        }
        CateEvaluator ev;
        ev.model = this;
        ev.embed = Regressor(rc, static_cast<int>(de.v.cols()), static_cast<int>(targets.cols()),
                             "cate-embed");
        ev.embed.fit(de.v, targets);
        return ev;
    }

    // conditional evaluator: regress phi_X (x) phi_W (or phi_W) on A
    struct AttEvaluator {
        OutcomeBridge* model = nullptr;
        Regressor embed;
        double a_lo = 0.0, a_hi = 0.0;

        double at(double a, double anchor) {
            Mat am_anchor(1, 1);
            am_anchor(0, 0) = anchor;
            Mat emb = embed.predict(am_anchor);
            Mat am(1, 1);
            am(0, 0) = (a - model->a_mean_) * model->a_inv_sd_;
            Mat fa = model->core_.left_features(0, am);
            Mat full = ad::row_kron(ad::constant(fa), ad::constant(emb))->value;
            return model->y_sd_ * full.row(0).dot(model->core_.head());
        }

        DoseResponseCurve curve(const std::vector<double>& grid, double anchor) {
            DoseResponseCurve c;
            c.grid_a = grid;
            c.anchor = anchor;
            c.has_anchor = true;
            c.tag = "outcome-net";
            c.anchor_outside_support = anchor < a_lo || anchor > a_hi;
            for (double a : grid) c.values.push_back(at(a, anchor));
            return c;
        }
    };

    AttEvaluator att_regression(const Dataset& d, const std::vector<int>& rows, RegressorConfig rc) {
        Dataset de = d.rows(rows);
        Mat right = core_.target_features(w_scaler_.apply(de.w));
        Mat targets;
        if (core_.left_count() >= 2) {
            Mat acc = core_.left_features(1, block_input(de, 1));
            for (std::size_t k = 2; k < core_.left_count(); ++k)
                acc = ad::row_kron(ad::constant(acc),
                                   ad::constant(core_.left_features(k, block_input(de, k))))->value;
            targets = ad::row_kron(ad::constant(acc), ad::constant(right))->value;
        } else {
            targets = right;
        }
        AttEvaluator ev;
        ev.model = this;
        ev.a_lo = d.a.minCoeff();
        ev.a_hi = d.a.maxCoeff();
        Mat a_in(de.n(), 1);
        a_in.col(0) = de.a;
        ev.embed = Regressor(rc, 1, static_cast<int>(targets.cols()), "att-embed");
        ev.embed.fit(a_in, targets);
        return ev;
    }

    TwoStageCore& core() { return core_; }
    double y_scale() const { return y_sd_; }
    bool fitted() const { return fitted_; }
    const OutcomeBridgeConfig& config() const { return cfg_; }

    // persistence surface: everything outside the core parameter blob
    struct Meta {
        bool has_v = false, has_s = false, has_x = false;
        double a_mean = 0.0, a_inv_sd = 1.0, y_sd = 1.0;
        Scaler x_sc, v_sc, s_sc, z_sc, w_sc;
        int in1_dim = 0;
        std::vector<int> left_dims;
        int target_dim = 0;
    };

    Meta export_meta() {
        Meta m;
        m.has_v = has_v_;
        m.has_s = has_s_;
        m.has_x = has_x_;
        m.a_mean = a_mean_;
        m.a_inv_sd = a_inv_sd_;
        m.y_sd = y_sd_;
        m.x_sc = x_scaler_;
        m.v_sc = v_scaler_;
        m.s_sc = s_scaler_;
        m.z_sc = z_scaler_;
        m.w_sc = w_scaler_;
        m.in1_dim = core_.stage1_featurizer().in_dim();
        for (std::size_t k = 0; k < core_.left_count(); ++k)
            m.left_dims.push_back(core_.left_featurizer(k).in_dim());
        m.target_dim = core_.target_featurizer().in_dim();
        return m;
    }

    void import_meta(const Meta& m) {
        has_v_ = m.has_v;
        has_s_ = m.has_s;
        has_x_ = m.has_x;
        a_mean_ = m.a_mean;
        a_inv_sd_ = m.a_inv_sd;
        y_sd_ = m.y_sd;
        x_scaler_ = m.x_sc;
        v_scaler_ = m.v_sc;
        s_scaler_ = m.s_sc;
        z_scaler_ = m.z_sc;
        w_scaler_ = m.w_sc;
        build_core(m.in1_dim, m.left_dims, m.target_dim);
        fitted_ = true;
    }

private:
    friend struct CateEvaluator;

    void build_core(int in1_dim, const std::vector<int>& left_dims, int target_dim) {
        std::vector<FeatArch> left = {cfg_.feat_a};
        if (has_v_) {
            left.push_back(cfg_.feat_v);
            if (has_s_) left.push_back(cfg_.feat_s);
        } else if (has_x_) {
            left.push_back(cfg_.feat_x);
        }
        require(left.size() == left_dims.size(), "outcome bridge: left block count mismatch");
        core_ = TwoStageCore(cfg_.stage1, left, cfg_.feat_w, in1_dim, left_dims, target_dim,
                             cfg_.hyper, cfg_.seed, "outcome");
    }

    void fit_scalers(const Dataset& d1, const Dataset& d2) {
        Mat a1(d1.n(), 1);
        a1.col(0) = d1.a;
        Scaler sa = Scaler::fit(a1);
        a_mean_ = sa.mean(0);
        a_inv_sd_ = sa.inv_sd(0);
        z_scaler_ = Scaler::fit(d1.z);
        w_scaler_ = Scaler::fit(d1.w);
        if (has_v_) {
            v_scaler_ = Scaler::fit(d1.v);
            if (has_s_) s_scaler_ = Scaler::fit(d1.s);
        } else if (has_x_) {
            x_scaler_ = Scaler::fit(d1.x());
        }
        double var = (d2.y.array() - d2.y.mean()).square().mean();
        y_sd_ = std::sqrt(var + 1e-12);
    }

    Mat stage1_input(const Dataset& d) {
        const Mat x = d.x();
        Mat out(d.n(), 1 + x.cols() + d.z.cols());
        out.col(0) = (d.a.array() - a_mean_) * a_inv_sd_;
        if (x.cols() > 0) {
            Mat xs = has_v_ ? scale_vs(d) : x_scaler_.apply(x);
            out.middleCols(1, x.cols()) = xs;
        }
        out.rightCols(d.z.cols()) = z_scaler_.apply(d.z);
        return out;
    }

    Mat scale_vs(const Dataset& d) {
        Mat out(d.n(), d.v.cols() + d.s.cols());
        out.leftCols(d.v.cols()) = v_scaler_.apply(d.v);
        if (has_s_) out.rightCols(d.s.cols()) = s_scaler_.apply(d.s);
        return out;
    }

    std::vector<Mat> left_inputs(const Dataset& d) {
        std::vector<Mat> out;
        Mat a(d.n(), 1);
        a.col(0) = (d.a.array() - a_mean_) * a_inv_sd_;
        out.push_back(a);
        if (has_v_) {
            out.push_back(v_scaler_.apply(d.v));
            if (has_s_) out.push_back(s_scaler_.apply(d.s));
        } else if (has_x_) {
            out.push_back(x_scaler_.apply(d.x()));
        }
        return out;
    }

    // raw (a, x) pairs assembled into per-block scaled inputs
    std::vector<Mat> left_inputs_raw(const Vec& a, const Mat& x) {
        std::vector<Mat> out;
        Mat am(a.size(), 1);
        am.col(0) = (a.array() - a_mean_) * a_inv_sd_;
        out.push_back(am);
        if (has_v_) {
            long dv = v_scaler_.mean.size();
            out.push_back(v_scaler_.apply(x.leftCols(dv)));
            if (has_s_) out.push_back(s_scaler_.apply(x.rightCols(x.cols() - dv)));
        } else if (has_x_) {
            out.push_back(x_scaler_.apply(x));
        }
        return out;
    }

    Mat block_input(const Dataset& d, std::size_t k) {
        auto all = left_inputs(d);
        return all[k];
    }

    OutcomeBridgeConfig cfg_;
    TwoStageCore core_;
    bool fitted_ = false;
    bool has_v_ = false, has_s_ = false, has_x_ = false;
    double a_mean_ = 0.0, a_inv_sd_ = 1.0;
    Scaler x_scaler_, v_scaler_, s_scaler_, z_scaler_, w_scaler_;
    double y_sd_ = 1.0;
};

// ---------------------------------------------------------------------------
// TreatmentNet: phi(a, x, z) = head . (phi_AX (x) phi_Z), targets are ratios
// ---------------------------------------------------------------------------

struct TreatmentBridgeConfig {
    FeatArch stage1;
    FeatArch feat_ax; // joint featurizer over (a, x) or (a, v, s)
    FeatArch feat_z;
    BridgeHyper hyper;
    double winsor_pct = 0.995; // upper-tail cap on the ratio targets
    std::uint64_t seed = 0;
};

class TreatmentBridge {
public:
    explicit TreatmentBridge(TreatmentBridgeConfig cfg) : cfg_(std::move(cfg)) {}

    void fit(const Dataset& d, const SplitPlan& plan, const Vec& r_hat_d2,
             FitPhase phase = FitPhase::Full) {
        plan.validate(d.n());
        Dataset d1 = d.rows(plan.d1);
        Dataset d2 = d.rows(plan.d2);
        if (phase != FitPhase::Stage1Only) {
            require(r_hat_d2.size() == d2.n(), "treatment fit: r-hat must align with the D2 fold");
            for (long i = 0; i < r_hat_d2.size(); ++i)
                if (!std::isfinite(r_hat_d2(i)))
                    throw DataError("treatment fit: non-finite ratio target at row " +
                                    std::to_string(i));
        }

        if (!initialized_) {
            has_x_ = d.has_x();
            fit_scalers(d1);
            const int dz = static_cast<int>(d.z.cols());
            const int dw = static_cast<int>(d.w.cols());
            const int dx = static_cast<int>(d.x().cols());
            core_ = TwoStageCore(cfg_.stage1, {cfg_.feat_ax}, cfg_.feat_z, 1 + dx + dw,
                                 {1 + dx}, dz, cfg_.hyper, cfg_.seed, "treatment");
            initialized_ = true;
        }

        CoreData data;
        data.in1_d1 = stage1_input(d1);
        data.target_d1 = z_scaler_.apply(d1.z);
        data.in1_d2 = stage1_input(d2);
        data.target_d2 = z_scaler_.apply(d2.z);
        data.left_d2 = {ax_input(d2)};
        data.targets2 = phase == FitPhase::Stage1Only ? Vec::Zero(d2.n()) : winsorize(r_hat_d2);
        core_.train(data, phase);
        fitted_ = phase != FitPhase::Stage1Only;
    }

    Vec eval_phi_rows(const Vec& a, const Mat& x, const Mat& z) {
        if (!fitted_) throw StateError("treatment bridge: eval before fit");
        Mat ax = ax_input_raw(a, x);
        Mat psi = core_.bridge_features({ax}, z_scaler_.apply(z));
        return psi * core_.head();
    }

    double eval_phi(double a, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& z) {
        Vec av(1);
        av(0) = a;
        return eval_phi_rows(av, Mat(x), Mat(z))(0);
    }

    // third stage: regress y * phi on a and evaluate on the grid
    DoseResponseCurve ate_curve(const Dataset& d, const std::vector<int>& rows, RegressorConfig rc,
                                const std::vector<double>& grid) {
        if (rows.empty()) throw DataError("treatment ate_curve: empty pseudo-outcome set");
        Dataset de = d.rows(rows);
        Vec pseudo = de.y.cwiseProduct(eval_phi_rows(de.a, de.x(), de.z));
        Regressor reg(rc, 1, 1, "treat-3rd");
        Mat a_in(de.n(), 1);
        a_in.col(0) = de.a;
        Mat p(pseudo.size(), 1);
        p.col(0) = pseudo;
        reg.fit(a_in, p);
        DoseResponseCurve c;
        c.grid_a = grid;
        c.tag = "treatment-net";
        Mat g(grid.size(), 1);
        for (std::size_t i = 0; i < grid.size(); ++i) g(i, 0) = grid[i];
        Vec vals = reg.predict(g).col(0);
        for (long i = 0; i < vals.size(); ++i) c.values.push_back(vals(i));
        return c;
    }

    struct CateEvaluator {
        Regressor reg; // (a, v) -> pseudo-outcome mean

        double at(double a, double v) {
            Mat in(1, 2);
            in(0, 0) = a;
            in(0, 1) = v;
            return reg.predict(in)(0, 0);
        }
        DoseResponseCurve curve(double a, const std::vector<double>& v_grid) {
            DoseResponseCurve c;
            c.grid_a.assign(v_grid.size(), a);
            c.grid_v = v_grid;
            c.tag = "treatment-net";
            for (double v : v_grid) c.values.push_back(at(a, v));
            return c;
        }
    };

    CateEvaluator cate_curve(const Dataset& d, const std::vector<int>& rows, RegressorConfig rc) {
        if (!d.has_v()) throw ConfigError("treatment cate_curve: dataset has no V column");
        Dataset de = d.rows(rows);
        Vec pseudo = de.y.cwiseProduct(eval_phi_rows(de.a, de.x(), de.z));
        Mat in(de.n(), 2);
        in.col(0) = de.a;
        in.col(1) = de.v.col(0);
        Mat p(pseudo.size(), 1);
        p.col(0) = pseudo;
        CateEvaluator ev;
        ev.reg = Regressor(rc, 2, 1, "treat-cate-3rd");
        ev.reg.fit(in, p);
        return ev;
    }

    DoseResponseCurve att_curve(const Dataset& d, const std::vector<int>& rows, RegressorConfig rc,
                                const std::vector<double>& grid, double anchor) {
        auto c = ate_curve(d, rows, rc, grid);
        c.anchor = anchor;
        c.has_anchor = true;
        c.anchor_outside_support = anchor < d.a.minCoeff() || anchor > d.a.maxCoeff();
        return c;
    }

    // shares the trained first stage (and initialization) across anchors
    void copy_state_from(TreatmentBridge& other) {
        cfg_ = other.cfg_;
        has_x_ = other.has_x_;
        a_mean_ = other.a_mean_;
        a_inv_sd_ = other.a_inv_sd_;
        x_scaler_ = other.x_scaler_;
        z_scaler_ = other.z_scaler_;
        w_scaler_ = other.w_scaler_;
        core_ = TwoStageCore(cfg_.stage1, {cfg_.feat_ax}, cfg_.feat_z,
                             other.core_.stage1_featurizer().in_dim(),
                             {other.core_.left_featurizer(0).in_dim()},
                             other.core_.target_featurizer().in_dim(), cfg_.hyper, cfg_.seed,
                             "treatment");
        copy_featurizer(other.core_.stage1_featurizer(), core_.stage1_featurizer());
        copy_featurizer(other.core_.left_featurizer(0), core_.left_featurizer(0));
        copy_featurizer(other.core_.target_featurizer(), core_.target_featurizer());
        core_.vhat_mutable() = other.core_.vhat();
        core_.set_head(other.core_.head());
        initialized_ = true;
    }

    TwoStageCore& core() { return core_; }
    bool fitted() const { return fitted_; }
    const TreatmentBridgeConfig& config() const { return cfg_; }
    Vec last_targets() const { return last_targets_; }

    struct Meta {
        bool has_x = false;
        double a_mean = 0.0, a_inv_sd = 1.0;
        Scaler x_sc, z_sc, w_sc;
        int in1_dim = 0, ax_dim = 0, target_dim = 0;
    };

    Meta export_meta() {
        Meta m;
        m.has_x = has_x_;
        m.a_mean = a_mean_;
        m.a_inv_sd = a_inv_sd_;
        m.x_sc = x_scaler_;
        m.z_sc = z_scaler_;
        m.w_sc = w_scaler_;
        m.in1_dim = core_.stage1_featurizer().in_dim();
        m.ax_dim = core_.left_featurizer(0).in_dim();
        m.target_dim = core_.target_featurizer().in_dim();
        return m;
    }

    void import_meta(const Meta& m) {
        has_x_ = m.has_x;
        a_mean_ = m.a_mean;
        a_inv_sd_ = m.a_inv_sd;
        x_scaler_ = m.x_sc;
        z_scaler_ = m.z_sc;
        w_scaler_ = m.w_sc;
        core_ = TwoStageCore(cfg_.stage1, {cfg_.feat_ax}, cfg_.feat_z, m.in1_dim, {m.ax_dim},
                             m.target_dim, cfg_.hyper, cfg_.seed, "treatment");
        initialized_ = true;
        fitted_ = true;
    }

private:
    static void copy_featurizer(Featurizer& src, Featurizer& dst) {
        auto se = src.state_entries();
        auto de = dst.state_entries();
        require(se.size() == de.size(), "copy_featurizer: structure mismatch");
        for (std::size_t i = 0; i < se.size(); ++i) *de[i].second = *se[i].second;
        dst.sync_bn_from_state_entries();
    }

    void fit_scalers(const Dataset& d1) {
        Mat a1(d1.n(), 1);
        a1.col(0) = d1.a;
        Scaler sa = Scaler::fit(a1);
        a_mean_ = sa.mean(0);
        a_inv_sd_ = sa.inv_sd(0);
        z_scaler_ = Scaler::fit(d1.z);
        w_scaler_ = Scaler::fit(d1.w);
        if (has_x_) x_scaler_ = Scaler::fit(d1.x());
    }

    Vec winsorize(const Vec& r) {
        Vec out = r;
        std::vector<double> sorted(r.data(), r.data() + r.size());
        double cap = percentile(sorted, cfg_.winsor_pct);
        for (long i = 0; i < out.size(); ++i) out(i) = std::min(out(i), cap);
        last_targets_ = out;
        return out;
    }

    Mat stage1_input(const Dataset& d) {
        const Mat x = d.x();
        Mat out(d.n(), 1 + x.cols() + d.w.cols());
        out.col(0) = (d.a.array() - a_mean_) * a_inv_sd_;
        if (x.cols() > 0) out.middleCols(1, x.cols()) = x_scaler_.apply(x);
        out.rightCols(d.w.cols()) = w_scaler_.apply(d.w);
        return out;
    }

    Mat ax_input(const Dataset& d) {
        const Mat x = d.x();
        Mat out(d.n(), 1 + x.cols());
        out.col(0) = (d.a.array() - a_mean_) * a_inv_sd_;
        if (x.cols() > 0) out.rightCols(x.cols()) = x_scaler_.apply(x);
        return out;
    }

    Mat ax_input_raw(const Vec& a, const Mat& x) {
        Mat out(a.size(), 1 + x.cols());
        out.col(0) = (a.array() - a_mean_) * a_inv_sd_;
        if (x.cols() > 0) out.rightCols(x.cols()) = x_scaler_.apply(x);
        return out;
    }

    TreatmentBridgeConfig cfg_;
    TwoStageCore core_;
    bool initialized_ = false;
    bool fitted_ = false;
    bool has_x_ = false;
    double a_mean_ = 0.0, a_inv_sd_ = 1.0;
    Scaler x_scaler_, z_scaler_, w_scaler_;
    Vec last_targets_;
};

} // namespace pclnet
