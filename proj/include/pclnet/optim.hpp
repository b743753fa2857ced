#pragma once

#include "pclnet/graph.hpp"

#include <deque>
#include <functional>

namespace pclnet {

// ---------------------------------------------------------------------------
// AdamW: decoupled weight decay, bias-corrected moments
// ---------------------------------------------------------------------------

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<ad::NodePtr>& params) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.push_back(Mat::Zero(p->rows(), p->cols()));
                v_.push_back(Mat::Zero(p->rows(), p->cols()));
            }
        }
        require(m_.size() == params.size(), "adamw: parameter set changed");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            p.ensure_grad();
            if (!p.grad.allFinite())
                throw NumericError("adamw: non-finite gradient for parameter '" +
                                   (p.name.empty() ? ("#" + std::to_string(i)) : p.name) + "'");
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
            Mat mhat = m_[i] / bc1;
            Mat vhat = v_[i] / bc2;
            p.value -= cfg_.lr * (mhat.array() / (vhat.array().sqrt() + cfg_.eps)).matrix();
            if (cfg_.weight_decay != 0.0) p.value *= (1.0 - cfg_.lr * cfg_.weight_decay);
        }
    }

    static void zero_grad(const std::vector<ad::NodePtr>& params) {
        for (const auto& p : params) p->zero_grad();
    }

    const AdamWConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

private:
    AdamWConfig cfg_;
    std::vector<Mat> m_, v_;
    long t_ = 0;
};

// ---------------------------------------------------------------------------
// L-BFGS with backtracking Armijo line search
// ---------------------------------------------------------------------------

struct LbfgsResult {
    Vec x;
    double f = 0.0;
    bool line_search_failed = false;
    int iterations = 0;
};

// objective returns f(x) and fills grad
using Objective = std::function<double(const Vec&, Vec&)>;

inline LbfgsResult lbfgs_minimize(const Objective& objective, Vec init, int max_steps,
                                  double lr = 1.0, int memory = 10) {
    const double armijo_c = 1e-4;
    LbfgsResult res;
    Vec x = std::move(init);
    Vec g(x.size());
    double f = objective(x, g);
    if (!std::isfinite(f) || !g.allFinite())
        throw NumericError("lbfgs: objective not finite at the initial point");

    std::deque<Vec> s_hist, y_hist;
    std::deque<double> rho_hist;

    Vec best_x = x;
    double best_f = f;

    for (int it = 0; it < max_steps; ++it) {
        if (g.norm() < 1e-14) break;

        // two-loop recursion
        Vec q = g;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (!s_hist.empty()) {
            double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Vec dir = -q;

        double slope = g.dot(dir);
        if (slope >= 0.0) { // fall back to steepest descent
            dir = -g;
            slope = -g.squaredNorm();
        }

        double step = s_hist.empty() ? lr : 1.0;
        Vec x_new;
        Vec g_new(x.size());
        double f_new = f;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = x + step * dir;
            f_new = objective(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + armijo_c * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            res.line_search_failed = true;
            break;
        }

        Vec s = x_new - x;
        Vec y = g_new - g;
        double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        x = std::move(x_new);
        g = g_new;
        f = f_new;
        ++res.iterations;
        if (f < best_f) { best_f = f; best_x = x; }
    }
    if (f <= best_f) { best_f = f; best_x = x; }
    res.x = std::move(best_x);
    res.f = best_f;
    return res;
}

// ---------------------------------------------------------------------------
// annealing schedules
// ---------------------------------------------------------------------------

enum class AnnealKind { Exponential, Linear };

struct Anneal {
    double start = 1.0;
    double end = 1.0;
    AnnealKind kind = AnnealKind::Exponential;

    // epoch 0 -> start, epoch total-1 -> end
    double at(int epoch, int total) const {
        if (kind == AnnealKind::Exponential && (start <= 0.0 || end <= 0.0))
            throw ConfigError("anneal: exponential schedule needs positive endpoints");
        if (total <= 1) return start;
        double f = static_cast<double>(epoch) / static_cast<double>(total - 1);
        if (f < 0.0) f = 0.0;
        if (f > 1.0) f = 1.0;
        if (kind == AnnealKind::Linear) return start + (end - start) * f;
        return start * std::pow(end / start, f);
    }
};

} // namespace pclnet
