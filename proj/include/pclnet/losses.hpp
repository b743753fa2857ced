#pragma once

#include "pclnet/graph.hpp"

namespace pclnet {

// MSE-ClosedForm is a routing flag, not a distinct residual shape: head
// updates go through the proximal closed form, while featurizer gradients use
// the plain squared loss.
enum class LossKind { MSE, LogCosh, Huber, MSEClosedForm };

struct LossSpec {
    LossKind kind = LossKind::LogCosh;
    double huber_delta = 1.0;

    bool closed_form_head() const { return kind == LossKind::MSEClosedForm; }
};

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "mse") return LossKind::MSE;
    if (s == "logcosh" || s == "log-cosh") return LossKind::LogCosh;
    if (s == "huber") return LossKind::Huber;
    if (s == "mse-cf" || s == "mse-closed-form") return LossKind::MSEClosedForm;
    throw ConfigError("unknown loss kind: " + s);
}

inline std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::MSE: return "mse";
        case LossKind::LogCosh: return "logcosh";
        case LossKind::Huber: return "huber";
        case LossKind::MSEClosedForm: return "mse-cf";
    }
    return "?";
}

// pointwise residual loss and derivative w.r.t. the prediction
inline double loss_point(const LossSpec& spec, double y, double pred, double* dpred) {
    const double r = pred - y;
    switch (spec.kind) {
        case LossKind::MSE:
        case LossKind::MSEClosedForm:
            if (dpred) *dpred = 2.0 * r;
            return r * r;
        case LossKind::LogCosh:
            if (dpred) *dpred = std::tanh(r);
            return ad::log_cosh(r);
        case LossKind::Huber: {
            const double d = spec.huber_delta;
            if (std::abs(r) <= d) {
                if (dpred) *dpred = r;
                return 0.5 * r * r;
            }
            if (dpred) *dpred = r > 0 ? d : -d;
            return d * (std::abs(r) - 0.5 * d);
        }
    }
    throw ConfigError("loss_point: unknown kind");
}

// mean loss over a vector of residuals; gradient w.r.t. pred if requested
inline double loss_value(const LossSpec& spec, const Vec& y, const Vec& pred, Vec* dpred = nullptr) {
    require(y.size() == pred.size(), "loss: shape mismatch");
    const double inv = 1.0 / static_cast<double>(y.size());
    if (dpred) dpred->resize(y.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double g = 0.0;
        total += loss_point(spec, y(i), pred(i), dpred ? &g : nullptr);
        if (dpred) (*dpred)(i) = g * inv;
    }
    return total * inv;
}

// graph version: mean over entries of the pointwise loss
inline ad::NodePtr loss_node(const LossSpec& spec, const ad::NodePtr& y, const ad::NodePtr& pred) {
    require(y->rows() == pred->rows() && y->cols() == pred->cols(), "loss: shape mismatch");
    auto r = ad::sub(pred, y);
    switch (spec.kind) {
        case LossKind::MSE:
        case LossKind::MSEClosedForm:
            return ad::mean_all(ad::cwise_mul(r, r));
        case LossKind::LogCosh:
            return ad::mean_all(ad::log_cosh_op(r));
        case LossKind::Huber: {
            const double d = spec.huber_delta;
            Mat v = r->value.unaryExpr([d](double t) {
                return std::abs(t) <= d ? 0.5 * t * t : d * (std::abs(t) - 0.5 * d);
            });
            auto h = ad::make_op(std::move(v), {r}, [r, d](ad::Node& out) {
                if (!r->requires_grad) return;
                r->ensure_grad();
                r->grad += out.grad.cwiseProduct(r->value.unaryExpr([d](double t) {
                    return std::abs(t) <= d ? t : (t > 0 ? d : -d);
                }));
            });
            return ad::mean_all(h);
        }
    }
    throw ConfigError("loss_node: unknown kind");
}

} // namespace pclnet
