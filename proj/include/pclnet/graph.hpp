#pragma once

#include "pclnet/common.hpp"
#include "pclnet/rng.hpp"

#include <functional>
#include <memory>
#include <numbers>
#include <unordered_set>
#include <utility>
#include <vector>

namespace pclnet::ad {

using pclnet::Mat;
using pclnet::Vec;

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in a reverse-mode differentiation graph. Ops allocate a fresh
// node, record their parents and a backward rule; parameters are leaves that
// outlive the per-batch graphs referencing them.
struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::string name;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    Node() = default;
    explicit Node(Mat v) : value(std::move(v)) {}

    void ensure_grad() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols())
            grad = Mat::Zero(value.rows(), value.cols());
    }
    void zero_grad() { grad = Mat::Zero(value.rows(), value.cols()); }

    long rows() const { return value.rows(); }
    long cols() const { return value.cols(); }
};

inline NodePtr constant(Mat v) {
    auto n = std::make_shared<Node>(std::move(v));
    return n;
}

inline NodePtr param(Mat v, std::string name = {}) {
    auto n = std::make_shared<Node>(std::move(v));
    n->requires_grad = true;
    n->name = std::move(name);
    n->ensure_grad();
    return n;
}

inline NodePtr make_op(Mat value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>(std::move(value));
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

// Runs the backward sweep from a scalar root. Each reachable node's grad is
// accumulated exactly once per call; parameter grads add up across calls
// until zero_grad.
inline void backward(const NodePtr& root) {
    require(root->rows() == 1 && root->cols() == 1, "backward: root must be scalar");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->ensure_grad();
    root->grad(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    require(a->cols() == b->rows(), "matmul: inner dimensions differ");
    Mat v = a->value * b->value;
    return make_op(std::move(v), {a, b}, [a, b](Node& out) {
        if (a->requires_grad) { a->ensure_grad(); a->grad.noalias() += out.grad * b->value.transpose(); }
        if (b->requires_grad) { b->ensure_grad(); b->grad.noalias() += a->value.transpose() * out.grad; }
    });
}

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
    require(a->rows() == b->rows() && a->cols() == b->cols(), "add: shape mismatch");
    return make_op(a->value + b->value, {a, b}, [a, b](Node& out) {
        if (a->requires_grad) { a->ensure_grad(); a->grad += out.grad; }
        if (b->requires_grad) { b->ensure_grad(); b->grad += out.grad; }
    });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
    require(a->rows() == b->rows() && a->cols() == b->cols(), "sub: shape mismatch");
    return make_op(a->value - b->value, {a, b}, [a, b](Node& out) {
        if (a->requires_grad) { a->ensure_grad(); a->grad += out.grad; }
        if (b->requires_grad) { b->ensure_grad(); b->grad -= out.grad; }
    });
}

inline NodePtr scale(const NodePtr& a, double c) {
    return make_op(a->value * c, {a}, [a, c](Node& out) {
        if (a->requires_grad) { a->ensure_grad(); a->grad += c * out.grad; }
    });
}

inline NodePtr cwise_mul(const NodePtr& a, const NodePtr& b) {
    require(a->rows() == b->rows() && a->cols() == b->cols(), "cwise_mul: shape mismatch");
    return make_op(a->value.cwiseProduct(b->value), {a, b}, [a, b](Node& out) {
        if (a->requires_grad) { a->ensure_grad(); a->grad += out.grad.cwiseProduct(b->value); }
        if (b->requires_grad) { b->ensure_grad(); b->grad += out.grad.cwiseProduct(a->value); }
    });
}

// batch rows + broadcast row vector (bias)
inline NodePtr add_rowvec(const NodePtr& a, const NodePtr& bias) {
    require(bias->rows() == 1 && bias->cols() == a->cols(), "add_rowvec: bias must be 1 x cols");
    Mat v = a->value;
    v.rowwise() += bias->value.row(0);
    return make_op(std::move(v), {a, bias}, [a, bias](Node& out) {
        if (a->requires_grad) { a->ensure_grad(); a->grad += out.grad; }
        if (bias->requires_grad) { bias->ensure_grad(); bias->grad.row(0) += out.grad.colwise().sum(); }
    });
}

// ---------------------------------------------------------------------------
// tensor products
// ---------------------------------------------------------------------------

// column vectors u (p x 1), v (q x 1) -> (p*q x 1) with entries u_i v_j
inline NodePtr kron_vec(const NodePtr& u, const NodePtr& v) {
    require(u->cols() == 1 && v->cols() == 1, "kron_vec: inputs must be column vectors");
    const long p = u->rows(), q = v->rows();
    Mat out(p * q, 1);
    for (long i = 0; i < p; ++i)
        out.block(i * q, 0, q, 1) = u->value(i, 0) * v->value;
    return make_op(std::move(out), {u, v}, [u, v, p, q](Node& o) {
        if (u->requires_grad) {
            u->ensure_grad();
            for (long i = 0; i < p; ++i)
                u->grad(i, 0) += o.grad.block(i * q, 0, q, 1).cwiseProduct(v->value).sum();
        }
        if (v->requires_grad) {
            v->ensure_grad();
            for (long i = 0; i < p; ++i)
                v->grad += u->value(i, 0) * o.grad.block(i * q, 0, q, 1);
        }
    });
}

// row-wise Kronecker of two batches: out[i,:] = a[i,:] (x) b[i,:]
inline NodePtr row_kron(const NodePtr& a, const NodePtr& b) {
    require(a->rows() == b->rows(), "row_kron: batch sizes differ");
    const long n = a->rows(), p = a->cols(), q = b->cols();
    Mat out(n, p * q);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < p; ++j)
            out.row(i).segment(j * q, q) = a->value(i, j) * b->value.row(i);
    return make_op(std::move(out), {a, b}, [a, b, n, p, q](Node& o) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (long i = 0; i < n; ++i)
                for (long j = 0; j < p; ++j)
                    a->grad(i, j) += o.grad.row(i).segment(j * q, q).dot(b->value.row(i));
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (long i = 0; i < n; ++i)
                for (long j = 0; j < p; ++j)
                    b->grad.row(i) += a->value(i, j) * o.grad.row(i).segment(j * q, q);
        }
    });
}

// ---------------------------------------------------------------------------
// SPD solve with implicit-function backward
// ---------------------------------------------------------------------------

// Finds the first non-positive pivot for the error message; only runs on the
// failure path.
inline int failing_pivot(const Mat& a) {
    const long n = a.rows();
    Mat l = Mat::Zero(n, n);
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (long k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0 || !std::isfinite(s)) return static_cast<int>(i);
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return -1;
}

// X with A X = B for symmetric positive definite A. Backward: solve with A^T
// on the output gradient, outer-product correction for A.
inline NodePtr solve_spd(const NodePtr& a, const NodePtr& b) {
    require(a->rows() == a->cols(), "solve_spd: A must be square");
    require(a->rows() == b->rows(), "solve_spd: A rows must match B rows");
    auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(Eigen::MatrixXd(a->value));
    if (llt->info() != Eigen::Success) {
        int piv = failing_pivot(a->value);
        throw NumericError("solve_spd: factorization failed at pivot " + std::to_string(piv));
    }
    Mat x = llt->solve(Eigen::MatrixXd(b->value));
    // one step of iterative refinement keeps the residual near machine level
    x += Mat(llt->solve(Eigen::MatrixXd(b->value - a->value * x)));
    check_finite(x, "solve_spd output");
    return make_op(std::move(x), {a, b}, [a, b, llt](Node& out) {
        Mat gb = llt->solve(Eigen::MatrixXd(out.grad)); // A symmetric: A^{-T} = A^{-1}
        if (b->requires_grad) { b->ensure_grad(); b->grad += gb; }
        if (a->requires_grad) { a->ensure_grad(); a->grad.noalias() -= gb * out.value.transpose(); }
    });
}

// ---------------------------------------------------------------------------
// elementwise nonlinearities
// ---------------------------------------------------------------------------

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double std_normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// exact erf-based GELU: x * Phi(x)
inline NodePtr gelu(const NodePtr& x) {
    Mat v = x->value.unaryExpr([](double t) { return t * std_normal_cdf(t); });
    return make_op(std::move(v), {x}, [x](Node& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad += out.grad.cwiseProduct(x->value.unaryExpr(
            [](double t) { return std_normal_cdf(t) + t * std_normal_pdf(t); }));
    });
}

inline NodePtr relu(const NodePtr& x) {
    Mat v = x->value.cwiseMax(0.0);
    return make_op(std::move(v), {x}, [x](Node& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad += out.grad.cwiseProduct(
            x->value.unaryExpr([](double t) { return t > 0.0 ? 1.0 : 0.0; }));
    });
}

inline NodePtr tanh_op(const NodePtr& x) {
    Mat v = x->value.array().tanh().matrix();
    return make_op(std::move(v), {x}, [x](Node& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad += out.grad.cwiseProduct(
            (1.0 - out.value.array().square()).matrix());
    });
}

// log cosh computed as |r| + log1p(exp(-2|r|)) - log 2 so large args don't overflow
inline double log_cosh(double r) {
    double a = std::abs(r);
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

inline NodePtr log_cosh_op(const NodePtr& x) {
    Mat v = x->value.unaryExpr([](double t) { return log_cosh(t); });
    return make_op(std::move(v), {x}, [x](Node& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad += out.grad.cwiseProduct(x->value.unaryExpr([](double t) { return std::tanh(t); }));
    });
}

// inverted dropout: mask/(1-rate) in train mode, identity in eval mode
inline NodePtr dropout(const NodePtr& x, double rate, Rng& rng, bool train) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
    if (!train || rate == 0.0) return x;
    Mat mask(x->rows(), x->cols());
    const double keep = 1.0 - rate;
    for (long i = 0; i < mask.rows(); ++i)
        for (long j = 0; j < mask.cols(); ++j)
            mask(i, j) = rng.uniform() <= rate ? 0.0 : 1.0 / keep;
    Mat v = x->value.cwiseProduct(mask);
    return make_op(std::move(v), {x}, [x, mask](Node& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad += out.grad.cwiseProduct(mask);
    });
}

enum class EwTag { Gelu, Relu, Tanh, LogCosh };

inline NodePtr elementwise(EwTag tag, const NodePtr& x) {
    switch (tag) {
        case EwTag::Gelu: return gelu(x);
        case EwTag::Relu: return relu(x);
        case EwTag::Tanh: return tanh_op(x);
        case EwTag::LogCosh: return log_cosh_op(x);
    }
    throw ConfigError("elementwise: unknown op tag");
}

// ---------------------------------------------------------------------------
// normalization layers
// ---------------------------------------------------------------------------

// Per-row standardization before the affine scale/shift. The epsilon is tiny
// so non-degenerate rows come out with variance 1 to machine precision;
// constant rows map to zero.
inline NodePtr layer_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta) {
    constexpr double eps = 1e-30;
    require(gamma->rows() == 1 && gamma->cols() == x->cols(), "layer_norm: gamma shape");
    require(beta->rows() == 1 && beta->cols() == x->cols(), "layer_norm: beta shape");
    const long n = x->rows(), d = x->cols();
    auto xhat = std::make_shared<Mat>(n, d);
    auto inv_sd = std::make_shared<Vec>(n);
    for (long i = 0; i < n; ++i) {
        double mu = x->value.row(i).mean();
        double var = (x->value.row(i).array() - mu).square().mean();
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_sd)(i) = is;
        xhat->row(i) = (x->value.row(i).array() - mu).matrix() * is;
    }
    Mat v = (xhat->array().rowwise() * gamma->value.row(0).array()).matrix();
    v.rowwise() += beta->value.row(0);
    return make_op(std::move(v), {x, gamma, beta}, [x, gamma, beta, xhat, inv_sd, d](Node& out) {
        if (gamma->requires_grad) {
            gamma->ensure_grad();
            gamma->grad.row(0) += out.grad.cwiseProduct(*xhat).colwise().sum();
        }
        if (beta->requires_grad) {
            beta->ensure_grad();
            beta->grad.row(0) += out.grad.colwise().sum();
        }
        if (x->requires_grad) {
            x->ensure_grad();
            for (long i = 0; i < x->rows(); ++i) {
                Eigen::RowVectorXd dxh =
                    out.grad.row(i).cwiseProduct(gamma->value.row(0));
                double m1 = dxh.mean();
                double m2 = dxh.cwiseProduct(xhat->row(i)).mean();
                x->grad.row(i) +=
                    (*inv_sd)(i) * (dxh.array() - m1 - xhat->row(i).array() * m2).matrix();
            }
            (void)d;
        }
    });
}

struct BatchNormState {
    Vec running_mean;
    Vec running_var;
    bool initialized = false;
};

// Train mode normalizes with batch statistics and updates the running pair;
// eval mode uses the stored statistics. Batch of one in train mode is
// rejected: the batch variance is degenerate.
inline NodePtr batch_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                          BatchNormState& state, bool train, double momentum = 0.1) {
    constexpr double eps = 1e-8;
    const long n = x->rows(), d = x->cols();
    require(gamma->rows() == 1 && gamma->cols() == d, "batch_norm: gamma shape");
    require(beta->rows() == 1 && beta->cols() == d, "batch_norm: beta shape");
    if (!state.initialized) {
        state.running_mean = Vec::Zero(d);
        state.running_var = Vec::Ones(d);
        state.initialized = true;
    }
    if (train) {
        if (n < 2) throw ConfigError("batch_norm: degenerate batch of size " + std::to_string(n));
        Eigen::RowVectorXd mu = x->value.colwise().mean();
        Eigen::RowVectorXd var =
            (x->value.rowwise() - mu).array().square().colwise().mean();
        state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mu.transpose();
        double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
        state.running_var =
            (1.0 - momentum) * state.running_var + momentum * unbias * var.transpose();

        auto inv_sd = std::make_shared<Eigen::RowVectorXd>(
            (var.array() + eps).rsqrt().matrix());
        auto xhat = std::make_shared<Mat>(
            ((x->value.rowwise() - mu).array().rowwise() * inv_sd->array()).matrix());
        Mat v = (xhat->array().rowwise() * gamma->value.row(0).array()).matrix();
        v.rowwise() += beta->value.row(0);
        return make_op(std::move(v), {x, gamma, beta},
                       [x, gamma, beta, xhat, inv_sd, n](Node& out) {
            if (gamma->requires_grad) {
                gamma->ensure_grad();
                gamma->grad.row(0) += out.grad.cwiseProduct(*xhat).colwise().sum();
            }
            if (beta->requires_grad) {
                beta->ensure_grad();
                beta->grad.row(0) += out.grad.colwise().sum();
            }
            if (x->requires_grad) {
                x->ensure_grad();
                Eigen::RowVectorXd sum_d = out.grad.colwise().sum();
                Eigen::RowVectorXd sum_dx = out.grad.cwiseProduct(*xhat).colwise().sum();
                const double inv_n = 1.0 / static_cast<double>(n);
                for (long i = 0; i < x->rows(); ++i) {
                    x->grad.row(i) +=
                        (gamma->value.row(0).array() * inv_sd->array() *
                         (out.grad.row(i).array() - inv_n * sum_d.array() -
                          xhat->row(i).array() * inv_n * sum_dx.array()))
                            .matrix();
                }
            }
        });
    }
    // eval path: running statistics are constants
    Eigen::RowVectorXd inv_sd = (state.running_var.transpose().array() + eps).rsqrt().matrix();
    Eigen::RowVectorXd mu = state.running_mean.transpose();
    Mat xhat = ((x->value.rowwise() - mu).array().rowwise() * inv_sd.array()).matrix();
    Mat v = (xhat.array().rowwise() * gamma->value.row(0).array()).matrix();
    v.rowwise() += beta->value.row(0);
    auto xhat_p = std::make_shared<Mat>(std::move(xhat));
    auto inv_sd_p = std::make_shared<Eigen::RowVectorXd>(std::move(inv_sd));
    return make_op(std::move(v), {x, gamma, beta}, [x, gamma, beta, xhat_p, inv_sd_p](Node& out) {
        if (gamma->requires_grad) {
            gamma->ensure_grad();
            gamma->grad.row(0) += out.grad.cwiseProduct(*xhat_p).colwise().sum();
        }
        if (beta->requires_grad) {
            beta->ensure_grad();
            beta->grad.row(0) += out.grad.colwise().sum();
        }
        if (x->requires_grad) {
            x->ensure_grad();
            x->grad += (out.grad.array().rowwise() *
                        (gamma->value.row(0).array() * inv_sd_p->array()))
                           .matrix();
        }
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline NodePtr sum_all(const NodePtr& x) {
    Mat v(1, 1);
    v(0, 0) = x->value.sum();
    return make_op(std::move(v), {x}, [x](Node& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad.array() += out.grad(0, 0);
    });
}

inline NodePtr mean_all(const NodePtr& x) {
    const double inv = 1.0 / static_cast<double>(x->rows() * x->cols());
    Mat v(1, 1);
    v(0, 0) = x->value.sum() * inv;
    return make_op(std::move(v), {x}, [x, inv](Node& out) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad.array() += out.grad(0, 0) * inv;
    });
}

} // namespace pclnet::ad
