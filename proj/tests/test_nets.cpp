#include "testutil.hpp"

#include "pclnet/losses.hpp"
#include "pclnet/mlp.hpp"
#include "pclnet/optim.hpp"

using namespace pclnet;
using namespace pclnet::ad;
using testutil::random_mat;
using testutil::random_spd;

TEST_CASE("loss values at zero residual", "[nets]") {
    Vec y = Vec::Ones(3), pred = Vec::Ones(3);
    for (auto kind : {LossKind::MSE, LossKind::LogCosh, LossKind::Huber}) {
        LossSpec spec{kind, 1.0};
        REQUIRE(loss_value(spec, y, pred) == Approx(0.0).margin(1e-15));
    }
}

TEST_CASE("logcosh and huber spot values", "[nets]") {
    LossSpec lc{LossKind::LogCosh, 1.0};
    Vec y = Vec::Zero(1), pred = Vec::Ones(1);
    REQUIRE(loss_value(lc, y, pred) == Approx(0.433781).margin(1e-6));

    LossSpec hu{LossKind::Huber, 1.0};
    Vec pred2 = 2.0 * Vec::Ones(1);
    REQUIRE(loss_value(hu, y, pred2) == Approx(1.5)); // delta (|r| - delta/2)
}

TEST_CASE("loss gradients match finite differences", "[nets]") {
    Rng rng(5);
    for (auto kind : {LossKind::MSE, LossKind::LogCosh, LossKind::Huber}) {
        LossSpec spec{kind, 1.0};
        auto yhat = param(random_mat(6, 1, rng), "yhat");
        auto y = constant(random_mat(6, 1, rng));
        auto run = [&] { return loss_node(spec, y, yhat); };
        backward(run());
        auto value = [&] { return run()->value(0, 0); };
        REQUIRE(testutil::fd_max_rel_err(value, yhat, yhat->grad) < 1e-4);

        // graph loss equals the plain evaluator
        Vec dpred;
        double plain = loss_value(spec, Vec(y->value.col(0)), Vec(yhat->value.col(0)), &dpred);
        REQUIRE(run()->value(0, 0) == Approx(plain).margin(1e-14));
        REQUIRE((yhat->grad.col(0) - dpred).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("logcosh bounds and asymptote", "[nets]") {
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        double r = rng.uniform(-30.0, 30.0);
        double v = log_cosh(r);
        REQUIRE(v >= 0.0);
        REQUIRE(v <= std::abs(r));
        if (std::abs(r) >= 20.0)
            REQUIRE(std::abs(v - (std::abs(r) - std::numbers::ln2)) < 1e-6);
    }
}

TEST_CASE("adamw single-step hand values", "[nets]") {
    auto theta = param(Mat::Zero(1, 1), "theta");
    theta->grad(0, 0) = 1.0;
    AdamW opt({.lr = 0.1, .weight_decay = 0.0});
    opt.step({theta});
    REQUIRE(theta->value(0, 0) == Approx(-0.1).margin(1e-8));
}

TEST_CASE("adamw decoupled decay shrinks parameters with zero grad", "[nets]") {
    auto theta = param(Mat::Constant(1, 1, 2.0), "theta");
    theta->zero_grad();
    AdamW opt({.lr = 0.1, .weight_decay = 0.5});
    opt.step({theta});
    REQUIRE(theta->value(0, 0) == Approx(2.0 * (1.0 - 0.1 * 0.5)));
}

TEST_CASE("adamw identical params with identical grads stay identical", "[nets]") {
    Rng rng(3);
    Mat init = random_mat(2, 2, rng);
    auto p1 = param(init, "p1");
    auto p2 = param(init, "p2");
    AdamW opt({.lr = 0.05, .weight_decay = 0.01});
    for (int i = 0; i < 5; ++i) {
        Mat g = random_mat(2, 2, rng);
        p1->grad = g;
        p2->grad = g;
        opt.step({p1, p2});
        REQUIRE(p1->value == p2->value);
    }
}

TEST_CASE("adamw rejects NaN gradients naming the parameter", "[nets]") {
    auto theta = param(Mat::Zero(1, 1), "w13");
    theta->grad(0, 0) = std::nan("");
    AdamW opt;
    try {
        opt.step({theta});
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        REQUIRE(std::string(e.what()).find("w13") != std::string::npos);
    }
}

TEST_CASE("adamw reproduces iterates bitwise across runs", "[nets]") {
    auto run_once = [] {
        Rng rng(77);
        auto p = param(testutil::random_mat(3, 3, rng), "p");
        AdamW opt({.lr = 1e-2});
        for (int i = 0; i < 10; ++i) {
            p->grad = testutil::random_mat(3, 3, rng);
            opt.step({p});
        }
        return p->value;
    };
    Mat a = run_once(), b = run_once();
    REQUIRE(a == b);
}

TEST_CASE("lbfgs solves quadratics exactly", "[nets]") {
    // 1/2 ||theta - c||^2 from zero
    Vec c = (Vec(3) << 1.0, -2.0, 0.5).finished();
    auto obj = [&](const Vec& x, Vec& g) {
        g = x - c;
        return 0.5 * (x - c).squaredNorm();
    };
    auto res = lbfgs_minimize(obj, Vec::Zero(3), 10);
    REQUIRE((res.x - c).norm() < 1e-8);

    // already optimal: unchanged
    auto res2 = lbfgs_minimize(obj, c, 5);
    REQUIRE((res2.x - c).norm() < 1e-12);
}

TEST_CASE("lbfgs reaches the closed-form minimizer of a random SPD quadratic", "[nets]") {
    Rng rng(13);
    Mat q = random_spd(5, rng);
    Vec b = random_mat(5, 1, rng).col(0);
    Vec star = Eigen::LLT<Eigen::MatrixXd>(Eigen::MatrixXd(q)).solve(b);
    auto obj = [&](const Vec& x, Vec& g) {
        g = q * x - b;
        return 0.5 * x.dot(q * x) - b.dot(x);
    };
    auto res = lbfgs_minimize(obj, Vec::Zero(5), 10);
    REQUIRE((res.x - star).norm() < 1e-6);
}

TEST_CASE("lbfgs exact on quadratics when dimension fits the memory", "[nets]") {
    Rng rng(29);
    for (int d : {2, 4, 8, 10}) {
        Mat q = random_spd(d, rng);
        Vec b = random_mat(d, 1, rng).col(0);
        Vec star = Eigen::LLT<Eigen::MatrixXd>(Eigen::MatrixXd(q)).solve(b);
        auto obj = [&](const Vec& x, Vec& g) {
            g = q * x - b;
            return 0.5 * x.dot(q * x) - b.dot(x);
        };
        auto res = lbfgs_minimize(obj, Vec::Zero(d), 60, 1.0, 10);
        REQUIRE((res.x - star).norm() < 1e-7 * (1.0 + star.norm()));
    }
}

TEST_CASE("lbfgs objective non-increasing across accepted steps", "[nets]") {
    Rng rng(19);
    Mat q = random_spd(8, rng);
    Vec b = random_mat(8, 1, rng).col(0);
    double prev = std::numeric_limits<double>::infinity();
    Vec x = Vec::Zero(8);
    auto obj = [&](const Vec& v, Vec& g) {
        g = q * v - b;
        return 0.5 * v.dot(q * v) - b.dot(v);
    };
    for (int k = 1; k <= 6; ++k) {
        auto res = lbfgs_minimize(obj, x, 1);
        REQUIRE(res.f <= prev + 1e-12);
        prev = res.f;
        x = res.x;
    }
}

TEST_CASE("anneal schedule endpoints and interpolation", "[nets]") {
    Anneal expo{1e-4, 1e-2, AnnealKind::Exponential};
    REQUIRE(expo.at(0, 100) == Approx(1e-4));
    REQUIRE(expo.at(99, 100) == Approx(1e-2));
    // geometric midpoint of the schedule
    REQUIRE(expo.at(50, 101) == Approx(1e-3).margin(1e-12));

    Anneal same{0.5, 0.5, AnnealKind::Exponential};
    REQUIRE(same.at(33, 100) == Approx(0.5));
    Anneal same_lin{0.5, 0.5, AnnealKind::Linear};
    REQUIRE(same_lin.at(80, 100) == Approx(0.5));

    Anneal lin{10, 250, AnnealKind::Linear};
    REQUIRE(lin.at(50, 100) == Approx(10.0 + 240.0 * 50.0 / 99.0).margin(1e-10));
    REQUIRE(lin.at(50, 100) == Approx(131.21).margin(0.01));

    Anneal bad{0.0, 1.0, AnnealKind::Exponential};
    REQUIRE_THROWS_AS(bad.at(1, 10), ConfigError);
}

TEST_CASE("featurizer zero-depth config is the identity", "[nets]") {
    Featurizer f(MLPConfig{}, 4, "id");
    Rng rng(1);
    Mat x = random_mat(3, 4, rng);
    REQUIRE(f.eval(x) == x);
    REQUIRE(f.out_dim() == 4);
}

TEST_CASE("featurizer maps shapes and is deterministic in eval mode", "[nets]") {
    auto cfg = mlp_chain(2, {4, 3}, Act::Gelu, true, false, 0.3, true, 42);
    Featurizer f(cfg, 2, "net");
    Rng rng(2);
    Mat x = random_mat(5, 2, rng);
    Mat a = f.eval(x);
    Mat b = f.eval(x);
    REQUIRE(a.rows() == 5);
    REQUIRE(a.cols() == 3);
    REQUIRE(a == b);

    REQUIRE_THROWS_AS(f.eval(random_mat(5, 3, rng)), ShapeError);
}

TEST_CASE("featurizer gradients reach every parameter", "[nets]") {
    auto cfg = mlp_chain(3, {5, 4}, Act::Gelu, true, true, 0.0, true, 7);
    Featurizer f(cfg, 3, "g");
    Rng rng(8);
    Mat x = random_mat(6, 3, rng);
    auto out = f.forward(x, Mode::Train);
    backward(sum_all(out));
    for (const auto& p : f.params()) {
        REQUIRE(p->grad.rows() == p->value.rows());
    }
    // weight gradient against finite differences through the full stack (eval
    // mode so batch-norm stats do not shift between probes)
    auto w0 = f.params()[0];
    auto run = [&] { return sum_all(f.forward(x, Mode::Eval)); };
    for (const auto& p : f.params()) p->zero_grad();
    backward(run());
    auto value = [&] { return run()->value(0, 0); };
    REQUIRE(testutil::fd_max_rel_err(value, w0, w0->grad, 1e-6) < 1e-4);
}
