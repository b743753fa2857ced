#include "testutil.hpp"

#include "pclnet/graph.hpp"

using namespace pclnet;
using namespace pclnet::ad;
using testutil::random_mat;
using testutil::random_spd;

TEST_CASE("matmul values", "[graph]") {
    Mat i2 = Mat::Identity(2, 2);
    Mat m = (Mat(2, 2) << 1, 2, 3, 4).finished();
    auto out = matmul(constant(i2), constant(m));
    REQUIRE(out->value.isApprox(m));

    Mat a = (Mat(1, 2) << 1, 2).finished();
    Mat b = (Mat(2, 1) << 3, 4).finished();
    auto p = matmul(constant(a), constant(b));
    REQUIRE(p->value(0, 0) == Approx(11.0));

    REQUIRE_THROWS_AS(matmul(constant(Mat::Zero(2, 3)), constant(Mat::Zero(2, 3))), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences", "[graph]") {
    Rng rng(7);
    auto a = param(random_mat(3, 3, rng), "a");
    auto b = param(random_mat(3, 3, rng), "b");
    auto run = [&] { return sum_all(matmul(a, b)); };
    auto root = run();
    backward(root);
    auto value = [&] { return run()->value(0, 0); };
    REQUIRE(testutil::fd_max_rel_err(value, a, a->grad) < 1e-6);
    REQUIRE(testutil::fd_max_rel_err(value, b, b->grad) < 1e-6);
}

TEST_CASE("kron_vec values and gradient", "[graph]") {
    auto u = constant((Mat(2, 1) << 1, 2).finished());
    auto v = constant((Mat(2, 1) << 3, 4).finished());
    auto k = kron_vec(u, v);
    Mat expect = (Mat(4, 1) << 3, 4, 6, 8).finished();
    REQUIRE(k->value.isApprox(expect));

    // e1 (x) e1 -> e1 of the product space
    Mat e1 = Mat::Zero(3, 1);
    e1(0, 0) = 1;
    auto ke = kron_vec(constant(e1), constant(e1));
    REQUIRE(ke->value(0, 0) == Approx(1.0));
    REQUIRE(ke->value.sum() == Approx(1.0));

    REQUIRE_THROWS_AS(kron_vec(constant(Mat::Zero(2, 2)), constant(e1)), ShapeError);

    Rng rng(11);
    auto a = param(random_mat(4, 1, rng), "a");
    auto b = param(random_mat(3, 1, rng), "b");
    Mat weights = random_mat(12, 1, rng);
    auto run = [&] { return sum_all(cwise_mul(kron_vec(a, b), constant(weights))); };
    backward(run());
    auto value = [&] { return run()->value(0, 0); };
    REQUIRE(testutil::fd_max_rel_err(value, a, a->grad) < 1e-6);
    REQUIRE(testutil::fd_max_rel_err(value, b, b->grad) < 1e-6);
}

TEST_CASE("row_kron matches per-row kron_vec", "[graph]") {
    Rng rng(3);
    auto a = param(random_mat(5, 3, rng), "a");
    auto b = param(random_mat(5, 4, rng), "b");
    auto rk = row_kron(a, b);
    for (long i = 0; i < 5; ++i) {
        auto ki = kron_vec(constant(Mat(a->value.row(i).transpose())),
                           constant(Mat(b->value.row(i).transpose())));
        REQUIRE((rk->value.row(i).transpose() - ki->value).cwiseAbs().maxCoeff() < 1e-14);
    }
    Mat w = random_mat(5, 12, rng);
    auto run = [&] { return sum_all(cwise_mul(row_kron(a, b), constant(w))); };
    backward(run());
    auto value = [&] { return run()->value(0, 0); };
    REQUIRE(testutil::fd_max_rel_err(value, a, a->grad) < 1e-6);
    REQUIRE(testutil::fd_max_rel_err(value, b, b->grad) < 1e-6);
}

TEST_CASE("solve_spd identity and scaling cases", "[graph]") {
    Rng rng(5);
    Mat b = random_mat(4, 2, rng);
    auto x = solve_spd(constant(Mat(Mat::Identity(4, 4))), constant(b));
    REQUIRE((x->value - b).norm() < 1e-12);

    Mat a2 = 2.0 * Mat::Identity(2, 2);
    Mat b2 = (Mat(2, 1) << 4, 6).finished();
    auto x2 = solve_spd(constant(a2), constant(b2));
    REQUIRE(x2->value(0, 0) == Approx(2.0));
    REQUIRE(x2->value(1, 0) == Approx(3.0));
}

TEST_CASE("solve_spd residual and reconstruction", "[graph]") {
    Rng rng(17);
    Mat a = random_spd(6, rng);
    Mat b = random_mat(6, 3, rng);
    auto x = solve_spd(constant(a), constant(b));
    REQUIRE((a * x->value - b).norm() <= 1e-10 * b.norm());
}

TEST_CASE("solve_spd rejects indefinite systems with pivot info", "[graph]") {
    Mat a = (Mat(2, 2) << 1, 0, 0, -1).finished();
    Mat b = Mat::Ones(2, 1);
    try {
        solve_spd(constant(a), constant(b));
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        REQUIRE(std::string(e.what()).find("pivot 1") != std::string::npos);
    }
}

TEST_CASE("solve_spd gradient matches finite differences", "[graph]") {
    Rng rng(23);
    Mat a0 = random_spd(4, rng);
    auto a = param(a0, "a");
    auto b = param(random_mat(4, 2, rng), "b");
    auto run = [&] { return sum_all(solve_spd(a, b)); };
    backward(run());
    auto value = [&] { return run()->value(0, 0); };
    REQUIRE(testutil::fd_max_rel_err(value, a, a->grad, 1e-5) < 1e-4);
    REQUIRE(testutil::fd_max_rel_err(value, b, b->grad, 1e-5) < 1e-6);
}

TEST_CASE("gelu values", "[graph]") {
    auto z = gelu(constant(Mat::Zero(1, 1)));
    REQUIRE(z->value(0, 0) == Approx(0.0).margin(1e-15));
    Mat one = Mat::Ones(1, 1);
    auto g = gelu(constant(one));
    REQUIRE(g->value(0, 0) == Approx(0.841345).margin(1e-6));
}

TEST_CASE("relu values", "[graph]") {
    Mat x = (Mat(1, 2) << -2, 3).finished();
    auto r = relu(constant(x));
    REQUIRE(r->value(0, 0) == 0.0);
    REQUIRE(r->value(0, 1) == 3.0);
}

TEST_CASE("elementwise dispatch and gradients vs finite differences", "[graph]") {
    Rng rng(31);
    for (auto tag : {EwTag::Gelu, EwTag::Relu, EwTag::Tanh, EwTag::LogCosh}) {
        auto x = param(random_mat(3, 3, rng), "x");
        // keep relu away from the kink
        if (tag == EwTag::Relu)
            x->value = x->value.unaryExpr([](double t) { return std::abs(t) < 0.05 ? t + 0.1 : t; });
        Mat w = random_mat(3, 3, rng);
        auto run = [&] { return sum_all(cwise_mul(elementwise(tag, x), constant(w))); };
        backward(run());
        auto value = [&] { return run()->value(0, 0); };
        REQUIRE(testutil::fd_max_rel_err(value, x, x->grad) < 1e-4);
    }
}

TEST_CASE("layernorm normalizes rows", "[graph]") {
    auto g = constant(Mat::Ones(1, 3));
    auto b = constant(Mat::Zero(1, 3));

    auto c = layer_norm(constant(Mat(Mat::Constant(2, 3, 4.2))), g, b);
    REQUIRE(c->value.cwiseAbs().maxCoeff() < 1e-12);

    Mat x = (Mat(1, 3) << 1, 2, 3).finished();
    auto ln = layer_norm(constant(x), g, b);
    double mean = ln->value.row(0).mean();
    double var = (ln->value.row(0).array() - mean).square().mean();
    REQUIRE(std::abs(mean) < 1e-12);
    REQUIRE(std::abs(var - 1.0) < 1e-12);
}

TEST_CASE("layernorm gradient matches finite differences", "[graph]") {
    Rng rng(41);
    auto x = param(random_mat(4, 5, rng), "x");
    auto g = param(random_mat(1, 5, rng, 0.5, 1.5), "g");
    auto b = param(random_mat(1, 5, rng), "b");
    Mat w = random_mat(4, 5, rng);
    auto run = [&] { return sum_all(cwise_mul(layer_norm(x, g, b), constant(w))); };
    backward(run());
    auto value = [&] { return run()->value(0, 0); };
    REQUIRE(testutil::fd_max_rel_err(value, x, x->grad) < 1e-4);
    REQUIRE(testutil::fd_max_rel_err(value, g, g->grad) < 1e-4);
    REQUIRE(testutil::fd_max_rel_err(value, b, b->grad) < 1e-4);
}

TEST_CASE("batchnorm eval on unit stats is the identity up to affine", "[graph]") {
    BatchNormState st;
    st.running_mean = Vec::Zero(3);
    st.running_var = Vec::Ones(3);
    st.initialized = true;
    Rng rng(43);
    Mat x = random_mat(4, 3, rng);
    auto out = batch_norm(constant(x), constant(Mat::Ones(1, 3)), constant(Mat::Zero(1, 3)), st,
                          /*train=*/false);
    REQUIRE((out->value - x).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("batchnorm rejects batch of one in train mode", "[graph]") {
    BatchNormState st;
    REQUIRE_THROWS_AS(batch_norm(constant(Mat::Ones(1, 3)), constant(Mat::Ones(1, 3)),
                                 constant(Mat::Zero(1, 3)), st, /*train=*/true),
                      ConfigError);
}

TEST_CASE("batchnorm train gradient matches finite differences", "[graph]") {
    Rng rng(47);
    auto x = param(random_mat(6, 3, rng), "x");
    auto g = param(random_mat(1, 3, rng, 0.5, 1.5), "g");
    auto b = param(random_mat(1, 3, rng), "b");
    Mat w = random_mat(6, 3, rng);
    auto run = [&] {
        BatchNormState st; // fresh stats each rebuild so the value is stable
        return sum_all(cwise_mul(batch_norm(x, g, b, st, true), constant(w)));
    };
    backward(run());
    auto value = [&] { return run()->value(0, 0); };
    REQUIRE(testutil::fd_max_rel_err(value, x, x->grad) < 1e-4);
    REQUIRE(testutil::fd_max_rel_err(value, g, g->grad) < 1e-4);
}

TEST_CASE("dropout reproducible under a fixed seed", "[graph]") {
    Mat x = Mat::Ones(8, 8);
    Rng r1(99), r2(99);
    auto d1 = dropout(constant(x), 0.4, r1, true);
    auto d2 = dropout(constant(x), 0.4, r2, true);
    REQUIRE(d1->value == d2->value);

    Rng r3(100);
    auto d_eval = dropout(constant(x), 0.4, r3, false);
    REQUIRE(d_eval->value == x);
}

TEST_CASE("backward is additive over disjoint parameter sets", "[graph]") {
    Rng rng(53);
    auto a = param(random_mat(3, 3, rng), "a");
    auto b = param(random_mat(3, 3, rng), "b");

    auto fa = sum_all(matmul(a, a));
    auto fb = sum_all(gelu(b));
    auto both = add(fa, fb);
    backward(both);
    Mat ga = a->grad, gb = b->grad;

    a->zero_grad();
    b->zero_grad();
    backward(sum_all(matmul(a, a)));
    backward(sum_all(gelu(b)));
    REQUIRE((a->grad - ga).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE((b->grad - gb).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("solve_spd then matmul reconstructs the rhs", "[graph]") {
    Rng rng(61);
    Mat a = random_spd(8, rng);
    Mat b = random_mat(8, 4, rng);
    auto x = solve_spd(constant(a), constant(b));
    auto recon = matmul(constant(a), x);
    REQUIRE((recon->value - b).norm() <= 1e-10 * b.norm());
}
