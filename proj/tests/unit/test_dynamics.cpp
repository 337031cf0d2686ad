#include <doctest.h>

#include <cmath>
#include <random>

#include "deepntk/dynamics.hpp"
#include "deepntk/errors.hpp"
#include "deepntk/kernels.hpp"

using namespace deepntk;

namespace {

Dataset toy(int n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.1, 0.7);
    Dataset data;
    data.inputs.resize(2, n);
    data.targets.resize(1, n);
    for (int i = 0; i < n; ++i) {
        data.inputs.col(i) << u(gen), u(gen);
        data.targets(0, i) = data.inputs(0, i) * data.inputs(1, i);
    }
    return data;
}

Eigen::MatrixXd limit_gram(const Dataset& data, const KernelSpec& spec) {
    const Eigen::Index n = data.size();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            K(i, j) = mlp_limit_kernel(data.inputs.col(i), data.inputs.col(j), spec);
    return K;
}

MlpConfig mlp_config(int depth, double c_l) {
    MlpConfig cfg;
    cfg.d_in = 2;
    cfg.depth = depth;
    cfg.c_l = c_l;
    return cfg;
}

}  // namespace

TEST_CASE("quadratic loss averages over samples") {
    Eigen::MatrixXd p(2, 2), y(2, 2);
    p << 1, 2, 3, 4;
    y << 0, 2, 3, 2;
    CHECK(quadratic_loss(p, y) == doctest::Approx(0.5 * (1 + 4) / 2));
    CHECK_THROWS_AS(quadratic_loss(p, Eigen::MatrixXd::Zero(1, 2)), ShapeError);
}

TEST_CASE("dataset helpers") {
    Dataset d = toy(5, 1);
    d.validate();
    CHECK(d.count_norm_above_one() == 0);
    d.inputs(0, 2) = 3.0;
    CHECK(d.count_norm_above_one() == 1);
    Dataset bad = d;
    bad.targets.resize(1, 4);
    CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("kernel flow starts at zero and converges to the targets") {
    const Dataset data = toy(6, 2);
    const FlowState flow(limit_gram(data, KernelSpec{1.0, 1.0, MlpGeometry{2, 1}}), data.targets);
    CHECK(flow.training_predictions(0.0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(flow_loss(flow, 0.0) == doctest::Approx(quadratic_loss(Eigen::MatrixXd::Zero(1, 6), data.targets)));
    const Eigen::MatrixXd late = flow.training_predictions(1e9);
    CHECK((late - data.targets).cwiseAbs().maxCoeff() < 1e-8);
    double prev = flow_loss(flow, 0.0);
    for (double t : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
        const double l = flow_loss(flow, t);
        CHECK(l <= prev);
        CHECK(l == doctest::Approx(quadratic_loss(flow.training_predictions(t), data.targets)).epsilon(1e-9));
        prev = l;
    }
}

TEST_CASE("flow prediction at a training point reproduces the training trajectory") {
    const Dataset data = toy(7, 3);
    const Eigen::MatrixXd K = limit_gram(data, KernelSpec{1.0, 1.0, MlpGeometry{2, 1}});
    const FlowState flow(K, data.targets);
    for (double t : {0.5, 20.0}) {
        const Eigen::MatrixXd train = flow.training_predictions(t);
        for (Eigen::Index i = 0; i < 7; ++i) {
            CHECK(kernel_flow_predict(flow, K.col(i), t)(0) == doctest::Approx(train(0, i)).epsilon(1e-7));
        }
    }
    for (Eigen::Index i = 0; i < 7; ++i)
        CHECK(kernel_regression_predict(flow, K.col(i))(0) == doctest::Approx(data.targets(0, i)).epsilon(1e-7));
}

TEST_CASE("singular Gram matrices need a ridge") {
    Eigen::MatrixXd K = Eigen::MatrixXd::Ones(3, 3);
    const Eigen::MatrixXd y = Eigen::MatrixXd::Ones(1, 3);
    const FlowState plain(K, y);
    CHECK_THROWS_AS(kernel_regression_predict(plain, K.col(0)), std::domain_error);
    const FlowState ridged(K, y, 1e-3);
    CHECK(std::isfinite(kernel_regression_predict(ridged, K.col(0))(0)));
    Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(3, 3);
    asym(0, 1) = 0.5;
    CHECK_THROWS_AS(FlowState(asym, y), std::invalid_argument);
    CHECK_THROWS(FlowState(-Eigen::MatrixXd::Identity(3, 3), y));
    CHECK_THROWS_AS(FlowState(K, y, -1.0), ConfigError);
}

TEST_CASE("gradient descent reduces the loss and records snapshots") {
    const Dataset data = toy(8, 4);
    const auto p = init_deep_narrow_mlp(mlp_config(16, 4.0), 5);
    TrainConfig tc;
    tc.base_lr = 0.5;
    tc.steps = 40;
    tc.snapshot_every = 10;
    tc.record_zero_crossings = true;
    tc.kernel_probe_pairs = {{data.inputs.col(0), data.inputs.col(1)}};
    const auto run = train_gradient_descent(p, data, tc);
    CHECK(run.status == TrainStatus::Ok);
    CHECK(run.loss_per_step.size() == 41);
    CHECK(run.loss_per_step.back() < run.loss_per_step.front());
    CHECK(run.snapshot_steps == std::vector<int>{0, 10, 20, 30, 40});
    CHECK(run.kernel_snapshots.size() == 5);
    CHECK(run.zero_crossings.front() == 0);
    CHECK(run.kernel_snapshots[0][0] ==
          doctest::Approx(mlp_empirical_scaled_ntk(p, data.inputs.col(0), data.inputs.col(1))(0, 0)));
}

TEST_CASE("small steps follow the kernel flow of the initial NTK") {
    const Dataset data = toy(6, 9);
    const auto p = init_deep_narrow_mlp(mlp_config(64, std::pow(64.0, 1.5)), 6);
    Eigen::MatrixXd K(6, 6);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            K(i, j) = mlp_empirical_scaled_ntk(p, data.inputs.col(i), data.inputs.col(j))(0, 0);
    const FlowState flow(K, data.targets);
    TrainConfig tc;
    tc.base_lr = 0.01;
    tc.steps = 500;
    const auto run = train_gradient_descent(p, data, tc);
    const double t = tc.base_lr * tc.steps;
    CHECK(run.loss_per_step.back() == doctest::Approx(flow_loss(flow, t)).epsilon(0.02));
}

TEST_CASE("a huge step diverges and is reported") {
    const Dataset data = toy(4, 1);
    const auto p = init_kaiming_mlp(mlp_config(6, 1.0), 2);
    TrainConfig tc;
    tc.base_lr = 1e6;
    tc.steps = 200;
    tc.depth_scaled_step = false;
    const auto run = train_gradient_descent(p, data, tc);
    CHECK(run.status == TrainStatus::Diverged);
    CHECK(!std::isfinite(run.loss_per_step.back()));
}

TEST_CASE("CNN training runs on image data") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset data;
    data.image_side = 3;
    data.inputs = Eigen::MatrixXd::NullaryExpr(9, 5, [&]() { return u(gen); });
    data.targets = Eigen::MatrixXd::NullaryExpr(1, 5, [&]() { return u(gen); });
    CnnConfig cfg;
    cfg.d = 3;
    cfg.depth = 8;
    cfg.c_l = 4.0;
    const auto p = init_deep_narrow_cnn(cfg, 1);
    TrainConfig tc;
    tc.base_lr = 0.5;
    tc.steps = 30;
    tc.snapshot_every = 15;
    tc.kernel_probe_pairs = {{data.inputs.col(0), data.inputs.col(1)}};
    const auto run = train_gradient_descent(p, data, tc);
    CHECK(run.loss_per_step.back() < run.loss_per_step.front());
    CHECK(run.kernel_snapshots.size() == 3);
}

TEST_CASE("invalid training settings are rejected") {
    const Dataset data = toy(4, 1);
    const auto p = init_deep_narrow_mlp(mlp_config(4, 1.0), 1);
    TrainConfig tc;
    tc.base_lr = -1.0;
    CHECK_THROWS_AS(train_gradient_descent(p, data, tc), ConfigError);
    tc.base_lr = 0.1;
    tc.steps = -1;
    CHECK_THROWS_AS(train_gradient_descent(p, data, tc), ConfigError);
}

TEST_CASE("a single training point relaxes exponentially") {
    Eigen::MatrixXd K(1, 1);
    K << 2.5;
    Eigen::MatrixXd y(1, 1);
    y << 0.8;
    const FlowState flow(K, y);
    for (double t : {0.0, 0.1, 1.0, 3.0}) {
        CHECK(flow.training_predictions(t)(0, 0) == doctest::Approx((1.0 - std::exp(-2.5 * t)) * 0.8));
        CHECK(flow_loss(flow, t) == doctest::Approx(0.5 * std::exp(-5.0 * t) * 0.64));
    }
    CHECK_THROWS_AS(flow.training_predictions(-1.0), std::invalid_argument);
}

TEST_CASE("flow at very large time equals kernel regression") {
    const Dataset data = toy(9, 12);
    const KernelSpec spec{1.0, 1.0, MlpGeometry{2, 1}};
    const Eigen::MatrixXd K = limit_gram(data, spec);
    const FlowState flow(K, data.targets);
    const double t = 1e6 / flow.min_eigenvalue();
    for (double a : {0.1, 0.4, 0.9, 1.3}) {
        const Eigen::Vector2d q(std::cos(a), std::sin(a));
        Eigen::VectorXd row(9);
        for (int i = 0; i < 9; ++i) row(i) = mlp_limit_kernel(q, data.inputs.col(i), spec);
        CHECK(std::abs(kernel_flow_predict(flow, row, t)(0) - kernel_regression_predict(flow, row)(0)) < 1e-8);
    }
}

TEST_CASE("zero steps record only the initial loss") {
    const Dataset data = toy(5, 2);
    const auto p = init_deep_narrow_mlp(mlp_config(8, 4.0), 3);
    TrainConfig tc;
    tc.steps = 0;
    tc.snapshot_every = 5;
    tc.record_zero_crossings = true;
    const auto run = train_gradient_descent(p, data, tc);
    CHECK(run.loss_per_step.size() == 1);
    CHECK(run.snapshot_steps == std::vector<int>{0});
    CHECK(run.zero_crossings == std::vector<std::int64_t>{0});
    CHECK(run.final_params.weights.back() == p.weights.back());
}

TEST_CASE("halving a stable step keeps the loss curve monotone") {
    const Dataset data = toy(8, 7);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto p = init_deep_narrow_mlp(mlp_config(32, 16.0), seed);
        for (double lr : {0.5, 0.25, 0.125}) {
            TrainConfig tc;
            tc.base_lr = lr;
            tc.steps = 60;
            const auto run = train_gradient_descent(p, data, tc);
            for (std::size_t s = 1; s < run.loss_per_step.size(); ++s)
                CHECK(run.loss_per_step[s] <= run.loss_per_step[s - 1] * (1.0 + 1e-12));
        }
    }
}
