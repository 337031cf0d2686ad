#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "deepntk/errors.hpp"
#include "deepntk/kernels.hpp"

using namespace deepntk;

TEST_CASE("closed-form ReLU moments at the special correlations") {
    CHECK(relu_gaussian_cross_moment(1.0, 1.0, 1.0) == doctest::Approx(0.5));
    CHECK(relu_gaussian_cross_moment(1.0, 1.0, 0.0) == doctest::Approx(1.0 / (2.0 * std::numbers::pi)));
    CHECK(relu_gaussian_cross_moment(1.0, 1.0, -1.0) == doctest::Approx(0.0).scale(1.0));
    CHECK(relu_gaussian_cross_moment(0.0, 3.0, 0.0) == 0.0);
    CHECK(relu_gaussian_cross_moment(4.0, 4.0, 4.0) == doctest::Approx(2.0));
}

TEST_CASE("closed-form ReLU moments match quadrature references") {
    CHECK(relu_gaussian_cross_moment(1.0, 1.0, 0.3) == doctest::Approx(0.2413721419177439).epsilon(1e-10));
    CHECK(relu_gaussian_cross_moment(2.0, 0.5, -0.4) == doctest::Approx(0.07206589087589084).epsilon(1e-9));
    CHECK(relu_gaussian_cross_moment(1.0, 4.0, 1.9) == doctest::Approx(0.9533637372043884).epsilon(1e-10));
}

TEST_CASE("moment is monotone in the covariance") {
    double prev = -1.0;
    for (int k = -10; k <= 10; ++k) {
        const double m = relu_gaussian_cross_moment(2.0, 3.0, std::sqrt(6.0) * k / 10.0);
        CHECK(m >= prev);
        prev = m;
    }
}

TEST_CASE("covariance slightly past the bound is clamped, far past it throws") {
    CHECK(relu_gaussian_cross_moment(1.0, 1.0, 1.0 + 1e-14) == doctest::Approx(0.5));
    CHECK_THROWS_AS(relu_gaussian_cross_moment(1.0, 1.0, 1.1), std::invalid_argument);
    CHECK_THROWS_AS(relu_gaussian_cross_moment(-1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("Monte Carlo estimate lies within four standard errors") {
    const double cases[][3] = {{1.0, 1.0, 0.3}, {2.0, 0.5, -0.4}, {1.0, 4.0, 1.9}, {3.0, 3.0, 0.0}};
    std::uint64_t seed = 1;
    for (const auto& c : cases) {
        const auto mc = relu_cross_moment_mc(c[0], c[1], c[2], seed++, 200000);
        const double exact = relu_gaussian_cross_moment(c[0], c[1], c[2]);
        CHECK(mc.std_error > 0.0);
        CHECK(std::abs(mc.estimate - exact) <= 4.0 * mc.std_error);
    }
    CHECK_THROWS(relu_cross_moment_mc(1.0, 1.0, 0.0, 1, 0));
}

TEST_CASE("MLP limit kernel matches the quadrature reference") {
    KernelSpec spec{0.8, 1.3, MlpGeometry{2, 1}};
    Eigen::VectorXd x(2), xp(2);
    x << 0.6, 0.3;
    xp << 0.2, 0.9;
    CHECK(mlp_limit_kernel(x, xp, spec) == doctest::Approx(2.2999694702541102).epsilon(1e-10));
    spec.geometry = MlpGeometry{2, 3};
    CHECK(mlp_limit_kernel(x, xp, spec) == doctest::Approx(4.29996947025411).epsilon(1e-10));
    CHECK_THROWS_AS(mlp_limit_kernel(Eigen::VectorXd::Ones(3), xp, spec), ShapeError);
}

TEST_CASE("MLP limit kernel at unit inputs") {
    const KernelSpec spec{1.0, 1.0, MlpGeometry{1, 1}};
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
    // x.x' + 1 + E[relu(g)^2] with var(g) = 2.
    CHECK(mlp_limit_kernel(one, one, spec) == doctest::Approx(3.0));
    CHECK(mlp_limit_kernel(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), spec) ==
          doctest::Approx(1.5));
}

TEST_CASE("window weights") {
    CHECK(p_d_weight(2, 2, 4) == 256);
    CHECK(p_d_weight(1, 2, 4) == 144);
    CHECK(p_d_weight(3, 2, 4) == 144);
    CHECK(p_d_weight(1, 1, 4) == 81);
    CHECK(p_d_weight(3, 1, 4) == 81);
    CHECK_THROWS_AS(p_d_weight(0, 2, 4), std::out_of_range);
    CHECK_THROWS_AS(p_d_weight(2, 4, 4), std::out_of_range);
}

TEST_CASE("CNN limit kernel matches the quadrature reference") {
    const KernelSpec spec{0.7, 0.9, CnnGeometry{2}};
    Eigen::MatrixXd x(2, 2), xp(2, 2);
    x << 0.2, 0.7, 0.5, 0.1;
    xp << 0.9, 0.3, 0.4, 0.6;
    CHECK(cnn_limit_kernel(x, xp, spec) == doctest::Approx(3.950561766553918).epsilon(1e-9));
    const KernelSpec one{0.7, 0.9, CnnGeometry{1}};
    CHECK(cnn_limit_kernel(Eigen::MatrixXd::Constant(1, 1, 0.6), Eigen::MatrixXd::Constant(1, 1, 0.2),
                           one) == doctest::Approx(1.5554711885362358).epsilon(1e-9));
}

TEST_CASE("one-pixel CNN limit coincides with the one-input MLP limit") {
    for (double a : {0.1, 0.5, 2.0}) {
        for (double b : {0.3, 1.5}) {
            const double c = cnn_limit_kernel(Eigen::MatrixXd::Constant(1, 1, a),
                                              Eigen::MatrixXd::Constant(1, 1, b),
                                              KernelSpec{0.9, 1.1, CnnGeometry{1}});
            const double m = mlp_limit_kernel(Eigen::VectorXd::Constant(1, a), Eigen::VectorXd::Constant(1, b),
                                              KernelSpec{0.9, 1.1, MlpGeometry{1, 1}});
            CHECK(c == doctest::Approx(m));
        }
    }
}

TEST_CASE("kernel spec geometry must match the kernel") {
    const KernelSpec spec{1.0, 1.0, CnnGeometry{2}};
    CHECK_THROWS_AS(mlp_limit_kernel(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), spec), ConfigError);
}

TEST_CASE("Gram matrices are exactly symmetric and positive semidefinite") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Eigen::VectorXd> pts;
    for (int i = 0; i < 12; ++i) pts.push_back(Eigen::Vector3d(u(gen), u(gen), u(gen)));
    const KernelSpec spec{1.0, 1.0, MlpGeometry{3, 1}};
    const auto K = gram_matrix([&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return mlp_limit_kernel(a, b, spec);
    }, pts);
    CHECK(K.entries == K.entries.transpose());
    CHECK(K.min_eigenvalue() > -1e-10);
    int calls = 0;
    gram_matrix([&](const Eigen::VectorXd&, const Eigen::VectorXd&) { return static_cast<double>(++calls); },
                pts);
    CHECK(calls == 12 * 13 / 2);
    CHECK_THROWS(gram_matrix([](const Eigen::VectorXd&, const Eigen::VectorXd&) { return 0.0; },
                             std::vector<Eigen::VectorXd>{}));
}

TEST_CASE("CNN limit Gram is positive semidefinite on random images") {
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Eigen::MatrixXd> imgs;
    for (int i = 0; i < 8; ++i) imgs.push_back(Eigen::MatrixXd::NullaryExpr(3, 3, [&]() { return u(gen); }));
    const KernelSpec spec{1.0 / std::sqrt(3.0), 1.0, CnnGeometry{3}};
    const auto K = gram_matrix([&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        return cnn_limit_kernel(a, b, spec);
    }, imgs);
    CHECK(K.min_eigenvalue() > -1e-10);
}

TEST_CASE("MLP limit kernel on the unit diagonal input") {
    const KernelSpec spec{1.0, 1.0, MlpGeometry{2, 1}};
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(2, 1.0 / std::sqrt(2.0));
    CHECK(mlp_limit_kernel(x, x, spec) == doctest::Approx(2.75));
    const auto mc = relu_cross_moment_mc(1.5, 1.5, 1.5, 3, 1000000);
    CHECK(std::abs(mc.estimate - 0.75) <= 4.0 * mc.std_error);
}

TEST_CASE("Monte Carlo at a million samples") {
    const double cases[][3] = {{1.0, 1.0, 1.0}, {1.0, 1.0, 0.0}, {2.0, 3.0, 1.0}};
    for (const auto& c : cases) {
        const auto mc = relu_cross_moment_mc(c[0], c[1], c[2], 11, 1000000);
        CHECK(std::abs(mc.estimate - relu_gaussian_cross_moment(c[0], c[1], c[2])) <= 4.0 * mc.std_error);
    }
}

TEST_CASE("limit kernels are symmetric on random pairs") {
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    const KernelSpec mspec{1.3, 0.7, MlpGeometry{3, 1}};
    const KernelSpec cspec{0.6, 1.2, CnnGeometry{3}};
    for (int i = 0; i < 100; ++i) {
        const Eigen::Vector3d a(u(gen), u(gen), u(gen)), b(u(gen), u(gen), u(gen));
        CHECK(mlp_limit_kernel(a, b, mspec) == mlp_limit_kernel(b, a, mspec));
    }
    for (int i = 0; i < 10; ++i) {
        const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(3, 3, [&]() { return u(gen); });
        const Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(3, 3, [&]() { return u(gen); });
        CHECK(std::abs(cnn_limit_kernel(a, b, cspec) - cnn_limit_kernel(b, a, cspec)) <= 1e-12);
    }
}

TEST_CASE("finite-depth kernels reject draw lists of the wrong length") {
    MlpConfig cfg;
    cfg.d_in = 1;
    cfg.depth = 3;
    CHECK_THROWS_AS(mlp_init_kernel_finite_l(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), cfg,
                                             {Eigen::RowVectorXd::Zero(1)}, {0.0}),
                    ShapeError);
    CnnConfig ccfg;
    ccfg.d = 2;
    ccfg.depth = 3;
    CHECK_THROWS_AS(cnn_init_kernel_finite_l(Eigen::MatrixXd::Ones(2, 2), Eigen::MatrixXd::Ones(2, 2), ccfg,
                                             {Eigen::Matrix3d::Zero()}, {0.0}),
                    ShapeError);
}
