#pragma once

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "deepntk/cnn.hpp"
#include "deepntk/mlp.hpp"

namespace deepntk {

struct MlpGeometry {
    int d_in = 1;
    int d_out = 1;
};

struct CnnGeometry {
    int d = 1;
};

/// Parameters of the infinite-depth kernels.
struct KernelSpec {
    double rho = 1.0;
    double beta = 1.0;
    std::variant<MlpGeometry, CnnGeometry> geometry = MlpGeometry{};

    static KernelSpec for_mlp(const MlpConfig& cfg) {
        return {cfg.rho, cfg.beta, MlpGeometry{cfg.d_in, cfg.d_out}};
    }
    static KernelSpec for_cnn(const CnnConfig& cfg) { return {cfg.rho, cfg.beta, CnnGeometry{cfg.d}}; }
};

/// E[relu(u) relu(v)] for zero-mean jointly Gaussian (u, v) with the given
/// variances and covariance (degree-1 arc-cosine closed form). The covariance
/// is clamped to the Cauchy-Schwarz bound; zero variance gives 0.
double relu_gaussian_cross_moment(double var_u, double var_v, double cov);

struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

MonteCarloEstimate relu_cross_moment_mc(double var_u, double var_v, double cov,
                                        std::uint64_t seed, std::uint64_t n_samples);

/// Scalar factor k of the infinite-depth MLP kernel k * I_{d_out}:
/// k = x.x' + d_out + E[relu(g(x)) relu(g(x'))],
/// g ~ GP(0, rho^2/d_in x.x' + beta^2).
double mlp_limit_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& x_prime,
                        const KernelSpec& spec);

/// Exact scaled NTK scalar of a freshly initialised deep-narrow MLP, written
/// in terms of the recorded draws (u^j, v^j), j = 1..L-1.
double mlp_init_kernel_finite_l(const Eigen::VectorXd& x, const Eigen::VectorXd& x_prime,
                                const MlpConfig& config,
                                const std::vector<Eigen::RowVectorXd>& u_draws,
                                const std::vector<double>& v_draws);

/// Squared size of the in-bounds window for a shift (s, u) in 1..3.
std::int64_t p_d_weight(int s, int u, int d);

/// Infinite-depth kernel of the pooled CNN output.
double cnn_limit_kernel(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_prime,
                        const KernelSpec& spec);

/// Exact pooled scaled NTK of a freshly initialised deep-narrow CNN in terms
/// of the recorded draws.
double cnn_init_kernel_finite_l(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_prime,
                                const CnnConfig& config,
                                const std::vector<Eigen::Matrix3d>& u_draws,
                                const std::vector<double>& v_draws);

template <typename Point>
struct KernelMatrix {
    Eigen::MatrixXd entries;
    std::vector<Point> points;

    double min_eigenvalue() const {
        return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(entries, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff();
    }
};

/// Gram matrix over the points; each unordered pair is evaluated once and
/// mirrored so the result is exactly symmetric.
template <typename Point, typename Kernel>
KernelMatrix<Point> gram_matrix(Kernel&& kernel, const std::vector<Point>& points) {
    if (points.empty()) throw std::invalid_argument("gram_matrix needs at least one point");
    const auto n = static_cast<Eigen::Index>(points.size());
    KernelMatrix<Point> out;
    out.points = points;
    out.entries.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double k = kernel(points[static_cast<std::size_t>(i)],
                                    points[static_cast<std::size_t>(j)]);
            out.entries(i, j) = k;
            out.entries(j, i) = k;
        }
    }
    return out;
}

}  // namespace deepntk
