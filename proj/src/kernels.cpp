#include "deepntk/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "deepntk/errors.hpp"
#include "deepntk/rng.hpp"

namespace deepntk {

namespace {

constexpr double kCovarianceSlack = 1e-12;

double relu(double s) { return s > 0.0 ? s : 0.0; }

const MlpGeometry& mlp_geometry(const KernelSpec& spec) {
    const auto* g = std::get_if<MlpGeometry>(&spec.geometry);
    if (g == nullptr) throw ConfigError("kernel spec does not describe an MLP");
    return *g;
}

const CnnGeometry& cnn_geometry(const KernelSpec& spec) {
    const auto* g = std::get_if<CnnGeometry>(&spec.geometry);
    if (g == nullptr) throw ConfigError("kernel spec does not describe a CNN");
    return *g;
}

// In-bounds rows (or columns) [lo, hi) of the window shifted by s - 2.
struct Span {
    int lo;
    int hi;
};

Span window_span(int s, int d) { return {std::max(0, s - 2), std::min(d, d + s - 2)}; }

// S(img restricted to psi_{s,u}) = (1/d^2) * sum over the in-bounds window.
double window_pool(const Eigen::MatrixXd& img, int s, int u) {
    const int d = static_cast<int>(img.rows());
    const Span rows = window_span(s, d);
    const Span cols = window_span(u, d);
    if (rows.hi <= rows.lo || cols.hi <= cols.lo) return 0.0;
    return img.block(rows.lo, cols.lo, rows.hi - rows.lo, cols.hi - cols.lo).sum() /
           static_cast<double>(d * d);
}

double window_pool_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double acc = 0.0;
    for (int s = 1; s <= 3; ++s)
        for (int u = 1; u <= 3; ++u) acc += window_pool(a, s, u) * window_pool(b, s, u);
    return acc;
}

// 3x3 zero-padded patch around (i, j), flattened row-major.
Eigen::Matrix<double, 9, 1> patch(const Eigen::MatrixXd& img, int i, int j) {
    const int d = static_cast<int>(img.rows());
    Eigen::Matrix<double, 9, 1> out;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            const int p = i + a - 1;
            const int q = j + b - 1;
            out(a * 3 + b) = (p >= 0 && p < d && q >= 0 && q < d) ? img(p, q) : 0.0;
        }
    }
    return out;
}

void require_square(const Eigen::MatrixXd& img, int d, const char* name) {
    require_shape(img.rows() == d && img.cols() == d, std::string(name) + " must be d x d");
}

}  // namespace

double relu_gaussian_cross_moment(double var_u, double var_v, double cov) {
    if (var_u < 0.0 || var_v < 0.0) throw std::invalid_argument("variance must be non-negative");
    const double scale = std::sqrt(var_u * var_v);
    if (scale == 0.0) return 0.0;
    if (std::abs(cov) > scale + kCovarianceSlack * std::max(1.0, scale)) {
        throw std::invalid_argument("covariance exceeds the Cauchy-Schwarz bound");
    }
    const double r = std::clamp(cov / scale, -1.0, 1.0);
    const double theta = std::acos(r);
    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - r * r));
    return scale / (2.0 * std::numbers::pi) * (sin_theta + (std::numbers::pi - theta) * r);
}

MonteCarloEstimate relu_cross_moment_mc(double var_u, double var_v, double cov,
                                        std::uint64_t seed, std::uint64_t n_samples) {
    if (n_samples == 0) throw std::invalid_argument("n_samples must be positive");
    if (var_u < 0.0 || var_v < 0.0) throw std::invalid_argument("variance must be non-negative");
    const double bound = std::sqrt(var_u * var_v);
    if (std::abs(cov) > bound + kCovarianceSlack * std::max(1.0, bound)) {
        throw std::invalid_argument("covariance exceeds the Cauchy-Schwarz bound");
    }

    // u = a z1, v = b z1 + c z2 reproduces the requested covariance.
    const double a = std::sqrt(var_u);
    const double b = a > 0.0 ? cov / a : 0.0;
    const double c = std::sqrt(std::max(0.0, var_v - b * b));

    auto stream = make_stream(seed, 0, StreamRole::MonteCarlo);
    std::normal_distribution<double> normal(0.0, 1.0);
    double mean = 0.0;
    double m2 = 0.0;
    for (std::uint64_t k = 1; k <= n_samples; ++k) {
        const double z1 = normal(stream);
        const double z2 = normal(stream);
        const double sample = relu(a * z1) * relu(b * z1 + c * z2);
        const double delta = sample - mean;
        mean += delta / static_cast<double>(k);
        m2 += delta * (sample - mean);
    }
    const double n = static_cast<double>(n_samples);
    const double var = n_samples > 1 ? m2 / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

double mlp_limit_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& x_prime,
                        const KernelSpec& spec) {
    const MlpGeometry& g = mlp_geometry(spec);
    require_shape(x.size() == g.d_in && x_prime.size() == g.d_in,
                  "kernel inputs must have d_in entries");
    const double s = spec.rho * spec.rho / g.d_in;
    const double b2 = spec.beta * spec.beta;
    const double dot = x.dot(x_prime);
    const double moment = relu_gaussian_cross_moment(s * x.squaredNorm() + b2,
                                                     s * x_prime.squaredNorm() + b2, s * dot + b2);
    return dot + static_cast<double>(g.d_out) + moment;
}

double mlp_init_kernel_finite_l(const Eigen::VectorXd& x, const Eigen::VectorXd& x_prime,
                                const MlpConfig& config,
                                const std::vector<Eigen::RowVectorXd>& u_draws,
                                const std::vector<double>& v_draws) {
    config.validate();
    const int L = config.depth;
    if (static_cast<int>(u_draws.size()) != L - 1 || static_cast<int>(v_draws.size()) != L - 1) {
        throw ShapeError("expected L-1 recorded draws");
    }
    require_shape(x.size() == config.d_in && x_prime.size() == config.d_in,
                  "kernel inputs must have d_in entries");
    const double c = config.c_l;
    const double c2 = c * c;
    // Hidden layers see relu(C_L x) = C_L relu(x).
    const Eigen::VectorXd rx = x.cwiseMax(0.0);
    const Eigen::VectorXd rxp = x_prime.cwiseMax(0.0);
    const double hidden_dot = rx.dot(rxp);

    double total = x.dot(x_prime) + 1.0;  // layer 1 sees the raw input
    for (int j = 1; j <= L - 1; ++j) {
        const auto& u = u_draws[static_cast<std::size_t>(j - 1)];
        require_shape(u.size() == config.d_in, "recorded u draw has the wrong length");
        const double v = v_draws[static_cast<std::size_t>(j - 1)];
        // The first hidden unit reads x directly; deeper ones read C_L relu(x).
        const double h = j == 1 ? u.dot(x) + v : c * u.dot(rx) + v;
        const double hp = j == 1 ? u.dot(x_prime) + v : c * u.dot(rxp) + v;
        total += c2 * hidden_dot + relu(h) * relu(hp) + config.d_out * c2 + 1.0;
    }
    return total / (static_cast<double>(L) * c2);
}

std::int64_t p_d_weight(int s, int u, int d) {
    if (s < 1 || s > 3 || u < 1 || u > 3) throw std::out_of_range("window index must be in 1..3");
    if (d < 1) throw std::out_of_range("d must be positive");
    const std::int64_t dd = d;
    const std::int64_t dm = d - 1;
    if (s == 2 && u == 2) return dd * dd * dd * dd;
    if (std::abs(s - u) == 1) return dd * dd * dm * dm;
    return dm * dm * dm * dm;
}

double cnn_limit_kernel(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_prime,
                        const KernelSpec& spec) {
    const int d = cnn_geometry(spec).d;
    require_square(x, d, "x");
    require_square(x_prime, d, "x'");
    const double r2 = spec.rho * spec.rho;
    const double b2 = spec.beta * spec.beta;
    const int px = d * d;

    std::vector<Eigen::Matrix<double, 9, 1>> pa(px), pb(px);
    std::vector<double> va(px), vb(px);
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < d; ++i) {
            const int k = i + j * d;
            pa[k] = patch(x, i, j);
            pb[k] = patch(x_prime, i, j);
            va[k] = r2 * pa[k].squaredNorm() + b2;
            vb[k] = r2 * pb[k].squaredNorm() + b2;
        }
    }
    // moments(k, k') = E[relu(g(phi_k(x))) relu(g(phi_k'(x')))]
    Eigen::MatrixXd moments(px, px);
    for (int k = 0; k < px; ++k)
        for (int kp = 0; kp < px; ++kp)
            moments(k, kp) = relu_gaussian_cross_moment(va[k], vb[kp], r2 * pa[k].dot(pb[kp]) + b2);

    const double d4 = static_cast<double>(px) * px;
    double total = 0.0;
    for (int s = 1; s <= 3; ++s) {
        for (int u = 1; u <= 3; ++u) {
            const Span rows = window_span(s, d);
            const Span cols = window_span(u, d);
            double pair_sum = 0.0;
            for (int j = cols.lo; j < cols.hi; ++j)
                for (int i = rows.lo; i < rows.hi; ++i)
                    for (int jp = cols.lo; jp < cols.hi; ++jp)
                        for (int ip = rows.lo; ip < rows.hi; ++ip)
                            pair_sum += moments(i + j * d, ip + jp * d);
            total += (static_cast<double>(p_d_weight(s, u, d)) + pair_sum) / d4 +
                     window_pool(x, s, u) * window_pool(x_prime, s, u);
        }
    }
    return total;
}

double cnn_init_kernel_finite_l(const Eigen::MatrixXd& x, const Eigen::MatrixXd& x_prime,
                                const CnnConfig& config,
                                const std::vector<Eigen::Matrix3d>& u_draws,
                                const std::vector<double>& v_draws) {
    config.validate();
    const int L = config.depth;
    const int d = config.d;
    if (static_cast<int>(u_draws.size()) != L - 1 || static_cast<int>(v_draws.size()) != L - 1) {
        throw ShapeError("expected L-1 recorded draws");
    }
    require_square(x, d, "x");
    require_square(x_prime, d, "x'");
    const double c = config.c_l;
    const double c2 = c * c;
    const Eigen::MatrixXd rx = x.cwiseMax(0.0);
    const Eigen::MatrixXd rxp = x_prime.cwiseMax(0.0);
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(d, d);

    // Per-layer pieces that do not depend on the draws: the bias of the
    // back-propagating channel, the carried input channel and the constant channel.
    const double input_term = window_pool_product(x, x_prime);
    const double hidden_input_term = window_pool_product(rx, rxp);
    const double constant_term = window_pool_product(ones, ones);

    double total = 1.0 + input_term;  // layer 1
    for (int j = 1; j <= L - 1; ++j) {
        const Eigen::Matrix3d& u = u_draws[static_cast<std::size_t>(j - 1)];
        const double v = v_draws[static_cast<std::size_t>(j - 1)];
        Eigen::MatrixXd h, hp;
        if (j == 1) {
            h = conv3x3_zero_pad(u, x);
            hp = conv3x3_zero_pad(u, x_prime);
        } else {
            h = c * conv3x3_zero_pad(u, rx);
            hp = c * conv3x3_zero_pad(u, rxp);
        }
        h = (h.array() + v).cwiseMax(0.0);
        hp = (hp.array() + v).cwiseMax(0.0);
        total += 1.0 + c2 * hidden_input_term + c2 * constant_term + window_pool_product(h, hp);
    }
    return total / (static_cast<double>(L) * c2);
}

}  // namespace deepntk
