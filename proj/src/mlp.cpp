#include "deepntk/mlp.hpp"

#include <cmath>
#include <string>

#include "deepntk/errors.hpp"
#include "deepntk/rng.hpp"

namespace deepntk {

namespace {

constexpr std::size_t kOracleParameterBudget = 1'000'000;

Eigen::MatrixXd relu(const Eigen::MatrixXd& f) { return f.cwiseMax(0.0); }

// sigma'(s) = 1 for s > 0, else 0.
Eigen::MatrixXd relu_slope(const Eigen::MatrixXd& f) {
    return (f.array() > 0.0).cast<double>().matrix();
}

}  // namespace

int MlpConfig::layer_width(int layer) const {
    return layer == depth ? d_out : width();
}

void MlpConfig::validate() const {
    require_config(d_in >= 1, "d_in must be positive");
    require_config(d_out >= 1, "d_out must be positive");
    require_config(depth >= 2, "depth L must be at least 2");
    require_config(c_l > 0.0 && std::isfinite(c_l), "C_L must be positive");
    require_config(rho > 0.0 && std::isfinite(rho), "rho must be positive");
    require_config(beta > 0.0 && std::isfinite(beta), "beta must be positive");
}

double ntk_divisor(NtkScale scale, int depth, double c_l) {
    switch (scale) {
        case NtkScale::DepthTimesCl2:
            return static_cast<double>(depth) * c_l * c_l;
        case NtkScale::DepthMinusOneTimesCl2:
            return static_cast<double>(depth - 1) * c_l * c_l;
        case NtkScale::Unit:
            return 1.0;
    }
    return 1.0;
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    }
    return n;
}

void MlpParams::check_shapes() const {
    const int L = config.depth;
    require_shape(static_cast<int>(weights.size()) == L && static_cast<int>(biases.size()) == L,
                  "parameter set must hold L weight matrices and L bias vectors");
    for (int l = 1; l <= L; ++l) {
        const int rows = config.layer_width(l);
        const int cols = l == 1 ? config.d_in : config.width();
        require_shape(weights[l - 1].rows() == rows && weights[l - 1].cols() == cols,
                      "weight W^" + std::to_string(l) + " has the wrong shape");
        require_shape(biases[l - 1].size() == rows,
                      "bias b^" + std::to_string(l) + " has the wrong length");
    }
}

Eigen::VectorXd ParamGradient::flatten() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < dweights.size(); ++l) n += dweights[l].size() + dbiases[l].size();
    Eigen::VectorXd out(n);
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < dweights.size(); ++l) {
        out.segment(at, dweights[l].size()) =
            Eigen::Map<const Eigen::VectorXd>(dweights[l].data(), dweights[l].size());
        at += dweights[l].size();
        out.segment(at, dbiases[l].size()) = dbiases[l];
        at += dbiases[l].size();
    }
    return out;
}

MlpParams init_deep_narrow_mlp(const MlpConfig& config, std::uint64_t seed) {
    config.validate();
    const int L = config.depth;
    const int d_in = config.d_in;
    const int d_out = config.d_out;
    const int w = config.width();
    const double c_l = config.c_l;
    const double u_std = config.rho / std::sqrt(static_cast<double>(d_in));
    const double v_std = c_l * config.beta;

    MlpParams params;
    params.config = config;
    params.weights.reserve(L);
    params.biases.reserve(L);

    for (int l = 1; l <= L - 1; ++l) {
        auto u_stream = make_stream(seed, l, StreamRole::HiddenRow);
        auto v_stream = make_stream(seed, l, StreamRole::HiddenBias);
        std::normal_distribution<double> u_dist(0.0, u_std);
        std::normal_distribution<double> v_dist(0.0, v_std);

        Eigen::RowVectorXd u(d_in);
        for (int i = 0; i < d_in; ++i) u(i) = u_dist(u_stream);
        const double v = v_dist(v_stream);

        Eigen::MatrixXd W;
        Eigen::VectorXd b = Eigen::VectorXd::Zero(w);
        if (l == 1) {
            W = Eigen::MatrixXd::Zero(w, d_in);
            W.topRows(d_in).diagonal().setConstant(c_l);
            W.row(d_in) = u;
            b.tail(d_out).setConstant(c_l);
        } else {
            W = Eigen::MatrixXd::Zero(w, w);
            W.topLeftCorner(d_in, d_in).setIdentity();
            W.block(d_in, 0, 1, d_in) = u;
            W.bottomRightCorner(d_out, d_out).setIdentity();
        }
        b(d_in) = v;

        params.weights.push_back(std::move(W));
        params.biases.push_back(std::move(b));
        params.init_u.push_back(std::move(u));
        params.init_v.push_back(v);
    }

    Eigen::MatrixXd W_last = Eigen::MatrixXd::Zero(d_out, w);
    W_last.rightCols(d_out).setIdentity();
    params.weights.push_back(std::move(W_last));
    params.biases.push_back(Eigen::VectorXd::Constant(d_out, -c_l));
    return params;
}

MlpParams init_kaiming_mlp(const MlpConfig& config, std::uint64_t seed) {
    config.validate();
    const int L = config.depth;
    MlpParams params;
    params.config = config;
    for (int l = 1; l <= L; ++l) {
        const int rows = config.layer_width(l);
        const int fan_in = l == 1 ? config.d_in : config.width();
        const double w_bound = std::sqrt(6.0 / fan_in);
        const double b_bound = 1.0 / std::sqrt(static_cast<double>(fan_in));

        auto w_stream = make_stream(seed, l, StreamRole::Weight);
        auto b_stream = make_stream(seed, l, StreamRole::Bias);
        std::uniform_real_distribution<double> w_dist(-w_bound, w_bound);
        std::uniform_real_distribution<double> b_dist(-b_bound, b_bound);

        Eigen::MatrixXd W(rows, fan_in);
        for (Eigen::Index j = 0; j < W.cols(); ++j)
            for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = w_dist(w_stream);
        Eigen::VectorXd b(rows);
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = b_dist(b_stream);

        params.weights.push_back(std::move(W));
        params.biases.push_back(std::move(b));
    }
    return params;
}

BatchTrace mlp_forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs) {
    require_shape(inputs.rows() == params.config.d_in, "input dimension does not match d_in");
    const int L = params.config.depth;
    BatchTrace trace;
    trace.inputs = inputs;
    trace.preactivations.reserve(L);

    Eigen::MatrixXd f = (params.weights[0] * inputs).colwise() + params.biases[0];
    trace.preactivations.push_back(f);
    for (int l = 2; l <= L; ++l) {
        f.noalias() = params.weights[l - 1] * relu(trace.preactivations.back());
        f.colwise() += params.biases[l - 1];
        trace.preactivations.push_back(f);
    }
    return trace;
}

ForwardTrace mlp_forward(const MlpParams& params, const Eigen::VectorXd& x) {
    require_shape(x.size() == params.config.d_in, "input dimension does not match d_in");
    BatchTrace batch = mlp_forward_batch(params, x);
    ForwardTrace trace;
    trace.input = x;
    trace.has_nonpositive_input = (x.array() <= 0.0).any();
    trace.preactivations.reserve(batch.preactivations.size());
    for (auto& f : batch.preactivations) trace.preactivations.emplace_back(f.col(0));
    return trace;
}

ParamGradient mlp_batch_gradient(const MlpParams& params, const BatchTrace& trace,
                                 const Eigen::MatrixXd& cotangents) {
    const int L = params.config.depth;
    require_shape(static_cast<int>(trace.preactivations.size()) == L,
                  "trace depth does not match the parameter set");
    require_shape(cotangents.rows() == params.config.d_out &&
                      cotangents.cols() == trace.inputs.cols(),
                  "cotangent shape must be d_out x batch");

    ParamGradient grad;
    grad.dweights.resize(L);
    grad.dbiases.resize(L);

    Eigen::MatrixXd delta = cotangents;  // d(objective)/d f^l
    for (int l = L; l >= 1; --l) {
        if (l == 1) {
            grad.dweights[0].noalias() = delta * trace.inputs.transpose();
        } else {
            grad.dweights[l - 1].noalias() = delta * relu(trace.preactivations[l - 2]).transpose();
        }
        grad.dbiases[l - 1] = delta.rowwise().sum();
        if (l > 1) {
            Eigen::MatrixXd back = params.weights[l - 1].transpose() * delta;
            delta = back.cwiseProduct(relu_slope(trace.preactivations[l - 2]));
        }
    }
    return grad;
}

ParamGradient mlp_param_gradient(const MlpParams& params, const ForwardTrace& trace,
                                 const Eigen::VectorXd& output_cotangent) {
    require_shape(output_cotangent.size() == params.config.d_out,
                  "cotangent must have d_out entries");
    require_shape(static_cast<int>(trace.preactivations.size()) == params.config.depth,
                  "trace depth does not match the parameter set");
    BatchTrace batch;
    batch.inputs = trace.input;
    batch.preactivations.reserve(trace.preactivations.size());
    for (const auto& f : trace.preactivations) batch.preactivations.emplace_back(f);
    return mlp_batch_gradient(params, batch, output_cotangent);
}

Eigen::MatrixXd mlp_empirical_scaled_ntk(const MlpParams& params, const ForwardTrace& trace,
                                         const ForwardTrace& trace_prime, NtkScale scale) {
    const int L = params.config.depth;
    require_shape(static_cast<int>(trace.preactivations.size()) == L &&
                      static_cast<int>(trace_prime.preactivations.size()) == L,
                  "trace depth does not match the parameter set");

    const int w = params.config.width();
    Eigen::MatrixXd theta =
        (trace.input.dot(trace_prime.input) + 1.0) * Eigen::MatrixXd::Identity(w, w);
    for (int l = 2; l <= L; ++l) {
        const Eigen::VectorXd& f = trace.preactivations[l - 2];
        const Eigen::VectorXd& fp = trace_prime.preactivations[l - 2];
        const Eigen::MatrixXd& W = params.weights[l - 1];
        const Eigen::VectorXd slope = relu_slope(f);
        const Eigen::VectorXd slope_p = relu_slope(fp);
        const Eigen::MatrixXd A = W * slope.asDiagonal();
        const Eigen::MatrixXd Ap = W * slope_p.asDiagonal();
        const double feature = (f.cwiseMax(0.0).cwiseProduct(fp.cwiseMax(0.0))).sum() + 1.0;
        Eigen::MatrixXd next = A * theta * Ap.transpose();
        next.diagonal().array() += feature;
        theta = std::move(next);
    }
    return theta / ntk_divisor(scale, L, params.config.c_l);
}

Eigen::MatrixXd mlp_empirical_scaled_ntk(const MlpParams& params, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& x_prime, NtkScale scale) {
    return mlp_empirical_scaled_ntk(params, mlp_forward(params, x), mlp_forward(params, x_prime),
                                    scale);
}

Eigen::MatrixXd mlp_ntk_jacobian_oracle(const MlpParams& params, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& x_prime, NtkScale scale) {
    const std::size_t p = params.parameter_count();
    if (p > kOracleParameterBudget) {
        throw ConfigError("Jacobian oracle budget exceeded: " + std::to_string(p) +
                          " parameters");
    }
    const int d_out = params.config.d_out;
    const ForwardTrace t = mlp_forward(params, x);
    const ForwardTrace tp = mlp_forward(params, x_prime);

    Eigen::MatrixXd J(d_out, static_cast<Eigen::Index>(p));
    Eigen::MatrixXd Jp(d_out, static_cast<Eigen::Index>(p));
    for (int k = 0; k < d_out; ++k) {
        const Eigen::VectorXd e = Eigen::VectorXd::Unit(d_out, k);
        J.row(k) = mlp_param_gradient(params, t, e).flatten().transpose();
        Jp.row(k) = mlp_param_gradient(params, tp, e).flatten().transpose();
    }
    return (J * Jp.transpose()) / ntk_divisor(scale, params.config.depth, params.config.c_l);
}

std::int64_t zero_crossing_count(const BatchTrace& reference, const BatchTrace& now) {
    require_shape(reference.preactivations.size() == now.preactivations.size(),
                  "traces come from different depths");
    std::int64_t count = 0;
    // Hidden layers only: the output layer has no activation.
    for (std::size_t l = 0; l + 1 < reference.preactivations.size(); ++l) {
        const auto& a = reference.preactivations[l];
        const auto& b = now.preactivations[l];
        require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "trace shapes differ");
        count += ((a.array() > 0.0) != (b.array() > 0.0)).count();
    }
    return count;
}

std::int64_t zero_crossing_count(const ForwardTrace& reference, const ForwardTrace& now) {
    require_shape(reference.preactivations.size() == now.preactivations.size(),
                  "traces come from different depths");
    std::int64_t count = 0;
    for (std::size_t l = 0; l + 1 < reference.preactivations.size(); ++l) {
        const auto& a = reference.preactivations[l];
        const auto& b = now.preactivations[l];
        require_shape(a.size() == b.size(), "trace shapes differ");
        count += ((a.array() > 0.0) != (b.array() > 0.0)).count();
    }
    return count;
}

}  // namespace deepntk
