#include "deepntk/cnn.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "deepntk/errors.hpp"
#include "deepntk/rng.hpp"

namespace deepntk {

namespace {

// One (output pixel, input pixel, tap) triple of a 3x3 zero-padded
// cross-correlation: out[i,j] += w[a,b] * in[i+a-1, j+b-1].
struct TapLink {
    int out;
    int in;
    int tap;
};

const std::vector<TapLink>& tap_links(int d) {
    static thread_local std::vector<std::vector<TapLink>> cache;
    if (static_cast<int>(cache.size()) <= d) cache.resize(static_cast<std::size_t>(d) + 1);
    auto& links = cache[static_cast<std::size_t>(d)];
    if (links.empty()) {
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int j = 0; j < d; ++j)
                    for (int i = 0; i < d; ++i) {
                        const int si = i + a - 1, sj = j + b - 1;
                        if (si < 0 || si >= d || sj < 0 || sj >= d) continue;
                        links.push_back({j * d + i, sj * d + si, a * 3 + b});
                    }
    }
    return links;
}

Eigen::Matrix3d identity_filter() {
    Eigen::Matrix3d iota = Eigen::Matrix3d::Zero();
    iota(1, 1) = 1.0;
    return iota;
}

}  // namespace

int CnnConfig::channels(int layer) const {
    if (layer == 0 || layer == depth) return 1;
    return 3;
}

void CnnConfig::validate() const {
    require_config(d >= 1, "image side d must be positive");
    require_config(depth >= 2, "depth L must be at least 2");
    require_config(c_l > 0.0 && std::isfinite(c_l), "C_L must be positive");
    require_config(rho > 0.0 && std::isfinite(rho), "rho must be positive");
    require_config(beta > 0.0 && std::isfinite(beta), "beta must be positive");
}

Eigen::Matrix3d FilterBank::matrix(int r, int c) const {
    Eigen::Matrix3d m;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) m(a, b) = at(r, c, a, b);
    return m;
}

void FilterBank::set(int r, int c, const Eigen::Matrix3d& m) {
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) at(r, c, a, b) = m(a, b);
}

std::size_t CnnParams::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < filters.size(); ++l) n += filters[l].taps.size() + biases[l].size();
    return n;
}

void CnnParams::check_shapes() const {
    const int L = config.depth;
    require_shape(static_cast<int>(filters.size()) == L && static_cast<int>(biases.size()) == L,
                  "parameter set must hold L filter banks and L bias vectors");
    for (int l = 1; l <= L; ++l) {
        const auto& f = filters[l - 1];
        require_shape(f.n_out == config.channels(l) && f.n_in == config.channels(l - 1) &&
                          f.taps.size() == static_cast<std::size_t>(f.n_out) * f.n_in * 9,
                      "filter bank w^" + std::to_string(l) + " has the wrong shape");
        require_shape(biases[l - 1].size() == config.channels(l),
                      "bias b^" + std::to_string(l) + " has the wrong length");
    }
}

Eigen::VectorXd CnnGradient::flatten() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < dfilters.size(); ++l)
        n += static_cast<Eigen::Index>(dfilters[l].taps.size()) + dbiases[l].size();
    Eigen::VectorXd out(n);
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < dfilters.size(); ++l) {
        for (double t : dfilters[l].taps) out(at++) = t;
        out.segment(at, dbiases[l].size()) = dbiases[l];
        at += dbiases[l].size();
    }
    return out;
}

Eigen::MatrixXd conv3x3_zero_pad(const Eigen::Matrix3d& filter, const Eigen::MatrixXd& image) {
    require_shape(image.rows() == image.cols() && image.rows() >= 1, "image must be square");
    const int d = static_cast<int>(image.rows());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i)
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    const int si = i + a - 1, sj = j + b - 1;
                    if (si >= 0 && si < d && sj >= 0 && sj < d) out(i, j) += filter(a, b) * image(si, sj);
                }
    return out;
}

double average_pool(const Eigen::MatrixXd& a) {
    if (a.size() == 0) return 0.0;
    return a.sum() / static_cast<double>(a.size());
}

CnnParams init_deep_narrow_cnn(const CnnConfig& config, std::uint64_t seed) {
    config.validate();
    const int L = config.depth;
    const double c_l = config.c_l;
    const Eigen::Matrix3d iota = identity_filter();

    CnnParams params;
    params.config = config;
    for (int l = 1; l <= L - 1; ++l) {
        auto u_stream = make_stream(seed, l, StreamRole::HiddenRow);
        auto v_stream = make_stream(seed, l, StreamRole::HiddenBias);
        std::normal_distribution<double> u_dist(0.0, config.rho);
        std::normal_distribution<double> v_dist(0.0, c_l * config.beta);
        Eigen::Matrix3d u;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) u(a, b) = u_dist(u_stream);
        const double v = v_dist(v_stream);

        FilterBank bank(3, config.channels(l - 1));
        Eigen::VectorXd bias = Eigen::VectorXd::Zero(3);
        if (l == 1) {
            bank.set(0, 0, c_l * iota);
            bank.set(1, 0, u);
            bias(2) = c_l;
        } else {
            bank.set(0, 0, iota);
            bank.set(1, 0, u);
            bank.set(2, 2, iota);
        }
        bias(1) = v;
        params.filters.push_back(std::move(bank));
        params.biases.push_back(std::move(bias));
        params.init_u.push_back(u);
        params.init_v.push_back(v);
    }
    FilterBank last(1, 3);
    last.set(0, 2, iota);
    params.filters.push_back(std::move(last));
    params.biases.push_back(Eigen::VectorXd::Constant(1, -c_l));
    return params;
}

CnnParams init_kaiming_cnn(const CnnConfig& config, std::uint64_t seed) {
    config.validate();
    CnnParams params;
    params.config = config;
    for (int l = 1; l <= config.depth; ++l) {
        const int n_out = config.channels(l);
        const int n_in = config.channels(l - 1);
        const int fan_in = 9 * n_in;
        const double w_bound = std::sqrt(6.0 / fan_in);
        const double b_bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        auto w_stream = make_stream(seed, l, StreamRole::Weight);
        auto b_stream = make_stream(seed, l, StreamRole::Bias);
        std::uniform_real_distribution<double> w_dist(-w_bound, w_bound);
        std::uniform_real_distribution<double> b_dist(-b_bound, b_bound);

        FilterBank bank(n_out, n_in);
        for (double& t : bank.taps) t = w_dist(w_stream);
        Eigen::VectorXd bias(n_out);
        for (Eigen::Index i = 0; i < bias.size(); ++i) bias(i) = b_dist(b_stream);
        params.filters.push_back(std::move(bank));
        params.biases.push_back(std::move(bias));
    }
    return params;
}

CnnBatchTrace cnn_forward_batch(const CnnParams& params, const Eigen::MatrixXd& inputs) {
    const CnnConfig& cfg = params.config;
    const int px = cfg.pixels();
    require_shape(inputs.rows() == px, "image batch rows must equal d*d");
    const int L = cfg.depth;
    const Eigen::Index N = inputs.cols();
    const auto& links = tap_links(cfg.d);

    CnnBatchTrace trace;
    trace.inputs = inputs;
    trace.preactivations.reserve(L);

    // Batch-major work buffers: column (channel * px + pixel), one row per image.
    Eigen::MatrixXd act = inputs.transpose();
    for (int l = 1; l <= L; ++l) {
        const FilterBank& bank = params.filters[l - 1];
        const Eigen::VectorXd& bias = params.biases[l - 1];
        Eigen::MatrixXd f(N, static_cast<Eigen::Index>(bank.n_out) * px);
        for (int r = 0; r < bank.n_out; ++r) f.middleCols(r * px, px).setConstant(bias(r));
        for (int r = 0; r < bank.n_out; ++r) {
            for (int c = 0; c < bank.n_in; ++c) {
                const double* w = bank.filter(r, c);
                for (const TapLink& k : links) {
                    if (w[k.tap] == 0.0) continue;
                    f.col(r * px + k.out) += w[k.tap] * act.col(c * px + k.in);
                }
            }
        }
        trace.preactivations.push_back(f.transpose());
        if (l < L) act = f.cwiseMax(0.0);
    }
    trace.pooled = trace.preactivations.back().colwise().sum() / static_cast<double>(px);
    return trace;
}

CnnTrace cnn_forward(const CnnParams& params, const Eigen::MatrixXd& x) {
    const int d = params.config.d;
    require_shape(x.rows() == d && x.cols() == d, "image must be d x d");
    const CnnBatchTrace batch =
        cnn_forward_batch(params, Eigen::Map<const Eigen::VectorXd>(x.data(), x.size()));
    CnnTrace trace;
    trace.input = x;
    trace.has_nonpositive_input = (x.array() <= 0.0).any();
    const int px = params.config.pixels();
    for (const auto& f : batch.preactivations) {
        std::vector<Eigen::MatrixXd> channels;
        for (Eigen::Index c = 0; c < f.rows() / px; ++c) {
            channels.emplace_back(Eigen::Map<const Eigen::MatrixXd>(f.data() + c * px, d, d));
        }
        trace.preactivations.push_back(std::move(channels));
    }
    trace.pooled_output = batch.pooled(0);
    return trace;
}

CnnGradient cnn_batch_gradient(const CnnParams& params, const CnnBatchTrace& trace,
                               const Eigen::RowVectorXd& cotangents) {
    const CnnConfig& cfg = params.config;
    const int L = cfg.depth;
    const int px = cfg.pixels();
    const Eigen::Index N = trace.inputs.cols();
    require_shape(static_cast<int>(trace.preactivations.size()) == L,
                  "trace depth does not match the parameter set");
    require_shape(cotangents.size() == N, "one cotangent per image is required");
    const auto& links = tap_links(cfg.d);

    CnnGradient grad;
    grad.dfilters.resize(L);
    grad.dbiases.resize(L);

    // S(A) = mean(A): every pixel of f^L receives cotangent / d^2.
    Eigen::MatrixXd delta(N, px);
    delta.colwise() = cotangents.transpose() / static_cast<double>(px);

    for (int l = L; l >= 1; --l) {
        const FilterBank& bank = params.filters[l - 1];
        FilterBank dbank(bank.n_out, bank.n_in);
        Eigen::VectorXd dbias(bank.n_out);
        const bool has_prev = l > 1;
        const Eigen::MatrixXd act = has_prev ? Eigen::MatrixXd(trace.preactivations[l - 2].transpose().cwiseMax(0.0))
                                             : Eigen::MatrixXd(trace.inputs.transpose());
        Eigen::MatrixXd delta_prev;
        if (has_prev) delta_prev = Eigen::MatrixXd::Zero(N, static_cast<Eigen::Index>(bank.n_in) * px);

        for (int r = 0; r < bank.n_out; ++r) {
            dbias(r) = delta.middleCols(r * px, px).sum();
            for (int c = 0; c < bank.n_in; ++c) {
                const double* w = bank.filter(r, c);
                double* g = dbank.filter(r, c);
                for (const TapLink& k : links) {
                    g[k.tap] += delta.col(r * px + k.out).dot(act.col(c * px + k.in));
                    if (has_prev && w[k.tap] != 0.0)
                        delta_prev.col(c * px + k.in) += w[k.tap] * delta.col(r * px + k.out);
                }
            }
        }
        grad.dfilters[l - 1] = std::move(dbank);
        grad.dbiases[l - 1] = std::move(dbias);
        if (has_prev) {
            delta = delta_prev.cwiseProduct(
                (trace.preactivations[l - 2].transpose().array() > 0.0).cast<double>().matrix());
        }
    }
    return grad;
}

CnnGradient cnn_param_gradient(const CnnParams& params, const CnnTrace& trace, double cotangent) {
    const int L = params.config.depth;
    const int px = params.config.pixels();
    require_shape(static_cast<int>(trace.preactivations.size()) == L,
                  "trace depth does not match the parameter set");
    require_shape(trace.input.rows() == params.config.d && trace.input.cols() == params.config.d,
                  "trace input is not d x d");
    CnnBatchTrace batch;
    batch.inputs = Eigen::Map<const Eigen::VectorXd>(trace.input.data(), px);
    for (int l = 1; l <= L; ++l) {
        const auto& channels = trace.preactivations[l - 1];
        require_shape(static_cast<int>(channels.size()) == params.config.channels(l),
                      "trace channel count does not match the parameter set");
        Eigen::VectorXd stacked(static_cast<Eigen::Index>(channels.size()) * px);
        for (std::size_t c = 0; c < channels.size(); ++c) {
            stacked.segment(static_cast<Eigen::Index>(c) * px, px) =
                Eigen::Map<const Eigen::VectorXd>(channels[c].data(), px);
        }
        batch.preactivations.push_back(std::move(stacked));
    }
    batch.pooled = Eigen::RowVectorXd::Constant(1, trace.pooled_output);
    return cnn_batch_gradient(params, batch, Eigen::RowVectorXd::Constant(1, cotangent));
}

double cnn_empirical_scaled_ntk(const CnnParams& params, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& x_prime, NtkScale scale) {
    const Eigen::VectorXd g = cnn_param_gradient(params, cnn_forward(params, x), 1.0).flatten();
    const Eigen::VectorXd gp =
        cnn_param_gradient(params, cnn_forward(params, x_prime), 1.0).flatten();
    return g.dot(gp) / ntk_divisor(scale, params.config.depth, params.config.c_l);
}

}  // namespace deepntk
