#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "deepntk/mlp.hpp"  // NtkScale

namespace deepntk {

/// Depth-L CNN on d x d single-channel images: 3x3 filters, stride 1,
/// zero padding 1, channel plan 1 -> 3 -> ... -> 3 -> 1, global average pool.
struct CnnConfig {
    int d = 4;
    int depth = 2;
    double c_l = 1.0;
    double rho = 1.0;
    double beta = 1.0;

    int channels(int layer) const;  // n_l, layer in 0..L
    int pixels() const { return d * d; }
    void validate() const;
};

/// Filter bank of one layer, shape n_out x n_in x 3 x 3.
struct FilterBank {
    int n_out = 0;
    int n_in = 0;
    std::vector<double> taps;

    FilterBank() = default;
    FilterBank(int out, int in) : n_out(out), n_in(in), taps(static_cast<std::size_t>(out) * in * 9, 0.0) {}

    double& at(int r, int c, int a, int b) { return taps[index(r, c, a, b)]; }
    double at(int r, int c, int a, int b) const { return taps[index(r, c, a, b)]; }
    const double* filter(int r, int c) const { return taps.data() + index(r, c, 0, 0); }
    double* filter(int r, int c) { return taps.data() + index(r, c, 0, 0); }

    Eigen::Matrix3d matrix(int r, int c) const;
    void set(int r, int c, const Eigen::Matrix3d& m);

private:
    std::size_t index(int r, int c, int a, int b) const {
        return ((static_cast<std::size_t>(r) * n_in + c) * 3 + a) * 3 + b;
    }
};

struct CnnParams {
    CnnConfig config;
    std::vector<FilterBank> filters;      // w^1..w^L
    std::vector<Eigen::VectorXd> biases;  // b^1..b^L
    std::vector<Eigen::Matrix3d> init_u;  // recorded draws, layers 1..L-1
    std::vector<double> init_v;

    std::size_t parameter_count() const;
    void check_shapes() const;
};

/// Pre-activations of one image; preactivations[l][c] is channel c of f^{l+1}.
struct CnnTrace {
    Eigen::MatrixXd input;
    std::vector<std::vector<Eigen::MatrixXd>> preactivations;
    double pooled_output = 0.0;
    bool has_nonpositive_input = false;
};

/// Batched pre-activations. Each column is one image; channel c of a layer
/// occupies rows [c*d*d, (c+1)*d*d) in column-major pixel order.
struct CnnBatchTrace {
    Eigen::MatrixXd inputs;  // d*d x N
    std::vector<Eigen::MatrixXd> preactivations;
    Eigen::RowVectorXd pooled;
};

struct CnnGradient {
    std::vector<FilterBank> dfilters;
    std::vector<Eigen::VectorXd> dbiases;

    Eigen::VectorXd flatten() const;
};

/// [w * x]_{i,j} = <w, x[i-1:i+1, j-1:j+1]> with zeros outside the image.
Eigen::MatrixXd conv3x3_zero_pad(const Eigen::Matrix3d& filter, const Eigen::MatrixXd& image);

double average_pool(const Eigen::MatrixXd& a);

CnnParams init_deep_narrow_cnn(const CnnConfig& config, std::uint64_t seed);
CnnParams init_kaiming_cnn(const CnnConfig& config, std::uint64_t seed);

CnnTrace cnn_forward(const CnnParams& params, const Eigen::MatrixXd& x);
CnnBatchTrace cnn_forward_batch(const CnnParams& params, const Eigen::MatrixXd& inputs);

CnnGradient cnn_param_gradient(const CnnParams& params, const CnnTrace& trace, double cotangent);
CnnGradient cnn_batch_gradient(const CnnParams& params, const CnnBatchTrace& trace,
                               const Eigen::RowVectorXd& cotangents);

/// (1/scale) <d S(f^L)(x)/d theta, d S(f^L)(x')/d theta> from explicit
/// per-parameter gradients of the pooled output.
double cnn_empirical_scaled_ntk(const CnnParams& params, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& x_prime,
                                NtkScale scale = NtkScale::DepthTimesCl2);

}  // namespace deepntk
