#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace deepntk {

/// Depth-L ReLU MLP whose hidden layers all have width d_in + d_out + 1.
struct MlpConfig {
    int d_in = 1;
    int d_out = 1;
    int depth = 2;  // number of affine layers L
    double c_l = 1.0;
    double rho = 1.0;
    double beta = 1.0;

    int width() const { return d_in + d_out + 1; }
    int layer_width(int layer) const;  // layer in 1..L
    void validate() const;
};

/// Divisor applied to the raw NTK and to the gradient step.
enum class NtkScale {
    DepthTimesCl2,          // L * C_L^2
    DepthMinusOneTimesCl2,  // (L - 1) * C_L^2
    Unit,
};

double ntk_divisor(NtkScale scale, int depth, double c_l);

struct MlpParams {
    MlpConfig config;
    std::vector<Eigen::MatrixXd> weights;  // W^1..W^L
    std::vector<Eigen::VectorXd> biases;   // b^1..b^L
    // Random draws recorded by the deep-narrow initializer (layers 1..L-1);
    // empty for other initializers.
    std::vector<Eigen::RowVectorXd> init_u;
    std::vector<double> init_v;

    std::size_t parameter_count() const;
    void check_shapes() const;
};

/// Pre-activations f^1..f^L for a single input.
struct ForwardTrace {
    Eigen::VectorXd input;
    std::vector<Eigen::VectorXd> preactivations;
    bool has_nonpositive_input = false;

    const Eigen::VectorXd& output() const { return preactivations.back(); }
};

/// Pre-activations for a batch; column n belongs to input n.
struct BatchTrace {
    Eigen::MatrixXd inputs;
    std::vector<Eigen::MatrixXd> preactivations;

    const Eigen::MatrixXd& outputs() const { return preactivations.back(); }
};

struct ParamGradient {
    std::vector<Eigen::MatrixXd> dweights;
    std::vector<Eigen::VectorXd> dbiases;

    /// Concatenates every layer as [vec(dW^l) ; db^l] in layer order.
    Eigen::VectorXd flatten() const;
};

MlpParams init_deep_narrow_mlp(const MlpConfig& config, std::uint64_t seed);
MlpParams init_kaiming_mlp(const MlpConfig& config, std::uint64_t seed);

ForwardTrace mlp_forward(const MlpParams& params, const Eigen::VectorXd& x);
BatchTrace mlp_forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs);

/// Gradient of output_cotangent . f^L(x) with respect to every weight and bias.
/// sigma'(0) is taken to be 0.
ParamGradient mlp_param_gradient(const MlpParams& params, const ForwardTrace& trace,
                                 const Eigen::VectorXd& output_cotangent);

/// Sum over the batch of cotangent_n . f^L(x_n), differentiated in one sweep.
ParamGradient mlp_batch_gradient(const MlpParams& params, const BatchTrace& trace,
                                 const Eigen::MatrixXd& cotangents);

/// Scaled NTK by the layer recursion
///   Theta^l = A_l(x) Theta^{l-1} A_l(x')^T + (sigma(f^{l-1}(x)) . sigma(f^{l-1}(x')) + 1) I,
/// A_l = W^l diag(sigma'(f^{l-1})), with sigma(f^0) = x. Never builds a Jacobian.
Eigen::MatrixXd mlp_empirical_scaled_ntk(const MlpParams& params, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& x_prime,
                                         NtkScale scale = NtkScale::DepthTimesCl2);

/// Same kernel from recorded traces (lets callers reuse forward passes).
Eigen::MatrixXd mlp_empirical_scaled_ntk(const MlpParams& params, const ForwardTrace& trace,
                                         const ForwardTrace& trace_prime, NtkScale scale);

/// Explicit-Jacobian reference: J(x) J(x')^T / scale, J assembled row by row
/// from mlp_param_gradient. Test oracle; refuses networks above 1e6 parameters.
Eigen::MatrixXd mlp_ntk_jacobian_oracle(const MlpParams& params, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& x_prime,
                                        NtkScale scale = NtkScale::DepthTimesCl2);

/// Number of hidden neurons (layers 1..L-1) whose sign (strictly positive vs
/// not) differs between the two traces.
std::int64_t zero_crossing_count(const ForwardTrace& reference, const ForwardTrace& now);
std::int64_t zero_crossing_count(const BatchTrace& reference, const BatchTrace& now);

}  // namespace deepntk
