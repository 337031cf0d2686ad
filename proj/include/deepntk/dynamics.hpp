#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "deepntk/cnn.hpp"
#include "deepntk/mlp.hpp"

namespace deepntk {

/// Training set under the uniform empirical measure. Inputs are stored one
/// per column; images are flattened column-major with side `image_side`.
struct Dataset {
    Eigen::MatrixXd inputs;   // features x N
    Eigen::MatrixXd targets;  // d_out x N
    int image_side = 0;       // 0 for vector inputs

    Eigen::Index size() const { return inputs.cols(); }
    Eigen::MatrixXd image(Eigen::Index n) const;
    /// Number of inputs with Euclidean norm above 1.
    Eigen::Index count_norm_above_one() const;
    void validate() const;
};

struct TrainConfig {
    double base_lr = 0.1;
    int steps = 100;
    int snapshot_every = 0;  // 0: no snapshots
    /// Divide base_lr by L*C_L^2. Off for baselines trained with a raw step.
    bool depth_scaled_step = true;
    bool record_zero_crossings = false;
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> kernel_probe_pairs;
};

enum class TrainStatus { Ok, Diverged };

template <typename Params>
struct TrainingTrace {
    std::vector<double> loss_per_step;  // loss before each update, plus the final loss
    std::vector<int> snapshot_steps;
    /// kernel_snapshots[k][p]: (0,0) entry of the scaled NTK on probe pair p at snapshot k.
    std::vector<std::vector<double>> kernel_snapshots;
    std::vector<std::int64_t> zero_crossings;  // one per snapshot
    Params final_params;
    TrainStatus status = TrainStatus::Ok;
};

/// (1/2N) sum_i ||pred_i - target_i||^2 over columns.
double quadratic_loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets);

/// Full-batch gradient descent, theta <- theta - (eta / (L C_L^2)) grad loss.
/// A non-finite loss stops the run with TrainStatus::Diverged.
TrainingTrace<MlpParams> train_gradient_descent(const MlpParams& params, const Dataset& data,
                                                const TrainConfig& config);
TrainingTrace<CnnParams> train_gradient_descent(const CnnParams& params, const Dataset& data,
                                                const TrainConfig& config);

/// Kernel gradient flow under a fixed Gram matrix, solved in its eigenbasis.
class FlowState {
public:
    /// targets: d_out x N. A ridge is added to the Gram diagonal when positive.
    FlowState(Eigen::MatrixXd gram, Eigen::MatrixXd targets, double ridge = 0.0);

    Eigen::Index size() const { return gram_.rows(); }
    const Eigen::MatrixXd& gram() const { return gram_; }
    const Eigen::MatrixXd& targets() const { return targets_; }
    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
    const Eigen::MatrixXd& eigenvectors() const { return eigenvectors_; }
    double min_eigenvalue() const { return eigenvalues_.minCoeff(); }

    /// f_t on the training points, d_out x N.
    Eigen::MatrixXd training_predictions(double t) const;

    friend Eigen::VectorXd kernel_regression_predict(const FlowState& flow,
                                                     const Eigen::VectorXd& kernel_row);
    friend Eigen::VectorXd kernel_flow_predict(const FlowState& flow,
                                               const Eigen::VectorXd& kernel_row, double t);

private:
    // V diag(w) V^T f*^T, one column per output.
    Eigen::MatrixXd spectral_apply(const Eigen::VectorXd& weights) const;

    Eigen::MatrixXd gram_;
    Eigen::MatrixXd targets_;
    Eigen::VectorXd eigenvalues_;
    Eigen::MatrixXd eigenvectors_;
    Eigen::MatrixXd projected_targets_;  // V^T f*^T, N x d_out
};

constexpr double kMinGramEigenvalue = 1e-10;

/// k(x)^T K^{-1} f*(X), applied per output coordinate.
Eigen::VectorXd kernel_regression_predict(const FlowState& flow, const Eigen::VectorXd& kernel_row);

/// k(x)^T K^{-1} (I - exp(-t K / N)) f*(X), starting from f_0 = 0.
Eigen::VectorXd kernel_flow_predict(const FlowState& flow, const Eigen::VectorXd& kernel_row,
                                    double t);

/// Quadratic loss of f_t on the training points.
double flow_loss(const FlowState& flow, double t);

}  // namespace deepntk
