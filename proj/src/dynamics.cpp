#include "deepntk/dynamics.hpp"

#include <cmath>
#include <stdexcept>

#include "deepntk/errors.hpp"

namespace deepntk {

Eigen::MatrixXd Dataset::image(Eigen::Index n) const {
    require_shape(image_side > 0, "dataset does not hold images");
    return Eigen::Map<const Eigen::MatrixXd>(inputs.col(n).data(), image_side, image_side);
}

Eigen::Index Dataset::count_norm_above_one() const {
    return (inputs.colwise().norm().array() > 1.0).count();
}

void Dataset::validate() const {
    if (inputs.cols() < 1) throw DataError("dataset is empty");
    if (targets.cols() != inputs.cols()) throw DataError("input and target counts differ");
    if (image_side > 0 && inputs.rows() != static_cast<Eigen::Index>(image_side) * image_side) {
        throw DataError("image rows do not match the declared side length");
    }
}

double quadratic_loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets) {
    require_shape(predictions.rows() == targets.rows() && predictions.cols() == targets.cols(),
                  "predictions and targets must have the same shape");
    require_shape(predictions.cols() >= 1, "loss needs at least one sample");
    return 0.5 * (predictions - targets).squaredNorm() / static_cast<double>(predictions.cols());
}

namespace {

double effective_step(const TrainConfig& config, int depth, double c_l) {
    return config.depth_scaled_step ? config.base_lr / (static_cast<double>(depth) * c_l * c_l)
                                    : config.base_lr;
}

void apply_update(MlpParams& params, const ParamGradient& grad, double step) {
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        params.weights[l] -= step * grad.dweights[l];
        params.biases[l] -= step * grad.dbiases[l];
    }
}

void apply_update(CnnParams& params, const CnnGradient& grad, double step) {
    for (std::size_t l = 0; l < params.filters.size(); ++l) {
        auto& taps = params.filters[l].taps;
        const auto& dtaps = grad.dfilters[l].taps;
        for (std::size_t k = 0; k < taps.size(); ++k) taps[k] -= step * dtaps[k];
        params.biases[l] -= step * grad.dbiases[l];
    }
}

std::vector<double> probe_kernels(const MlpParams& params, const TrainConfig& config) {
    std::vector<double> out;
    out.reserve(config.kernel_probe_pairs.size());
    for (const auto& [a, b] : config.kernel_probe_pairs) {
        out.push_back(mlp_empirical_scaled_ntk(params, a, b)(0, 0));
    }
    return out;
}

std::vector<double> probe_kernels(const CnnParams& params, const TrainConfig& config) {
    const int d = params.config.d;
    std::vector<double> out;
    out.reserve(config.kernel_probe_pairs.size());
    for (const auto& [a, b] : config.kernel_probe_pairs) {
        require_shape(a.size() == d * d && b.size() == d * d, "probe images must have d*d pixels");
        out.push_back(cnn_empirical_scaled_ntk(params, Eigen::Map<const Eigen::MatrixXd>(a.data(), d, d),
                                               Eigen::Map<const Eigen::MatrixXd>(b.data(), d, d)));
    }
    return out;
}

struct MlpOps {
    using Params = MlpParams;
    using Trace = BatchTrace;
    static Trace forward(const Params& p, const Dataset& data) {
        return mlp_forward_batch(p, data.inputs);
    }
    static const Eigen::MatrixXd& outputs(const Trace& t) { return t.outputs(); }
    static ParamGradient gradient(const Params& p, const Trace& t, const Eigen::MatrixXd& cot) {
        return mlp_batch_gradient(p, t, cot);
    }
    static std::int64_t crossings(const Trace& ref, const Trace& now) {
        return zero_crossing_count(ref, now);
    }
    static void check(const Params& p, const Dataset& data) {
        p.check_shapes();
        require_shape(data.inputs.rows() == p.config.d_in, "dataset inputs must have d_in rows");
        require_shape(data.targets.rows() == p.config.d_out, "dataset targets must have d_out rows");
    }
};

struct CnnOps {
    using Params = CnnParams;
    using Trace = CnnBatchTrace;
    static Trace forward(const Params& p, const Dataset& data) {
        return cnn_forward_batch(p, data.inputs);
    }
    static Eigen::MatrixXd outputs(const Trace& t) { return t.pooled; }
    static CnnGradient gradient(const Params& p, const Trace& t, const Eigen::MatrixXd& cot) {
        return cnn_batch_gradient(p, t, cot.row(0));
    }
    // Hidden pre-activation sign changes, layers 1..L-1.
    static std::int64_t crossings(const Trace& ref, const Trace& now) {
        std::int64_t count = 0;
        for (std::size_t l = 0; l + 1 < ref.preactivations.size(); ++l) {
            count += ((ref.preactivations[l].array() > 0.0) !=
                      (now.preactivations[l].array() > 0.0))
                         .count();
        }
        return count;
    }
    static void check(const Params& p, const Dataset& data) {
        p.check_shapes();
        require_shape(data.inputs.rows() == p.config.pixels(), "dataset images must be d x d");
        require_shape(data.targets.rows() == 1, "CNN targets must be scalars");
    }
};

template <typename Ops>
TrainingTrace<typename Ops::Params> run_descent(const typename Ops::Params& initial,
                                                const Dataset& data, const TrainConfig& config) {
    data.validate();
    Ops::check(initial, data);
    if (config.steps < 0) throw ConfigError("steps must be non-negative");
    if (!(config.base_lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (config.snapshot_every < 0) throw ConfigError("snapshot_every must be non-negative");

    TrainingTrace<typename Ops::Params> out;
    out.final_params = initial;
    auto& params = out.final_params;
    const double step =
        effective_step(config, initial.config.depth, initial.config.c_l);
    const double n = static_cast<double>(data.size());

    const typename Ops::Trace initial_trace = Ops::forward(params, data);
    const bool snapshots = config.snapshot_every > 0;

    auto snapshot = [&](int s, const typename Ops::Trace& now) {
        out.snapshot_steps.push_back(s);
        out.kernel_snapshots.push_back(probe_kernels(params, config));
        if (config.record_zero_crossings) out.zero_crossings.push_back(Ops::crossings(initial_trace, now));
    };

    for (int s = 0; s <= config.steps; ++s) {
        typename Ops::Trace trace = s == 0 ? initial_trace : Ops::forward(params, data);
        const Eigen::MatrixXd preds = Ops::outputs(trace);
        const double loss = quadratic_loss(preds, data.targets);
        out.loss_per_step.push_back(loss);
        if (!std::isfinite(loss)) {
            out.status = TrainStatus::Diverged;
            break;
        }
        if (snapshots && (s % config.snapshot_every == 0 || s == config.steps)) snapshot(s, trace);
        if (s == config.steps) break;

        const Eigen::MatrixXd cotangents = (preds - data.targets) / n;
        apply_update(params, Ops::gradient(params, trace, cotangents), step);
    }
    return out;
}

}  // namespace

TrainingTrace<MlpParams> train_gradient_descent(const MlpParams& params, const Dataset& data,
                                                const TrainConfig& config) {
    return run_descent<MlpOps>(params, data, config);
}

TrainingTrace<CnnParams> train_gradient_descent(const CnnParams& params, const Dataset& data,
                                                const TrainConfig& config) {
    return run_descent<CnnOps>(params, data, config);
}

FlowState::FlowState(Eigen::MatrixXd gram, Eigen::MatrixXd targets, double ridge)
    : gram_(std::move(gram)), targets_(std::move(targets)) {
    require_shape(gram_.rows() == gram_.cols() && gram_.rows() >= 1, "gram must be square");
    require_shape(targets_.cols() == gram_.rows(), "one target column per training point");
    if (ridge < 0.0) throw ConfigError("ridge must be non-negative");
    const double scale = std::max(1.0, gram_.cwiseAbs().maxCoeff());
    if ((gram_ - gram_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw std::invalid_argument("gram matrix is not symmetric");
    }
    if (ridge > 0.0) gram_.diagonal().array() += ridge;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram_);
    if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    eigenvalues_ = solver.eigenvalues();
    eigenvectors_ = solver.eigenvectors();
    if (eigenvalues_.minCoeff() < -1e-8 * scale) {
        throw std::invalid_argument("gram matrix is not positive semidefinite");
    }
    projected_targets_ = eigenvectors_.transpose() * targets_.transpose();
}

Eigen::MatrixXd FlowState::spectral_apply(const Eigen::VectorXd& weights) const {
    return eigenvectors_ * (weights.asDiagonal() * projected_targets_);
}

Eigen::MatrixXd FlowState::training_predictions(double t) const {
    if (t < 0.0) throw std::invalid_argument("flow time must be non-negative");
    const double n = static_cast<double>(size());
    Eigen::VectorXd w(eigenvalues_.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = -std::expm1(-t * eigenvalues_(i) / n);
    return spectral_apply(w).transpose();
}

namespace {

void require_invertible(const FlowState& flow) {
    if (flow.min_eigenvalue() <= kMinGramEigenvalue) {
        throw std::domain_error("gram matrix is numerically singular; set a ridge");
    }
}

}  // namespace

Eigen::VectorXd kernel_regression_predict(const FlowState& flow, const Eigen::VectorXd& kernel_row) {
    require_shape(kernel_row.size() == flow.size(), "kernel row must have N entries");
    require_invertible(flow);
    const Eigen::VectorXd inv = flow.eigenvalues_.cwiseInverse();
    return flow.spectral_apply(inv).transpose() * kernel_row;
}

Eigen::VectorXd kernel_flow_predict(const FlowState& flow, const Eigen::VectorXd& kernel_row,
                                    double t) {
    if (t < 0.0) throw std::invalid_argument("flow time must be non-negative");
    require_shape(kernel_row.size() == flow.size(), "kernel row must have N entries");
    require_invertible(flow);
    const double n = static_cast<double>(flow.size());
    Eigen::VectorXd w(flow.eigenvalues_.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double lambda = flow.eigenvalues_(i);
        w(i) = -std::expm1(-t * lambda / n) / lambda;
    }
    return flow.spectral_apply(w).transpose() * kernel_row;
}

double flow_loss(const FlowState& flow, double t) {
    if (t < 0.0) throw std::invalid_argument("flow time must be non-negative");
    const double n = static_cast<double>(flow.size());
    // Residual f_t - f* = -exp(-tK/N) f* in the eigenbasis.
    double acc = 0.0;
    const Eigen::MatrixXd proj = flow.eigenvectors().transpose() * flow.targets().transpose();
    for (Eigen::Index i = 0; i < proj.rows(); ++i) {
        const double decay = std::exp(-2.0 * t * flow.eigenvalues()(i) / n);
        acc += decay * proj.row(i).squaredNorm();
    }
    return 0.5 * acc / n;
}

}  // namespace deepntk
