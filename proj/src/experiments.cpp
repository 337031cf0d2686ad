#include "deepntk/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "deepntk/errors.hpp"
#include "deepntk/kernels.hpp"

namespace deepntk {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::pair<ScenarioKind, const char*> kKindNames[] = {
    {ScenarioKind::NtkConvergence, "ntk_convergence"},
    {ScenarioKind::InvarianceSweep, "invariance_sweep"},
    {ScenarioKind::TrainabilityComparison, "trainability_comparison"},
    {ScenarioKind::AccumulationProfile, "accumulation_profile"},
    {ScenarioKind::RegressionEquivalence, "regression_equivalence"},
};

}  // namespace

std::string to_string(ScenarioKind kind) {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    throw ConfigError("unknown scenario kind");
}

ScenarioKind scenario_kind_from_string(const std::string& name) {
    for (const auto& [k, n] : kKindNames)
        if (name == n) return k;
    throw ConfigError("unknown scenario kind: " + name);
}

// --- configuration -------------------------------------------------------

double ClRule::c_l(int depth) const {
    return mode == Mode::Fixed ? value : std::pow(static_cast<double>(depth), value);
}

std::string ClRule::describe() const {
    return (mode == Mode::Fixed ? "fixed:" : "power:") + format_double(value);
}

void ClRule::validate() const {
    require_config(std::isfinite(value) && value > 0.0, "C_L rule value must be positive");
    if (mode == Mode::Power) {
        require_config(value > 2.0, "power-rule exponent must exceed 2 so that L^2 / C_L -> 0");
    }
}

void RunConfig::validate() const {
    require_config(arch == "mlp" || arch == "cnn", "arch must be mlp or cnn");
    require_config(!inits.empty(), "at least one init scheme is required");
    for (const auto& i : inits) require_config(i == "deep_narrow" || i == "kaiming", "unknown init scheme: " + i);
    require_config(!depths.empty(), "depth list must not be empty");
    for (int d : depths) require_config(d >= 2, "depths must be at least 2");
    require_config(!seeds.empty(), "seed list must not be empty");
    require_config(!lrs.empty(), "learning-rate list must not be empty");
    for (double lr : lrs) require_config(std::isfinite(lr) && lr > 0.0, "learning rates must be positive");
    require_config(rho > 0.0 && beta > 0.0, "rho and beta must be positive");
    require_config(steps >= 0, "steps must be non-negative");
    require_config(snapshot_every >= 0 && log_every >= 1, "snapshot and log cadences must be valid");
    require_config(gamma_points >= 1 && query_points >= 1, "probe grids need at least one point");
    require_config(image_side >= 1, "image side must be positive");
    require_config(dataset.source == "toy" || dataset.source == "idx", "dataset source must be toy or idx");
    require_config(dataset.target_mode == "one_hot" || dataset.target_mode == "binary",
                   "target mode must be one_hot or binary");
    c_l_rule.validate();

    switch (kind) {
        case ScenarioKind::NtkConvergence:
            break;
        case ScenarioKind::InvarianceSweep:
            require_config(steps > 0 && snapshot_every > 0, "invariance sweep needs steps and snapshots");
            break;
        case ScenarioKind::TrainabilityComparison:
            require_config(steps > 0, "trainability comparison needs steps > 0");
            break;
        case ScenarioKind::AccumulationProfile:
            require_config(steps >= 0, "steps must be non-negative");
            break;
        case ScenarioKind::RegressionEquivalence:
            require_config(arch == "mlp", "regression equivalence runs on the MLP");
            require_config(dataset.source == "toy", "regression equivalence uses the toy problem");
            require_config(steps > 0, "regression equivalence needs steps > 0");
            break;
    }
    if (kind != ScenarioKind::TrainabilityComparison) {
        require_config(inits.size() == 1 && inits.front() == "deep_narrow",
                       "only the trainability comparison takes other init schemes");
    }
}

json to_json(const RunConfig& c) {
    json ds = {{"source", c.dataset.source},     {"n", c.dataset.n},
               {"gridded", c.dataset.gridded},   {"seed", c.dataset.seed},
               {"images", c.dataset.images},     {"labels", c.dataset.labels},
               {"limit", c.dataset.limit},       {"pre_pool", c.dataset.pre_pool},
               {"classes", c.dataset.classes},   {"target_mode", c.dataset.target_mode},
               {"positive_eps", c.dataset.positive_eps}};
    return {{"kind", to_string(c.kind)},
            {"arch", c.arch},
            {"inits", c.inits},
            {"depths", c.depths},
            {"c_l_rule",
             {{"mode", c.c_l_rule.mode == ClRule::Mode::Fixed ? "fixed" : "power"}, {"value", c.c_l_rule.value}}},
            {"rho", c.rho},
            {"beta", c.beta},
            {"seeds", c.seeds},
            {"lrs", c.lrs},
            {"steps", c.steps},
            {"snapshot_every", c.snapshot_every},
            {"log_every", c.log_every},
            {"gamma_points", c.gamma_points},
            {"query_points", c.query_points},
            {"image_side", c.image_side},
            {"dataset", ds},
            {"output", c.output}};
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "' in " + where);
    }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    reject_unknown(j,
                   {"kind", "arch", "inits", "depths", "c_l_rule", "rho", "beta", "seeds", "lrs", "steps",
                    "snapshot_every", "log_every", "gamma_points", "query_points", "image_side", "dataset", "output"},
                   "run config");
    RunConfig c;
    std::string kind = to_string(c.kind);
    read_field(j, "kind", kind);
    c.kind = scenario_kind_from_string(kind);
    read_field(j, "arch", c.arch);
    read_field(j, "inits", c.inits);
    read_field(j, "depths", c.depths);
    read_field(j, "rho", c.rho);
    read_field(j, "beta", c.beta);
    read_field(j, "seeds", c.seeds);
    read_field(j, "lrs", c.lrs);
    read_field(j, "steps", c.steps);
    read_field(j, "snapshot_every", c.snapshot_every);
    read_field(j, "log_every", c.log_every);
    read_field(j, "gamma_points", c.gamma_points);
    read_field(j, "query_points", c.query_points);
    read_field(j, "image_side", c.image_side);
    read_field(j, "output", c.output);
    if (j.contains("c_l_rule")) {
        const json& r = j.at("c_l_rule");
        if (!r.is_object()) throw ConfigError("c_l_rule must be an object");
        reject_unknown(r, {"mode", "value"}, "c_l_rule");
        std::string mode = "power";
        read_field(r, "mode", mode);
        if (mode == "fixed") {
            c.c_l_rule.mode = ClRule::Mode::Fixed;
        } else if (mode == "power") {
            c.c_l_rule.mode = ClRule::Mode::Power;
        } else {
            throw ConfigError("c_l_rule mode must be fixed or power");
        }
        read_field(r, "value", c.c_l_rule.value);
    }
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        if (!d.is_object()) throw ConfigError("dataset must be an object");
        reject_unknown(d,
                       {"source", "n", "gridded", "seed", "images", "labels", "limit", "pre_pool", "classes",
                        "target_mode", "positive_eps"},
                       "dataset");
        read_field(d, "source", c.dataset.source);
        read_field(d, "n", c.dataset.n);
        read_field(d, "gridded", c.dataset.gridded);
        read_field(d, "seed", c.dataset.seed);
        read_field(d, "images", c.dataset.images);
        read_field(d, "labels", c.dataset.labels);
        read_field(d, "limit", c.dataset.limit);
        read_field(d, "pre_pool", c.dataset.pre_pool);
        read_field(d, "classes", c.dataset.classes);
        read_field(d, "target_mode", c.dataset.target_mode);
        read_field(d, "positive_eps", c.dataset.positive_eps);
    }
    c.validate();
    return c;
}

std::string canonical_config_text(const RunConfig& config) { return to_json(config).dump(); }

const std::vector<std::string>& provenance_columns() {
    static const std::vector<std::string> cols = {"kind", "depth", "c_l", "rho", "beta", "seed", "lr"};
    return cols;
}

Dataset load_dataset(const DatasetSpec& spec) {
    if (spec.source == "toy") return generate_toy_dataset(spec.n, spec.seed, spec.gridded);
    if (spec.source != "idx") throw ConfigError("dataset source must be toy or idx");
    IdxOptions opt;
    opt.limit = spec.limit;
    opt.pre_pool = spec.pre_pool;
    opt.classes = spec.classes;
    opt.positive_eps = spec.positive_eps;
    opt.target_mode = spec.target_mode == "binary" ? TargetMode::Binary : TargetMode::OneHot;
    return load_idx_dataset(spec.images, spec.labels, opt);
}

// --- probes --------------------------------------------------------------

Eigen::VectorXd probe_anchor() { return Eigen::Vector2d(std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0); }

Eigen::VectorXd probe_on_arc(double gamma) { return Eigen::Vector2d(std::cos(gamma), std::sin(gamma)); }

std::vector<double> probe_angles(int points) {
    std::vector<double> out;
    for (int k = 1; k <= points; ++k) out.push_back(k * std::numbers::pi / (2.0 * (points + 1)));
    return out;
}

namespace {

// Positive unit-norm probe images; the arc between them plays the role of
// the quarter circle for the CNN.
Eigen::MatrixXd image_anchor(int d) { return Eigen::MatrixXd::Constant(d, d, 1.0 / d); }

Eigen::MatrixXd image_on_arc(int d, double gamma) {
    Eigen::MatrixXd b(d, d);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) b(i, j) = (i + 1.0) * (j + 1.0);
    b /= b.norm();
    return std::cos(gamma) * image_anchor(d) + std::sin(gamma) * b;
}

Eigen::VectorXd flat(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

// One trained or untrained network, either architecture.
struct Net {
    std::variant<MlpParams, CnnParams> params;

    static Net make(const RunConfig& cfg, const std::string& init, int depth, std::uint64_t seed,
                    const Dataset* data) {
        const double c_l = cfg.c_l_rule.c_l(depth);
        if (cfg.arch == "mlp") {
            MlpConfig m;
            m.d_in = data ? static_cast<int>(data->inputs.rows()) : 2;
            m.d_out = data ? static_cast<int>(data->targets.rows()) : 1;
            m.depth = depth;
            m.c_l = c_l;
            m.rho = cfg.rho;
            m.beta = cfg.beta;
            return {init == "kaiming" ? init_kaiming_mlp(m, seed) : init_deep_narrow_mlp(m, seed)};
        }
        CnnConfig c;
        c.d = data ? data->image_side : cfg.image_side;
        if (c.d < 1) throw DataError("CNN runs need an image dataset");
        if (data && data->targets.rows() != 1) throw DataError("CNN runs need scalar targets (binary mode)");
        c.depth = depth;
        c.c_l = c_l;
        c.rho = cfg.rho;
        c.beta = cfg.beta;
        return {init == "kaiming" ? init_kaiming_cnn(c, seed) : init_deep_narrow_cnn(c, seed)};
    }

    double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        if (const auto* m = std::get_if<MlpParams>(&params)) return mlp_empirical_scaled_ntk(*m, a, b)(0, 0);
        const auto& c = std::get<CnnParams>(params);
        const int d = c.config.d;
        return cnn_empirical_scaled_ntk(c, Eigen::Map<const Eigen::MatrixXd>(a.data(), d, d),
                                        Eigen::Map<const Eigen::MatrixXd>(b.data(), d, d));
    }

    Eigen::MatrixXd predict(const Eigen::MatrixXd& inputs) const {
        if (const auto* m = std::get_if<MlpParams>(&params)) return mlp_forward_batch(*m, inputs).outputs();
        return cnn_forward_batch(std::get<CnnParams>(params), inputs).pooled;
    }

    std::int64_t hidden_units() const {
        if (const auto* m = std::get_if<MlpParams>(&params))
            return static_cast<std::int64_t>(m->config.depth - 1) * m->config.width();
        const auto& c = std::get<CnnParams>(params);
        return static_cast<std::int64_t>(c.config.depth - 1) * 3 * c.config.pixels();
    }

    struct Outcome {
        std::vector<double> loss;
        std::vector<std::vector<double>> kernels;
        std::vector<std::int64_t> crossings;
        bool diverged = false;
    };

    Outcome train(const Dataset& data, const TrainConfig& tc) {
        return std::visit(
            [&](auto& p) {
                auto run = train_gradient_descent(p, data, tc);
                p = std::move(run.final_params);
                return Outcome{std::move(run.loss_per_step), std::move(run.kernel_snapshots),
                               std::move(run.zero_crossings), run.status == TrainStatus::Diverged};
            },
            params);
    }
};

struct RowBuilder {
    ResultTable& table;
    std::vector<Cell> row;

    RowBuilder(ResultTable& t, const RunConfig& cfg, int depth, std::uint64_t seed, double lr) : table(t) {
        row = {to_string(cfg.kind),
               static_cast<std::int64_t>(depth),
               cfg.c_l_rule.c_l(depth),
               cfg.rho,
               cfg.beta,
               static_cast<std::int64_t>(seed),
               lr};
    }
    RowBuilder& add(Cell c) {
        row.push_back(std::move(c));
        return *this;
    }
    void emit() { table.rows.push_back(row); }
};

ResultTable make_table(const std::vector<std::string>& extra) {
    ResultTable t;
    t.columns = provenance_columns();
    t.columns.insert(t.columns.end(), extra.begin(), extra.end());
    return t;
}

TrainConfig train_config(const RunConfig& cfg, double lr, bool depth_scaled) {
    TrainConfig tc;
    tc.base_lr = lr;
    tc.steps = cfg.steps;
    tc.snapshot_every = cfg.snapshot_every;
    tc.depth_scaled_step = depth_scaled;
    return tc;
}

double limit_value(const RunConfig& cfg, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (cfg.arch == "mlp") {
        return mlp_limit_kernel(a, b, KernelSpec{cfg.rho, cfg.beta, MlpGeometry{static_cast<int>(a.size()), 1}});
    }
    const int d = cfg.image_side;
    return cnn_limit_kernel(Eigen::Map<const Eigen::MatrixXd>(a.data(), d, d),
                            Eigen::Map<const Eigen::MatrixXd>(b.data(), d, d),
                            KernelSpec{cfg.rho, cfg.beta, CnnGeometry{d}});
}

// Probe pair (anchor, point at angle gamma) in the input space of the arch.
std::pair<Eigen::VectorXd, Eigen::VectorXd> probe_pair(const RunConfig& cfg, double gamma) {
    if (cfg.arch == "mlp") return {probe_anchor(), probe_on_arc(gamma)};
    return {flat(image_anchor(cfg.image_side)), flat(image_on_arc(cfg.image_side, gamma))};
}

ResultTable run_ntk_convergence(const RunConfig& cfg) {
    ResultTable table = make_table({"gamma", "kernel_init", "kernel_trained", "kernel_limit", "abs_error"});
    const auto angles = probe_angles(cfg.gamma_points);
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;
    std::vector<double> limits;
    for (double g : angles) {
        pairs.push_back(probe_pair(cfg, g));
        limits.push_back(limit_value(cfg, pairs.back().first, pairs.back().second));
    }
    std::optional<Dataset> data;
    if (cfg.steps > 0) {
        data = load_dataset(cfg.dataset);
        if (cfg.arch == "cnn" && data->image_side != cfg.image_side) {
            throw ConfigError("image_side must match the dataset's image side");
        }
    }
    const double lr = cfg.lrs.front();
    for (int depth : cfg.depths) {
        for (std::uint64_t seed : cfg.seeds) {
            Net net = Net::make(cfg, "deep_narrow", depth, seed, data ? &*data : nullptr);
            std::vector<double> init_values;
            for (const auto& [a, b] : pairs) init_values.push_back(net.kernel(a, b));
            std::vector<double> trained(angles.size(), kNaN);
            if (data) {
                TrainConfig tc = train_config(cfg, lr, true);
                tc.snapshot_every = 0;
                net.train(*data, tc);
                for (std::size_t k = 0; k < pairs.size(); ++k) trained[k] = net.kernel(pairs[k].first, pairs[k].second);
            }
            for (std::size_t k = 0; k < angles.size(); ++k) {
                RowBuilder(table, cfg, depth, seed, lr)
                    .add(angles[k])
                    .add(init_values[k])
                    .add(trained[k])
                    .add(limits[k])
                    .add(std::abs(init_values[k] - limits[k]))
                    .emit();
            }
        }
    }
    return table;
}

constexpr double kInvarianceProbeAngle = std::numbers::pi / 6.0;

ResultTable run_invariance_sweep(const RunConfig& cfg) {
    ResultTable table = make_table({"kernel_init", "kernel_final", "max_deviation", "relative_deviation",
                                    "initial_loss", "final_loss", "max_zero_crossings", "crossing_fraction",
                                    "diverged"});
    const Dataset data = load_dataset(cfg.dataset);
    const auto probe = cfg.arch == "mlp"
                           ? probe_pair(cfg, kInvarianceProbeAngle)
                           : std::make_pair(Eigen::VectorXd(data.inputs.col(0)), Eigen::VectorXd(data.inputs.col(1 % data.size())));
    for (int depth : cfg.depths) {
        for (std::uint64_t seed : cfg.seeds) {
            for (double lr : cfg.lrs) {
                Net net = Net::make(cfg, "deep_narrow", depth, seed, &data);
                TrainConfig tc = train_config(cfg, lr, true);
                tc.record_zero_crossings = true;
                tc.kernel_probe_pairs = {probe};
                const auto out = net.train(data, tc);
                const double k0 = out.kernels.front().front();
                double max_dev = 0.0;
                for (const auto& snap : out.kernels) max_dev = std::max(max_dev, std::abs(snap.front() - k0));
                const std::int64_t max_cross =
                    out.crossings.empty() ? 0 : *std::max_element(out.crossings.begin(), out.crossings.end());
                const double units = static_cast<double>(net.hidden_units()) * static_cast<double>(data.size());
                RowBuilder(table, cfg, depth, seed, lr)
                    .add(k0)
                    .add(out.kernels.back().front())
                    .add(max_dev)
                    .add(max_dev / std::abs(k0))
                    .add(out.loss.front())
                    .add(out.loss.back())
                    .add(max_cross)
                    .add(static_cast<double>(max_cross) / units)
                    .add(static_cast<std::int64_t>(out.diverged))
                    .emit();
            }
        }
    }
    return table;
}

ResultTable run_trainability(const RunConfig& cfg) {
    ResultTable table = make_table({"init", "step", "loss", "loss_ratio", "diverged"});
    const Dataset data = load_dataset(cfg.dataset);
    for (const auto& init : cfg.inits) {
        for (int depth : cfg.depths) {
            for (double lr : cfg.lrs) {
                for (std::uint64_t seed : cfg.seeds) {
                    Net net = Net::make(cfg, init, depth, seed, &data);
                    TrainConfig tc = train_config(cfg, lr, init == "deep_narrow");
                    tc.snapshot_every = 0;
                    const auto out = net.train(data, tc);
                    const double l0 = out.loss.front();
                    const auto last = static_cast<int>(out.loss.size()) - 1;
                    for (int s = 0; s <= last; ++s) {
                        if (s % cfg.log_every != 0 && s != last) continue;
                        RowBuilder(table, cfg, depth, seed, lr)
                            .add(init)
                            .add(static_cast<std::int64_t>(s))
                            .add(out.loss[static_cast<std::size_t>(s)])
                            .add(out.loss[static_cast<std::size_t>(s)] / l0)
                            .add(static_cast<std::int64_t>(out.diverged))
                            .emit();
                    }
                }
            }
        }
    }
    return table;
}

ResultTable run_accumulation(const RunConfig& cfg) {
    ResultTable table = make_table({"layer", "value", "final_loss"});
    const Dataset data = load_dataset(cfg.dataset);
    for (int depth : cfg.depths) {
        for (std::uint64_t seed : cfg.seeds) {
            for (double lr : cfg.lrs) {
                Net net = Net::make(cfg, "deep_narrow", depth, seed, &data);
                double final_loss = quadratic_loss(net.predict(data.inputs), data.targets);
                if (cfg.steps > 0) {
                    TrainConfig tc = train_config(cfg, lr, true);
                    tc.snapshot_every = 0;
                    final_loss = net.train(data, tc).loss.back();
                }
                const double c_l = cfg.c_l_rule.c_l(depth);
                std::vector<double> values;
                if (const auto* m = std::get_if<MlpParams>(&net.params)) {
                    const auto t = mlp_forward(*m, data.inputs.col(0));
                    for (int l = 1; l < depth; ++l) {
                        const double last = t.preactivations[static_cast<std::size_t>(l - 1)](m->config.width() - 1);
                        values.push_back(std::max(last, 0.0) - c_l);
                    }
                    values.push_back(t.output()(m->config.d_out - 1));
                } else {
                    const auto& c = std::get<CnnParams>(net.params);
                    const auto t = cnn_forward(c, data.image(0));
                    for (int l = 1; l < depth; ++l) {
                        values.push_back(average_pool(t.preactivations[static_cast<std::size_t>(l - 1)][2].cwiseMax(0.0)) - c_l);
                    }
                    values.push_back(t.pooled_output);
                }
                for (int l = 1; l <= depth; ++l) {
                    RowBuilder(table, cfg, depth, seed, lr)
                        .add(static_cast<std::int64_t>(l))
                        .add(values[static_cast<std::size_t>(l - 1)])
                        .add(final_loss)
                        .emit();
                }
            }
        }
    }
    return table;
}

ResultTable run_regression_equivalence(const RunConfig& cfg) {
    ResultTable table = make_table({"final_loss", "sup_gap_ntk", "sup_gap_flow", "target_range", "relative_gap_ntk",
                                    "relative_gap_flow", "identity_gap", "diverged"});
    const Dataset data = load_dataset(cfg.dataset);
    const int n = static_cast<int>(data.size());
    const KernelSpec spec{cfg.rho, cfg.beta, MlpGeometry{2, 1}};
    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) K(i, j) = K(j, i) = mlp_limit_kernel(data.inputs.col(i), data.inputs.col(j), spec);
    const FlowState flow(K, data.targets);

    // Held-out queries sit between the gridded angles.
    const int q = cfg.query_points;
    Eigen::MatrixXd queries(2, q);
    Eigen::MatrixXd rows(n, q);
    Eigen::RowVectorXd truth(q), ntk(q);
    for (int k = 0; k < q; ++k) {
        queries.col(k) = probe_on_arc((k + 0.5) * std::numbers::pi / (2.0 * q));
        truth(k) = queries(0, k) * queries(1, k);
        for (int i = 0; i < n; ++i) rows(i, k) = mlp_limit_kernel(queries.col(k), data.inputs.col(i), spec);
        ntk(k) = kernel_regression_predict(flow, rows.col(k))(0);
    }
    const double range = truth.maxCoeff() - truth.minCoeff();
    const double t_big = 40.0 * n / flow.min_eigenvalue();
    double identity_gap = 0.0;
    for (int k = 0; k < q; ++k)
        identity_gap = std::max(identity_gap, std::abs(kernel_flow_predict(flow, rows.col(k), t_big)(0) - ntk(k)));

    for (int depth : cfg.depths) {
        for (std::uint64_t seed : cfg.seeds) {
            for (double lr : cfg.lrs) {
                Net net = Net::make(cfg, "deep_narrow", depth, seed, &data);
                TrainConfig tc = train_config(cfg, lr, true);
                tc.snapshot_every = 0;
                const auto out = net.train(data, tc);
                const Eigen::RowVectorXd pred = net.predict(queries).row(0);
                Eigen::RowVectorXd flow_pred(q);
                for (int k = 0; k < q; ++k) flow_pred(k) = kernel_flow_predict(flow, rows.col(k), lr * cfg.steps)(0);
                const double gap_ntk = (pred - ntk).cwiseAbs().maxCoeff();
                const double gap_flow = (pred - flow_pred).cwiseAbs().maxCoeff();
                RowBuilder(table, cfg, depth, seed, lr)
                    .add(out.loss.back())
                    .add(gap_ntk)
                    .add(gap_flow)
                    .add(range)
                    .add(gap_ntk / range)
                    .add(gap_flow / range)
                    .add(identity_gap)
                    .add(static_cast<std::int64_t>(out.diverged))
                    .emit();
            }
        }
    }
    return table;
}

}  // namespace

ResultTable run_scenario(const RunConfig& config) {
    config.validate();
    switch (config.kind) {
        case ScenarioKind::NtkConvergence:
            return run_ntk_convergence(config);
        case ScenarioKind::InvarianceSweep:
            return run_invariance_sweep(config);
        case ScenarioKind::TrainabilityComparison:
            return run_trainability(config);
        case ScenarioKind::AccumulationProfile:
            return run_accumulation(config);
        case ScenarioKind::RegressionEquivalence:
            return run_regression_equivalence(config);
    }
    throw ConfigError("unknown scenario kind");
}

std::string scenario_csv(const RunConfig& config, const ResultTable& table) {
    return render_csv(table, {"deepntk scenario " + to_string(config.kind), "c_l rule " + config.c_l_rule.describe(),
                              "config: " + canonical_config_text(config)});
}

std::string rerun_from_csv(const std::string& csv) {
    json j;
    try {
        j = json::parse(extract_config_comment(csv));
    } catch (const json::exception& e) {
        throw DataError(std::string("config comment is not valid JSON: ") + e.what());
    }
    const RunConfig cfg = run_config_from_json(j);
    return scenario_csv(cfg, run_scenario(cfg));
}

}  // namespace deepntk
