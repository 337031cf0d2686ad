// Command-line front end: kernel, train, experiment, dataset, checkpoint.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "deepntk/errors.hpp"
#include "deepntk/experiments.hpp"
#include "deepntk/io.hpp"
#include "deepntk/kernels.hpp"

using namespace deepntk;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

struct Shared {
    std::optional<int> depth;
    std::optional<double> cl;
    std::optional<std::string> cl_rule;
    std::optional<double> rho;
    std::optional<double> beta;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr;
    std::optional<int> steps;
    std::string out;
    std::string config;
};

void add_shared(CLI::App* app, Shared& s) {
    app->add_option("--depth", s.depth, "number of layers L");
    app->add_option("--cl", s.cl, "C_L (fixed rule) or the exponent p (power rule, C_L = L^p)");
    app->add_option("--cl-rule", s.cl_rule, "fixed or power")->check(CLI::IsMember({"fixed", "power"}));
    app->add_option("--rho", s.rho, "rho");
    app->add_option("--beta", s.beta, "beta");
    app->add_option("--seed", s.seed, "initialisation seed");
    app->add_option("--lr", s.lr, "base learning rate");
    app->add_option("--steps", s.steps, "gradient steps");
    app->add_option("--out", s.out, "output file (stdout when omitted)");
    app->add_option("--config", s.config, "JSON run config; flags override its fields");
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
    } else {
        write_text_file(path, text);
    }
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("not a number list: " + text);
        }
    }
    if (out.empty()) throw ConfigError("empty number list");
    return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Merges the shared flags into a run config (flags win over the file).
RunConfig resolve_run_config(const Shared& s) {
    json j = json::object();
    if (!s.config.empty()) {
        try {
            j = json::parse(read_text_file(s.config));
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
        }
    }
    if (s.depth) j["depths"] = {*s.depth};
    if (s.cl_rule || s.cl) {
        json rule = j.contains("c_l_rule") ? j["c_l_rule"] : json::object();
        if (s.cl_rule) rule["mode"] = *s.cl_rule;
        if (s.cl) rule["value"] = *s.cl;
        j["c_l_rule"] = rule;
    }
    if (s.rho) j["rho"] = *s.rho;
    if (s.beta) j["beta"] = *s.beta;
    if (s.seed) j["seeds"] = {*s.seed};
    if (s.lr) j["lrs"] = {*s.lr};
    if (s.steps) j["steps"] = *s.steps;
    if (!s.out.empty()) j["output"] = s.out;
    return run_config_from_json(j);
}

struct DataFlags {
    std::string source = "toy";
    int n = 8;
    bool grid = false;
    std::uint64_t data_seed = 0;
    std::string images;
    std::string labels;
    int limit = 0;
    bool pre_pool = false;
    std::string classes;
    std::string target_mode = "one_hot";
    double positive_eps = 0.0;
};

void add_data_flags(CLI::App* app, DataFlags& d) {
    app->add_option("--dataset", d.source, "toy or idx")->check(CLI::IsMember({"toy", "idx"}));
    app->add_option("--n", d.n, "toy points");
    app->add_flag("--grid", d.grid, "gridded toy angles");
    app->add_option("--data-seed", d.data_seed, "toy sampling seed");
    app->add_option("--images", d.images, "IDX image file");
    app->add_option("--labels", d.labels, "IDX label file");
    app->add_option("--limit", d.limit, "keep the first N matching images");
    app->add_flag("--pre-pool", d.pre_pool, "4x4 average pool before the network");
    app->add_option("--classes", d.classes, "comma-separated digit filter");
    app->add_option("--target-mode", d.target_mode, "one_hot or binary")
        ->check(CLI::IsMember({"one_hot", "binary"}));
    app->add_option("--positive-eps", d.positive_eps, "shift added to every pixel");
}

DatasetSpec to_spec(const DataFlags& d) {
    DatasetSpec s;
    s.source = d.source;
    s.n = d.n;
    s.gridded = d.grid;
    s.seed = d.data_seed;
    s.images = d.images;
    s.labels = d.labels;
    s.limit = d.limit;
    s.pre_pool = d.pre_pool;
    if (!d.classes.empty())
        for (double c : parse_list(d.classes)) s.classes.push_back(static_cast<int>(c));
    s.target_mode = d.target_mode;
    s.positive_eps = d.positive_eps;
    return s;
}

void warn_nonpositive(const Dataset& data) {
    const auto count = (data.inputs.array() <= 0.0).colwise().any().count();
    if (count > 0) {
        std::cerr << "warning: " << count << " of " << data.size()
                  << " inputs have non-positive entries (theory assumes the positive orthant)\n";
    }
    if (data.count_norm_above_one() > 0) {
        std::cerr << "warning: " << data.count_norm_above_one() << " inputs have norm above 1\n";
    }
}

json spec_json(const DatasetSpec& s) {
    RunConfig tmp;
    tmp.dataset = s;
    return to_json(tmp)["dataset"];
}

// --- subcommands ---------------------------------------------------------

int cmd_kernel(const Shared& s, const std::string& arch, const std::string& mode, const std::string& xs,
               const std::string& xps, int d_out, int side) {
    const double rho = s.rho.value_or(1.0);
    const double beta = s.beta.value_or(1.0);
    const int depth = s.depth.value_or(64);
    ClRule rule;
    rule.mode = s.cl_rule.value_or("fixed") == "fixed" ? ClRule::Mode::Fixed : ClRule::Mode::Power;
    rule.value = s.cl.value_or(rule.mode == ClRule::Mode::Fixed ? 1.0 : 2.2);
    rule.validate();
    const std::uint64_t seed = s.seed.value_or(0);
    const Eigen::VectorXd x = to_vector(parse_list(xs));
    const Eigen::VectorXd xp = to_vector(parse_list(xps.empty() ? xs : xps));
    double value = 0.0;
    if (arch == "mlp") {
        MlpConfig cfg{static_cast<int>(x.size()), d_out, depth, rule.c_l(depth), rho, beta};
        if (mode == "limit") {
            value = mlp_limit_kernel(x, xp, KernelSpec::for_mlp(cfg));
        } else {
            const auto p = init_deep_narrow_mlp(cfg, seed);
            value = mode == "finite" ? mlp_init_kernel_finite_l(x, xp, cfg, p.init_u, p.init_v)
                                     : mlp_empirical_scaled_ntk(p, x, xp)(0, 0);
        }
    } else {
        require_config(side >= 1 && x.size() == side * side && xp.size() == side * side,
                       "CNN points need image_side^2 entries (column-major)");
        const Eigen::Map<const Eigen::MatrixXd> a(x.data(), side, side), b(xp.data(), side, side);
        CnnConfig cfg{side, depth, rule.c_l(depth), rho, beta};
        if (mode == "limit") {
            value = cnn_limit_kernel(a, b, KernelSpec::for_cnn(cfg));
        } else {
            const auto p = init_deep_narrow_cnn(cfg, seed);
            value = mode == "finite" ? cnn_init_kernel_finite_l(a, b, cfg, p.init_u, p.init_v)
                                     : cnn_empirical_scaled_ntk(p, a, b);
        }
    }
    const json resolved = {{"arch", arch}, {"mode", mode}, {"depth", depth}, {"c_l", rule.c_l(depth)},
                           {"rho", rho},   {"beta", beta}, {"seed", seed},   {"x", parse_list(xs)},
                           {"x_prime", parse_list(xps.empty() ? xs : xps)}};
    ResultTable t;
    t.columns = {"mode", "depth", "c_l", "rho", "beta", "seed", "value"};
    t.rows.push_back({mode, static_cast<std::int64_t>(depth), rule.c_l(depth), rho, beta,
                      static_cast<std::int64_t>(seed), value});
    emit(s.out, render_csv(t, {"deepntk kernel", "config: " + resolved.dump()}));
    return kExitOk;
}

int cmd_train(const Shared& s, const std::string& arch, const std::string& init, const DataFlags& df,
              int snapshot_every, bool raw_step, const std::string& save_path, const std::string& load_path) {
    const DatasetSpec spec = to_spec(df);
    const Dataset data = load_dataset(spec);
    data.validate();
    warn_nonpositive(data);

    const int depth = s.depth.value_or(64);
    ClRule rule;
    rule.mode = s.cl_rule.value_or("fixed") == "fixed" ? ClRule::Mode::Fixed : ClRule::Mode::Power;
    rule.value = s.cl.value_or(rule.mode == ClRule::Mode::Fixed ? 4.0 : 2.2);
    rule.validate();
    const double rho = s.rho.value_or(1.0);
    const double beta = s.beta.value_or(1.0);
    const std::uint64_t seed = s.seed.value_or(0);

    TrainConfig tc;
    tc.base_lr = s.lr.value_or(0.5);
    tc.steps = s.steps.value_or(100);
    tc.snapshot_every = snapshot_every;
    tc.depth_scaled_step = !raw_step && init == "deep_narrow";
    tc.record_zero_crossings = snapshot_every > 0;
    if (snapshot_every > 0 && data.size() >= 2) tc.kernel_probe_pairs = {{data.inputs.col(0), data.inputs.col(1)}};

    AnyParams params;
    if (!load_path.empty()) {
        params = load_checkpoint(load_path);
    } else if (arch == "mlp") {
        MlpConfig cfg{static_cast<int>(data.inputs.rows()), static_cast<int>(data.targets.rows()), depth,
                      rule.c_l(depth), rho, beta};
        params = init == "kaiming" ? init_kaiming_mlp(cfg, seed) : init_deep_narrow_mlp(cfg, seed);
    } else {
        require_config(data.image_side > 0, "CNN training needs an image dataset");
        CnnConfig cfg{data.image_side, depth, rule.c_l(depth), rho, beta};
        params = init == "kaiming" ? init_kaiming_cnn(cfg, seed) : init_deep_narrow_cnn(cfg, seed);
    }

    ResultTable t;
    t.columns = {"step", "loss", "kernel_probe", "zero_crossings"};
    bool diverged = false;
    std::visit(
        [&](auto& p) {
            auto run = train_gradient_descent(p, data, tc);
            std::map<int, std::size_t> snap;
            for (std::size_t k = 0; k < run.snapshot_steps.size(); ++k) snap[run.snapshot_steps[k]] = k;
            for (std::size_t step = 0; step < run.loss_per_step.size(); ++step) {
                const auto it = snap.find(static_cast<int>(step));
                const double kernel = it != snap.end() && !run.kernel_snapshots[it->second].empty()
                                          ? run.kernel_snapshots[it->second].front()
                                          : std::nan("");
                const std::int64_t cross =
                    it != snap.end() && !run.zero_crossings.empty() ? run.zero_crossings[it->second] : -1;
                t.rows.push_back({static_cast<std::int64_t>(step), run.loss_per_step[step], kernel, cross});
            }
            diverged = run.status == TrainStatus::Diverged;
            p = std::move(run.final_params);
        },
        params);

    const json resolved = {{"arch", arch},
                           {"init", init},
                           {"depth", depth},
                           {"c_l_rule", rule.describe()},
                           {"rho", rho},
                           {"beta", beta},
                           {"seed", seed},
                           {"lr", tc.base_lr},
                           {"steps", tc.steps},
                           {"depth_scaled_step", tc.depth_scaled_step},
                           {"snapshot_every", snapshot_every},
                           {"load", load_path},
                           {"dataset", spec_json(spec)}};
    emit(s.out, render_csv(t, {"deepntk train", "config: " + resolved.dump()}));
    if (!save_path.empty()) save_checkpoint(params, save_path);
    if (diverged) {
        std::cerr << "run diverged (non-finite loss)\n";
        return kExitDiverged;
    }
    return kExitOk;
}

int exit_for_table(const ResultTable& table) {
    const auto& cols = table.columns;
    if (std::find(cols.begin(), cols.end(), "diverged") == cols.end()) return kExitOk;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        if (table.number(r, "diverged") != 0.0) return kExitDiverged;
    }
    return kExitOk;
}

int cmd_experiment(const Shared& s, const std::string& kind, const std::string& depths, const std::string& seeds,
                   const std::string& lrs, const std::string& rerun, bool verify) {
    if (!rerun.empty()) {
        const std::string original = read_text_file(rerun);
        const std::string again = rerun_from_csv(original);
        if (verify) {
            if (again != original) {
                std::cerr << "re-run differs from " << rerun << "\n";
                return 1;
            }
            std::cerr << "re-run reproduces " << rerun << " byte for byte\n";
            return kExitOk;
        }
        emit(s.out, again);
        return kExitOk;
    }
    Shared merged = s;
    RunConfig cfg = resolve_run_config(merged);
    if (!kind.empty()) cfg.kind = scenario_kind_from_string(kind);
    if (!depths.empty()) {
        cfg.depths.clear();
        for (double d : parse_list(depths)) cfg.depths.push_back(static_cast<int>(d));
    }
    if (!seeds.empty()) {
        cfg.seeds.clear();
        for (double d : parse_list(seeds)) cfg.seeds.push_back(static_cast<std::uint64_t>(d));
    }
    if (!lrs.empty()) cfg.lrs = parse_list(lrs);
    cfg.validate();
    const ResultTable table = run_scenario(cfg);
    emit(cfg.output, scenario_csv(cfg, table));
    return exit_for_table(table);
}

int cmd_dataset(const Shared& s, const DataFlags& df) {
    const DatasetSpec spec = to_spec(df);
    const Dataset data = load_dataset(spec);
    warn_nonpositive(data);
    ResultTable t;
    if (spec.source == "toy") {
        t.columns = {"index", "x1", "x2", "target"};
        for (Eigen::Index k = 0; k < data.size(); ++k)
            t.rows.push_back({static_cast<std::int64_t>(k), data.inputs(0, k), data.inputs(1, k), data.targets(0, k)});
    } else {
        t.columns = {"target_row", "count", "image_side", "mean_pixel", "min_pixel", "max_pixel"};
        for (Eigen::Index r = 0; r < data.targets.rows(); ++r) {
            const auto count = static_cast<std::int64_t>((data.targets.row(r).array() > 0.5).count());
            t.rows.push_back({static_cast<std::int64_t>(r), count, static_cast<std::int64_t>(data.image_side),
                              data.inputs.mean(), data.inputs.minCoeff(), data.inputs.maxCoeff()});
        }
    }
    emit(s.out, render_csv(t, {"deepntk dataset", "config: " + spec_json(spec).dump()}));
    return kExitOk;
}

int cmd_checkpoint(const Shared& s, const std::string& action, const std::string& path, const std::string& arch,
                   const std::string& init, int d_in, int d_out, int side) {
    if (action == "save") {
        require_config(!s.out.empty(), "checkpoint save needs --out");
        const int depth = s.depth.value_or(64);
        ClRule rule;
        rule.mode = s.cl_rule.value_or("fixed") == "fixed" ? ClRule::Mode::Fixed : ClRule::Mode::Power;
        rule.value = s.cl.value_or(rule.mode == ClRule::Mode::Fixed ? 4.0 : 2.2);
        rule.validate();
        const std::uint64_t seed = s.seed.value_or(0);
        AnyParams p;
        if (arch == "mlp") {
            MlpConfig cfg{d_in, d_out, depth, rule.c_l(depth), s.rho.value_or(1.0), s.beta.value_or(1.0)};
            p = init == "kaiming" ? init_kaiming_mlp(cfg, seed) : init_deep_narrow_mlp(cfg, seed);
        } else {
            CnnConfig cfg{side, depth, rule.c_l(depth), s.rho.value_or(1.0), s.beta.value_or(1.0)};
            p = init == "kaiming" ? init_kaiming_cnn(cfg, seed) : init_deep_narrow_cnn(cfg, seed);
        }
        save_checkpoint(p, s.out);
        return kExitOk;
    }
    require_config(!path.empty(), "checkpoint " + action + " needs a file path");
    const AnyParams p = load_checkpoint(path);
    if (action == "verify") {
        const std::string original = read_text_file(path);
        const auto bytes = serialize_checkpoint(p);
        if (std::string(bytes.begin(), bytes.end()) != original) {
            std::cerr << "re-serialised checkpoint differs from " << path << "\n";
            return kExitData;
        }
        std::cerr << "checkpoint round-trips bit-exactly\n";
        return kExitOk;
    }
    ResultTable t;
    t.columns = {"arch", "depth", "c_l", "rho", "beta", "parameters", "recorded_draws"};
    std::visit(
        [&](const auto& q) {
            using T = std::decay_t<decltype(q)>;
            t.rows.push_back({std::string(std::is_same_v<T, MlpParams> ? "mlp" : "cnn"),
                              static_cast<std::int64_t>(q.config.depth), q.config.c_l, q.config.rho, q.config.beta,
                              static_cast<std::int64_t>(q.parameter_count()),
                              static_cast<std::int64_t>(q.init_u.size())});
        },
        p);
    emit(s.out, render_csv(t, {"deepntk checkpoint " + path}));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep narrow networks: scaled NTKs, limit kernels and training experiments"};
    app.require_subcommand(1);

    Shared kernel_s, train_s, exp_s, data_s, ckpt_s;

    auto* kernel = app.add_subcommand("kernel", "evaluate limit, finite-depth or empirical kernels");
    add_shared(kernel, kernel_s);
    std::string k_arch = "mlp", k_mode = "limit", k_x, k_xp;
    int k_dout = 1, k_side = 0;
    kernel->add_option("--arch", k_arch)->check(CLI::IsMember({"mlp", "cnn"}));
    kernel->add_option("--mode", k_mode, "limit, finite or empirical")
        ->check(CLI::IsMember({"limit", "finite", "empirical"}));
    kernel->add_option("--x", k_x, "first point, comma separated")->required();
    kernel->add_option("--x2", k_xp, "second point (defaults to --x)");
    kernel->add_option("--d-out", k_dout, "MLP output dimension");
    kernel->add_option("--image-side", k_side, "CNN image side");

    auto* train = app.add_subcommand("train", "run gradient descent and emit the loss curve");
    add_shared(train, train_s);
    std::string t_arch = "mlp", t_init = "deep_narrow", t_save, t_load;
    int t_snap = 0;
    bool t_raw = false;
    DataFlags t_data;
    train->add_option("--arch", t_arch)->check(CLI::IsMember({"mlp", "cnn"}));
    train->add_option("--init", t_init)->check(CLI::IsMember({"deep_narrow", "kaiming"}));
    train->add_option("--snapshot-every", t_snap, "kernel probe / zero-crossing cadence");
    train->add_flag("--raw-step", t_raw, "do not divide the learning rate by L C_L^2");
    train->add_option("--save", t_save, "write the trained parameters to a checkpoint");
    train->add_option("--load", t_load, "start from a checkpoint instead of a fresh init");
    add_data_flags(train, t_data);

    auto* experiment = app.add_subcommand("experiment", "run a scenario and emit its CSV");
    add_shared(experiment, exp_s);
    std::string e_kind, e_depths, e_seeds, e_lrs, e_rerun;
    bool e_verify = false;
    experiment->add_option("--kind", e_kind, "scenario kind");
    experiment->add_option("--depths", e_depths, "comma-separated depth grid");
    experiment->add_option("--seeds", e_seeds, "comma-separated seeds");
    experiment->add_option("--lrs", e_lrs, "comma-separated learning rates");
    experiment->add_option("--rerun", e_rerun, "re-run the scenario recorded in a CSV header");
    experiment->add_flag("--verify", e_verify, "with --rerun: compare against the original bytes");

    auto* dataset = app.add_subcommand("dataset", "generate the toy set or summarise an IDX set");
    add_shared(dataset, data_s);
    DataFlags d_data;
    add_data_flags(dataset, d_data);

    auto* checkpoint = app.add_subcommand("checkpoint", "save, inspect or verify checkpoints");
    add_shared(checkpoint, ckpt_s);
    std::string c_action = "inspect", c_path, c_arch = "mlp", c_init = "deep_narrow";
    int c_din = 2, c_dout = 1, c_side = 4;
    checkpoint->add_option("action", c_action, "save, inspect or verify")
        ->check(CLI::IsMember({"save", "inspect", "verify"}));
    checkpoint->add_option("path", c_path, "checkpoint file");
    checkpoint->add_option("--arch", c_arch)->check(CLI::IsMember({"mlp", "cnn"}));
    checkpoint->add_option("--init", c_init)->check(CLI::IsMember({"deep_narrow", "kaiming"}));
    checkpoint->add_option("--d-in", c_din);
    checkpoint->add_option("--d-out", c_dout);
    checkpoint->add_option("--image-side", c_side);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*kernel) return cmd_kernel(kernel_s, k_arch, k_mode, k_x, k_xp, k_dout, k_side);
        if (*train) return cmd_train(train_s, t_arch, t_init, t_data, t_snap, t_raw, t_save, t_load);
        if (*experiment) return cmd_experiment(exp_s, e_kind, e_depths, e_seeds, e_lrs, e_rerun, e_verify);
        if (*dataset) return cmd_dataset(data_s, d_data);
        if (*checkpoint) return cmd_checkpoint(ckpt_s, c_action, c_path, c_arch, c_init, c_din, c_dout, c_side);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
