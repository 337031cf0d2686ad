#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepntk/dynamics.hpp"
#include "deepntk/io.hpp"

namespace deepntk {

enum class ScenarioKind {
    NtkConvergence,
    InvarianceSweep,
    TrainabilityComparison,
    AccumulationProfile,
    RegressionEquivalence,
};

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& name);

/// C_L per depth: a fixed value, or L^exponent. The power rule needs
/// exponent > 2 so that L^2 / C_L -> 0.
struct ClRule {
    enum class Mode { Fixed, Power };
    Mode mode = Mode::Power;
    double value = 2.2;

    double c_l(int depth) const;
    std::string describe() const;
    void validate() const;
};

/// Where the training set comes from.
struct DatasetSpec {
    std::string source = "toy";  // "toy" or "idx"
    int n = 8;                   // toy points
    bool gridded = true;
    std::uint64_t seed = 0;
    std::string images;          // idx paths
    std::string labels;
    int limit = 0;
    bool pre_pool = false;
    std::vector<int> classes;
    std::string target_mode = "one_hot";
    double positive_eps = 0.0;
};

struct RunConfig {
    ScenarioKind kind = ScenarioKind::NtkConvergence;
    std::string arch = "mlp";                          // "mlp" or "cnn"
    std::vector<std::string> inits = {"deep_narrow"};  // or "kaiming"
    std::vector<int> depths = {64, 256, 1024, 4096};
    ClRule c_l_rule;
    double rho = 1.0;
    double beta = 1.0;
    std::vector<std::uint64_t> seeds = {0};
    std::vector<double> lrs = {0.5};
    int steps = 0;
    int snapshot_every = 20;
    int log_every = 10;        // loss-curve cadence for trainability rows
    int gamma_points = 9;      // angles of the convergence probe grid
    int query_points = 25;     // held-out points for regression equivalence
    int image_side = 4;        // CNN probe images when no dataset is used
    DatasetSpec dataset;
    std::string output;

    void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Compact one-line JSON with sorted keys; used as the CSV config comment.
std::string canonical_config_text(const RunConfig& config);

/// Leading provenance columns carried by every row.
const std::vector<std::string>& provenance_columns();

ResultTable run_scenario(const RunConfig& config);

/// Builds the dataset a config refers to.
Dataset load_dataset(const DatasetSpec& spec);

/// CSV text for a finished run: config comment, header, rows.
std::string scenario_csv(const RunConfig& config, const ResultTable& table);

/// Runs the scenario stored in a CSV's config comment and returns the new CSV text.
std::string rerun_from_csv(const std::string& csv);

/// Fixed probe inputs of the convergence scenario.
Eigen::VectorXd probe_anchor();
Eigen::VectorXd probe_on_arc(double gamma);
std::vector<double> probe_angles(int points);

}  // namespace deepntk
