#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/fed.hpp"
#include "fedsim/privacy.hpp"

namespace fedsim {

enum class Condition { local, central, central_dp, federated, federated_dp };

std::string condition_name(Condition condition);

struct ExperimentConfig {
    Condition condition = Condition::local;

    // data source: synthetic spec or a cohort CSV
    bool use_synthetic = true;
    SyntheticSpec synthetic;
    std::string csv_path;

    std::array<double, 3> fractions = {0.8, 0.1, 0.1};
    std::size_t min_train_size = 1000;

    // hyperparameter grids, in declared tie-break order
    std::vector<ModelKind> model_kinds = {ModelKind::logistic, ModelKind::mlp};
    std::vector<std::size_t> hidden_dims = {16};
    std::vector<double> learning_rates = {1e-3, 1e-2, 1e-1};
    std::vector<std::size_t> batch_sizes = {32, 64, 128};

    // DP grids (central_dp searches both; federated_dp selects clip norms
    // locally per site at z = 1)
    std::vector<double> noise_multipliers = {0.1, 1.0, 10.0};
    std::vector<double> clip_norms = {0.1, 1.0, 10.0};
    double delta = 1e-5;

    int epochs = 10;  // local/central passes (central_dp defaults to 25)
    int rounds = 10;  // federated rounds
    int local_epochs = 1;
    AveragingMode averaging = AveragingMode::uniform;

    std::vector<Task> tasks = {Task::mortality, Task::plos};

    std::uint64_t seed = 0;
    std::string out_dir = "out";

    void validate() const;
};

// Flat key = value file; '#' starts a comment; unknown keys are errors.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "config");

// One result-table row per (site, task): the test
// AUC with its CI, the difference against the local condition under the same
// master seed, and the privacy budget for DP conditions.
struct ReportRow {
    std::string site_id;
    std::size_t n_admissions = 0;
    Task task = Task::plos;
    Condition condition = Condition::local;
    double test_auc = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::optional<double> rel_auc, rel_ci_low, rel_ci_high;
    std::optional<bool> significant;
    std::optional<double> epsilon;
};

struct TrajectoryRow {
    Task task = Task::plos;
    std::string site_id;
    int step = 0; // epoch (central_dp) or round (federated_dp)
    double epsilon = 0.0;
    double val_auc = 0.0;
};

struct ConditionResult {
    std::vector<ReportRow> rows;
    std::vector<TrajectoryRow> trajectory;
};

ConditionResult run_condition(const ExperimentConfig& config);

// Evaluates every candidate score; returns the argmax, earliest on ties.
// Candidates must already be in the declared tie-break order.
struct GridResult {
    std::size_t best_index = 0;
    std::vector<double> scores;
};

template <typename ScoreFn>
GridResult grid_search(std::size_t n_candidates, ScoreFn&& score) {
    if (n_candidates == 0) throw std::invalid_argument("empty candidate list");
    GridResult result;
    result.scores.reserve(n_candidates);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_candidates; ++i) {
        const double s = score(i);
        result.scores.push_back(s);
        if (s > best) {
            best = s;
            result.best_index = i;
        }
    }
    return result;
}

// Accountant pipeline over the default integer orders.
EpsDelta accountant_query(double q, double z, std::uint64_t steps, double delta);

// Writes results.csv, trajectory.csv and summary.txt with bit-stable content
// and ordering (site_id ascending, task ascending).
void emit_reports(const ConditionResult& result, const std::string& out_dir);

// Round-trip reader for results.csv.
std::vector<ReportRow> load_results_csv(const std::string& path);

} // namespace fedsim
