#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/optim.hpp"
#include "fedsim/privacy.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class Task { mortality, plos };

std::string task_name(Task task);

enum class AveragingMode { uniform, size_weighted };

struct OptimizerSettings {
    double lr = 1e-2;
    std::size_t batch_size = 64;
};

// One site's data materialized for a single prediction task.
struct SiteData {
    std::string site_id;
    Matrix train_X;
    std::vector<double> train_y;
    Matrix val_X;
    std::vector<int> val_y;
    Matrix test_X;
    std::vector<int> test_y;
    std::size_t n_admissions = 0; // total at the site, before splitting
};

SiteData make_site_data(const SiteCohort& cohort, const SplitAssignment& assignment, Task task);

struct FederationConfig {
    ModelSpec model;
    OptimizerSettings optimizer;
    Task task = Task::plos;
    int rounds = 10;
    int local_epochs = 1;
    AveragingMode averaging = AveragingMode::uniform;
    std::uint64_t master_seed = 0;
};

// Poisson sampling ratio and per-epoch step count used in DP mode. Steps per
// epoch is ceil(n_train / batch) = ceil(1/q), one expected pass.
double dp_sampling_ratio(std::size_t batch_size, std::size_t n_train);
std::uint64_t dp_steps_per_epoch(std::size_t batch_size, std::size_t n_train);

struct LocalUpdateResult {
    ParamVector params;
    std::uint64_t steps = 0;
};

// `epochs` passes over the training data starting from `start`. Non-DP mode
// runs shuffled minibatch Adam; DP mode runs Poisson-sampled batches with
// per-record clipping and noisy aggregation feeding an ordinary Adam step.
// A fresh Adam state is used per call.
LocalUpdateResult local_update(const Matrix& train_X, const std::vector<double>& train_y,
                               ParamVector start, const ModelSpec& spec,
                               const OptimizerSettings& opt, int epochs,
                               const std::optional<DpConfig>& dp, RngStream& rng);

// As local_update, invoking `hook(epoch, params, steps_so_far)` after each
// completed epoch (1-based). Used for per-epoch trajectories.
using EpochHook = std::function<void(int, const ParamVector&, std::uint64_t)>;

LocalUpdateResult local_update_hooked(const Matrix& train_X, const std::vector<double>& train_y,
                                      ParamVector start, const ModelSpec& spec,
                                      const OptimizerSettings& opt, int epochs,
                                      const std::optional<DpConfig>& dp, RngStream& rng,
                                      const EpochHook& hook);

LocalUpdateResult local_update(const SiteData& site, ParamVector start, const ModelSpec& spec,
                               const OptimizerSettings& opt, int epochs,
                               const std::optional<DpConfig>& dp, RngStream& rng);

struct RoundLogRow {
    int round = 0;
    std::string site_id;
    double val_auc = 0.0;
    double train_loss = 0.0;
    std::optional<double> epsilon; // DP mode: budget spent through this round
};

struct RoundLog {
    std::vector<RoundLogRow> rows;
};

// Per-site early stopping: the post-synchronization model from the round
// with the site's best validation AUC (earliest round on ties).
struct BestSnapshot {
    double best_val_auc = 0.0;
    int best_round = 0;
    ParamVector params;
};

struct FederationResult {
    std::map<std::string, BestSnapshot> best;
    RoundLog log;
    std::map<std::string, PrivacyLedger> ledgers; // DP mode only
};

// Uniform or training-set-size-weighted mean of identical-layout vectors.
ParamVector average(const std::vector<ParamVector>& params_list, AveragingMode mode,
                    const std::vector<double>& site_sizes);

// Federated averaging: all sites start from one shared init derived from the
// master seed; each round every site runs local_update, the server averages,
// and every site evaluates the synchronized model. Per-site rng streams are
// derived as Seeder(master_seed).stream("site/" + site_id) and the shared
// init as derive_seed("init"), so the trajectory is schedule-independent.
FederationResult run_federated(const FederationConfig& config,
                               const std::vector<SiteData>& sites);

FederationResult run_federated(const FederationConfig& config,
                               const std::vector<SiteCohort>& cohorts,
                               const std::vector<SplitAssignment>& assignments);

// As run_federated but with DP-SGD locally; site_dp must provide a DpConfig
// per site whose sampling_ratio equals batch/|train_site|. Each site's
// ledger composes its own (q, z) over the steps it actually took.
FederationResult run_federated_dp(const FederationConfig& config,
                                  const std::vector<SiteData>& sites,
                                  const std::map<std::string, DpConfig>& site_dp);

FederationResult run_federated_dp(const FederationConfig& config,
                                  const std::vector<SiteCohort>& cohorts,
                                  const std::vector<SplitAssignment>& assignments,
                                  const std::map<std::string, DpConfig>& site_dp);

struct HparamSelection {
    DpConfig chosen;
    std::vector<std::pair<double, double>> candidate_scores; // (clip norm, val auc)
};

// Local DP-SGD hyperparameter selection without collaboration: z = 1 and
// delta fixed, clip norm from `clip_grid`, ten local DP epochs per candidate,
// highest validation AUC wins, ties to the earliest (smallest) candidate.
HparamSelection select_local_dp_hparams(const SiteData& site, const ModelSpec& spec,
                                        const OptimizerSettings& opt, double delta,
                                        const std::vector<double>& clip_grid,
                                        std::uint64_t seed);

} // namespace fedsim
