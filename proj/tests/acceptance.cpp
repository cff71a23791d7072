// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerance in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/experiment.hpp"
#include "fedsim/fed.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"
#include "fedsim/optim.hpp"
#include "fedsim/privacy.hpp"
#include "fedsim/rng.hpp"
#include "oracles.hpp"

using namespace fedsim;

namespace {

using Clock = std::chrono::steady_clock;

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool condition, const std::string& what) {
        if (!condition && ok) {
            ok = false;
            detail = what;
        }
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Seed-locked regression snapshot for the desk-scale benchmark (criterion 9),
// master seed 0. Regenerate by running with FEDSIM_PRINT_SNAPSHOT=1 and
// pasting the printed values.
constexpr double kSnapshotLocalMeanVal[2] = {0.97087865749155233,
                                             0.9268933813755218}; // mortality, plos
constexpr double kSnapshotFedMeanVal[2] = {0.98238439827532886,
                                           0.92394165747026114}; // mortality, plos
constexpr bool kSnapshotFrozen = true;

// ---------------------------------------------------------------------------

Check criterion1_closed_form() {
    Check c;
    const auto t0 = Clock::now();
    const std::vector<int> orders = default_rdp_orders();
    for (double z : {0.5, 1.0, 2.0}) {
        const RdpCurve curve = rdp_curve(1.0, z, orders);
        for (std::uint64_t T : {1ull, 10ull, 100ull}) {
            const RdpCurve composed = compose(curve, T);
            for (std::size_t i = 0; i < orders.size(); ++i) {
                const double want = static_cast<double>(T) * orders[i] / (2.0 * z * z);
                c.require(std::abs(composed.eps[i] - want) <= 1e-12,
                          "z=" + fmt(z) + " T=" + std::to_string(T) +
                              " alpha=" + std::to_string(orders[i]) + ": got " +
                              fmt(composed.eps[i]) + " want " + fmt(want));
            }
        }
    }
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    c.require(elapsed < 1.0, "took " + fmt(elapsed) + " s (limit 1 s)");
    return c;
}

Check criterion2_conversion() {
    Check c;
    // independent grid minimization of alpha/2 + ln(1e5)/(alpha-1)
    double want = 1e300;
    int want_order = 0;
    for (int a = 2; a <= 64; ++a) {
        const double v = a / 2.0 + std::log(1e5) / (a - 1.0);
        if (v < want) {
            want = v;
            want_order = a;
        }
    }
    const EpsDelta got = accountant_query(1.0, 1.0, 1, 1e-5);
    c.require(std::abs(got.epsilon - 5.302585) <= 1e-5,
              "epsilon " + fmt(got.epsilon) + " want 5.302585 +- 1e-5");
    c.require(std::abs(got.epsilon - want) <= 1e-12, "mismatch vs independent minimization");
    c.require(got.best_order == 6 && want_order == 6,
              "alpha* " + std::to_string(got.best_order) + " want 6");
    return c;
}

Check criterion3_oracle() {
    Check c;
    for (double q : {0.01, 0.05}) {
        for (double z : {0.5, 1.0, 2.0}) {
            for (int a : {2, 8, 32}) {
                const double got = rdp_step(q, z, a);
                const double want = oracles::sampled_gaussian_rdp_quadrature(q, z, a);
                c.require(std::abs(got - want) <= 1e-3 * std::abs(want),
                          "q=" + fmt(q) + " z=" + fmt(z) + " alpha=" + std::to_string(a) +
                              ": got " + fmt(got) + " oracle " + fmt(want));
            }
        }
    }
    return c;
}

Check criterion4_gradients() {
    Check c;
    RngStream rng(4001);
    for (ModelKind kind : {ModelKind::logistic, ModelKind::mlp}) {
        for (int trial = 0; trial < 20; ++trial) {
            ModelSpec spec;
            spec.kind = kind;
            spec.input_dim = 5 + rng.below(4);
            spec.hidden_dim = kind == ModelKind::mlp ? 2 + rng.below(4) : 0;
            ParamVector params = ParamVector::zeros(spec.layout());
            for (double& v : params.values) v = rng.normal(0.0, 0.6);
            Batch batch;
            const std::size_t B = 2 + rng.below(6);
            batch.features = Matrix(B, spec.input_dim);
            batch.labels.resize(B);
            for (std::size_t i = 0; i < B; ++i) {
                for (std::size_t j = 0; j < spec.input_dim; ++j) {
                    batch.features(i, j) = rng.bernoulli(0.4) ? 1.0 : 0.0;
                }
                batch.labels[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
            }
            const ParamVector analytic = grad(spec, params, batch);
            const ParamVector fd = oracles::finite_difference_grad(spec, params, batch, 1e-6);
            const double err = oracles::rel_l2_error(analytic.values, fd.values);
            c.require(err <= 1e-5,
                      std::string(kind == ModelKind::mlp ? "mlp" : "logistic") + " trial " +
                          std::to_string(trial) + ": rel error " + fmt(err));
        }
    }
    return c;
}

Check criterion5_clipping() {
    Check c;
    RngStream rng(5001);
    for (double S : {0.1, 1.0, 10.0}) {
        for (int trial = 0; trial < 10000; ++trial) {
            const std::size_t dim = 1 + rng.below(24);
            ParamVector g;
            g.layout = {{"w", {dim}}};
            g.values.resize(dim);
            for (double& v : g.values) v = rng.normal(0.0, 2.0);
            const ParamVector clipped = clip_to_norm(g, S);
            c.require(clipped.l2_norm() <= S * (1.0 + 1e-12),
                      "S=" + fmt(S) + ": post-clip norm " + fmt(clipped.l2_norm()));
            if (g.l2_norm() <= S) {
                c.require(clipped.values == g.values, "in-norm input was modified");
            }
        }
    }
    return c;
}

Check criterion6_noise_stats() {
    Check c;
    const double z = 1.0, S = 1.0, b_exp = 10.0;
    ParamVector g;
    g.layout = {{"w", {4}}};
    g.values = {0.05, -0.1, 0.2, 0.0};
    const std::vector<ParamVector> grads = {g};
    RngStream rng(6001);
    const int n = 100000;
    std::vector<double> sum(4, 0.0), sq(4, 0.0);
    for (int i = 0; i < n; ++i) {
        const ParamVector agg = dp_aggregate(grads, S, z, b_exp, rng);
        for (std::size_t j = 0; j < 4; ++j) {
            sum[j] += agg.values[j];
            sq[j] += agg.values[j] * agg.values[j];
        }
    }
    const double want = (z * S / b_exp) * (z * S / b_exp);
    for (std::size_t j = 0; j < 4; ++j) {
        const double mean = sum[j] / n;
        const double var = sq[j] / n - mean * mean;
        c.require(std::abs(var - want) <= 0.05 * want,
                  "coordinate " + std::to_string(j) + ": variance " + fmt(var) + " want " +
                      fmt(want) + " +-5%");
    }
    return c;
}

Check criterion7_delong() {
    Check c;
    RngStream rng(7001);
    for (int trial = 0; trial < 100; ++trial) {
        ScoredSet set;
        int pos = 0, neg = 0;
        do {
            set.scores.clear();
            set.labels.clear();
            pos = neg = 0;
            const std::size_t n = 4 + rng.below(47);
            for (std::size_t i = 0; i < n; ++i) {
                const double score = trial % 2 == 0
                                         ? static_cast<double>(rng.below(6)) / 6.0 // ties
                                         : rng.uniform01();
                const int label = rng.bernoulli(0.5) ? 1 : 0;
                set.scores.push_back(score);
                set.labels.push_back(label);
                (label == 1 ? pos : neg)++;
            }
        } while (pos < 1 || neg < 1);
        c.require(auc(set) == oracles::brute_force_auc(set),
                  "trial " + std::to_string(trial) + ": AUC differs from brute force");
    }

    const ScoredSet hand{{0.8, 0.3, 0.5, 0.1}, {1, 1, 0, 0}};
    const AucEstimate est = delong_estimate(hand);
    c.require(est.auc == 0.75, "hand case AUC " + fmt(est.auc) + " want 0.75");
    c.require(std::abs(est.variance - 0.125) <= 1e-15,
              "hand case variance " + fmt(est.variance) + " want 0.125");

    RngStream rng2(7002);
    ScoredSet self;
    for (int i = 0; i < 40; ++i) {
        self.scores.push_back(rng2.uniform01());
        self.labels.push_back(i % 2);
    }
    const AucDiff diff = delong_diff(self, self);
    c.require(diff.delta == 0.0 && diff.variance == 0.0 && diff.ci_low == 0.0 &&
                  diff.ci_high == 0.0 && !diff.significant,
              "self-difference CI is not exactly [0,0]");
    return c;
}

SiteCohort degeneracy_cohort(const std::string& id, std::size_t n, std::uint64_t seed) {
    RngStream rng(seed);
    SiteCohort cohort;
    cohort.site_id = id;
    cohort.feature_width = 6;
    for (std::size_t i = 0; i < n; ++i) {
        AdmissionRecord rec;
        rec.patient_id = id + "p" + std::to_string(i);
        rec.admission_id = id + "a" + std::to_string(i);
        rec.features.resize(6);
        for (auto& f : rec.features) f = rng.bernoulli(0.5) ? 1 : 0;
        const double logit = 1.5 * rec.features[0] - 1.0 * rec.features[1] + 0.2;
        rec.label_plos = rng.bernoulli(1.0 / (1.0 + std::exp(-logit))) ? 1 : 0;
        rec.label_mortality = rng.bernoulli(0.2) ? 1 : 0;
        cohort.records.push_back(std::move(rec));
    }
    return cohort;
}

Check criterion8_federation() {
    Check c;
    // (a) single-site federation replays sequential local training bit-for-bit
    const SiteCohort cohort = degeneracy_cohort("solo", 90, 81);
    const SplitAssignment split = split_by_patient(cohort, {0.8, 0.1, 0.1}, 82);
    const SiteData site = make_site_data(cohort, split, Task::plos);
    FederationConfig cfg;
    cfg.model.kind = ModelKind::logistic;
    cfg.model.input_dim = 6;
    cfg.optimizer = {0.05, 16};
    cfg.rounds = 5;
    cfg.master_seed = 83;
    const FederationResult fed = run_federated(cfg, {site});

    const Seeder seeder(83);
    ParamVector params = init_params(cfg.model, seeder.derive_seed("init"));
    RngStream stream = seeder.stream("site/solo");
    double best_auc = -1.0;
    ParamVector best_params;
    for (int round = 1; round <= 5; ++round) {
        LocalUpdateResult up = local_update(site, std::move(params), cfg.model, cfg.optimizer,
                                            1, std::nullopt, stream);
        params = average({up.params}, AveragingMode::uniform, {});
        const double val_auc = auc({forward(cfg.model, params, site.val_X), site.val_y});
        c.require(fed.log.rows[round - 1].val_auc == val_auc,
                  "round " + std::to_string(round) + " AUC diverged");
        if (val_auc > best_auc) {
            best_auc = val_auc;
            best_params = params;
        }
    }
    c.require(fed.best.at("solo").params.values == best_params.values,
              "best snapshot params diverged from sequential replay");

    // (b) uniform average of known vectors is exact
    ParamVector p1, p2;
    p1.layout = p2.layout = {{"w", {2}}};
    p1.values = {0.0, 2.0};
    p2.values = {2.0, 4.0};
    const ParamVector avg = average({p1, p2}, AveragingMode::uniform, {});
    c.require(avg.values == std::vector<double>{1.0, 3.0}, "uniform average inexact");

    // (c) lr = 0 freezes the round log over 10 rounds
    FederationConfig frozen = cfg;
    frozen.optimizer = {0.0, 16};
    frozen.rounds = 10;
    const SiteCohort c2 = degeneracy_cohort("b", 70, 84);
    const SplitAssignment s2 = split_by_patient(c2, {0.8, 0.1, 0.1}, 85);
    const std::vector<SiteData> sites = {site, make_site_data(c2, s2, Task::plos)};
    const FederationResult still = run_federated(frozen, sites);
    std::map<std::string, double> first_auc;
    for (const auto& row : still.log.rows) {
        const auto it = first_auc.find(row.site_id);
        if (it == first_auc.end()) {
            first_auc[row.site_id] = row.val_auc;
        } else {
            c.require(row.val_auc == it->second, "lr=0 round log changed at round " +
                                                     std::to_string(row.round));
        }
    }
    return c;
}

struct DeskGrid {
    std::vector<ModelSpec> specs;
    std::vector<double> lrs;
    std::size_t batch = 64;
};

Check criterion9_desk_benchmark() {
    Check c;
    const auto t0 = Clock::now();

    // benchmark cohort: 5 sites x 2,000 admissions, d=50, tau=0.3
    const Seeder seeder(0);
    SyntheticSpec spec;
    spec.site_sizes.assign(5, 2000);
    spec.feature_width = 50;
    spec.site_effect_scale = 0.3;
    spec.incidence_mortality = 0.073;
    spec.incidence_plos = 0.344;
    spec.seed = seeder.derive_seed("data");
    const std::vector<SiteCohort> cohorts = generate_synthetic(spec);
    std::vector<SplitAssignment> splits;
    for (const auto& cohort : cohorts) {
        splits.push_back(split_by_patient(cohort, {0.8, 0.1, 0.1},
                                          seeder.derive_seed("split/" + cohort.site_id)));
    }
    const std::vector<std::size_t> retained = filter_min_train_size(cohorts, splits, 1000);
    c.require(retained.size() == 5, "expected all 5 sites past the min-train filter");

    // benchmark grid: logistic and mlp(8), lr {0.01, 0.1}, batch 64
    ModelSpec logistic;
    logistic.kind = ModelKind::logistic;
    logistic.input_dim = 50;
    ModelSpec mlp;
    mlp.kind = ModelKind::mlp;
    mlp.input_dim = 50;
    mlp.hidden_dim = 8;
    const DeskGrid grid{{logistic, mlp}, {0.01, 0.1}, 64};

    double mean_local[2] = {0.0, 0.0};
    double mean_fed[2] = {0.0, 0.0};
    const Task tasks[2] = {Task::mortality, Task::plos};
    for (int t = 0; t < 2; ++t) {
        std::vector<SiteData> sites;
        for (std::size_t idx : retained) {
            sites.push_back(make_site_data(cohorts[idx], splits[idx], tasks[t]));
        }
        const std::string tname = task_name(tasks[t]);

        // local: independent 10-epoch training per site, best val AUC
        double local_sum = 0.0;
        for (const SiteData& site : sites) {
            double best = -1.0;
            std::size_t cand = 0;
            for (const ModelSpec& ms : grid.specs) {
                for (double lr : grid.lrs) {
                    const Seeder run_seeder(seeder.derive_seed(
                        "desk/local/" + tname + "/" + site.site_id + "/cand" +
                        std::to_string(cand++)));
                    ParamVector params = init_params(ms, run_seeder.derive_seed("init"));
                    RngStream stream = run_seeder.stream("train");
                    const LocalUpdateResult res =
                        local_update(site, std::move(params), ms, {lr, grid.batch}, 10,
                                     std::nullopt, stream);
                    const double val =
                        auc({forward(ms, res.params, site.val_X), site.val_y});
                    if (val > best) best = val;
                }
            }
            local_sum += best;
        }
        mean_local[t] = local_sum / static_cast<double>(sites.size());

        // federated: 10 rounds x 1 local epoch, per-site early stopping,
        // selection by mean best val AUC across sites
        double fed_best = -1.0;
        std::size_t cand = 0;
        for (const ModelSpec& ms : grid.specs) {
            for (double lr : grid.lrs) {
                FederationConfig fcfg;
                fcfg.model = ms;
                fcfg.optimizer = {lr, grid.batch};
                fcfg.task = tasks[t];
                fcfg.rounds = 10;
                fcfg.master_seed =
                    seeder.derive_seed("desk/fed/" + tname + "/cand" + std::to_string(cand++));
                const FederationResult result = run_federated(fcfg, sites);
                double mean = 0.0;
                for (const auto& [_, snap] : result.best) mean += snap.best_val_auc;
                mean /= static_cast<double>(result.best.size());
                if (mean > fed_best) fed_best = mean;
            }
        }
        mean_fed[t] = fed_best;

        c.require(mean_fed[t] >= mean_local[t] - 0.01,
                  tname + ": federated mean val AUC " + fmt(mean_fed[t]) +
                      " below local " + fmt(mean_local[t]) + " - 0.01");
    }

    if (std::getenv("FEDSIM_PRINT_SNAPSHOT")) {
        std::printf("snapshot: local {%s, %s} fed {%s, %s}\n", fmt(mean_local[0]).c_str(),
                    fmt(mean_local[1]).c_str(), fmt(mean_fed[0]).c_str(),
                    fmt(mean_fed[1]).c_str());
    }
    if (kSnapshotFrozen) {
        for (int t = 0; t < 2; ++t) {
            c.require(std::abs(mean_local[t] - kSnapshotLocalMeanVal[t]) <= 1e-12,
                      "local snapshot drift on " + task_name(tasks[t]) + ": " +
                          fmt(mean_local[t]));
            c.require(std::abs(mean_fed[t] - kSnapshotFedMeanVal[t]) <= 1e-12,
                      "federated snapshot drift on " + task_name(tasks[t]) + ": " +
                          fmt(mean_fed[t]));
        }
    } else {
        c.require(false, "regression snapshot not frozen yet");
    }

    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    c.require(elapsed <= 300.0, "took " + fmt(elapsed) + " s (limit 300 s)");
    return c;
}

Check criterion10_central_dp_trajectory() {
    Check c;
    ExperimentConfig cfg;
    cfg.condition = Condition::central_dp;
    cfg.synthetic.site_sizes.assign(5, 2000);
    cfg.synthetic.feature_width = 50;
    cfg.synthetic.site_effect_scale = 0.3;
    cfg.model_kinds = {ModelKind::logistic};
    cfg.learning_rates = {0.01};
    cfg.batch_sizes = {64};
    cfg.noise_multipliers = {1.0};
    cfg.clip_norms = {10.0};
    cfg.epochs = 25;
    cfg.tasks = {Task::plos};
    cfg.seed = 0;
    const ConditionResult result = run_condition(cfg);
    c.require(result.trajectory.size() == 25,
              "trajectory has " + std::to_string(result.trajectory.size()) + " rows, want 25");

    // replicate the pooled training size for independent accountant queries
    const Seeder seeder(cfg.seed);
    SyntheticSpec spec = cfg.synthetic;
    spec.seed = seeder.derive_seed("data");
    const auto cohorts = generate_synthetic(spec);
    std::size_t pooled_train = 0;
    for (const auto& cohort : cohorts) {
        const SplitAssignment split = split_by_patient(
            cohort, cfg.fractions, seeder.derive_seed("split/" + cohort.site_id));
        pooled_train += split.ids(Partition::train).size();
    }
    const double q = dp_sampling_ratio(64, pooled_train);
    const std::uint64_t per_epoch = dp_steps_per_epoch(64, pooled_train);

    double prev = -1.0;
    for (std::size_t e = 0; e < result.trajectory.size(); ++e) {
        const double eps = result.trajectory[e].epsilon;
        c.require(eps > prev, "epsilon not strictly increasing at epoch " + std::to_string(e + 1));
        prev = eps;
        const double want = accountant_query(q, 1.0, per_epoch * (e + 1), cfg.delta).epsilon;
        c.require(std::abs(eps - want) <= 1e-9,
                  "epoch " + std::to_string(e + 1) + ": epsilon " + fmt(eps) +
                      " vs accountant " + fmt(want));
    }
    for (const ReportRow& row : result.rows) {
        c.require(row.epsilon.has_value() && std::abs(*row.epsilon - prev) <= 1e-9,
                  "report row epsilon does not match the final trajectory entry");
    }
    return c;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Check criterion11_determinism() {
    Check c;
    namespace fs = std::filesystem;
    const std::string base = (fs::temp_directory_path() / "fedsim_acceptance_det").string();
    fs::remove_all(base);

    const std::string tiny = R"(
data = synthetic
sites = 3
site_size = 400
features = 12
tau = 0.2
min_train_size = 100
model_kinds = logistic
learning_rates = 0.05
batch_sizes = 32
epochs = 3
rounds = 3
tasks = plos
seed = 7
)";
    for (const std::string condition :
         {"local", "central", "central_dp", "federated", "federated_dp"}) {
        std::string text = tiny + "condition = " + condition + "\n";
        if (condition == "central_dp") {
            text += "noise_multipliers = 1\nclip_norms = 1\n";
        }
        const ExperimentConfig cfg = parse_config_text(text);
        const std::string dir1 = base + "/" + condition + "_1";
        const std::string dir2 = base + "/" + condition + "_2";
        emit_reports(run_condition(cfg), dir1);
        emit_reports(run_condition(cfg), dir2);
        for (const char* name : {"results.csv", "trajectory.csv", "summary.txt"}) {
            const std::string a = slurp(dir1 + "/" + name);
            const std::string b = slurp(dir2 + "/" + name);
            c.require(!a.empty() || std::string(name) != "results.csv",
                      condition + ": " + name + " is empty");
            c.require(a == b, condition + ": " + name + " differs between runs");
        }
    }
    fs::remove_all(base);
    return c;
}

} // namespace

int main() {
    struct Entry {
        int number;
        const char* name;
        std::function<Check()> run;
    };
    const std::vector<Entry> criteria = {
        {1, "accountant closed form (q=1)", criterion1_closed_form},
        {2, "accountant (eps, delta) conversion anchor", criterion2_conversion},
        {3, "accountant vs quadrature oracle", criterion3_oracle},
        {4, "analytic gradients vs finite differences", criterion4_gradients},
        {5, "clipping invariant", criterion5_clipping},
        {6, "dp aggregation noise statistics", criterion6_noise_stats},
        {7, "DeLong correctness", criterion7_delong},
        {8, "federation degeneracies", criterion8_federation},
        {9, "desk-scale benchmark", criterion9_desk_benchmark},
        {10, "central-DP trajectory", criterion10_central_dp_trajectory},
        {11, "end-to-end determinism", criterion11_determinism},
    };

    int failures = 0;
    for (const Entry& entry : criteria) {
        Check result;
        try {
            result = entry.run();
        } catch (const std::exception& e) {
            result.ok = false;
            result.detail = std::string("exception: ") + e.what();
        }
        if (result.ok) {
            std::printf("[PASS] %2d. %s\n", entry.number, entry.name);
        } else {
            std::printf("[FAIL] %2d. %s -- %s\n", entry.number, entry.name,
                        result.detail.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures == 0) {
        std::printf("all %zu acceptance criteria passed\n", criteria.size());
    } else {
        std::printf("%d acceptance criteria FAILED\n", failures);
    }
    return failures == 0 ? 0 : 1;
}
