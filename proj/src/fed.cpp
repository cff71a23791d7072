#include "fedsim/fed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "fedsim/metrics.hpp"

namespace fedsim {

std::string task_name(Task task) {
    return task == Task::mortality ? "mortality" : "plos";
}

SiteData make_site_data(const SiteCohort& cohort, const SplitAssignment& assignment, Task task) {
    SiteData site;
    site.site_id = cohort.site_id;
    site.n_admissions = cohort.records.size();
    const std::size_t d = cohort.feature_width;

    std::array<std::vector<std::size_t>, 3> members;
    for (std::size_t i = 0; i < cohort.records.size(); ++i) {
        const auto& id = cohort.records[i].admission_id;
        bool placed = false;
        for (std::size_t p = 0; p < 3 && !placed; ++p) {
            if (assignment.contains(static_cast<Partition>(p), id)) {
                members[p].push_back(i);
                placed = true;
            }
        }
        if (!placed) {
            throw std::invalid_argument("admission " + id + " missing from split assignment");
        }
    }

    const auto fill = [&](const std::vector<std::size_t>& rows, Matrix& X, auto& y) {
        X = Matrix(rows.size(), d);
        y.resize(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const AdmissionRecord& rec = cohort.records[rows[r]];
            for (std::size_t j = 0; j < d; ++j) X(r, j) = rec.features[j];
            const std::uint8_t label =
                task == Task::mortality ? rec.label_mortality : rec.label_plos;
            y[r] = label;
        }
    };
    fill(members[0], site.train_X, site.train_y);
    fill(members[1], site.val_X, site.val_y);
    fill(members[2], site.test_X, site.test_y);
    return site;
}

double dp_sampling_ratio(std::size_t batch_size, std::size_t n_train) {
    if (batch_size == 0 || n_train == 0) throw std::invalid_argument("empty batch or train set");
    if (batch_size >= n_train) return 1.0;
    return static_cast<double>(batch_size) / static_cast<double>(n_train);
}

std::uint64_t dp_steps_per_epoch(std::size_t batch_size, std::size_t n_train) {
    if (batch_size == 0 || n_train == 0) throw std::invalid_argument("empty batch or train set");
    if (batch_size >= n_train) return 1;
    return (n_train + batch_size - 1) / batch_size;
}

namespace {

Matrix gather_rows(const Matrix& X, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), X.cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double* src = X.row(rows[r]);
        std::copy(src, src + X.cols, out.row(r));
    }
    return out;
}

// One DP step: Poisson-sample records, clip each record's gradient to S, add
// N(0,(zS)^2) to the coordinate sums, divide by the expected batch size.
// Exactly n_train bernoulli draws plus param_count noise draws per step, so
// the stream position never depends on the realized batch.
ParamVector dp_gradient_step(const ModelSpec& spec, const ParamVector& params, const Matrix& X,
                             const std::vector<double>& y, const DpConfig& dp, RngStream& rng) {
    const std::size_t n = X.rows;
    std::vector<std::size_t> sampled;
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.bernoulli(dp.sampling_ratio)) sampled.push_back(i);
    }
    const double expected_batch = dp.sampling_ratio * static_cast<double>(n);

    ParamVector sum = ParamVector::zeros(spec.layout());
    if (!sampled.empty()) {
        Matrix Xb = gather_rows(X, sampled);
        std::vector<double> yb(sampled.size());
        for (std::size_t r = 0; r < sampled.size(); ++r) yb[r] = y[sampled[r]];
        Matrix G(sampled.size(), spec.param_count());
        kernels::per_example_grads_into(spec, params, Xb, yb, G);

        const std::int64_t rows = static_cast<std::int64_t>(G.rows);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < rows; ++i) {
            double* g = G.row(static_cast<std::size_t>(i));
            double sq = 0.0;
            for (std::size_t p = 0; p < G.cols; ++p) sq += g[p] * g[p];
            const double norm = std::sqrt(sq);
            if (norm > dp.clip_norm && norm > 0.0) {
                const double c = dp.clip_norm / norm;
                for (std::size_t p = 0; p < G.cols; ++p) g[p] *= c;
            }
        }
#pragma omp parallel for schedule(static)
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(G.cols); ++p) {
            double acc = 0.0;
            for (std::size_t i = 0; i < G.rows; ++i) acc += G(i, static_cast<std::size_t>(p));
            sum.values[static_cast<std::size_t>(p)] = acc;
        }
    }
    add_gaussian_noise(sum, dp.noise_multiplier * dp.clip_norm, rng);
    for (double& v : sum.values) v /= expected_batch;
    return sum;
}

} // namespace

LocalUpdateResult local_update_hooked(const Matrix& train_X, const std::vector<double>& train_y,
                                      ParamVector start, const ModelSpec& spec,
                                      const OptimizerSettings& opt, int epochs,
                                      const std::optional<DpConfig>& dp, RngStream& rng,
                                      const EpochHook& hook) {
    const std::size_t n = train_X.rows;
    if (n == 0) throw std::invalid_argument("empty training partition");
    if (train_y.size() != n) throw std::invalid_argument("label count mismatch");
    if (opt.batch_size == 0) throw std::invalid_argument("batch size must be positive");

    AdamState state = AdamState::fresh(spec.layout(), opt.lr);
    ParamVector params = std::move(start);
    std::uint64_t steps = 0;

    if (!dp) {
        const std::size_t batch = std::min(opt.batch_size, n);
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        ParamVector g;
        for (int e = 0; e < epochs; ++e) {
            rng.shuffle(order);
            for (std::size_t begin = 0; begin < n; begin += batch) {
                const std::size_t end = std::min(begin + batch, n);
                std::vector<std::size_t> rows(order.begin() + begin, order.begin() + end);
                Matrix Xb = gather_rows(train_X, rows);
                std::vector<double> yb(rows.size());
                for (std::size_t r = 0; r < rows.size(); ++r) yb[r] = train_y[rows[r]];
                kernels::grad_into(spec, params, Xb, yb, g);
                AdamResult res = adam_step(std::move(state), std::move(params), g);
                state = std::move(res.state);
                params = std::move(res.params);
                ++steps;
            }
            if (hook) hook(e + 1, params, steps);
        }
        return {std::move(params), steps};
    }

    DpConfig cfg = *dp;
    cfg.validate();
    const double q = dp_sampling_ratio(opt.batch_size, n);
    if (std::abs(cfg.sampling_ratio - q) > 1e-12) {
        throw std::invalid_argument("DpConfig sampling_ratio must equal batch/|train|");
    }
    const std::uint64_t per_epoch = dp_steps_per_epoch(opt.batch_size, n);
    for (int e = 0; e < epochs; ++e) {
        for (std::uint64_t s = 0; s < per_epoch; ++s) {
            const ParamVector g = dp_gradient_step(spec, params, train_X, train_y, cfg, rng);
            AdamResult res = adam_step(std::move(state), std::move(params), g);
            state = std::move(res.state);
            params = std::move(res.params);
            ++steps;
        }
        if (hook) hook(e + 1, params, steps);
    }
    return {std::move(params), steps};
}

LocalUpdateResult local_update(const Matrix& train_X, const std::vector<double>& train_y,
                               ParamVector start, const ModelSpec& spec,
                               const OptimizerSettings& opt, int epochs,
                               const std::optional<DpConfig>& dp, RngStream& rng) {
    return local_update_hooked(train_X, train_y, std::move(start), spec, opt, epochs, dp, rng,
                               EpochHook{});
}

LocalUpdateResult local_update(const SiteData& site, ParamVector start, const ModelSpec& spec,
                               const OptimizerSettings& opt, int epochs,
                               const std::optional<DpConfig>& dp, RngStream& rng) {
    return local_update(site.train_X, site.train_y, std::move(start), spec, opt, epochs, dp, rng);
}

ParamVector average(const std::vector<ParamVector>& params_list, AveragingMode mode,
                    const std::vector<double>& site_sizes) {
    if (params_list.empty()) throw std::invalid_argument("nothing to average");
    for (const auto& p : params_list) require_same_layout(params_list.front(), p);

    ParamVector out = ParamVector::zeros(params_list.front().layout);
    if (mode == AveragingMode::uniform) {
        for (const auto& p : params_list) out.axpy(1.0, p);
        const double n = static_cast<double>(params_list.size());
        for (double& v : out.values) v /= n;
        return out;
    }
    if (site_sizes.size() != params_list.size()) {
        throw std::invalid_argument("size-weighted averaging needs one size per site");
    }
    double total = 0.0;
    for (double w : site_sizes) {
        if (!(w > 0.0)) throw std::invalid_argument("site sizes must be positive");
        total += w;
    }
    for (std::size_t i = 0; i < params_list.size(); ++i) {
        out.axpy(site_sizes[i], params_list[i]);
    }
    for (double& v : out.values) v /= total;
    return out;
}

namespace {

FederationResult run_federated_impl(const FederationConfig& config,
                                    const std::vector<SiteData>& sites,
                                    const std::map<std::string, DpConfig>* site_dp) {
    if (sites.empty()) throw std::invalid_argument("federation needs at least one site");
    config.model.validate();
    if (config.rounds < 0) throw std::invalid_argument("rounds must be >= 0");
    if (config.local_epochs < 1) throw std::invalid_argument("local_epochs must be >= 1");

    const std::size_t n_sites = sites.size();
    for (const SiteData& s : sites) {
        if (s.train_X.rows == 0) {
            throw std::invalid_argument("site " + s.site_id + " has an empty training partition");
        }
        if (s.train_X.cols != config.model.input_dim) {
            throw std::invalid_argument("site " + s.site_id + " feature width mismatch");
        }
    }

    const Seeder seeder(config.master_seed);
    ParamVector global = init_params(config.model, seeder.derive_seed("init"));

    std::vector<RngStream> streams;
    streams.reserve(n_sites);
    std::vector<std::optional<DpConfig>> dp_configs(n_sites);
    std::vector<RdpCurve> step_curves(n_sites);
    std::vector<std::uint64_t> steps_total(n_sites, 0);
    std::vector<double> train_sizes(n_sites);
    for (std::size_t i = 0; i < n_sites; ++i) {
        streams.emplace_back(seeder.stream("site/" + sites[i].site_id));
        train_sizes[i] = static_cast<double>(sites[i].train_X.rows);
        if (site_dp) {
            const auto it = site_dp->find(sites[i].site_id);
            if (it == site_dp->end()) {
                throw std::invalid_argument("missing DpConfig for site " + sites[i].site_id);
            }
            DpConfig cfg = it->second;
            cfg.validate();
            const double q = dp_sampling_ratio(config.optimizer.batch_size, sites[i].train_X.rows);
            if (std::abs(cfg.sampling_ratio - q) > 1e-12) {
                throw std::invalid_argument("DpConfig sampling_ratio must equal batch/|train| at site " +
                                            sites[i].site_id);
            }
            dp_configs[i] = cfg;
            step_curves[i] = rdp_curve(q, cfg.noise_multiplier, default_rdp_orders());
        }
    }

    FederationResult result;
    for (std::size_t i = 0; i < n_sites; ++i) {
        BestSnapshot snap;
        snap.best_val_auc = -std::numeric_limits<double>::infinity();
        snap.best_round = 0;
        snap.params = global;
        result.best.emplace(sites[i].site_id, std::move(snap));
    }

    std::vector<ParamVector> locals(n_sites);
    std::vector<std::uint64_t> round_steps(n_sites);
    for (int round = 1; round <= config.rounds; ++round) {
        // Local updates are independent; per-site streams make the result
        // identical for any schedule or worker count.
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(n_sites); ++i) {
            const std::size_t s = static_cast<std::size_t>(i);
            LocalUpdateResult up =
                local_update(sites[s], global, config.model, config.optimizer,
                             config.local_epochs, dp_configs[s], streams[s]);
            locals[s] = std::move(up.params);
            round_steps[s] = up.steps;
        }

        global = average(locals, config.averaging, train_sizes);

        for (std::size_t s = 0; s < n_sites; ++s) {
            steps_total[s] += round_steps[s];
            RoundLogRow row;
            row.round = round;
            row.site_id = sites[s].site_id;
            const std::vector<double> val_scores = forward(config.model, global, sites[s].val_X);
            row.val_auc = auc({val_scores, sites[s].val_y});
            const std::vector<double> train_probs =
                forward(config.model, global, sites[s].train_X);
            row.train_loss = loss(train_probs, sites[s].train_y);
            if (dp_configs[s]) {
                row.epsilon =
                    to_eps_delta(compose(step_curves[s], steps_total[s]), dp_configs[s]->delta)
                        .epsilon;
            }
            BestSnapshot& snap = result.best.at(sites[s].site_id);
            if (row.val_auc > snap.best_val_auc) {
                snap.best_val_auc = row.val_auc;
                snap.best_round = round;
                snap.params = global;
            }
            result.log.rows.push_back(std::move(row));
        }
    }

    if (config.rounds == 0) {
        // Nothing ran; snapshots report the shared init.
        for (std::size_t s = 0; s < n_sites; ++s) {
            BestSnapshot& snap = result.best.at(sites[s].site_id);
            const std::vector<double> val_scores = forward(config.model, global, sites[s].val_X);
            snap.best_val_auc = auc({val_scores, sites[s].val_y});
        }
    }

    if (site_dp) {
        for (std::size_t s = 0; s < n_sites; ++s) {
            AccountantParams params;
            params.sampling_ratio = dp_configs[s]->sampling_ratio;
            params.noise_multiplier = dp_configs[s]->noise_multiplier;
            params.steps = steps_total[s];
            params.delta = dp_configs[s]->delta;
            result.ledgers.emplace(sites[s].site_id,
                                   epsilon_for_training(params, sites[s].site_id));
        }
    }
    return result;
}

std::vector<SiteData> make_all_sites(const std::vector<SiteCohort>& cohorts,
                                     const std::vector<SplitAssignment>& assignments, Task task) {
    if (cohorts.size() != assignments.size()) {
        throw std::invalid_argument("cohort/assignment count mismatch");
    }
    std::vector<SiteData> sites;
    sites.reserve(cohorts.size());
    for (std::size_t i = 0; i < cohorts.size(); ++i) {
        sites.push_back(make_site_data(cohorts[i], assignments[i], task));
    }
    return sites;
}

} // namespace

FederationResult run_federated(const FederationConfig& config,
                               const std::vector<SiteData>& sites) {
    return run_federated_impl(config, sites, nullptr);
}

FederationResult run_federated(const FederationConfig& config,
                               const std::vector<SiteCohort>& cohorts,
                               const std::vector<SplitAssignment>& assignments) {
    return run_federated_impl(config, make_all_sites(cohorts, assignments, config.task), nullptr);
}

FederationResult run_federated_dp(const FederationConfig& config,
                                  const std::vector<SiteData>& sites,
                                  const std::map<std::string, DpConfig>& site_dp) {
    return run_federated_impl(config, sites, &site_dp);
}

FederationResult run_federated_dp(const FederationConfig& config,
                                  const std::vector<SiteCohort>& cohorts,
                                  const std::vector<SplitAssignment>& assignments,
                                  const std::map<std::string, DpConfig>& site_dp) {
    return run_federated_impl(config, make_all_sites(cohorts, assignments, config.task),
                              &site_dp);
}

HparamSelection select_local_dp_hparams(const SiteData& site, const ModelSpec& spec,
                                        const OptimizerSettings& opt, double delta,
                                        const std::vector<double>& clip_grid,
                                        std::uint64_t seed) {
    if (clip_grid.empty()) throw std::invalid_argument("empty clip norm grid");
    if (site.train_X.rows == 0) throw std::invalid_argument("empty training partition");
    if (site.val_X.rows == 0) throw std::invalid_argument("empty validation partition");

    const Seeder seeder(seed);
    const ParamVector start = init_params(spec, seeder.derive_seed("select/init"));
    const double q = dp_sampling_ratio(opt.batch_size, site.train_X.rows);

    HparamSelection selection;
    double best_auc = -std::numeric_limits<double>::infinity();
    for (double clip : clip_grid) {
        DpConfig dp;
        dp.clip_norm = clip;
        dp.noise_multiplier = 1.0;
        dp.sampling_ratio = q;
        dp.delta = delta;

        char label[64];
        std::snprintf(label, sizeof(label), "select/S=%g", clip);
        RngStream stream = seeder.stream(label);
        const LocalUpdateResult res =
            local_update(site, start, spec, opt, /*epochs=*/10, dp, stream);
        const std::vector<double> scores = forward(spec, res.params, site.val_X);
        const double val_auc = auc({scores, site.val_y});
        selection.candidate_scores.emplace_back(clip, val_auc);
        if (val_auc > best_auc) {
            best_auc = val_auc;
            selection.chosen = dp;
        }
    }
    return selection;
}

} // namespace fedsim
