#include "fedsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fedsim/metrics.hpp"

namespace fedsim {

std::string condition_name(Condition condition) {
    switch (condition) {
        case Condition::local: return "local";
        case Condition::central: return "central";
        case Condition::central_dp: return "central_dp";
        case Condition::federated: return "federated";
        case Condition::federated_dp: return "federated_dp";
    }
    throw std::logic_error("unknown condition");
}

void ExperimentConfig::validate() const {
    if (use_synthetic) {
        synthetic.validate();
    } else if (csv_path.empty()) {
        throw std::invalid_argument("csv data source needs csv_path");
    }
    const double fsum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(fsum - 1.0) > 1e-9) throw std::invalid_argument("fractions must sum to 1");
    for (double f : fractions) {
        if (!(f > 0.0)) throw std::invalid_argument("fractions must be positive");
    }
    if (model_kinds.empty()) throw std::invalid_argument("model_kinds must be nonempty");
    if (learning_rates.empty()) throw std::invalid_argument("learning_rates must be nonempty");
    if (batch_sizes.empty()) throw std::invalid_argument("batch_sizes must be nonempty");
    const bool needs_hidden =
        std::find(model_kinds.begin(), model_kinds.end(), ModelKind::mlp) != model_kinds.end();
    if (needs_hidden && hidden_dims.empty()) {
        throw std::invalid_argument("hidden_dims must be nonempty when mlp is in the grid");
    }
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
    const bool dp = condition == Condition::central_dp || condition == Condition::federated_dp;
    if (dp && (noise_multipliers.empty() || clip_norms.empty())) {
        throw std::invalid_argument("DP conditions need noise_multipliers and clip_norms");
    }
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    if (local_epochs < 1) throw std::invalid_argument("local_epochs must be >= 1");
    if (tasks.empty()) throw std::invalid_argument("tasks must be nonempty");
}

namespace {

// ---------------------------------------------------------------------------
// config parsing

std::string trim(const std::string& s) {
    const auto from = s.find_first_not_of(" \t");
    if (from == std::string::npos) return "";
    const auto to = s.find_last_not_of(" \t");
    return s.substr(from, to - from + 1);
}

std::vector<std::string> split_csv(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

class KeyValues {
public:
    KeyValues(const std::string& text, std::string origin) : origin_(std::move(origin)) {
        std::stringstream ss(text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(ss, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                fail(line_no, "expected 'key = value'");
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) fail(line_no, "empty key");
            if (!values_.emplace(key, value).second) {
                fail(line_no, "duplicate key '" + key + "'");
            }
        }
    }

    std::optional<std::string> take(const std::string& key) {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        std::string v = it->second;
        values_.erase(it);
        return v;
    }

    bool was_set(const std::string& key) const { return set_.count(key) > 0; }
    void mark(const std::string& key) { set_.insert(key); }

    void finish() const {
        if (values_.empty()) return;
        std::string names;
        for (const auto& [k, _] : values_) {
            if (!names.empty()) names += ", ";
            names += "'" + k + "'";
        }
        throw std::invalid_argument(origin_ + ": unknown config key(s): " + names);
    }

    [[noreturn]] void fail(std::size_t line_no, const std::string& what) const {
        throw std::invalid_argument(origin_ + ":" + std::to_string(line_no) + ": " + what);
    }

    const std::string& origin() const { return origin_; }

private:
    std::string origin_;
    std::map<std::string, std::string> values_;
    std::set<std::string> set_;
};

double parse_double_value(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config key '" + key + "': not a number: '" + value + "'");
    }
}

std::uint64_t parse_u64_value(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config key '" + key + "': not a nonnegative integer: '" +
                                    value + "'");
    }
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    KeyValues kv(text, origin);
    ExperimentConfig cfg;

    const auto take_double = [&](const std::string& key, double& out) {
        if (auto v = kv.take(key)) {
            out = parse_double_value(key, *v);
            kv.mark(key);
        }
    };
    const auto take_u64 = [&](const std::string& key, auto& out) {
        if (auto v = kv.take(key)) {
            out = static_cast<std::remove_reference_t<decltype(out)>>(parse_u64_value(key, *v));
            kv.mark(key);
        }
    };
    const auto take_int = [&](const std::string& key, int& out) {
        if (auto v = kv.take(key)) {
            out = static_cast<int>(parse_u64_value(key, *v));
            kv.mark(key);
        }
    };
    const auto take_double_list = [&](const std::string& key, std::vector<double>& out) {
        if (auto v = kv.take(key)) {
            out.clear();
            for (const auto& item : split_csv(*v)) out.push_back(parse_double_value(key, item));
            kv.mark(key);
        }
    };
    const auto take_size_list = [&](const std::string& key, std::vector<std::size_t>& out) {
        if (auto v = kv.take(key)) {
            out.clear();
            for (const auto& item : split_csv(*v)) {
                out.push_back(static_cast<std::size_t>(parse_u64_value(key, item)));
            }
            kv.mark(key);
        }
    };

    if (auto v = kv.take("condition")) {
        kv.mark("condition");
        if (*v == "local") cfg.condition = Condition::local;
        else if (*v == "central") cfg.condition = Condition::central;
        else if (*v == "central_dp") cfg.condition = Condition::central_dp;
        else if (*v == "federated") cfg.condition = Condition::federated;
        else if (*v == "federated_dp") cfg.condition = Condition::federated_dp;
        else throw std::invalid_argument("config key 'condition': unknown value '" + *v + "'");
    }
    if (auto v = kv.take("data")) {
        kv.mark("data");
        if (*v == "synthetic") cfg.use_synthetic = true;
        else if (*v == "csv") cfg.use_synthetic = false;
        else throw std::invalid_argument("config key 'data': must be 'synthetic' or 'csv'");
    }
    if (auto v = kv.take("csv_path")) {
        kv.mark("csv_path");
        cfg.csv_path = *v;
    }

    // synthetic cohort shape: either site_sizes, or sites + site_size
    cfg.synthetic.site_sizes.assign(5, 2000);
    std::size_t sites = 0, site_size = 0;
    take_u64("sites", sites);
    take_u64("site_size", site_size);
    std::vector<std::size_t> site_sizes;
    take_size_list("site_sizes", site_sizes);
    if (!site_sizes.empty() && (sites != 0 || site_size != 0)) {
        throw std::invalid_argument("use either 'site_sizes' or 'sites'+'site_size', not both");
    }
    if (!site_sizes.empty()) {
        cfg.synthetic.site_sizes = site_sizes;
    } else if (sites != 0 || site_size != 0) {
        cfg.synthetic.site_sizes.assign(sites == 0 ? 5 : sites, site_size == 0 ? 2000 : site_size);
    }
    take_u64("features", cfg.synthetic.feature_width);
    take_double("tau", cfg.synthetic.site_effect_scale);
    take_double("incidence_mortality", cfg.synthetic.incidence_mortality);
    take_double("incidence_plos", cfg.synthetic.incidence_plos);
    take_double_list("admissions_per_patient", cfg.synthetic.admissions_per_patient);

    if (auto v = kv.take("fractions")) {
        kv.mark("fractions");
        const auto parts = split_csv(*v);
        if (parts.size() != 3) {
            throw std::invalid_argument("config key 'fractions': need three comma-separated values");
        }
        for (std::size_t i = 0; i < 3; ++i) cfg.fractions[i] = parse_double_value("fractions", parts[i]);
    }
    take_u64("min_train_size", cfg.min_train_size);

    if (auto v = kv.take("model_kinds")) {
        kv.mark("model_kinds");
        cfg.model_kinds.clear();
        for (const auto& item : split_csv(*v)) {
            if (item == "logistic") cfg.model_kinds.push_back(ModelKind::logistic);
            else if (item == "mlp") cfg.model_kinds.push_back(ModelKind::mlp);
            else throw std::invalid_argument("config key 'model_kinds': unknown kind '" + item + "'");
        }
    }
    take_size_list("hidden_dims", cfg.hidden_dims);
    take_double_list("learning_rates", cfg.learning_rates);
    take_size_list("batch_sizes", cfg.batch_sizes);

    const bool dp_condition =
        cfg.condition == Condition::central_dp || cfg.condition == Condition::federated_dp;
    if (auto v = kv.take("noise_multipliers")) {
        kv.mark("noise_multipliers");
        if (!dp_condition) {
            throw std::invalid_argument("config key 'noise_multipliers' is only valid for DP conditions");
        }
        cfg.noise_multipliers.clear();
        for (const auto& item : split_csv(*v)) {
            cfg.noise_multipliers.push_back(parse_double_value("noise_multipliers", item));
        }
    }
    if (auto v = kv.take("clip_norms")) {
        kv.mark("clip_norms");
        if (!dp_condition) {
            throw std::invalid_argument("config key 'clip_norms' is only valid for DP conditions");
        }
        cfg.clip_norms.clear();
        for (const auto& item : split_csv(*v)) {
            cfg.clip_norms.push_back(parse_double_value("clip_norms", item));
        }
    }
    take_double("delta", cfg.delta);

    bool epochs_set = false;
    if (auto v = kv.take("epochs")) {
        kv.mark("epochs");
        cfg.epochs = static_cast<int>(parse_u64_value("epochs", *v));
        epochs_set = true;
    }
    take_int("rounds", cfg.rounds);
    take_int("local_epochs", cfg.local_epochs);
    if (auto v = kv.take("averaging")) {
        kv.mark("averaging");
        if (*v == "uniform") cfg.averaging = AveragingMode::uniform;
        else if (*v == "size_weighted") cfg.averaging = AveragingMode::size_weighted;
        else throw std::invalid_argument("config key 'averaging': must be 'uniform' or 'size_weighted'");
    }
    if (auto v = kv.take("tasks")) {
        kv.mark("tasks");
        cfg.tasks.clear();
        for (const auto& item : split_csv(*v)) {
            if (item == "mortality") cfg.tasks.push_back(Task::mortality);
            else if (item == "plos") cfg.tasks.push_back(Task::plos);
            else throw std::invalid_argument("config key 'tasks': unknown task '" + item + "'");
        }
    }
    take_u64("seed", cfg.seed);
    if (auto v = kv.take("out")) {
        kv.mark("out");
        cfg.out_dir = *v;
    }

    kv.finish();

    // central_dp trajectories default to 25 epochs unless overridden.
    if (cfg.condition == Condition::central_dp && !epochs_set) cfg.epochs = 25;

    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

// ---------------------------------------------------------------------------
// condition running

namespace {

struct Candidate {
    ModelSpec spec;
    double lr = 0.0;
    std::size_t batch = 0;
    // central_dp grid extension
    bool has_dp = false;
    double noise_multiplier = 0.0;
    double clip_norm = 0.0;
};

// Declared tie-break order: model (listed kinds, hidden ascending as listed),
// then lr, then batch, then the DP grid (z, then S).
std::vector<Candidate> enumerate_candidates(const ExperimentConfig& cfg, bool with_dp_grid) {
    std::vector<Candidate> out;
    for (ModelKind kind : cfg.model_kinds) {
        const std::vector<std::size_t> hiddens =
            kind == ModelKind::mlp ? cfg.hidden_dims : std::vector<std::size_t>{0};
        for (std::size_t h : hiddens) {
            for (double lr : cfg.learning_rates) {
                for (std::size_t b : cfg.batch_sizes) {
                    Candidate c;
                    c.spec.kind = kind;
                    c.spec.hidden_dim = h;
                    c.lr = lr;
                    c.batch = b;
                    if (!with_dp_grid) {
                        out.push_back(c);
                        continue;
                    }
                    for (double z : cfg.noise_multipliers) {
                        for (double S : cfg.clip_norms) {
                            Candidate d = c;
                            d.has_dp = true;
                            d.noise_multiplier = z;
                            d.clip_norm = S;
                            out.push_back(d);
                        }
                    }
                }
            }
        }
    }
    return out;
}

std::string candidate_label(std::size_t index) { return "cand" + std::to_string(index); }

struct SiteEval {
    std::vector<double> test_scores;
    AucEstimate estimate;
    double val_auc = 0.0; // selection score
};

using Baseline = std::map<std::string, SiteEval>;

double evaluate_auc(const ModelSpec& spec, const ParamVector& params, const Matrix& X,
                    const std::vector<int>& y) {
    const std::vector<double> scores = forward(spec, params, X);
    return auc({scores, y});
}

// Independent per-site grid search and training, no collaboration.
Baseline run_local_condition(const ExperimentConfig& cfg, const std::vector<SiteData>& sites,
                             const Seeder& seeder, Task task) {
    const std::vector<Candidate> candidates = enumerate_candidates(cfg, false);
    Baseline baseline;
    for (const SiteData& site : sites) {
        ParamVector best_params;
        ModelSpec best_spec;
        double best_score = -1.0;
        const std::string prefix = "local/" + task_name(task) + "/" + site.site_id + "/";
        grid_search(candidates.size(), [&](std::size_t i) {
            Candidate c = candidates[i];
            c.spec.input_dim = site.train_X.cols;
            const Seeder run_seeder(seeder.derive_seed(prefix + candidate_label(i)));
            ParamVector params = init_params(c.spec, run_seeder.derive_seed("init"));
            RngStream stream = run_seeder.stream("train");
            LocalUpdateResult res = local_update(site.train_X, site.train_y, std::move(params),
                                                 c.spec, {c.lr, c.batch}, cfg.epochs,
                                                 std::nullopt, stream);
            const double score = evaluate_auc(c.spec, res.params, site.val_X, site.val_y);
            if (score > best_score) {
                best_score = score;
                best_params = std::move(res.params);
                best_spec = c.spec;
            }
            return score;
        });
        SiteEval eval;
        eval.val_auc = best_score;
        eval.test_scores = forward(best_spec, best_params, site.test_X);
        eval.estimate = delong_estimate({eval.test_scores, site.test_y});
        baseline.emplace(site.site_id, std::move(eval));
    }
    return baseline;
}

struct PooledData {
    Matrix train_X;
    std::vector<double> train_y;
    Matrix val_X;
    std::vector<int> val_y;
};

PooledData pool_sites(const std::vector<SiteData>& sites) {
    PooledData pooled;
    std::size_t train_rows = 0, val_rows = 0;
    const std::size_t d = sites.front().train_X.cols;
    for (const SiteData& s : sites) {
        train_rows += s.train_X.rows;
        val_rows += s.val_X.rows;
    }
    pooled.train_X = Matrix(train_rows, d);
    pooled.val_X = Matrix(val_rows, d);
    pooled.train_y.reserve(train_rows);
    pooled.val_y.reserve(val_rows);
    std::size_t tr = 0, vr = 0;
    for (const SiteData& s : sites) {
        std::copy(s.train_X.data.begin(), s.train_X.data.end(), pooled.train_X.row(tr));
        tr += s.train_X.rows;
        pooled.train_y.insert(pooled.train_y.end(), s.train_y.begin(), s.train_y.end());
        std::copy(s.val_X.data.begin(), s.val_X.data.end(), pooled.val_X.row(vr));
        vr += s.val_X.rows;
        pooled.val_y.insert(pooled.val_y.end(), s.val_y.begin(), s.val_y.end());
    }
    return pooled;
}

ReportRow make_row(const ExperimentConfig& cfg, const SiteData& site, Task task,
                   const std::vector<double>& test_scores, const Baseline* baseline) {
    ReportRow row;
    row.site_id = site.site_id;
    row.n_admissions = site.n_admissions;
    row.task = task;
    row.condition = cfg.condition;
    const AucEstimate est = delong_estimate({test_scores, site.test_y});
    row.test_auc = est.auc;
    row.ci_low = est.ci_low;
    row.ci_high = est.ci_high;
    if (baseline) {
        const SiteEval& local_eval = baseline->at(site.site_id);
        const AucDiff diff = delong_diff({test_scores, site.test_y},
                                         {local_eval.test_scores, site.test_y});
        row.rel_auc = diff.delta;
        row.rel_ci_low = diff.ci_low;
        row.rel_ci_high = diff.ci_high;
        row.significant = diff.significant;
    }
    return row;
}

void run_central_family(const ExperimentConfig& cfg, const std::vector<SiteData>& sites,
                        const Seeder& seeder, Task task, const Baseline& baseline,
                        ConditionResult& out) {
    const bool with_dp = cfg.condition == Condition::central_dp;
    const std::vector<Candidate> candidates = enumerate_candidates(cfg, with_dp);
    const PooledData pooled = pool_sites(sites);
    const std::string prefix = "central/" + task_name(task) + "/";

    ModelSpec best_spec;
    ParamVector best_params;
    std::vector<TrajectoryRow> best_trajectory;
    std::optional<double> best_epsilon;
    double best_score = -1.0;

    grid_search(candidates.size(), [&](std::size_t i) {
        Candidate c = candidates[i];
        c.spec.input_dim = pooled.train_X.cols;
        const Seeder run_seeder(seeder.derive_seed(prefix + candidate_label(i)));
        ParamVector params = init_params(c.spec, run_seeder.derive_seed("init"));
        RngStream stream = run_seeder.stream("train");

        std::vector<TrajectoryRow> trajectory;
        std::optional<double> epsilon;
        std::optional<DpConfig> dp;
        if (with_dp) {
            DpConfig d;
            d.clip_norm = c.clip_norm;
            d.noise_multiplier = c.noise_multiplier;
            d.sampling_ratio = dp_sampling_ratio(c.batch, pooled.train_X.rows);
            d.delta = cfg.delta;
            dp = d;
        }
        LocalUpdateResult res;
        if (with_dp) {
            const RdpCurve step_curve =
                rdp_curve(dp->sampling_ratio, dp->noise_multiplier, default_rdp_orders());
            res = local_update_hooked(
                pooled.train_X, pooled.train_y, std::move(params), c.spec, {c.lr, c.batch},
                cfg.epochs, dp, stream,
                [&](int epoch, const ParamVector& p, std::uint64_t steps_so_far) {
                    TrajectoryRow t;
                    t.task = task;
                    t.site_id = "central";
                    t.step = epoch;
                    t.epsilon =
                        to_eps_delta(compose(step_curve, steps_so_far), cfg.delta).epsilon;
                    t.val_auc = evaluate_auc(c.spec, p, pooled.val_X, pooled.val_y);
                    trajectory.push_back(t);
                });
            epsilon = to_eps_delta(compose(step_curve, res.steps), cfg.delta).epsilon;
        } else {
            res = local_update(pooled.train_X, pooled.train_y, std::move(params), c.spec,
                               {c.lr, c.batch}, cfg.epochs, std::nullopt, stream);
        }
        const double score = evaluate_auc(c.spec, res.params, pooled.val_X, pooled.val_y);
        if (score > best_score) {
            best_score = score;
            best_spec = c.spec;
            best_params = std::move(res.params);
            best_trajectory = std::move(trajectory);
            best_epsilon = epsilon;
        }
        return score;
    });

    for (const SiteData& site : sites) {
        const std::vector<double> scores = forward(best_spec, best_params, site.test_X);
        ReportRow row = make_row(cfg, site, task, scores, &baseline);
        row.epsilon = best_epsilon;
        out.rows.push_back(std::move(row));
    }
    out.trajectory.insert(out.trajectory.end(), best_trajectory.begin(), best_trajectory.end());
}

void run_federated_family(const ExperimentConfig& cfg, const std::vector<SiteData>& sites,
                          const Seeder& seeder, Task task, const Baseline& baseline,
                          ConditionResult& out) {
    const bool with_dp = cfg.condition == Condition::federated_dp;
    const std::string prefix = "fed/" + task_name(task) + "/";

    FederationConfig fed_cfg;
    fed_cfg.task = task;
    fed_cfg.rounds = cfg.rounds;
    fed_cfg.local_epochs = cfg.local_epochs;
    fed_cfg.averaging = cfg.averaging;

    if (!with_dp) {
        const std::vector<Candidate> candidates = enumerate_candidates(cfg, false);
        FederationResult best_result;
        ModelSpec best_spec;
        double best_score = -1.0;
        grid_search(candidates.size(), [&](std::size_t i) {
            Candidate c = candidates[i];
            c.spec.input_dim = sites.front().train_X.cols;
            FederationConfig run_cfg = fed_cfg;
            run_cfg.model = c.spec;
            run_cfg.optimizer = {c.lr, c.batch};
            run_cfg.master_seed = seeder.derive_seed(prefix + candidate_label(i));
            FederationResult result = run_federated(run_cfg, sites);
            // selection: best mean per-site early-stopped validation AUC
            double mean = 0.0;
            for (const auto& [_, snap] : result.best) mean += snap.best_val_auc;
            mean /= static_cast<double>(result.best.size());
            if (mean > best_score) {
                best_score = mean;
                best_result = std::move(result);
                best_spec = c.spec;
            }
            return mean;
        });
        for (const SiteData& site : sites) {
            const BestSnapshot& snap = best_result.best.at(site.site_id);
            const std::vector<double> scores = forward(best_spec, snap.params, site.test_X);
            out.rows.push_back(make_row(cfg, site, task, scores, &baseline));
        }
        return;
    }

    // Federated DP protocol: one model configuration; per-site clip norms
    // selected locally at z = 1 before any collaboration.
    Candidate c;
    c.spec.kind = cfg.model_kinds.front();
    c.spec.hidden_dim = c.spec.kind == ModelKind::mlp ? cfg.hidden_dims.front() : 0;
    c.spec.input_dim = sites.front().train_X.cols;
    c.lr = cfg.learning_rates.front();
    c.batch = cfg.batch_sizes.front();

    FederationConfig run_cfg = fed_cfg;
    run_cfg.model = c.spec;
    run_cfg.optimizer = {c.lr, c.batch};
    run_cfg.master_seed = seeder.derive_seed(prefix + "run");

    std::map<std::string, DpConfig> site_dp;
    for (const SiteData& site : sites) {
        const HparamSelection selection = select_local_dp_hparams(
            site, c.spec, run_cfg.optimizer, cfg.delta, cfg.clip_norms,
            seeder.derive_seed(prefix + "select/" + site.site_id));
        site_dp.emplace(site.site_id, selection.chosen);
    }

    const FederationResult result = run_federated_dp(run_cfg, sites, site_dp);
    for (const SiteData& site : sites) {
        const BestSnapshot& snap = result.best.at(site.site_id);
        const std::vector<double> scores = forward(c.spec, snap.params, site.test_X);
        ReportRow row = make_row(cfg, site, task, scores, &baseline);
        row.epsilon = result.ledgers.at(site.site_id).epsilon; // end-of-training budget
        out.rows.push_back(std::move(row));
    }
    for (const RoundLogRow& log_row : result.log.rows) {
        TrajectoryRow t;
        t.task = task;
        t.site_id = log_row.site_id;
        t.step = log_row.round;
        t.epsilon = *log_row.epsilon;
        t.val_auc = log_row.val_auc;
        out.trajectory.push_back(t);
    }
}

} // namespace

ConditionResult run_condition(const ExperimentConfig& config) {
    config.validate();
    const Seeder seeder(config.seed);

    std::vector<SiteCohort> cohorts;
    if (config.use_synthetic) {
        SyntheticSpec spec = config.synthetic;
        spec.seed = seeder.derive_seed("data");
        cohorts = generate_synthetic(spec);
    } else {
        cohorts = load_csv(config.csv_path);
    }
    if (cohorts.empty()) throw std::runtime_error("no cohorts in data source");

    std::vector<SplitAssignment> assignments;
    assignments.reserve(cohorts.size());
    for (const SiteCohort& cohort : cohorts) {
        assignments.push_back(split_by_patient(cohort, config.fractions,
                                               seeder.derive_seed("split/" + cohort.site_id)));
    }
    const std::vector<std::size_t> retained =
        filter_min_train_size(cohorts, assignments, config.min_train_size);
    if (retained.empty()) {
        throw std::runtime_error("no site exceeds min_train_size = " +
                                 std::to_string(config.min_train_size));
    }

    ConditionResult result;
    for (Task task : config.tasks) {
        std::vector<SiteData> sites;
        sites.reserve(retained.size());
        for (std::size_t idx : retained) {
            sites.push_back(make_site_data(cohorts[idx], assignments[idx], task));
        }

        // The local condition doubles as the comparison baseline for every
        // other condition, trained under the same derived seeds either way.
        const Baseline baseline = run_local_condition(config, sites, seeder, task);

        switch (config.condition) {
            case Condition::local:
                for (const SiteData& site : sites) {
                    const SiteEval& eval = baseline.at(site.site_id);
                    ReportRow row;
                    row.site_id = site.site_id;
                    row.n_admissions = site.n_admissions;
                    row.task = task;
                    row.condition = config.condition;
                    row.test_auc = eval.estimate.auc;
                    row.ci_low = eval.estimate.ci_low;
                    row.ci_high = eval.estimate.ci_high;
                    result.rows.push_back(std::move(row));
                }
                break;
            case Condition::central:
            case Condition::central_dp:
                run_central_family(config, sites, seeder, task, baseline, result);
                break;
            case Condition::federated:
            case Condition::federated_dp:
                run_federated_family(config, sites, seeder, task, baseline, result);
                break;
        }
    }

    std::sort(result.rows.begin(), result.rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (a.site_id != b.site_id) return a.site_id < b.site_id;
        return task_name(a.task) < task_name(b.task);
    });
    std::sort(result.trajectory.begin(), result.trajectory.end(),
              [](const TrajectoryRow& a, const TrajectoryRow& b) {
                  if (task_name(a.task) != task_name(b.task)) {
                      return task_name(a.task) < task_name(b.task);
                  }
                  if (a.site_id != b.site_id) return a.site_id < b.site_id;
                  return a.step < b.step;
              });
    return result;
}

EpsDelta accountant_query(double q, double z, std::uint64_t steps, double delta) {
    AccountantParams params;
    params.sampling_ratio = q;
    params.noise_multiplier = z;
    params.steps = steps;
    params.delta = delta;
    const PrivacyLedger ledger = epsilon_for_training(params);
    return {ledger.epsilon, ledger.best_order};
}

// ---------------------------------------------------------------------------
// report emission

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_fixed(double v, int digits) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

} // namespace

void emit_reports(const ConditionResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out_dir);

    const std::string results_path = out_dir + "/results.csv";
    std::ofstream results(results_path);
    if (!results) throw std::runtime_error("cannot write " + results_path);
    results << "site_id,n_admissions,task,condition,test_auc,test_ci_low,test_ci_high,"
               "rel_auc_vs_local,rel_ci_low,rel_ci_high,significant,epsilon\n";
    for (const ReportRow& row : result.rows) {
        results << row.site_id << ',' << row.n_admissions << ',' << task_name(row.task) << ','
                << condition_name(row.condition) << ',' << fmt_double(row.test_auc) << ','
                << fmt_double(row.ci_low) << ',' << fmt_double(row.ci_high) << ',';
        if (row.rel_auc) {
            results << fmt_double(*row.rel_auc) << ',' << fmt_double(*row.rel_ci_low) << ','
                    << fmt_double(*row.rel_ci_high) << ',' << (*row.significant ? '1' : '0');
        } else {
            results << ",,,";
        }
        results << ',';
        if (row.epsilon) results << fmt_double(*row.epsilon);
        results << '\n';
    }
    if (!results) throw std::runtime_error("failed writing " + results_path);
    results.close();

    const std::string trajectory_path = out_dir + "/trajectory.csv";
    std::ofstream trajectory(trajectory_path);
    if (!trajectory) throw std::runtime_error("cannot write " + trajectory_path);
    trajectory << "epoch_or_round,epsilon,val_auc,site_id,task\n";
    for (const TrajectoryRow& t : result.trajectory) {
        trajectory << t.step << ',' << fmt_double(t.epsilon) << ',' << fmt_double(t.val_auc)
                   << ',' << t.site_id << ',' << task_name(t.task) << '\n';
    }
    if (!trajectory) throw std::runtime_error("failed writing " + trajectory_path);
    trajectory.close();

    const std::string summary_path = out_dir + "/summary.txt";
    std::ofstream summary(summary_path);
    if (!summary) throw std::runtime_error("cannot write " + summary_path);
    for (const ReportRow& row : result.rows) {
        summary << row.site_id << " (N=" << row.n_admissions << ") " << task_name(row.task)
                << ' ' << condition_name(row.condition) << ": AUC "
                << fmt_fixed(row.test_auc, 3) << " (" << fmt_fixed(row.ci_low, 3) << ", "
                << fmt_fixed(row.ci_high, 3) << ")";
        if (row.rel_auc) {
            summary << "  vs local " << fmt_fixed(*row.rel_auc, 3) << " ("
                    << fmt_fixed(*row.rel_ci_low, 3) << ", " << fmt_fixed(*row.rel_ci_high, 3)
                    << ")" << (*row.significant ? " *" : "");
        }
        if (row.epsilon) summary << "  eps " << fmt_fixed(*row.epsilon, 3);
        summary << '\n';
    }
    if (!summary) throw std::runtime_error("failed writing " + summary_path);
}

std::vector<ReportRow> load_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");

    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        while (fields.size() < 12) fields.emplace_back();
        ReportRow row;
        row.site_id = fields[0];
        row.n_admissions = std::stoull(fields[1]);
        row.task = fields[2] == "mortality" ? Task::mortality : Task::plos;
        for (Condition c : {Condition::local, Condition::central, Condition::central_dp,
                            Condition::federated, Condition::federated_dp}) {
            if (condition_name(c) == fields[3]) row.condition = c;
        }
        row.test_auc = std::stod(fields[4]);
        row.ci_low = std::stod(fields[5]);
        row.ci_high = std::stod(fields[6]);
        if (!fields[7].empty()) {
            row.rel_auc = std::stod(fields[7]);
            row.rel_ci_low = std::stod(fields[8]);
            row.rel_ci_high = std::stod(fields[9]);
            row.significant = fields[10] == "1";
        }
        if (!fields[11].empty()) row.epsilon = std::stod(fields[11]);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace fedsim
