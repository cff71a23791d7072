#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsim/data.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/metrics.hpp"

namespace {

struct ScoreFile {
    std::vector<int> labels;
    std::vector<double> score_a;
    std::vector<double> score_b; // empty unless a score_b column is present
    std::vector<std::string> record_ids;
};

// Columns: record_id,label,score_a[,score_b]
ScoreFile load_score_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) header.push_back(field);
    }
    const bool has_b = header.size() == 4 && header[3] == "score_b";
    if (!(header.size() >= 3 && header[0] == "record_id" && header[1] == "label" &&
          header[2] == "score_a" && (header.size() == 3 || has_b))) {
        throw std::runtime_error(path + ": header must be record_id,label,score_a[,score_b]");
    }

    ScoreFile out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != header.size()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad field count");
        }
        out.record_ids.push_back(fields[0]);
        if (fields[1] != "0" && fields[1] != "1") {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": label must be 0 or 1");
        }
        out.labels.push_back(fields[1] == "1" ? 1 : 0);
        out.score_a.push_back(std::stod(fields[2]));
        if (has_b) out.score_b.push_back(std::stod(fields[3]));
    }
    return out;
}

void print_estimate(const std::string& name, const fedsim::AucEstimate& est) {
    std::printf("%s: AUC %.6f  var %.6g  95%% CI (%.6f, %.6f)\n", name.c_str(), est.auc,
                est.variance, est.ci_low, est.ci_high);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-silo federated learning simulator with differential privacy"};
    app.require_subcommand(1);

    // generate: synthetic cohort -> CSV
    auto* generate = app.add_subcommand("generate", "Generate a synthetic multi-site cohort CSV");
    std::size_t gen_sites = 5;
    std::size_t gen_site_size = 2000;
    std::vector<std::size_t> gen_site_sizes;
    std::size_t gen_features = 50;
    double gen_tau = 0.3;
    double gen_mort = 0.073;
    double gen_plos = 0.344;
    std::uint64_t gen_seed = 0;
    std::string gen_out = "cohort.csv";
    bool gen_default31 = false;
    generate->add_option("--sites", gen_sites, "Number of sites");
    generate->add_option("--site-size", gen_site_size, "Admissions per site");
    generate->add_option("--site-sizes", gen_site_sizes,
                         "Explicit per-site admission counts (overrides --sites/--site-size)");
    generate->add_option("--features", gen_features, "Feature width");
    generate->add_option("--tau", gen_tau, "Cross-site heterogeneity scale");
    generate->add_option("--incidence-mortality", gen_mort, "Target mortality incidence");
    generate->add_option("--incidence-plos", gen_plos, "Target prolonged-stay incidence");
    generate->add_flag("--default31", gen_default31,
                       "Use the 31-site preset (65,509 admissions)");
    generate->add_option("--seed", gen_seed, "Master seed");
    generate->add_option("--out", gen_out, "Output CSV path");

    // run: condition from a config file
    auto* run = app.add_subcommand("run", "Run an experimental condition from a config file");
    std::string run_config;
    std::uint64_t run_seed = 0;
    std::string run_out;
    run->add_option("--config", run_config, "Config file path")->required();
    auto* run_seed_opt = run->add_option("--seed", run_seed, "Master seed (overrides config)");
    run->add_option("--out", run_out, "Output directory (overrides config)");

    // accountant: epsilon query
    auto* accountant = app.add_subcommand("accountant", "Resolve (epsilon, delta) for a DP run");
    double acc_q = 1.0, acc_z = 1.0, acc_delta = 1e-5;
    std::uint64_t acc_steps = 1;
    accountant->add_option("--q", acc_q, "Poisson sampling ratio in (0,1]")->required();
    accountant->add_option("--z", acc_z, "Noise multiplier sigma/S")->required();
    accountant->add_option("--steps", acc_steps, "Number of training steps")->required();
    accountant->add_option("--delta", acc_delta, "Target delta");

    // compare: DeLong estimates and paired difference from score CSVs
    auto* compare = app.add_subcommand("compare", "DeLong AUC comparison from score CSVs");
    std::string cmp_a, cmp_b;
    compare->add_option("file_a", cmp_a,
                        "Score CSV (record_id,label,score_a[,score_b])")->required();
    compare->add_option("file_b", cmp_b, "Optional second score CSV (column score_a is used)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*generate) {
            fedsim::SyntheticSpec spec;
            if (gen_default31) {
                spec = fedsim::SyntheticSpec::default31();
            } else if (!gen_site_sizes.empty()) {
                spec.site_sizes = gen_site_sizes;
            } else {
                spec.site_sizes.assign(gen_sites, gen_site_size);
            }
            spec.feature_width = gen_features;
            spec.site_effect_scale = gen_tau;
            spec.incidence_mortality = gen_mort;
            spec.incidence_plos = gen_plos;
            spec.seed = gen_seed;
            const auto cohorts = fedsim::generate_synthetic(spec);
            fedsim::write_csv(cohorts, gen_out);
            std::size_t total = 0, mort = 0, plos = 0;
            for (const auto& c : cohorts) {
                total += c.records.size();
                for (const auto& r : c.records) {
                    mort += r.label_mortality;
                    plos += r.label_plos;
                }
            }
            std::printf("wrote %zu sites, %zu admissions to %s\n", cohorts.size(), total,
                        gen_out.c_str());
            std::printf("incidence: mortality %.4f, plos %.4f\n",
                        double(mort) / double(total), double(plos) / double(total));
        } else if (*run) {
            fedsim::ExperimentConfig config = fedsim::parse_config_file(run_config);
            if (run_seed_opt->count() > 0) config.seed = run_seed;
            if (!run_out.empty()) config.out_dir = run_out;
            const fedsim::ConditionResult result = fedsim::run_condition(config);
            fedsim::emit_reports(result, config.out_dir);
            std::printf("condition %s: %zu report rows, %zu trajectory rows -> %s\n",
                        fedsim::condition_name(config.condition).c_str(), result.rows.size(),
                        result.trajectory.size(), config.out_dir.c_str());
        } else if (*accountant) {
            const fedsim::EpsDelta resolved =
                fedsim::accountant_query(acc_q, acc_z, acc_steps, acc_delta);
            std::printf("epsilon = %.9f at alpha = %d (q=%g, z=%g, steps=%llu, delta=%g)\n",
                        resolved.epsilon, resolved.best_order, acc_q, acc_z,
                        static_cast<unsigned long long>(acc_steps), acc_delta);
        } else if (*compare) {
            const ScoreFile a = load_score_csv(cmp_a);
            fedsim::ScoredSet set_a{a.score_a, a.labels};
            print_estimate("model A", fedsim::delong_estimate(set_a));

            std::vector<double> b_scores;
            if (!cmp_b.empty()) {
                const ScoreFile b = load_score_csv(cmp_b);
                if (b.labels != a.labels || b.record_ids != a.record_ids) {
                    throw std::runtime_error("score files must list identical records in order");
                }
                b_scores = b.score_a;
            } else if (!a.score_b.empty()) {
                b_scores = a.score_b;
            }
            if (!b_scores.empty()) {
                fedsim::ScoredSet set_b{b_scores, a.labels};
                print_estimate("model B", fedsim::delong_estimate(set_b));
                const fedsim::AucDiff diff = fedsim::delong_diff(set_a, set_b);
                std::printf("difference A-B: %.6f  95%% CI (%.6f, %.6f)  %s\n", diff.delta,
                            diff.ci_low, diff.ci_high,
                            diff.significant ? "significant" : "not significant");
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
