#include "fedsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

bool SplitAssignment::contains(Partition p, const std::string& admission_id) const {
    const auto& ids_sorted = ids(p);
    return std::binary_search(ids_sorted.begin(), ids_sorted.end(), admission_id);
}

void SyntheticSpec::validate() const {
    if (site_sizes.empty()) throw std::invalid_argument("synthetic spec needs at least one site");
    for (std::size_t n : site_sizes) {
        if (n == 0) throw std::invalid_argument("site sizes must be positive");
    }
    if (feature_width == 0) throw std::invalid_argument("feature width must be positive");
    for (double p : {incidence_mortality, incidence_plos}) {
        if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("incidences must be in (0,1)");
    }
    if (!(site_effect_scale >= 0.0)) throw std::invalid_argument("site effect scale must be >= 0");
    if (admissions_per_patient.empty()) {
        throw std::invalid_argument("admissions-per-patient distribution is empty");
    }
    double total = 0.0;
    for (double p : admissions_per_patient) {
        if (!(p >= 0.0)) throw std::invalid_argument("admission distribution entries must be >= 0");
        total += p;
    }
    if (!(total > 0.0)) throw std::invalid_argument("admission distribution must have mass");
}

SyntheticSpec SyntheticSpec::default31() {
    SyntheticSpec spec;
    spec.site_sizes = {4381, 3875, 3167, 3139, 3026, 2723, 2680, 2678, 2666, 2591, 2484,
                       2449, 2215, 2103, 1942, 1783, 1747, 1730, 1613, 1509, 1478, 1433,
                       1397, 1386, 1372, 1369, 1336, 1334, 1330, 1305, 1268};
    return spec;
}

SplitAssignment split_by_patient(const SiteCohort& cohort, std::array<double, 3> fractions,
                                 std::uint64_t seed) {
    if (cohort.records.empty()) throw std::invalid_argument("cannot split an empty cohort");
    const double total_fraction = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total_fraction - 1.0) > 1e-9) {
        throw std::invalid_argument("split fractions must sum to 1");
    }

    // Unique patients in first-appearance order, then a seeded shuffle.
    std::vector<std::string> patients;
    std::unordered_map<std::string, std::vector<std::size_t>> by_patient;
    for (std::size_t i = 0; i < cohort.records.size(); ++i) {
        const auto& pid = cohort.records[i].patient_id;
        auto [it, inserted] = by_patient.try_emplace(pid);
        if (inserted) patients.push_back(pid);
        it->second.push_back(i);
    }
    RngStream rng(seed);
    rng.shuffle(patients);

    const std::size_t n_patients = patients.size();
    const auto boundary = [&](double cumulative) {
        return static_cast<std::size_t>(
            std::floor(cumulative * static_cast<double>(n_patients) + 0.5));
    };
    const std::size_t edge_train = boundary(fractions[0]);
    const std::size_t edge_val = boundary(fractions[0] + fractions[1]);

    SplitAssignment assignment;
    for (std::size_t p = 0; p < n_patients; ++p) {
        const std::size_t part = p < edge_train ? 0 : (p < edge_val ? 1 : 2);
        for (std::size_t rec : by_patient[patients[p]]) {
            assignment.admission_ids[part].push_back(cohort.records[rec].admission_id);
        }
    }
    for (auto& ids : assignment.admission_ids) std::sort(ids.begin(), ids.end());
    return assignment;
}

std::vector<std::size_t> filter_min_train_size(const std::vector<SiteCohort>& cohorts,
                                               const std::vector<SplitAssignment>& assignments,
                                               std::size_t min_train) {
    if (cohorts.size() != assignments.size()) {
        throw std::invalid_argument("cohort/assignment count mismatch");
    }
    std::vector<std::size_t> retained;
    for (std::size_t i = 0; i < cohorts.size(); ++i) {
        if (assignments[i].ids(Partition::train).size() > min_train) retained.push_back(i);
    }
    return retained;
}

namespace {

std::string zero_padded(std::size_t value, int width) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

// Mean sigmoid(logit_i + b) over the site, used to calibrate the intercept.
double mean_sigmoid(const std::vector<double>& logits, double b) {
    double sum = 0.0;
    for (double z : logits) sum += detail::sigmoid(z + b);
    return sum / static_cast<double>(logits.size());
}

// Monotone in b, so plain bisection. The fixed iteration count drives the
// interval far below the 0.005 prevalence tolerance and keeps the result a
// pure function of the inputs.
double calibrate_intercept(const std::vector<double>& logits, double target) {
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mean_sigmoid(logits, mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace

std::vector<SiteCohort> generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const Seeder seeder(spec.seed);
    const std::size_t d = spec.feature_width;

    // Shared ground truth across sites.
    RngStream global = seeder.stream("synth/global");
    std::vector<double> feature_rates(d);
    for (double& r : feature_rates) r = global.uniform(0.05, 0.5);
    const double coeff_scale = 10.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> w_mortality(d), w_plos(d);
    for (double& w : w_mortality) w = global.normal(0.0, coeff_scale);
    for (double& w : w_plos) w = global.normal(0.0, coeff_scale);

    std::vector<double> admission_dist = spec.admissions_per_patient;
    double mass = 0.0;
    for (double p : admission_dist) mass += p;
    for (double& p : admission_dist) p /= mass;

    std::vector<SiteCohort> cohorts(spec.site_sizes.size());
    for (std::size_t s = 0; s < spec.site_sizes.size(); ++s) {
        const std::string site_id = "site" + zero_padded(s + 1, 2);
        RngStream rng = seeder.stream("synth/site/" + site_id);
        SiteCohort& cohort = cohorts[s];
        cohort.site_id = site_id;
        cohort.feature_width = d;
        const std::size_t n = spec.site_sizes[s];
        cohort.records.resize(n);

        // Patient structure first: sequential patients, each owning a draw
        // from the admissions-per-patient distribution.
        std::size_t assigned = 0, patient_idx = 0;
        while (assigned < n) {
            const double u = rng.uniform01();
            double cum = 0.0;
            std::size_t k = admission_dist.size();
            for (std::size_t j = 0; j < admission_dist.size(); ++j) {
                cum += admission_dist[j];
                if (u < cum) {
                    k = j + 1;
                    break;
                }
            }
            if (k > admission_dist.size()) k = admission_dist.size();
            const std::string pid = site_id + "_p" + zero_padded(patient_idx++, 5);
            for (std::size_t j = 0; j < k && assigned < n; ++j, ++assigned) {
                cohort.records[assigned].patient_id = pid;
                cohort.records[assigned].admission_id = site_id + "_a" + zero_padded(assigned, 6);
            }
        }

        for (auto& rec : cohort.records) {
            rec.features.resize(d);
            for (std::size_t j = 0; j < d; ++j) {
                rec.features[j] = rng.bernoulli(feature_rates[j]) ? 1 : 0;
            }
        }

        // Per-site coefficient shift, then intercepts calibrated on this
        // site's realized features.
        std::vector<double> w_site_mort(d), w_site_plos(d);
        for (std::size_t j = 0; j < d; ++j) {
            w_site_mort[j] = w_mortality[j] + rng.normal(0.0, spec.site_effect_scale);
        }
        for (std::size_t j = 0; j < d; ++j) {
            w_site_plos[j] = w_plos[j] + rng.normal(0.0, spec.site_effect_scale);
        }

        std::vector<double> logits_mort(n), logits_plos(n);
        for (std::size_t i = 0; i < n; ++i) {
            double zm = 0.0, zp = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                if (cohort.records[i].features[j]) {
                    zm += w_site_mort[j];
                    zp += w_site_plos[j];
                }
            }
            logits_mort[i] = zm;
            logits_plos[i] = zp;
        }
        const double b_mort = calibrate_intercept(logits_mort, spec.incidence_mortality);
        const double b_plos = calibrate_intercept(logits_plos, spec.incidence_plos);

        for (std::size_t i = 0; i < n; ++i) {
            cohort.records[i].label_mortality =
                rng.bernoulli(detail::sigmoid(logits_mort[i] + b_mort)) ? 1 : 0;
            cohort.records[i].label_plos =
                rng.bernoulli(detail::sigmoid(logits_plos[i] + b_plos)) ? 1 : 0;
        }
    }
    return cohorts;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

[[noreturn]] void fail_at(const std::string& path, std::size_t line_no, const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

std::uint8_t parse_binary(const std::string& field, const std::string& path, std::size_t line_no,
                          const char* what) {
    if (field == "0") return 0;
    if (field == "1") return 1;
    fail_at(path, line_no, std::string(what) + " must be 0 or 1, got '" + field + "'");
}

} // namespace

std::vector<SiteCohort> load_csv(const std::string& path, std::size_t expected_width) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_line(line);
    const std::vector<std::string> fixed = {"site_id", "patient_id", "admission_id",
                                            "label_mortality", "label_plos"};
    if (header.size() < fixed.size() + 1) {
        throw std::runtime_error(path + ": header is missing feature columns");
    }
    for (std::size_t i = 0; i < fixed.size(); ++i) {
        if (header[i] != fixed[i]) {
            throw std::runtime_error(path + ": header column " + std::to_string(i + 1) +
                                     " must be '" + fixed[i] + "', got '" + header[i] + "'");
        }
    }
    const std::size_t width = header.size() - fixed.size();
    for (std::size_t j = 0; j < width; ++j) {
        const std::string expect = "f" + std::to_string(j);
        if (header[fixed.size() + j] != expect) {
            throw std::runtime_error(path + ": feature column " + std::to_string(j) +
                                     " must be named '" + expect + "'");
        }
    }
    if (expected_width != 0 && width != expected_width) {
        throw std::runtime_error(path + ": expected " + std::to_string(expected_width) +
                                 " features, header has " + std::to_string(width));
    }

    std::vector<SiteCohort> cohorts;
    std::unordered_map<std::string, std::size_t> site_index;
    std::unordered_map<std::string, std::unordered_set<std::string>> seen_admissions;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_line(line);
        if (fields.size() != fixed.size() + width) {
            fail_at(path, line_no, "expected " + std::to_string(fixed.size() + width) +
                                       " fields, got " + std::to_string(fields.size()));
        }
        const std::string& site_id = fields[0];
        if (site_id.empty()) fail_at(path, line_no, "empty site_id");
        auto [it, inserted] = site_index.try_emplace(site_id, cohorts.size());
        if (inserted) {
            cohorts.push_back(SiteCohort{site_id, width, {}});
        }
        SiteCohort& cohort = cohorts[it->second];

        AdmissionRecord rec;
        rec.patient_id = fields[1];
        rec.admission_id = fields[2];
        if (rec.patient_id.empty()) fail_at(path, line_no, "empty patient_id");
        if (rec.admission_id.empty()) fail_at(path, line_no, "empty admission_id");
        if (!seen_admissions[site_id].insert(rec.admission_id).second) {
            fail_at(path, line_no, "duplicate admission_id '" + rec.admission_id +
                                       "' within site '" + site_id + "'");
        }
        rec.label_mortality = parse_binary(fields[3], path, line_no, "label_mortality");
        rec.label_plos = parse_binary(fields[4], path, line_no, "label_plos");
        rec.features.resize(width);
        for (std::size_t j = 0; j < width; ++j) {
            rec.features[j] = parse_binary(fields[fixed.size() + j], path, line_no, "feature");
        }
        cohort.records.push_back(std::move(rec));
    }
    return cohorts;
}

void write_csv(const std::vector<SiteCohort>& cohorts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    const std::size_t width = cohorts.empty() ? 0 : cohorts.front().feature_width;
    out << "site_id,patient_id,admission_id,label_mortality,label_plos";
    for (std::size_t j = 0; j < width; ++j) out << ",f" << j;
    out << '\n';
    for (const auto& cohort : cohorts) {
        if (cohort.feature_width != width) {
            throw std::invalid_argument("all cohorts must share one feature width");
        }
        for (const auto& rec : cohort.records) {
            out << cohort.site_id << ',' << rec.patient_id << ',' << rec.admission_id << ','
                << int(rec.label_mortality) << ',' << int(rec.label_plos);
            for (std::size_t j = 0; j < width; ++j) out << ',' << int(rec.features[j]);
            out << '\n';
        }
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

} // namespace fedsim
