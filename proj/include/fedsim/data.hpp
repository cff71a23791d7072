#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace fedsim {

struct AdmissionRecord {
    std::string patient_id;
    std::string admission_id;
    std::vector<std::uint8_t> features; // 0/1, fixed width per dataset
    std::uint8_t label_mortality = 0;
    std::uint8_t label_plos = 0;
};

// One hospital's records. A patient may own several admissions; admission
// ids are unique within the site.
struct SiteCohort {
    std::string site_id;
    std::size_t feature_width = 0;
    std::vector<AdmissionRecord> records;
};

enum class Partition { train = 0, val = 1, test = 2 };

// Admission ids per partition, sorted. Partitions are admission-disjoint and
// patient-disjoint within the site, and together cover it.
struct SplitAssignment {
    std::array<std::vector<std::string>, 3> admission_ids;

    const std::vector<std::string>& ids(Partition p) const {
        return admission_ids[static_cast<std::size_t>(p)];
    }
    bool contains(Partition p, const std::string& admission_id) const;
};

struct SyntheticSpec {
    std::vector<std::size_t> site_sizes; // admissions per site
    std::size_t feature_width = 50;
    double incidence_mortality = 0.073;
    double incidence_plos = 0.344;
    double site_effect_scale = 0.3; // tau: stddev of per-site coefficient shifts
    // P(patient has 1, 2, 3, ... admissions); normalized internally.
    std::vector<double> admissions_per_patient = {0.8, 0.15, 0.05};
    std::uint64_t seed = 0;

    void validate() const;

    // 31 sites with admission counts between 1,268 and 4,381 (65,509 total),
    // a realistic multi-hospital cohort scale.
    static SyntheticSpec default31();
};

// Shuffles the site's patients deterministically by seed and assigns them to
// train/val/test by cumulative patient-count fractions; every admission
// follows its patient.
SplitAssignment split_by_patient(const SiteCohort& cohort, std::array<double, 3> fractions,
                                 std::uint64_t seed);

// Indices of the sites whose train partition holds strictly more than
// min_train admissions.
std::vector<std::size_t> filter_min_train_size(const std::vector<SiteCohort>& cohorts,
                                               const std::vector<SplitAssignment>& assignments,
                                               std::size_t min_train = 1000);

// Deterministic multi-site generator: Bernoulli features with shared
// per-feature rates, labels from per-site logistic ground truth (coefficients
// = global draw + N(0, tau^2) site shift, intercept bisected to the target
// incidence on that site's realized features).
std::vector<SiteCohort> generate_synthetic(const SyntheticSpec& spec);

// CSV schema: site_id,patient_id,admission_id,label_mortality,label_plos,
// f0..f{d-1}; header mandatory, fields must not contain commas.
// expected_width 0 infers the width from the header.
std::vector<SiteCohort> load_csv(const std::string& path, std::size_t expected_width = 0);

void write_csv(const std::vector<SiteCohort>& cohorts, const std::string& path);

} // namespace fedsim
