#pragma once

#include <vector>

namespace fedsim {

struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels; // 0/1, same length as scores
};

struct AucEstimate {
    double auc = 0.0;
    double variance = 0.0;
    double ci_low = 0.0;  // clamped to [0,1] for reporting
    double ci_high = 0.0;
};

struct AucDiff {
    double delta = 0.0;
    double variance = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    bool significant = false; // exactly: zero not contained in [ci_low, ci_high]
};

// Mann-Whitney AUC with the 0.5 tie convention. Requires at least one
// positive and one negative label.
double auc(const ScoredSet& set);

// DeLong variance from placement values; 95% normal-approximation CI.
// Requires at least two positives and two negatives.
AucEstimate delong_estimate(const ScoredSet& set);

// DeLong difference for two models scored on the same records (identical
// labels, identical ordering); covariance from paired placement values.
AucDiff delong_diff(const ScoredSet& a, const ScoredSet& b);

namespace detail {

// Placement values: v10[i] = fraction of negatives scored below positive i
// (ties count 0.5); v01[j] symmetric for negatives. auc is computed from the
// raw pair counts with a single division so it matches exhaustive pairwise
// enumeration exactly.
struct Placements {
    std::vector<double> v10;
    std::vector<double> v01;
    double auc = 0.0;
};

Placements placements(const ScoredSet& set);

} // namespace detail

} // namespace fedsim
