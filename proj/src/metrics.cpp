#include "fedsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedsim {

namespace {

constexpr double kZ95 = 1.95996; // two-sided 95% normal quantile

void check_set(const ScoredSet& set) {
    if (set.scores.size() != set.labels.size()) {
        throw std::invalid_argument("scores/labels length mismatch");
    }
    for (int y : set.labels) {
        if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
    }
}

// Sample variance (n-1 denominator).
double sample_variance(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double sq = 0.0;
    for (double x : v) sq += (x - mean) * (x - mean);
    return sq / (n - 1.0);
}

double sample_covariance(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - ma) * (b[i] - mb);
    return sq / (n - 1.0);
}

} // namespace

namespace detail {

Placements placements(const ScoredSet& set) {
    check_set(set);
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < set.scores.size(); ++i) {
        (set.labels[i] == 1 ? pos : neg).push_back(set.scores[i]);
    }
    if (pos.empty() || neg.empty()) {
        throw std::invalid_argument("AUC needs at least one positive and one negative");
    }

    std::vector<double> sorted_neg = neg;
    std::sort(sorted_neg.begin(), sorted_neg.end());
    std::vector<double> sorted_pos = pos;
    std::sort(sorted_pos.begin(), sorted_pos.end());

    const double m = static_cast<double>(pos.size());
    const double n = static_cast<double>(neg.size());

    Placements out;
    out.v10.resize(pos.size());
    out.v01.resize(neg.size());

    // Pair-count numerator stays exact (multiples of 0.5), so one final
    // division reproduces brute-force pairwise enumeration bit-for-bit.
    double numerator = 0.0;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        const auto lo = std::lower_bound(sorted_neg.begin(), sorted_neg.end(), pos[i]);
        const auto hi = std::upper_bound(sorted_neg.begin(), sorted_neg.end(), pos[i]);
        const double below = static_cast<double>(lo - sorted_neg.begin());
        const double ties = static_cast<double>(hi - lo);
        numerator += below + 0.5 * ties;
        out.v10[i] = (below + 0.5 * ties) / n;
    }
    for (std::size_t j = 0; j < neg.size(); ++j) {
        const auto lo = std::lower_bound(sorted_pos.begin(), sorted_pos.end(), neg[j]);
        const auto hi = std::upper_bound(sorted_pos.begin(), sorted_pos.end(), neg[j]);
        const double above = static_cast<double>(sorted_pos.end() - hi);
        const double ties = static_cast<double>(hi - lo);
        out.v01[j] = (above + 0.5 * ties) / m;
    }
    out.auc = numerator / (m * n);
    return out;
}

} // namespace detail

double auc(const ScoredSet& set) { return detail::placements(set).auc; }

AucEstimate delong_estimate(const ScoredSet& set) {
    const detail::Placements p = detail::placements(set);
    if (p.v10.size() < 2 || p.v01.size() < 2) {
        throw std::invalid_argument("DeLong variance needs >= 2 positives and >= 2 negatives");
    }
    const double s10 = sample_variance(p.v10);
    const double s01 = sample_variance(p.v01);
    AucEstimate est;
    est.auc = p.auc;
    est.variance = s10 / static_cast<double>(p.v10.size()) +
                   s01 / static_cast<double>(p.v01.size());
    const double half = kZ95 * std::sqrt(est.variance);
    est.ci_low = std::max(0.0, est.auc - half);
    est.ci_high = std::min(1.0, est.auc + half);
    return est;
}

AucDiff delong_diff(const ScoredSet& a, const ScoredSet& b) {
    check_set(a);
    check_set(b);
    if (a.labels.size() != b.labels.size()) {
        throw std::invalid_argument("DeLong difference needs equally sized score sets");
    }
    if (a.labels != b.labels) {
        throw std::invalid_argument("DeLong difference needs identical labels in order");
    }
    const detail::Placements pa = detail::placements(a);
    const detail::Placements pb = detail::placements(b);
    if (pa.v10.size() < 2 || pa.v01.size() < 2) {
        throw std::invalid_argument("DeLong variance needs >= 2 positives and >= 2 negatives");
    }

    const double m = static_cast<double>(pa.v10.size());
    const double n = static_cast<double>(pa.v01.size());
    const double var_a = sample_variance(pa.v10) / m + sample_variance(pa.v01) / n;
    const double var_b = sample_variance(pb.v10) / m + sample_variance(pb.v01) / n;
    const double cov = sample_covariance(pa.v10, pb.v10) / m +
                       sample_covariance(pa.v01, pb.v01) / n;

    AucDiff diff;
    diff.delta = pa.auc - pb.auc;
    diff.variance = var_a + var_b - 2.0 * cov;
    if (diff.variance < 0.0) diff.variance = 0.0; // rounding guard
    const double half = kZ95 * std::sqrt(diff.variance);
    diff.ci_low = diff.delta - half;
    diff.ci_high = diff.delta + half;
    diff.significant = (0.0 < diff.ci_low) || (0.0 > diff.ci_high);
    return diff;
}

} // namespace fedsim
