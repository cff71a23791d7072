// Independent test oracles. Everything here deliberately avoids the library
// code paths it is used to check: gradients come from finite differences of
// the public loss, the sampled-Gaussian Renyi divergence from numerical
// integration, and AUC from exhaustive pairwise enumeration.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"

namespace oracles {

// Central finite differences of the mean batch loss wrt every parameter.
inline fedsim::ParamVector finite_difference_grad(const fedsim::ModelSpec& spec,
                                                  const fedsim::ParamVector& params,
                                                  const fedsim::Batch& batch,
                                                  double h = 1e-6) {
    fedsim::ParamVector g = fedsim::ParamVector::zeros(spec.layout());
    fedsim::ParamVector probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        probe.values[i] = params.values[i] + h;
        const double up = fedsim::loss(fedsim::forward(spec, probe, batch.features), batch.labels);
        probe.values[i] = params.values[i] - h;
        const double down =
            fedsim::loss(fedsim::forward(spec, probe, batch.features), batch.labels);
        probe.values[i] = params.values[i];
        g.values[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double rel_l2_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        ref += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

namespace detail {

inline double logaddexp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_normal_pdf(double x, double stddev) {
    const double t = x / stddev;
    return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(stddev) - 0.5 * t * t;
}

} // namespace detail

// Renyi divergence of the subsampled Gaussian mechanism at integer order
// alpha, by Simpson integration in the log domain of
//   E_{x ~ N(0,z^2)} [ ((1-q) + q * exp((2x-1)/(2 z^2)))^alpha ].
inline double sampled_gaussian_rdp_quadrature(double q, double z, int alpha) {
    const double lo = -14.0 * z - 2.0;
    const double hi = static_cast<double>(alpha) + 14.0 * z + 2.0;
    const std::size_t n = 200001; // odd, Simpson-compatible
    const double step = (hi - lo) / static_cast<double>(n - 1);
    const double log_q = std::log(q);
    const double log_1mq = std::log1p(-q);

    std::vector<double> log_terms(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = lo + static_cast<double>(i) * step;
        const double w = (2.0 * x - 1.0) / (2.0 * z * z);
        const double log_mix = detail::logaddexp(log_1mq, log_q + w);
        double coeff = 2.0;
        if (i == 0 || i + 1 == n) coeff = 1.0;
        else if (i % 2 == 1) coeff = 4.0;
        log_terms[i] = detail::log_normal_pdf(x, z) + alpha * log_mix + std::log(coeff);
    }
    const double max_term = *std::max_element(log_terms.begin(), log_terms.end());
    double sum = 0.0;
    for (double t : log_terms) sum += std::exp(t - max_term);
    const double log_integral = max_term + std::log(sum) + std::log(step / 3.0);
    return log_integral / (static_cast<double>(alpha) - 1.0);
}

// Exhaustive pairwise AUC with the 0.5 tie convention.
inline double brute_force_auc(const fedsim::ScoredSet& set) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < set.scores.size(); ++i) {
        (set.labels[i] == 1 ? pos : neg).push_back(set.scores[i]);
    }
    double sum = 0.0;
    for (double p : pos) {
        for (double q : neg) {
            if (p > q) sum += 1.0;
            else if (p == q) sum += 0.5;
        }
    }
    return sum / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

} // namespace oracles
