#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// DP-SGD settings: clip threshold S, noise multiplier z = sigma/S, Poisson
// sampling ratio q, and the delta used when resolving epsilon.
struct DpConfig {
    double clip_norm = 1.0;        // S > 0
    double noise_multiplier = 1.0; // z >= 0
    double sampling_ratio = 1.0;   // q in (0,1]
    double delta = 1e-5;           // in (0,1)

    void validate() const;
};

struct AdamState {
    ParamVector m, v;
    std::uint64_t t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState fresh(const Layout& layout, double lr);
};

struct AdamResult {
    ParamVector params;
    AdamState state;
};

// g * min(1, S/||g||_2). In-norm inputs (and the zero vector) pass through
// unchanged bit-for-bit.
ParamVector clip_to_norm(const ParamVector& g, double clip_norm);

// (sum_i clip(g_i, S) + n) / expected_batch with n_j ~ N(0, (z*S)^2) iid.
// Noise goes on the sum, and the divisor is the *expected* batch size, which
// is what the accountant's sensitivity analysis assumes.
ParamVector dp_aggregate(const std::vector<ParamVector>& grads, double clip_norm,
                         double noise_multiplier, double expected_batch, RngStream& rng);

// Adds iid N(0, stddev^2) per coordinate; coordinate order fixed. Consumes
// params.size() normal draws even when stddev == 0.
void add_gaussian_noise(ParamVector& params, double stddev, RngStream& rng);

// Standard bias-corrected Adam update; pure in (state, params, g).
AdamResult adam_step(AdamState state, ParamVector params, const ParamVector& g);

ParamVector sgd_step(ParamVector params, const ParamVector& g, double lr);

} // namespace fedsim
