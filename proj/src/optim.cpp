#include "fedsim/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace fedsim {

void DpConfig::validate() const {
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
    if (!(noise_multiplier >= 0.0)) throw std::invalid_argument("noise_multiplier must be >= 0");
    if (!(sampling_ratio > 0.0 && sampling_ratio <= 1.0)) {
        throw std::invalid_argument("sampling_ratio must be in (0,1]");
    }
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
}

AdamState AdamState::fresh(const Layout& layout, double lr) {
    AdamState s;
    s.m = ParamVector::zeros(layout);
    s.v = ParamVector::zeros(layout);
    s.t = 0;
    s.lr = lr;
    return s;
}

ParamVector clip_to_norm(const ParamVector& g, double clip_norm) {
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
    const double norm = g.l2_norm();
    if (norm == 0.0 || norm <= clip_norm) return g;
    ParamVector out = g;
    out.scale(clip_norm / norm);
    return out;
}

ParamVector dp_aggregate(const std::vector<ParamVector>& grads, double clip_norm,
                         double noise_multiplier, double expected_batch, RngStream& rng) {
    if (grads.empty()) throw std::invalid_argument("dp_aggregate needs at least one gradient");
    if (!(expected_batch > 0.0)) throw std::invalid_argument("expected_batch must be positive");
    ParamVector sum = ParamVector::zeros(grads.front().layout);
    for (const ParamVector& g : grads) {
        sum.axpy(1.0, clip_to_norm(g, clip_norm));
    }
    add_gaussian_noise(sum, noise_multiplier * clip_norm, rng);
    for (double& v : sum.values) v /= expected_batch;
    return sum;
}

void add_gaussian_noise(ParamVector& params, double stddev, RngStream& rng) {
    for (double& v : params.values) v += stddev * rng.normal();
}

AdamResult adam_step(AdamState state, ParamVector params, const ParamVector& g) {
    require_same_layout(params, g);
    require_same_layout(state.m, g);
    state.t += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        const double gi = g.values[i];
        state.m.values[i] = state.beta1 * state.m.values[i] + (1.0 - state.beta1) * gi;
        state.v.values[i] = state.beta2 * state.v.values[i] + (1.0 - state.beta2) * gi * gi;
        const double m_hat = state.m.values[i] / c1;
        const double v_hat = state.v.values[i] / c2;
        params.values[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    return {std::move(params), std::move(state)};
}

ParamVector sgd_step(ParamVector params, const ParamVector& g, double lr) {
    require_same_layout(params, g);
    params.axpy(-lr, g);
    return params;
}

} // namespace fedsim
