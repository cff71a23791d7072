#include "fedsim/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedsim {

std::vector<int> default_rdp_orders() {
    std::vector<int> orders;
    for (int a = 2; a <= 64; ++a) orders.push_back(a);
    return orders;
}

void AccountantParams::validate() const {
    if (!(sampling_ratio > 0.0 && sampling_ratio <= 1.0)) {
        throw std::invalid_argument("sampling_ratio must be in (0,1]");
    }
    if (steps > 0 && !(noise_multiplier > 0.0)) {
        throw std::invalid_argument("noise_multiplier must be positive for accounted steps");
    }
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
    if (orders.empty()) throw std::invalid_argument("orders must be nonempty");
    int prev = 1;
    for (int a : orders) {
        if (a < 2) throw std::invalid_argument("Renyi orders must be integers >= 2");
        if (a <= prev) throw std::invalid_argument("Renyi orders must be strictly ascending");
        prev = a;
    }
}

namespace {

double log_binomial(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double log_sum_exp(const std::vector<double>& log_terms) {
    const double max_term = *std::max_element(log_terms.begin(), log_terms.end());
    if (!std::isfinite(max_term)) return max_term;
    double sum = 0.0;
    for (double t : log_terms) sum += std::exp(t - max_term);
    return max_term + std::log(sum);
}

} // namespace

double rdp_step(double q, double z, int order) {
    if (order < 2) throw std::invalid_argument("Renyi order must be an integer >= 2");
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("q must be in (0,1]");
    if (!(z > 0.0)) throw std::invalid_argument("noise multiplier must be positive");

    const double alpha = static_cast<double>(order);
    if (q == 1.0) {
        return alpha / (2.0 * z * z);
    }

    // log sum_{k=0..alpha} C(alpha,k) (1-q)^(alpha-k) q^k exp(k(k-1)/(2 z^2))
    const double log_q = std::log(q);
    const double log_1mq = std::log1p(-q);
    std::vector<double> log_terms(order + 1);
    for (int k = 0; k <= order; ++k) {
        log_terms[k] = log_binomial(order, k) + (alpha - k) * log_1mq + k * log_q +
                       (k * (k - 1.0)) / (2.0 * z * z);
    }
    const double eps = log_sum_exp(log_terms) / (alpha - 1.0);
    // The sum dominates the plain binomial theorem, so eps >= 0 up to rounding.
    return eps < 0.0 ? 0.0 : eps;
}

RdpCurve rdp_curve(double q, double z, const std::vector<int>& orders) {
    RdpCurve curve;
    curve.orders = orders;
    curve.eps.reserve(orders.size());
    for (int a : orders) curve.eps.push_back(rdp_step(q, z, a));
    return curve;
}

RdpCurve compose(const RdpCurve& curve, std::uint64_t steps) {
    RdpCurve out = curve;
    for (double& e : out.eps) e *= static_cast<double>(steps);
    return out;
}

EpsDelta to_eps_delta(const RdpCurve& curve, double delta) {
    if (curve.orders.empty()) throw std::invalid_argument("empty RDP curve");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
    const double log_inv_delta = std::log(1.0 / delta);
    double best = std::numeric_limits<double>::infinity();
    int best_order = 0;
    for (std::size_t i = 0; i < curve.orders.size(); ++i) {
        const double candidate = curve.eps[i] + log_inv_delta / (curve.orders[i] - 1.0);
        if (candidate < best) {
            best = candidate;
            best_order = curve.orders[i];
        }
    }
    return {best, best_order};
}

PrivacyLedger epsilon_for_training(const AccountantParams& params, std::string site_id) {
    params.validate();
    PrivacyLedger ledger;
    ledger.site_id = std::move(site_id);
    ledger.params = params;
    if (params.steps == 0) {
        ledger.curve.orders = params.orders;
        ledger.curve.eps.assign(params.orders.size(), 0.0);
    } else {
        ledger.curve = compose(
            rdp_curve(params.sampling_ratio, params.noise_multiplier, params.orders),
            params.steps);
    }
    const EpsDelta resolved = to_eps_delta(ledger.curve, params.delta);
    ledger.epsilon = resolved.epsilon;
    ledger.best_order = resolved.best_order;
    return ledger;
}

} // namespace fedsim
