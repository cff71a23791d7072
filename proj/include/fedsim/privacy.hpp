#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fedsim {

// Integer orders 2..64: they admit the exact binomial form of the sampled
// Gaussian Renyi divergence and cover the useful range for delta = 1e-5.
std::vector<int> default_rdp_orders();

struct AccountantParams {
    double sampling_ratio = 1.0;  // q in (0,1]
    double noise_multiplier = 1.0; // z, must be > 0 whenever steps > 0
    std::uint64_t steps = 0;       // T
    double delta = 1e-5;
    std::vector<int> orders = default_rdp_orders();

    void validate() const;
};

// Accumulated Renyi epsilon per order, parallel arrays.
struct RdpCurve {
    std::vector<int> orders;
    std::vector<double> eps;
};

struct EpsDelta {
    double epsilon = 0.0;
    int best_order = 0;
};

// Per-step Renyi epsilon of one subsampled-Gaussian step at integer order
// alpha >= 2. q = 1 uses the closed form alpha/(2 z^2); q < 1 evaluates the
// binomial expansion with log-domain summation.
double rdp_step(double q, double z, int order);

RdpCurve rdp_curve(double q, double z, const std::vector<int>& orders);

// Pointwise multiplication by the step count (RDP composes additively).
RdpCurve compose(const RdpCurve& curve, std::uint64_t steps);

// eps = min over orders of eps(alpha) + ln(1/delta)/(alpha-1); ties resolve
// to the smallest order.
EpsDelta to_eps_delta(const RdpCurve& curve, double delta);

struct PrivacyLedger {
    std::string site_id;
    AccountantParams params;
    RdpCurve curve;
    double epsilon = 0.0;
    int best_order = 0;
};

// rdp_curve -> compose(T) -> to_eps_delta, bundled into a ledger entry.
PrivacyLedger epsilon_for_training(const AccountantParams& params, std::string site_id = {});

} // namespace fedsim
