#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fedsim {

// Deterministic random stream. Every distribution is implemented directly on
// top of mt19937_64 so that a seed fully determines the draw sequence,
// independent of the standard library's distribution internals.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t u64() { return gen_(); }

    // Uniform on [0,1).
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller. Always consumes exactly two draws.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform01() < p; }

    // Uniform integer in [0,n), rejection-sampled so there is no modulo bias.
    std::uint64_t below(std::uint64_t n);

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
};

// Derives independent named streams from one master seed. A stream's identity
// depends only on (master seed, label), never on derivation order, so workers
// may pull their streams in any schedule and still replay bit-identically.
class Seeder {
public:
    explicit Seeder(std::uint64_t master) : master_(master) {}

    std::uint64_t derive_seed(std::string_view label) const;

    RngStream stream(std::string_view label) const {
        return RngStream(derive_seed(label));
    }

private:
    std::uint64_t master_;
};

} // namespace fedsim
