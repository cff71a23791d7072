// Times the OpenMP model kernels against the serial reference on a synthetic
// workload and prints the speedup.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fedsim/model.hpp"
#include "fedsim/reference.hpp"
#include "fedsim/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm up
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

} // namespace

int main() {
    const std::size_t B = 4096, d = 256, h = 64;
    const int reps = 10;

    fedsim::ModelSpec spec;
    spec.kind = fedsim::ModelKind::mlp;
    spec.input_dim = d;
    spec.hidden_dim = h;
    const fedsim::ParamVector params = fedsim::init_params(spec, 7);

    fedsim::RngStream rng(11);
    fedsim::Matrix X(B, d);
    std::vector<double> y(B);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < d; ++j) X(i, j) = rng.bernoulli(0.3) ? 1.0 : 0.0;
        y[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    }

#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (OpenMP disabled)\n");
#endif
    std::printf("workload: mlp d=%zu h=%zu batch=%zu, %d reps\n\n", d, h, B, reps);

    std::vector<double> probs(B);
    const double fwd_omp = time_ms(
        [&] { fedsim::kernels::forward_into(spec, params, X, probs); }, reps);
    const double fwd_ref = time_ms([&] { (void)fedsim::ref::forward(spec, params, X); }, reps);
    std::printf("forward            omp %8.2f ms   serial %8.2f ms   speedup %.2fx\n", fwd_omp,
                fwd_ref, fwd_ref / fwd_omp);

    fedsim::ParamVector g;
    const double grad_omp =
        time_ms([&] { fedsim::kernels::grad_into(spec, params, X, y, g); }, reps);
    const double grad_ref = time_ms([&] { (void)fedsim::ref::grad(spec, params, X, y); }, reps);
    std::printf("grad               omp %8.2f ms   serial %8.2f ms   speedup %.2fx\n", grad_omp,
                grad_ref, grad_ref / grad_omp);

    fedsim::Matrix G(B, spec.param_count());
    const double peg_omp = time_ms(
        [&] { fedsim::kernels::per_example_grads_into(spec, params, X, y, G); }, reps);
    const double peg_ref =
        time_ms([&] { (void)fedsim::ref::per_example_grads(spec, params, X, y); }, reps);
    std::printf("per-example grads  omp %8.2f ms   serial %8.2f ms   speedup %.2fx\n", peg_omp,
                peg_ref, peg_ref / peg_omp);
    return 0;
}
