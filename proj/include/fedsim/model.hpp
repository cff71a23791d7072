#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fedsim/matrix.hpp"
#include "fedsim/param_vector.hpp"

namespace fedsim {

enum class ModelKind { logistic, mlp };

// Binary classifier over {0,1} feature vectors: logistic regression or a
// one-hidden-layer relu network, sigmoid output in both cases.
struct ModelSpec {
    ModelKind kind = ModelKind::logistic;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0; // mlp only

    Layout layout() const;
    std::size_t param_count() const;
    void validate() const;
};

struct Batch {
    Matrix features;            // (B, input_dim), entries 0/1
    std::vector<double> labels; // length B, entries 0/1
};

// Deterministic in (spec, seed). Logistic weights and all biases start at
// zero; mlp weight blocks are drawn uniform on +-sqrt(6/(fan_in+fan_out)).
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Per-record probabilities, one per feature row. Output is always in the
// open interval (0,1).
std::vector<double> forward(const ModelSpec& spec, const ParamVector& params,
                            const Matrix& features);

// Mean binary cross-entropy. Probabilities must already lie in (0,1); no
// clamping happens here.
double loss(const std::vector<double>& probabilities, const std::vector<double>& labels);

// Mean gradient of the batch loss.
ParamVector grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// Gradient of each record's own loss, one entry per record.
std::vector<ParamVector> per_example_grads(const ModelSpec& spec, const ParamVector& params,
                                           const Batch& batch);

namespace detail {

// Branches keep exp() away from overflow; underflow to exactly 0 or 1 would
// need |z| beyond ~745, far outside anything the binary-feature models reach.
inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace detail

// Kernel entry points used by the training loops: same math as the ops above
// but writing into caller-owned storage. OpenMP-parallel over records (and
// over output coordinates for reductions, each coordinate summing records in
// ascending order), so results are bit-identical for any thread count.
namespace kernels {

void forward_into(const ModelSpec& spec, const ParamVector& params, const Matrix& X,
                  std::span<double> probs_out);

void grad_into(const ModelSpec& spec, const ParamVector& params, const Matrix& X,
               std::span<const double> y, ParamVector& grad_out);

// Row i of grads_out receives the flat gradient of record i's loss.
// grads_out must be (B, param_count).
void per_example_grads_into(const ModelSpec& spec, const ParamVector& params, const Matrix& X,
                            std::span<const double> y, Matrix& grads_out);

} // namespace kernels

} // namespace fedsim
