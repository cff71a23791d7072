#pragma once

#include <vector>

#include "fedsim/model.hpp"

namespace fedsim::ref {

// Serial, record-at-a-time reference versions of the model kernels. They
// perform the same arithmetic in the same order as the OpenMP kernels, so
// tests can require bit-identical results; the benchmark tool compares the
// two for speed.

std::vector<double> forward(const ModelSpec& spec, const ParamVector& params, const Matrix& X);

ParamVector grad(const ModelSpec& spec, const ParamVector& params, const Matrix& X,
                 const std::vector<double>& y);

std::vector<ParamVector> per_example_grads(const ModelSpec& spec, const ParamVector& params,
                                           const Matrix& X, const std::vector<double>& y);

} // namespace fedsim::ref
