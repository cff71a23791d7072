#include "fedsim/reference.hpp"

#include <stdexcept>

namespace fedsim::ref {

namespace {

// Single-record forward pass; fills a1 (relu activations) for the mlp.
double forward_one(const ModelSpec& spec, const ParamVector& params, const double* x,
                   std::vector<double>* a1) {
    const std::size_t d = spec.input_dim;
    if (spec.kind == ModelKind::logistic) {
        const double* w = params.values.data();
        double z = params.values[d];
        for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
        return detail::sigmoid(z);
    }
    const std::size_t h = spec.hidden_dim;
    const double* W1 = params.values.data();
    const double* b1 = W1 + h * d;
    const double* W2 = b1 + h;
    double z2 = W2[h];
    for (std::size_t k = 0; k < h; ++k) {
        double z1 = b1[k];
        const double* w1k = W1 + k * d;
        for (std::size_t j = 0; j < d; ++j) z1 += w1k[j] * x[j];
        const double a = z1 > 0.0 ? z1 : 0.0;
        if (a1) (*a1)[k] = a;
        if (z1 > 0.0) z2 += W2[k] * z1;
    }
    return detail::sigmoid(z2);
}

} // namespace

std::vector<double> forward(const ModelSpec& spec, const ParamVector& params, const Matrix& X) {
    std::vector<double> probs(X.rows);
    std::vector<double> a1(spec.kind == ModelKind::mlp ? spec.hidden_dim : 0);
    for (std::size_t i = 0; i < X.rows; ++i) {
        probs[i] = forward_one(spec, params, X.row(i),
                               spec.kind == ModelKind::mlp ? &a1 : nullptr);
    }
    return probs;
}

ParamVector grad(const ModelSpec& spec, const ParamVector& params, const Matrix& X,
                 const std::vector<double>& y) {
    if (y.size() != X.rows || X.rows == 0) throw std::invalid_argument("bad batch");
    ParamVector g = ParamVector::zeros(spec.layout());
    const std::size_t n = X.rows;
    const std::size_t d = spec.input_dim;
    const double inv_b = 1.0 / static_cast<double>(n);

    if (spec.kind == ModelKind::logistic) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = X.row(i);
            const double r = (forward_one(spec, params, x, nullptr) - y[i]) * inv_b;
            for (std::size_t j = 0; j < d; ++j) g.values[j] += r * x[j];
            g.values[d] += r;
        }
        return g;
    }

    const std::size_t h = spec.hidden_dim;
    const double* W2 = params.values.data() + h * d + h;
    double* gW1 = g.values.data();
    double* gb1 = gW1 + h * d;
    double* gW2 = gb1 + h;
    double* gb2 = gW2 + h;
    std::vector<double> a1(h);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = X.row(i);
        const double p = forward_one(spec, params, x, &a1);
        const double r = (p - y[i]) * inv_b;
        for (std::size_t k = 0; k < h; ++k) {
            const double dz1 = a1[k] > 0.0 ? r * W2[k] : 0.0;
            for (std::size_t j = 0; j < d; ++j) gW1[k * d + j] += dz1 * x[j];
            gb1[k] += dz1;
            gW2[k] += r * a1[k];
        }
        *gb2 += r;
    }
    return g;
}

std::vector<ParamVector> per_example_grads(const ModelSpec& spec, const ParamVector& params,
                                           const Matrix& X, const std::vector<double>& y) {
    if (y.size() != X.rows) throw std::invalid_argument("bad batch");
    std::vector<ParamVector> out;
    out.reserve(X.rows);
    const std::size_t d = spec.input_dim;
    for (std::size_t i = 0; i < X.rows; ++i) {
        ParamVector g = ParamVector::zeros(spec.layout());
        const double* x = X.row(i);
        if (spec.kind == ModelKind::logistic) {
            const double r = forward_one(spec, params, x, nullptr) - y[i];
            for (std::size_t j = 0; j < d; ++j) g.values[j] = r * x[j];
            g.values[d] = r;
        } else {
            const std::size_t h = spec.hidden_dim;
            const double* W2 = params.values.data() + h * d + h;
            std::vector<double> a1(h);
            const double p = forward_one(spec, params, x, &a1);
            const double r = p - y[i];
            double* gW1 = g.values.data();
            double* gb1 = gW1 + h * d;
            double* gW2 = gb1 + h;
            double* gb2 = gW2 + h;
            for (std::size_t k = 0; k < h; ++k) {
                const double dz1 = a1[k] > 0.0 ? r * W2[k] : 0.0;
                for (std::size_t j = 0; j < d; ++j) gW1[k * d + j] = dz1 * x[j];
                gb1[k] = dz1;
                gW2[k] = r * a1[k];
            }
            *gb2 = r;
        }
        out.push_back(std::move(g));
    }
    return out;
}

} // namespace fedsim::ref
