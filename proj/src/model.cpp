#include "fedsim/model.hpp"

#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fedsim/rng.hpp"

namespace fedsim {

Layout ModelSpec::layout() const {
    if (kind == ModelKind::logistic) {
        return {{"w", {input_dim}}, {"b", {1}}};
    }
    return {{"W1", {hidden_dim, input_dim}},
            {"b1", {hidden_dim}},
            {"W2", {hidden_dim}},
            {"b2", {1}}};
}

std::size_t ModelSpec::param_count() const { return layout_size(layout()); }

void ModelSpec::validate() const {
    if (input_dim == 0) throw std::invalid_argument("model input_dim must be positive");
    if (kind == ModelKind::mlp && hidden_dim == 0) {
        throw std::invalid_argument("mlp requires a positive hidden_dim");
    }
    if (kind == ModelKind::logistic && hidden_dim != 0) {
        throw std::invalid_argument("hidden_dim is only meaningful for mlp");
    }
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParamVector p = ParamVector::zeros(spec.layout());
    if (spec.kind == ModelKind::logistic) return p; // zero init, convex problem

    RngStream rng(seed);
    const double d = static_cast<double>(spec.input_dim);
    const double h = static_cast<double>(spec.hidden_dim);
    const double bound1 = std::sqrt(6.0 / (d + h));
    for (double& w : p.block("W1")) w = rng.uniform(-bound1, bound1);
    const double bound2 = std::sqrt(6.0 / (h + 1.0));
    for (double& w : p.block("W2")) w = rng.uniform(-bound2, bound2);
    return p;
}

namespace {

void check_shapes(const ModelSpec& spec, const ParamVector& params, const Matrix& X) {
    if (X.cols != spec.input_dim) {
        throw std::invalid_argument("feature width does not match model input_dim");
    }
    if (params.size() != spec.param_count() || !(params.layout == spec.layout())) {
        throw std::invalid_argument("parameter layout does not match model spec");
    }
}

// Contiguous slice of [0,n) owned by this thread. Each output coordinate
// belongs to exactly one thread and sums records in ascending order, so the
// result is independent of the thread count.
struct Band {
    std::size_t lo = 0;
    std::size_t hi = 0;
};

inline Band my_band(std::size_t n) {
#ifdef _OPENMP
    const std::size_t nt = static_cast<std::size_t>(omp_get_num_threads());
    const std::size_t tid = static_cast<std::size_t>(omp_get_thread_num());
    return {n * tid / nt, n * (tid + 1) / nt};
#else
    return {0, n};
#endif
}

} // namespace

namespace kernels {

void forward_into(const ModelSpec& spec, const ParamVector& params, const Matrix& X,
                  std::span<double> probs_out) {
    check_shapes(spec, params, X);
    if (probs_out.size() != X.rows) throw std::invalid_argument("probs_out size mismatch");
    const std::int64_t n = static_cast<std::int64_t>(X.rows);
    const std::size_t d = spec.input_dim;

    if (spec.kind == ModelKind::logistic) {
        const double* w = params.values.data();
        const double b = params.values[d];
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            const double* x = X.row(static_cast<std::size_t>(i));
            double z = b;
            for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
            probs_out[static_cast<std::size_t>(i)] = detail::sigmoid(z);
        }
        return;
    }

    const std::size_t h = spec.hidden_dim;
    const double* W1 = params.values.data();
    const double* b1 = W1 + h * d;
    const double* W2 = b1 + h;
    const double b2 = W2[h];
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const double* x = X.row(static_cast<std::size_t>(i));
        double z2 = b2;
        for (std::size_t k = 0; k < h; ++k) {
            double z1 = b1[k];
            const double* w1k = W1 + k * d;
            for (std::size_t j = 0; j < d; ++j) z1 += w1k[j] * x[j];
            if (z1 > 0.0) z2 += W2[k] * z1; // relu
        }
        probs_out[static_cast<std::size_t>(i)] = detail::sigmoid(z2);
    }
}

void grad_into(const ModelSpec& spec, const ParamVector& params, const Matrix& X,
               std::span<const double> y, ParamVector& grad_out) {
    check_shapes(spec, params, X);
    if (y.size() != X.rows) throw std::invalid_argument("label count does not match batch");
    if (X.rows == 0) throw std::invalid_argument("empty batch");
    grad_out = ParamVector::zeros(spec.layout());

    const std::size_t n = X.rows;
    const std::size_t d = spec.input_dim;
    const double inv_b = 1.0 / static_cast<double>(n);

    if (spec.kind == ModelKind::logistic) {
        // residual r_i = (p_i - y_i)/B, then grad_w = X^T r, grad_b = sum r
        std::vector<double> r(n);
        kernels::forward_into(spec, params, X, r);
        for (std::size_t i = 0; i < n; ++i) r[i] = (r[i] - y[i]) * inv_b;

        double* gw = grad_out.values.data();
#pragma omp parallel
        {
            const Band band = my_band(d);
            for (std::size_t i = 0; i < n; ++i) {
                const double* x = X.row(i);
                const double ri = r[i];
                for (std::size_t j = band.lo; j < band.hi; ++j) gw[j] += ri * x[j];
            }
        }
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) gb += r[i];
        grad_out.values[d] = gb;
        return;
    }

    const std::size_t h = spec.hidden_dim;
    const double* W1 = params.values.data();
    const double* b1 = W1 + h * d;
    const double* W2 = b1 + h;
    const double b2 = W2[h];

    // Stage 1 (parallel over records): hidden activations and the
    // backpropagated pre-activation residuals.
    Matrix A1(n, h);  // relu activations
    Matrix DZ1(n, h); // dloss/dz1 per record, already scaled by 1/B
    std::vector<double> dz2(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        const double* x = X.row(i);
        double z2 = b2;
        for (std::size_t k = 0; k < h; ++k) {
            double z1 = b1[k];
            const double* w1k = W1 + k * d;
            for (std::size_t j = 0; j < d; ++j) z1 += w1k[j] * x[j];
            const double a = z1 > 0.0 ? z1 : 0.0;
            A1(i, k) = a;
            if (z1 > 0.0) z2 += W2[k] * z1;
        }
        const double p = detail::sigmoid(z2);
        const double r = (p - y[i]) * inv_b;
        dz2[i] = r;
        for (std::size_t k = 0; k < h; ++k) {
            DZ1(i, k) = A1(i, k) > 0.0 ? r * W2[k] : 0.0;
        }
    }

    // Stage 2: threads own hidden-unit bands and stream the records, so the
    // feature rows stay cache-resident and every coordinate still sums
    // records in ascending order.
    double* gW1 = grad_out.values.data();
    double* gb1 = gW1 + h * d;
    double* gW2 = gb1 + h;
    double* gb2 = gW2 + h;
#pragma omp parallel
    {
        const Band band = my_band(h);
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = X.row(i);
            const double* dz1 = DZ1.row(i);
            const double* a1 = A1.row(i);
            const double r2 = dz2[i];
            for (std::size_t k = band.lo; k < band.hi; ++k) {
                const double dz = dz1[k];
                if (dz != 0.0) {
                    double* gw1k = gW1 + k * d;
                    for (std::size_t j = 0; j < d; ++j) gw1k[j] += dz * x[j];
                }
                gb1[k] += dz;
                gW2[k] += r2 * a1[k];
            }
        }
    }
    double sb2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) sb2 += dz2[i];
    *gb2 = sb2;
}

void per_example_grads_into(const ModelSpec& spec, const ParamVector& params, const Matrix& X,
                            std::span<const double> y, Matrix& grads_out) {
    check_shapes(spec, params, X);
    if (y.size() != X.rows) throw std::invalid_argument("label count does not match batch");
    const std::size_t n = X.rows;
    const std::size_t d = spec.input_dim;
    const std::size_t P = spec.param_count();
    if (grads_out.rows != n || grads_out.cols != P) {
        throw std::invalid_argument("grads_out must be (batch, param_count)");
    }

    if (spec.kind == ModelKind::logistic) {
        const double* w = params.values.data();
        const double b = params.values[d];
#pragma omp parallel for schedule(static)
        for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
            const std::size_t i = static_cast<std::size_t>(ii);
            const double* x = X.row(i);
            double z = b;
            for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
            const double r = detail::sigmoid(z) - y[i];
            double* g = grads_out.row(i);
            for (std::size_t j = 0; j < d; ++j) g[j] = r * x[j];
            g[d] = r;
        }
        return;
    }

    const std::size_t h = spec.hidden_dim;
    const double* W1 = params.values.data();
    const double* b1 = W1 + h * d;
    const double* W2 = b1 + h;
    const double b2 = W2[h];
#pragma omp parallel for schedule(static)
    for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        const double* x = X.row(i);
        double* g = grads_out.row(i);
        double* gW1 = g;
        double* gb1 = g + h * d;
        double* gW2 = gb1 + h;
        double* gb2 = gW2 + h;

        double z2 = b2;
        for (std::size_t k = 0; k < h; ++k) {
            double z1 = b1[k];
            const double* w1k = W1 + k * d;
            for (std::size_t j = 0; j < d; ++j) z1 += w1k[j] * x[j];
            const double a = z1 > 0.0 ? z1 : 0.0;
            gW2[k] = a; // stash activation, rescaled below
            if (z1 > 0.0) z2 += W2[k] * z1;
        }
        const double r = detail::sigmoid(z2) - y[i];
        for (std::size_t k = 0; k < h; ++k) {
            const double a = gW2[k];
            const double dz1 = a > 0.0 ? r * W2[k] : 0.0;
            gW2[k] = r * a;
            gb1[k] = dz1;
            double* gw1k = gW1 + k * d;
            for (std::size_t j = 0; j < d; ++j) gw1k[j] = dz1 * x[j];
        }
        *gb2 = r;
    }
}

} // namespace kernels

std::vector<double> forward(const ModelSpec& spec, const ParamVector& params,
                            const Matrix& features) {
    std::vector<double> probs(features.rows);
    kernels::forward_into(spec, params, features, probs);
    return probs;
}

double loss(const std::vector<double>& probabilities, const std::vector<double>& labels) {
    if (probabilities.size() != labels.size()) {
        throw std::invalid_argument("probabilities/labels length mismatch");
    }
    if (probabilities.empty()) throw std::invalid_argument("empty batch");
    double sum = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const double p = probabilities[i];
        sum += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log1p(-p);
    }
    return -sum / static_cast<double>(probabilities.size());
}

ParamVector grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    ParamVector g;
    kernels::grad_into(spec, params, batch.features, batch.labels, g);
    return g;
}

std::vector<ParamVector> per_example_grads(const ModelSpec& spec, const ParamVector& params,
                                           const Batch& batch) {
    Matrix G(batch.features.rows, spec.param_count());
    kernels::per_example_grads_into(spec, params, batch.features, batch.labels, G);
    std::vector<ParamVector> out(G.rows);
    const Layout layout = spec.layout();
    for (std::size_t i = 0; i < G.rows; ++i) {
        out[i].layout = layout;
        out[i].values.assign(G.row(i), G.row(i) + G.cols);
    }
    return out;
}

} // namespace fedsim
