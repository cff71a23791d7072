#include "fedsim/param_vector.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fedsim {

std::size_t LayoutBlock::size() const {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

std::size_t layout_size(const Layout& layout) {
    std::size_t n = 0;
    for (const auto& b : layout) n += b.size();
    return n;
}

ParamVector ParamVector::zeros(Layout layout) {
    ParamVector p;
    p.values.assign(layout_size(layout), 0.0);
    p.layout = std::move(layout);
    return p;
}

std::span<double> ParamVector::block(std::string_view name) {
    std::size_t offset = 0;
    for (const auto& b : layout) {
        if (b.name == name) return {values.data() + offset, b.size()};
        offset += b.size();
    }
    throw std::invalid_argument("unknown parameter block: " + std::string(name));
}

std::span<const double> ParamVector::block(std::string_view name) const {
    std::size_t offset = 0;
    for (const auto& b : layout) {
        if (b.name == name) return {values.data() + offset, b.size()};
        offset += b.size();
    }
    throw std::invalid_argument("unknown parameter block: " + std::string(name));
}

double ParamVector::l2_norm() const {
    double sq = 0.0;
    for (double v : values) sq += v * v;
    return std::sqrt(sq);
}

void ParamVector::scale(double c) {
    for (double& v : values) v *= c;
}

void ParamVector::axpy(double a, const ParamVector& x) {
    require_same_layout(*this, x);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += a * x.values[i];
}

void require_same_layout(const ParamVector& a, const ParamVector& b) {
    if (!(a.layout == b.layout)) {
        throw std::invalid_argument("parameter layouts do not match");
    }
}

} // namespace fedsim
