#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedsim {

// One named block of a flat parameter vector, e.g. ("W1", {16, 50}).
struct LayoutBlock {
    std::string name;
    std::vector<std::size_t> shape;

    std::size_t size() const;

    bool operator==(const LayoutBlock&) const = default;
};

using Layout = std::vector<LayoutBlock>;

std::size_t layout_size(const Layout& layout);

// Flat vector of 64-bit reals plus its block layout; the unit that gets
// clipped, noised and averaged. Two ParamVectors are combinable only if
// their layouts are identical.
struct ParamVector {
    std::vector<double> values;
    Layout layout;

    ParamVector() = default;

    static ParamVector zeros(Layout layout);

    std::size_t size() const { return values.size(); }

    std::span<double> block(std::string_view name);
    std::span<const double> block(std::string_view name) const;

    double l2_norm() const;
    void scale(double c);
    // this += a * x (layouts must match)
    void axpy(double a, const ParamVector& x);

    bool same_layout(const ParamVector& other) const { return layout == other.layout; }
};

// Throws std::invalid_argument on layout mismatch.
void require_same_layout(const ParamVector& a, const ParamVector& b);

} // namespace fedsim
