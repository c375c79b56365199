#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gbdt/errors.hpp"
#include "gbdt/linalg.hpp"

namespace gbdt {

/// Strictly increasing sample points starting at x = 0.
class Grid {
public:
    Grid() = default;

    explicit Grid(std::vector<double> xs) : xs_(std::move(xs)) {
        if (xs_.empty()) throw DomainError("grid: no samples");
        if (xs_.front() != 0.0) throw DomainError("grid: first sample must be 0");
        for (std::size_t k = 1; k < xs_.size(); ++k) {
            if (!(xs_[k] > xs_[k - 1]) || !std::isfinite(xs_[k])) {
                throw DomainError("grid: samples must be finite and strictly increasing (index " +
                                  std::to_string(k) + ")");
            }
        }
    }

    /// Uniform grid on [0, length] with spacing as close to `step` as divides evenly.
    static Grid uniform(double length, double step) {
        if (!(length > 0.0) || !(step > 0.0)) throw DomainError("grid: length and step must be positive");
        const auto intervals = static_cast<std::size_t>(std::max(1.0, std::round(length / step)));
        std::vector<double> xs(intervals + 1);
        for (std::size_t k = 0; k <= intervals; ++k) {
            xs[k] = length * static_cast<double>(k) / static_cast<double>(intervals);
        }
        return Grid(std::move(xs));
    }

    std::size_t size() const noexcept { return xs_.size(); }
    double operator[](std::size_t k) const { return xs_[k]; }
    double back() const { return xs_.back(); }
    std::span<const double> samples() const noexcept { return xs_; }

    /// Index of the sample equal to x (relative tolerance 1e-9), or throws.
    std::size_t index_of(double x) const {
        const auto it = std::lower_bound(xs_.begin(), xs_.end(), x - 1e-9 * (1.0 + std::abs(x)));
        if (it == xs_.end() || std::abs(*it - x) > 1e-9 * (1.0 + std::abs(x))) {
            throw DomainError("grid: " + std::to_string(x) + " is not a grid sample");
        }
        return static_cast<std::size_t>(it - xs_.begin());
    }

    /// Index of the sample nearest to x.
    std::size_t nearest(double x) const {
        const auto it = std::lower_bound(xs_.begin(), xs_.end(), x);
        if (it == xs_.begin()) return 0;
        if (it == xs_.end()) return xs_.size() - 1;
        const auto k = static_cast<std::size_t>(it - xs_.begin());
        return (x - xs_[k - 1] <= xs_[k] - x) ? k - 1 : k;
    }

private:
    std::vector<double> xs_;
};

/// Kahan-compensated running sum. S(x) accumulates ~1e4 increments many
/// orders of magnitude below itself; plain summation loses the small
/// directions of S to rounding.
class CompensatedSum {
public:
    explicit CompensatedSum(CMatrix start) : value_(std::move(start)), carry_(CMatrix::Zero(value_.rows(), value_.cols())) {}

    void add(const CMatrix& term) {
        const CMatrix y = term - carry_;
        const CMatrix t = value_ + y;
        carry_ = (t - value_) - y;
        value_ = t;
    }

    const CMatrix& value() const noexcept { return value_; }

private:
    CMatrix value_;
    CMatrix carry_;
};

namespace detail {

// ∫_a^b of the Lagrange basis through nodes p, via two-point Gauss (exact for quadratics).
inline std::array<double, 3> quadratic_weights(const std::array<double, 3>& p, double a, double b) {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    const double offset = half / std::sqrt(3.0);
    std::array<double, 3> w{0.0, 0.0, 0.0};
    for (const double x : {mid - offset, mid + offset}) {
        for (int j = 0; j < 3; ++j) {
            double basis = 1.0;
            for (int m = 0; m < 3; ++m) {
                if (m != j) basis *= (x - p[m]) / (p[j] - p[m]);
            }
            w[j] += half * basis;
        }
    }
    return w;
}

}  // namespace detail

/// Running integral ∫_0^{x_k} f for every sample. Even-indexed samples get
/// the exact composite Simpson value; odd ones integrate the same local
/// quadratic over the half panel.
inline std::vector<CMatrix> cumulative_simpson(const Grid& grid, std::span<const CMatrix> values) {
    if (values.size() != grid.size()) {
        throw DimensionError("cumulative_simpson: " + std::to_string(values.size()) + " values for " +
                             std::to_string(grid.size()) + " samples");
    }
    std::vector<CMatrix> out(values.size());
    out[0] = CMatrix::Zero(values[0].rows(), values[0].cols());
    if (values.size() == 1) return out;
    if (values.size() == 2) {
        out[1] = 0.5 * (grid[1] - grid[0]) * (values[0] + values[1]);
        return out;
    }
    CompensatedSum sum(out[0]);
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        std::size_t first = (i % 2 == 0) ? i : i - 1;
        if (first + 2 >= values.size()) first = values.size() - 3;
        const std::array<double, 3> nodes{grid[first], grid[first + 1], grid[first + 2]};
        const auto w = detail::quadratic_weights(nodes, grid[i], grid[i + 1]);
        sum.add(w[0] * values[first] + w[1] * values[first + 1] + w[2] * values[first + 2]);
        out[i + 1] = sum.value();
    }
    return out;
}

}  // namespace gbdt
