#pragma once

// Seeded generators of valid GBDT inputs for the verification suite and tests.

#include <cstdint>
#include <random>

#include "gbdt/continuous.hpp"
#include "gbdt/discrete.hpp"
#include "gbdt/linalg.hpp"

namespace gbdt {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

    Complex complex_normal() { return {normal(), normal()}; }

    CMatrix matrix(Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
        CMatrix m(rows, cols);
        for (Eigen::Index c = 0; c < cols; ++c) {
            for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = scale * complex_normal();
        }
        return m;
    }

    CVector vector(Eigen::Index n) {
        CVector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = complex_normal();
        return v;
    }

    HermitianMatrix hermitian(Eigen::Index n, double scale = 1.0) {
        const CMatrix b = matrix(n, n, scale);
        return HermitianMatrix(0.5 * (b + b.adjoint()));
    }

    /// floor·I + scale·B B*/n.
    HermitianMatrix positive_definite(Eigen::Index n, double floor = 1.0, double scale = 0.5) {
        const CMatrix b = matrix(n, n);
        return HermitianMatrix(floor * CMatrix::Identity(n, n) + scale * b * b.adjoint() / static_cast<double>(n));
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// A = (R/2 + M) S0⁻¹ with M = M* solves A S0 − S0 A* = R for skew-Hermitian R.
inline CMatrix solve_for_generator(const CMatrix& r, const HermitianMatrix& s0, const HermitianMatrix& m) {
    return solve_hpd(s0, (0.5 * r + m.matrix()).adjoint()).adjoint();
}

/// Valid continuous triple with S0 ≻ 0.
inline ParameterTriple random_continuous_triple(Rng& rng, Eigen::Index n, Eigen::Index h, double scale = 0.35) {
    const HermitianMatrix s0 = rng.positive_definite(n);
    const CMatrix pi0 = rng.matrix(n, 2 * h, scale);
    const HermitianMatrix m = rng.hermitian(n, scale);
    const CMatrix r = pi0 * SignatureJ::continuous(h).matrix() * pi0.adjoint();
    return ParameterTriple::continuous(solve_for_generator(r, s0, m), s0, pi0);
}

/// Valid discrete triple; with `j0` the first h columns of Π0 vanish.
inline DiscreteTriple random_discrete_triple(Rng& rng, Eigen::Index n, Eigen::Index h, bool j0,
                                             double scale = 0.2) {
    const HermitianMatrix s0 = rng.positive_definite(n);
    CMatrix pi0 = rng.matrix(n, 2 * h, scale);
    if (j0) pi0.leftCols(h).setZero();
    const HermitianMatrix m = rng.hermitian(n, scale);
    const CMatrix r = kI * pi0 * SignatureJ::discrete(h).matrix() * pi0.adjoint();
    return {solve_for_generator(r, s0, m), s0, pi0, h};
}

/// C(k) ≻ 0 near I and Q(k) = C^{1/2} B C^{-1/2} with B = B*, so C Q* = Q C.
inline JacobiData random_jacobi(Rng& rng, Eigen::Index h, std::size_t n, double spread = 0.1,
                                double q_scale = 0.1) {
    JacobiData d;
    d.C.reserve(n + 1);
    d.Q.reserve(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        const HermitianMatrix c = rng.positive_definite(h, 1.0 - spread, spread);
        const HermitianMatrix b = rng.hermitian(h, q_scale);
        d.Q.push_back(herm_sqrt(c).matrix() * b.matrix() * herm_inv_sqrt(c).matrix());
        d.C.push_back(c);
    }
    return d;
}

}  // namespace gbdt
