#pragma once

// Dense complex matrix foundation: exponentials, Hermitian square roots,
// positive-definiteness tests and Hermitian positive-definite solves.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "gbdt/errors.hpp"

namespace gbdt {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};

/// Relative asymmetry accepted (and symmetrized away) by HermitianMatrix.
inline constexpr double kHermitianTol = 1e-10;

/// Positive definite matrices whose smallest eigenvalue sits below this
/// fraction of max(1, λ_max) are flagged as ill-conditioned.
inline constexpr double kConditioningFloor = 1e-12;

inline CMatrix identity(Eigen::Index n) { return CMatrix::Identity(n, n); }

inline bool all_finite(const CMatrix& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            if (!std::isfinite(m(r, c).real()) || !std::isfinite(m(r, c).imag())) {
                return false;
            }
        }
    }
    return true;
}

inline void require_square(const CMatrix& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        throw DimensionError(std::string(what) + ": expected a nonempty square matrix, got " +
                             std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

inline void require_finite(const CMatrix& m, const char* what) {
    if (!all_finite(m)) {
        throw DomainError(std::string(what) + ": non-finite entry");
    }
}

/// ‖M − M*‖_F relative to 1 + ‖M‖_F.
inline double relative_asymmetry(const CMatrix& m) {
    return (m - m.adjoint()).norm() / (1.0 + m.norm());
}

/// Square complex matrix equal to its adjoint. Construction rejects
/// asymmetry above kHermitianTol and stores the symmetrized part.
class HermitianMatrix {
public:
    HermitianMatrix() = default;

    explicit HermitianMatrix(const CMatrix& m) {
        require_square(m, "HermitianMatrix");
        require_finite(m, "HermitianMatrix");
        const double asym = relative_asymmetry(m);
        if (asym > kHermitianTol) {
            throw SymmetryError("matrix is not Hermitian: relative asymmetry " +
                                std::to_string(asym));
        }
        m_ = 0.5 * (m + m.adjoint());
    }

    static HermitianMatrix identity(Eigen::Index n) { return HermitianMatrix(CMatrix::Identity(n, n)); }

    /// For quantities Hermitian by construction (S⁻¹, Π*S⁻¹Π): drops the
    /// rounding-level skew part without the tolerance check.
    static HermitianMatrix symmetrized(const CMatrix& m) {
        require_square(m, "HermitianMatrix");
        HermitianMatrix out;
        out.m_ = 0.5 * (m + m.adjoint());
        return out;
    }

    const CMatrix& matrix() const noexcept { return m_; }
    Eigen::Index dim() const noexcept { return m_.rows(); }

    operator const CMatrix&() const noexcept { return m_; }

private:
    CMatrix m_;
};

namespace detail {

// Padé approximant of degree m evaluated at M (Higham 2005 coefficients).
inline CMatrix pade_low(const CMatrix& m, const double* b, int degree) {
    const Eigen::Index n = m.rows();
    const CMatrix m2 = m * m;
    CMatrix power = CMatrix::Identity(n, n);
    CMatrix u_sum = b[1] * power;
    CMatrix v = b[0] * power;
    for (int k = 2; k <= degree; k += 2) {
        power = power * m2;
        v += b[k] * power;
        u_sum += b[k + 1] * power;
    }
    const CMatrix u = m * u_sum;
    return (v - u).partialPivLu().solve(v + u);
}

inline CMatrix pade13(const CMatrix& m) {
    static constexpr std::array<double, 14> b = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0,  129060195264000.0,   10559470521600.0,
        670442572800.0,      33522128640.0,       1323241920.0,
        40840800.0,          960960.0,            16380.0,
        182.0,               1.0};
    const Eigen::Index n = m.rows();
    const CMatrix id = CMatrix::Identity(n, n);
    const CMatrix m2 = m * m;
    const CMatrix m4 = m2 * m2;
    const CMatrix m6 = m4 * m2;
    const CMatrix u =
        m * (m6 * (b[13] * m6 + b[11] * m4 + b[9] * m2) + b[7] * m6 + b[5] * m4 + b[3] * m2 + b[1] * id);
    const CMatrix v =
        m6 * (b[12] * m6 + b[10] * m4 + b[8] * m2) + b[6] * m6 + b[4] * m4 + b[2] * m2 + b[0] * id;
    return (v - u).partialPivLu().solve(v + u);
}

inline double one_norm(const CMatrix& m) { return m.cwiseAbs().colwise().sum().maxCoeff(); }

}  // namespace detail

/// e^M by scaling and squaring over a degree-13 Padé kernel.
inline CMatrix mat_exp(const CMatrix& m) {
    require_square(m, "mat_exp");
    require_finite(m, "mat_exp");

    static constexpr double b3[] = {120.0, 60.0, 12.0, 1.0};
    static constexpr double b5[] = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
    static constexpr double b7[] = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                    25200.0,    1512.0,    56.0,      1.0};
    static constexpr double b9[] = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0,
                                    30270240.0,    2162160.0,    110880.0,     3960.0,
                                    90.0,          1.0};

    const double norm = detail::one_norm(m);
    if (norm <= 1.495585217958292e-2) return detail::pade_low(m, b3, 3);
    if (norm <= 2.539398330063230e-1) return detail::pade_low(m, b5, 5);
    if (norm <= 9.504178996162932e-1) return detail::pade_low(m, b7, 7);
    if (norm <= 2.097847961257068e0) return detail::pade_low(m, b9, 9);

    constexpr double theta13 = 5.371920351148152;
    const int squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / theta13))));
    CMatrix result = detail::pade13(m / std::ldexp(1.0, squarings));
    for (int s = 0; s < squarings; ++s) {
        result = result * result;
    }
    return result;
}

struct PosDefReport {
    bool positive_definite = false;
    double min_eigenvalue = 0.0;
    bool ill_conditioned = false;
};

/// Cholesky-based positivity test plus the smallest eigenvalue.
inline PosDefReport is_posdef(const HermitianMatrix& m) {
    PosDefReport report;
    Eigen::LLT<CMatrix> llt(m.matrix());
    report.positive_definite = llt.info() == Eigen::Success;
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(m.matrix(), Eigen::EigenvaluesOnly);
    report.min_eigenvalue = eig.eigenvalues().minCoeff();
    const double scale = std::max(1.0, eig.eigenvalues().maxCoeff());
    report.ill_conditioned = report.min_eigenvalue <= kConditioningFloor * scale;
    return report;
}

inline double min_eigenvalue(const HermitianMatrix& m) {
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(m.matrix(), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

namespace detail {

inline Eigen::SelfAdjointEigenSolver<CMatrix> positive_spectrum(const HermitianMatrix& m,
                                                                const char* what) {
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(m.matrix());
    const double lmin = eig.eigenvalues().minCoeff();
    if (!(lmin > 0.0)) {
        throw NotPositiveDefiniteError(std::string(what) + ": matrix is not positive definite (λ_min = " +
                                           std::to_string(lmin) + ")",
                                       lmin);
    }
    return eig;
}

}  // namespace detail

/// Principal square root of a Hermitian positive definite matrix.
inline HermitianMatrix herm_sqrt(const HermitianMatrix& m) {
    const auto eig = detail::positive_spectrum(m, "herm_sqrt");
    const CMatrix& v = eig.eigenvectors();
    return HermitianMatrix::symmetrized(v * eig.eigenvalues().cwiseSqrt().cast<Complex>().asDiagonal() * v.adjoint());
}

/// M^{-1/2} for Hermitian positive definite M.
inline HermitianMatrix herm_inv_sqrt(const HermitianMatrix& m) {
    const auto eig = detail::positive_spectrum(m, "herm_inv_sqrt");
    const CMatrix& v = eig.eigenvectors();
    const Eigen::VectorXd d = eig.eigenvalues().cwiseSqrt().cwiseInverse();
    return HermitianMatrix::symmetrized(v * d.cast<Complex>().asDiagonal() * v.adjoint());
}

/// Solves S·X = B for Hermitian positive definite S.
inline CMatrix solve_hpd(const HermitianMatrix& s, const CMatrix& b) {
    if (b.rows() != s.dim()) {
        throw DimensionError("solve_hpd: right-hand side has " + std::to_string(b.rows()) +
                             " rows, expected " + std::to_string(s.dim()));
    }
    Eigen::LLT<CMatrix> llt(s.matrix());
    if (llt.info() != Eigen::Success) {
        const double lmin = min_eigenvalue(s);
        throw NotPositiveDefiniteError("solve_hpd: matrix is not positive definite (λ_min = " +
                                           std::to_string(lmin) + ")",
                                       lmin);
    }
    return llt.solve(b);
}

inline HermitianMatrix inverse_hpd(const HermitianMatrix& s) {
    return HermitianMatrix::symmetrized(solve_hpd(s, CMatrix::Identity(s.dim(), s.dim())));
}

}  // namespace gbdt
