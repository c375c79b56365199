#pragma once

// GBDT of semi-infinite block Jacobi matrices truncated at N rows: the
// recursion for (Π_k, S_k), the transformed matrix J̃, identity checks on
// the transformed ξ̃(k), the eigen-blocks Y with J̃Y = YA, and explicit
// solutions Ψ(t) = Y e^{−itA} of i Ψ' = J̃ Ψ.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gbdt/errors.hpp"
#include "gbdt/linalg.hpp"
#include "gbdt/signature.hpp"

namespace gbdt {

struct DiscreteTolerances {
    double id_tol = 1e-10;
    double eig_tol = 1e-9;
    /// The zero-first-block condition holds when ‖first h columns of Π0‖ ≤ j0_tol·‖Π0‖.
    double j0_tol = 1e-12;
    /// det A counts as zero when σ_min(A) < singular_tol·(1 + ‖A‖).
    double singular_tol = 1e-8;
};

/// Blocks C(k) ≻ 0 and Q(k) with C Q* = Q C, stored for k = 1..N+1 at index k−1.
struct JacobiData {
    std::vector<HermitianMatrix> C;
    std::vector<CMatrix> Q;

    std::size_t N() const noexcept { return C.empty() ? 0 : C.size() - 1; }
    Eigen::Index h() const noexcept { return C.empty() ? 0 : C.front().dim(); }
    const HermitianMatrix& c(std::size_t k) const { return C.at(k - 1); }
    const CMatrix& q(std::size_t k) const { return Q.at(k - 1); }

    static JacobiData constant(const HermitianMatrix& c, const CMatrix& q, std::size_t n) {
        return {std::vector<HermitianMatrix>(n + 1, c), std::vector<CMatrix>(n + 1, q)};
    }
};

/// max_k ‖C(k)Q(k)* − Q(k)C(k)‖ / (1 + ‖C(k)‖‖Q(k)‖).
inline double commutation_residual(const HermitianMatrix& c, const CMatrix& q) {
    const CMatrix& cm = c.matrix();
    return (cm * q.adjoint() - q * cm).norm() / (1.0 + cm.norm() * q.norm());
}

inline void validate_jacobi(const JacobiData& d, double id_tol) {
    if (d.C.size() < 2 || d.Q.size() != d.C.size()) {
        throw DimensionError("jacobi data: need N+1 ≥ 2 blocks of C and Q, got " + std::to_string(d.C.size()) +
                             " and " + std::to_string(d.Q.size()));
    }
    const Eigen::Index h = d.h();
    for (std::size_t k = 1; k <= d.C.size(); ++k) {
        if (d.c(k).dim() != h || d.q(k).rows() != h || d.q(k).cols() != h) {
            throw DimensionError("jacobi data: block " + std::to_string(k) + " is not " + std::to_string(h) + "x" +
                                 std::to_string(h));
        }
        const auto pd = is_posdef(d.c(k));
        if (!pd.positive_definite) {
            throw NotPositiveDefiniteError("Jacobi data: C(" + std::to_string(k) + ") is not positive definite",
                                           pd.min_eigenvalue);
        }
        const double r = commutation_residual(d.c(k), d.q(k));
        if (r > id_tol) {
            throw PreconditionError("Jacobi data: ‖C(k)Q(k)* − Q(k)C(k)‖ = " + std::to_string(r) + " at k = " +
                                        std::to_string(k),
                                    r);
        }
    }
}

/// Block tridiagonal matrix truncated to N block rows: diagonal b_k,
/// superdiagonal a_k (k = 1..N, a_N couples to the dropped row N+1) and
/// subdiagonal c_k = a_{k−1}* (k = 2..N).
struct BlockJacobi {
    std::vector<CMatrix> a_blocks;
    std::vector<CMatrix> b_blocks;

    std::size_t N() const noexcept { return b_blocks.size(); }
    const CMatrix& a(std::size_t k) const { return a_blocks.at(k - 1); }
    const CMatrix& b(std::size_t k) const { return b_blocks.at(k - 1); }
    CMatrix c(std::size_t k) const { return a(k - 1).adjoint(); }

    /// Row k of the truncated product J·V for a block column V = {v_1..v_N};
    /// the a_N v_{N+1} term is included only when `next` is given.
    CMatrix row_apply(std::size_t k, const std::vector<CMatrix>& v, const CMatrix* next = nullptr) const {
        CMatrix r = b(k) * v.at(k - 1);
        if (k > 1) r += c(k) * v.at(k - 2);
        if (k < N()) {
            r += a(k) * v.at(k);
        } else if (next != nullptr) {
            r += a(k) * (*next);
        }
        return r;
    }
};

namespace detail {

// a_k = −i C(k)^{-1/2} C(k+1)^{1/2}, b_k = C(k)^{-1/2} Q(k) C(k)^{1/2}.
inline BlockJacobi assemble_jacobi(const std::vector<HermitianMatrix>& c, const std::vector<CMatrix>& q,
                                   std::size_t n) {
    BlockJacobi j;
    j.a_blocks.reserve(n);
    j.b_blocks.reserve(n);
    std::vector<CMatrix> sqrt_c;
    std::vector<CMatrix> inv_sqrt_c;
    sqrt_c.reserve(n + 1);
    inv_sqrt_c.reserve(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        sqrt_c.push_back(herm_sqrt(c[k]).matrix());
        inv_sqrt_c.push_back(herm_inv_sqrt(c[k]).matrix());
    }
    for (std::size_t k = 0; k < n; ++k) {
        j.a_blocks.push_back(Complex(0.0, -1.0) * inv_sqrt_c[k] * sqrt_c[k + 1]);
        j.b_blocks.push_back(inv_sqrt_c[k] * q[k] * sqrt_c[k]);
    }
    return j;
}

}  // namespace detail

inline BlockJacobi build_initial_jacobi(const JacobiData& data, double id_tol = 1e-10) {
    validate_jacobi(data, id_tol);
    return detail::assemble_jacobi(data.C, data.Q, data.N());
}

/// max_k ‖b_k − b_k*‖_F.
inline double hermitian_defect(const BlockJacobi& j) {
    double r = 0.0;
    for (const auto& b : j.b_blocks) r = std::max(r, (b - b.adjoint()).norm());
    return r;
}

/// Generators for the discrete transformation: A S0 − S0 A* = i Π0 j Π0*.
struct DiscreteTriple {
    CMatrix A;
    HermitianMatrix S0;
    CMatrix Pi0;
    Eigen::Index h = 1;

    Eigen::Index n() const noexcept { return A.rows(); }
    SignatureJ j() const { return SignatureJ::discrete(h); }
};

/// ‖A S0 − S0 A* − i Π0 j Π0*‖_F; throws when S0 is not positive definite.
inline double validate_discrete_triple(const DiscreteTriple& t) {
    require_square(t.A, "triple A");
    const Eigen::Index n = t.A.rows();
    if (t.S0.dim() != n || t.Pi0.rows() != n || t.Pi0.cols() != 2 * t.h || t.h < 1) {
        throw DimensionError("discrete triple: inconsistent dimensions (A " + std::to_string(n) + "x" +
                             std::to_string(n) + ", S0 " + std::to_string(t.S0.dim()) + ", Pi0 " +
                             std::to_string(t.Pi0.rows()) + "x" + std::to_string(t.Pi0.cols()) + ")");
    }
    const auto pd = is_posdef(t.S0);
    if (!pd.positive_definite) {
        throw NotPositiveDefiniteError("discrete triple: S0 is not positive definite", pd.min_eigenvalue);
    }
    const CMatrix& s0 = t.S0.matrix();
    return (t.A * s0 - s0 * t.A.adjoint() - kI * t.Pi0 * t.j().matrix() * t.Pi0.adjoint()).norm();
}

/// ξ(k) = [[−iQ, C], [C⁻¹, 0]].
inline CMatrix xi_block(const HermitianMatrix& c, const CMatrix& q) {
    const Eigen::Index h = c.dim();
    CMatrix xi = CMatrix::Zero(2 * h, 2 * h);
    xi.topLeftCorner(h, h) = -kI * q;
    xi.topRightCorner(h, h) = c.matrix();
    xi.bottomLeftCorner(h, h) = inverse_hpd(c).matrix();
    return xi;
}

/// ζ(k) = diag(0, C⁻¹).
inline CMatrix zeta_block(const HermitianMatrix& c) {
    const Eigen::Index h = c.dim();
    CMatrix z = CMatrix::Zero(2 * h, 2 * h);
    z.bottomRightCorner(h, h) = inverse_hpd(c).matrix();
    return z;
}

struct RecursionTrajectory {
    /// Π_k, S_k, X(k) = Π_k* S_k⁻¹ Π_k for k = 0..N.
    std::vector<CMatrix> Pi;
    std::vector<HermitianMatrix> S;
    std::vector<CMatrix> X;
    /// ‖A S_k − S_k A* − i Π_k j Π_k*‖ / (1 + ‖A‖‖S_k‖) per k.
    std::vector<double> identity_residual;
    /// Relative residual of the adjoint form of the Π recursion, k = 1..N.
    std::vector<double> adjoint_form_residual;
    CMatrix A;
    Eigen::Index h = 1;

    std::size_t N() const noexcept { return Pi.empty() ? 0 : Pi.size() - 1; }
    CMatrix x_block(std::size_t k, int i, int p) const {
        return X.at(k).block((i - 1) * h, (p - 1) * h, h, h);
    }
    double max_identity_residual() const {
        return identity_residual.empty() ? 0.0 : *std::max_element(identity_residual.begin(), identity_residual.end());
    }
};

inline double discrete_identity_residual(const CMatrix& a, const CMatrix& pi, const CMatrix& s, const CMatrix& j) {
    return (a * s - s * a.adjoint() - kI * pi * j * pi.adjoint()).norm() / (1.0 + a.norm() * s.norm());
}

/// Π_k = Π_{k−1} ξ(k)⁻¹ − i A Π_{k−1} P with ξ(k)⁻¹ = j ξ(k)* j,
/// S_k = S_{k−1} + Π_{k−1} ζ(k) Π_{k−1}*.
inline RecursionTrajectory run_recursion(const DiscreteTriple& t, const JacobiData& data,
                                         const DiscreteTolerances& tol = {}) {
    const double r0 = validate_discrete_triple(t);
    if (r0 > tol.id_tol * (1.0 + t.A.norm() * t.S0.matrix().norm())) {
        throw PreconditionError("triple identity violated: ‖A S0 − S0 A* − i Π0 j Π0*‖ = " + std::to_string(r0), r0);
    }
    validate_jacobi(data, tol.id_tol);
    if (data.h() != t.h) {
        throw DimensionError("discrete: Jacobi block size " + std::to_string(data.h()) + " != h = " +
                             std::to_string(t.h));
    }
    const std::size_t n_steps = data.N();
    const Eigen::Index h = t.h;
    const CMatrix j = t.j().matrix();
    const CMatrix p = lower_projector(h);
    const CMatrix ip = CMatrix::Identity(2 * h, 2 * h) - p;

    RecursionTrajectory tr;
    tr.A = t.A;
    tr.h = h;
    tr.Pi.reserve(n_steps + 1);
    tr.S.reserve(n_steps + 1);
    tr.X.reserve(n_steps + 1);
    tr.Pi.push_back(t.Pi0);
    tr.S.push_back(t.S0);
    tr.X.push_back(t.Pi0.adjoint() * solve_hpd(t.S0, t.Pi0));
    tr.identity_residual.push_back(discrete_identity_residual(t.A, t.Pi0, t.S0.matrix(), j));

    for (std::size_t k = 1; k <= n_steps; ++k) {
        const CMatrix& prev = tr.Pi.back();
        const CMatrix xi = xi_block(data.c(k), data.q(k));
        const CMatrix xi_inv = j * xi.adjoint() * j;
        CMatrix next = prev * xi_inv - kI * t.A * prev * p;
        const CMatrix phi2 = prev.rightCols(h);
        HermitianMatrix s(tr.S.back().matrix() + phi2 * inverse_hpd(data.c(k)).matrix() * phi2.adjoint());

        // i jΠ_k* = i ξ(k) jΠ_{k−1}* − (I − P) jΠ_{k−1}* A*.
        const CMatrix lhs = kI * j * next.adjoint();
        const CMatrix rhs = kI * xi * j * prev.adjoint() - ip * j * prev.adjoint() * t.A.adjoint();
        tr.adjoint_form_residual.push_back((lhs - rhs).norm() / (1.0 + lhs.norm()));

        tr.identity_residual.push_back(discrete_identity_residual(t.A, next, s.matrix(), j));
        tr.X.push_back(next.adjoint() * solve_hpd(s, next));
        tr.Pi.push_back(std::move(next));
        tr.S.push_back(std::move(s));
    }
    return tr;
}

struct TransformedJacobi {
    /// C̃(k) for k = 1..N+1, Q̃(k) for k = 1..N (index k−1).
    std::vector<HermitianMatrix> Ct;
    std::vector<CMatrix> Qt;
    BlockJacobi J;
    /// max_k ‖C̃Q̃* − Q̃C̃‖ / (1 + ‖C̃‖‖Q̃‖).
    double commutation = 0.0;
    /// max_k ‖b̃_k − b̃_k*‖.
    double b_hermitian_defect = 0.0;
    /// min_k (λ_min(C̃(k)) − λ_min(C(k))); nonnegative since X22 ⪰ 0.
    double min_eigen_gain = 0.0;

    const HermitianMatrix& c_tilde(std::size_t k) const { return Ct.at(k - 1); }
    const CMatrix& q_tilde(std::size_t k) const { return Qt.at(k - 1); }
};

/// C̃(k) = C(k) + X22(k−1), Q̃(k) = Q(k) + i(X21(k−1) − X21(k)), and J̃ from them.
inline TransformedJacobi transform_jacobi(const RecursionTrajectory& tr, const JacobiData& data) {
    const std::size_t n = tr.N();
    if (data.N() != n) throw DimensionError("transform_jacobi: trajectory and data lengths differ");
    TransformedJacobi out;
    out.Ct.reserve(n + 1);
    out.Qt.reserve(n);
    out.min_eigen_gain = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= n + 1; ++k) {
        const HermitianMatrix ct(data.c(k).matrix() + tr.x_block(k - 1, 2, 2));
        const auto pd = is_posdef(ct);
        if (!pd.positive_definite) {
            throw NotPositiveDefiniteError("internal consistency: C̃(" + std::to_string(k) +
                                               ") is not positive definite",
                                           pd.min_eigenvalue);
        }
        out.min_eigen_gain = std::min(out.min_eigen_gain, pd.min_eigenvalue - min_eigenvalue(data.c(k)));
        out.Ct.push_back(ct);
    }
    for (std::size_t k = 1; k <= n; ++k) {
        out.Qt.push_back(data.q(k) + kI * (tr.x_block(k - 1, 2, 1) - tr.x_block(k, 2, 1)));
        out.commutation = std::max(out.commutation, commutation_residual(out.Ct[k - 1], out.Qt[k - 1]));
    }
    out.J = detail::assemble_jacobi(out.Ct, out.Qt, n);
    out.b_hermitian_defect = hermitian_defect(out.J);
    return out;
}

/// ξ̃(k) = [[−iQ̃(k), C̃(k)], [C̆(k), 0]] with C̆(k) = C(k)⁻¹ − X11(k).
inline CMatrix xi_tilde(const RecursionTrajectory& tr, const JacobiData& data, const TransformedJacobi& tj,
                        std::size_t k) {
    const Eigen::Index h = tr.h;
    CMatrix xt = CMatrix::Zero(2 * h, 2 * h);
    xt.topLeftCorner(h, h) = -kI * tj.q_tilde(k);
    xt.topRightCorner(h, h) = tj.c_tilde(k).matrix();
    xt.bottomLeftCorner(h, h) = inverse_hpd(data.c(k)).matrix() - tr.x_block(k, 1, 1);
    return xt;
}

struct XiTildeReport {
    /// max_k of max(‖ξ̃jξ̃* − j‖, ‖ξ̃*jξ̃ − j‖) / max(1, ‖ξ̃‖²).
    double j_unitarity = 0.0;
    /// max_k ‖C̆(k) − C̃(k)⁻¹‖ / (1 + ‖C̃(k)⁻¹‖).
    double c_breve = 0.0;
    /// max_k ‖ξ̃(k) w̆(k−1) − w̆(k) ξ(k)‖ / (1 + ‖w̆(k)‖‖ξ(k)‖); empty when det A ≈ 0.
    std::optional<double> factorization;
    std::string factorization_note;
    /// max_k ‖Π_k*S_k⁻¹ − (iPΠ_{k−1}*S_{k−1}⁻¹A + jξ̃(k)jΠ_{k−1}*S_{k−1}⁻¹)‖ / (1 + ‖Π_k*S_k⁻¹‖).
    double forward = 0.0;
    /// max_k ‖ξ̃(k) − (ξ(k) − jX(k)(I−P) + jPX(k−1))‖ / (1 + ‖ξ̃(k)‖).
    double perturbation_form = 0.0;
    /// ‖(2,1) block − C̃⁻¹‖ relative, and ‖(2,2) block‖ (exactly 0 by construction).
    double template_lower_left = 0.0;
    double template_lower_right = 0.0;
};

inline XiTildeReport xi_tilde_checks(const RecursionTrajectory& tr, const JacobiData& data,
                                     const TransformedJacobi& tj, const DiscreteTolerances& tol = {}) {
    const std::size_t n = tr.N();
    const Eigen::Index h = tr.h;
    const CMatrix j = SignatureJ::discrete(h).matrix();
    const CMatrix p = lower_projector(h);
    const CMatrix ip = CMatrix::Identity(2 * h, 2 * h) - p;
    XiTildeReport rep;

    Eigen::JacobiSVD<CMatrix> svd(tr.A);
    const double smin = svd.singularValues()(tr.A.rows() - 1);
    const bool invertible = smin >= tol.singular_tol * (1.0 + tr.A.norm());
    std::vector<CMatrix> w_breve;
    if (invertible) {
        const auto lu = tr.A.partialPivLu();
        w_breve.reserve(n + 1);
        for (std::size_t k = 0; k <= n; ++k) {
            const CMatrix z = solve_hpd(tr.S[k], tr.Pi[k]).adjoint();
            w_breve.push_back(CMatrix::Identity(2 * h, 2 * h) - kI * j * z * lu.solve(tr.Pi[k]));
        }
        rep.factorization = 0.0;
    } else {
        rep.factorization_note = "det A ≈ 0 (σ_min = " + std::to_string(smin) + "): factorization check skipped";
    }

    for (std::size_t k = 1; k <= n; ++k) {
        const CMatrix xt = xi_tilde(tr, data, tj, k);
        const CMatrix xi = xi_block(data.c(k), data.q(k));
        const double scale = std::max(1.0, xt.squaredNorm());
        rep.j_unitarity = std::max({rep.j_unitarity, (xt * j * xt.adjoint() - j).norm() / scale,
                                    (xt.adjoint() * j * xt - j).norm() / scale});

        const CMatrix ct_inv = inverse_hpd(tj.c_tilde(k)).matrix();
        const CMatrix lower_left = xt.bottomLeftCorner(h, h);
        rep.c_breve = std::max(rep.c_breve, (lower_left - ct_inv).norm() / (1.0 + ct_inv.norm()));
        rep.template_lower_left = rep.c_breve;
        rep.template_lower_right = std::max(rep.template_lower_right, xt.bottomRightCorner(h, h).norm());

        const CMatrix alt = xi - j * tr.X[k] * ip + j * p * tr.X[k - 1];
        rep.perturbation_form = std::max(rep.perturbation_form, (xt - alt).norm() / (1.0 + xt.norm()));

        const CMatrix zk = solve_hpd(tr.S[k], tr.Pi[k]).adjoint();
        const CMatrix zprev = solve_hpd(tr.S[k - 1], tr.Pi[k - 1]).adjoint();
        const CMatrix predicted = kI * p * zprev * tr.A + j * xt * j * zprev;
        rep.forward = std::max(rep.forward, (zk - predicted).norm() / (1.0 + zk.norm()));

        if (invertible) {
            const double r = (xt * w_breve[k - 1] - w_breve[k] * xi).norm() /
                             (1.0 + w_breve[k].norm() * xi.norm());
            rep.factorization = std::max(*rep.factorization, r);
        }
    }
    return rep;
}

/// ‖first h columns of Π0‖; zero exactly when [I 0] Π0* S0⁻¹ = 0.
inline double j0_defect(const CMatrix& pi0, Eigen::Index h) { return pi0.leftCols(h).norm(); }

struct EigenBlocks {
    /// y_k = [0 C̃(k)^{-1/2}] Π_{k−1}* S_{k−1}⁻¹ for k = 1..N (index k−1).
    std::vector<CMatrix> Y;
    /// Relative residual of (J̃Y − YA) row k for k = 1..N−1 (index k−1).
    std::vector<double> row_residual;
    /// Row N with the y_{N+1} term dropped (truncation effect, not an error).
    double last_row_truncated = 0.0;
    /// max(1, max_k ‖y_k‖): the scale residuals are divided by.
    double scale = 1.0;

    const CMatrix& y(std::size_t k) const { return Y.at(k - 1); }
    double max_row_residual() const {
        return row_residual.empty() ? 0.0 : *std::max_element(row_residual.begin(), row_residual.end());
    }
};

inline EigenBlocks eigen_blocks(const RecursionTrajectory& tr, const TransformedJacobi& tj,
                                const DiscreteTolerances& tol = {}) {
    const Eigen::Index h = tr.h;
    const double defect = j0_defect(tr.Pi.front(), h);
    if (defect > tol.j0_tol * tr.Pi.front().norm()) {
        throw PreconditionError("first h columns of Pi0 must vanish: ‖[I 0]Π₀*‖ = " + std::to_string(defect), defect);
    }
    const std::size_t n = tr.N();
    EigenBlocks eb;
    eb.Y.reserve(n);
    for (std::size_t k = 1; k <= n; ++k) {
        const CMatrix z2 = solve_hpd(tr.S[k - 1], tr.Pi[k - 1].rightCols(h)).adjoint();
        eb.Y.push_back(herm_inv_sqrt(tj.c_tilde(k)).matrix() * z2);
        eb.scale = std::max(eb.scale, eb.Y.back().norm());
    }
    for (std::size_t k = 1; k + 1 <= n; ++k) {
        const CMatrix r = tj.J.row_apply(k, eb.Y) - eb.y(k) * tr.A;
        eb.row_residual.push_back(r.norm() / eb.scale);
    }
    if (n >= 1) {
        eb.last_row_truncated = (tj.J.row_apply(n, eb.Y) - eb.y(n) * tr.A).norm() / eb.scale;
    }
    return eb;
}

struct DiscreteSolution {
    std::vector<double> times;
    /// Psi[t][k−1] = ψ_k(t).
    std::vector<std::vector<CMatrix>> Psi;
    /// max over interior rows k ≤ N−1 of ‖iΨ'_k − (J̃Ψ)_k‖ / max(1, max‖ψ_k(t)‖), per t.
    std::vector<double> residual;
};

/// Ψ(t) = Y e^{−itA}; iΨ' = Y A e^{−itA} is evaluated analytically.
inline DiscreteSolution discrete_solution(const EigenBlocks& eb, const TransformedJacobi& tj, const CMatrix& a,
                                          const std::vector<double>& ts) {
    DiscreteSolution sol;
    sol.times = ts;
    const std::size_t n = eb.Y.size();
    for (const double t : ts) {
        const CMatrix e = mat_exp(Complex(0.0, -t) * a);
        std::vector<CMatrix> psi;
        psi.reserve(n);
        double scale = 1.0;
        for (const auto& y : eb.Y) {
            psi.push_back(y * e);
            scale = std::max(scale, psi.back().norm());
        }
        double worst = 0.0;
        for (std::size_t k = 1; k + 1 <= n; ++k) {
            const CMatrix i_dpsi = eb.y(k) * a * e;
            worst = std::max(worst, (i_dpsi - tj.J.row_apply(k, psi)).norm() / scale);
        }
        sol.Psi.push_back(std::move(psi));
        sol.residual.push_back(worst);
    }
    return sol;
}

}  // namespace gbdt
