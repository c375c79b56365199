#pragma once

// GBDT of the matrix Schrödinger equation -y'' + u y = λ y on [0, L]:
// evolution of (Π(x), S(x)), the Darboux matrix, the transformed potential
// ũ, explicit solutions ψ(x, t) of i ψ_t = -ψ_xx + ũ ψ, and the L² identity.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "gbdt/errors.hpp"
#include "gbdt/grid.hpp"
#include "gbdt/linalg.hpp"
#include "gbdt/signature.hpp"

namespace gbdt {

struct ContinuousTolerances {
    double id_tol = 1e-9;
    double pde_tol = 1e-8;
    double quad_tol = 1e-8;
    /// spectral_guard = spectral_guard_factor·(1 + ‖A‖).
    double spectral_guard_factor = 1e-8;
};

/// Generators (A, S(0), Π(0)) of the transformation.
struct ParameterTriple {
    CMatrix A;
    HermitianMatrix S0;
    CMatrix Pi0;
    SignatureJ j;

    Eigen::Index n() const noexcept { return A.rows(); }
    Eigen::Index h() const noexcept { return j.h; }

    static ParameterTriple continuous(CMatrix a, HermitianMatrix s0, CMatrix pi0) {
        const Eigen::Index h = pi0.cols() / 2;
        return {std::move(a), std::move(s0), std::move(pi0), SignatureJ::continuous(h)};
    }
};

inline void check_triple_dimensions(const CMatrix& a, const HermitianMatrix& s0, const CMatrix& pi0,
                                    const SignatureJ& j) {
    require_square(a, "triple A");
    const Eigen::Index n = a.rows();
    if (s0.dim() != n) {
        throw DimensionError("triple: S0 is " + std::to_string(s0.dim()) + "x" + std::to_string(s0.dim()) +
                             ", expected " + std::to_string(n) + "x" + std::to_string(n));
    }
    if (pi0.rows() != n || pi0.cols() != j.m() || j.h < 1) {
        throw DimensionError("triple: Pi0 is " + std::to_string(pi0.rows()) + "x" + std::to_string(pi0.cols()) +
                             ", expected " + std::to_string(n) + "x" + std::to_string(j.m()));
    }
    require_finite(a, "triple A");
    require_finite(pi0, "triple Pi0");
}

/// ‖A S0 − S0 A* − Π0 j Π0*‖_F.
inline double validate_triple(const ParameterTriple& t) {
    check_triple_dimensions(t.A, t.S0, t.Pi0, t.j);
    const CMatrix& s0 = t.S0.matrix();
    return (t.A * s0 - s0 * t.A.adjoint() - t.Pi0 * t.j.matrix() * t.Pi0.adjoint()).norm();
}

/// Acceptance threshold for validate_triple: id_tol·(1 + ‖A‖‖S0‖).
inline double triple_threshold(const ParameterTriple& t, double id_tol) {
    return id_tol * (1.0 + t.A.norm() * t.S0.matrix().norm());
}

/// h×h potential u = u* on [0, L]; zero or tabulated with linear interpolation.
class PotentialSpec {
public:
    enum class Kind { zero, tabulated };

    static PotentialSpec zero(Eigen::Index h) {
        PotentialSpec p;
        p.kind_ = Kind::zero;
        p.h_ = h;
        return p;
    }

    static PotentialSpec tabulated(Grid grid, std::vector<HermitianMatrix> values) {
        if (values.size() != grid.size() || values.empty()) {
            throw DimensionError("potential: " + std::to_string(values.size()) + " values for " +
                                 std::to_string(grid.size()) + " samples");
        }
        PotentialSpec p;
        p.kind_ = Kind::tabulated;
        p.h_ = values.front().dim();
        for (const auto& v : values) {
            if (v.dim() != p.h_) throw DimensionError("potential: inconsistent block size");
        }
        p.grid_ = std::move(grid);
        p.values_ = std::move(values);
        return p;
    }

    /// Constant potential tabulated at the two ends of [0, length].
    static PotentialSpec constant(const HermitianMatrix& value, double length) {
        return tabulated(Grid(std::vector<double>{0.0, length}), {value, value});
    }

    Kind kind() const noexcept { return kind_; }
    Eigen::Index h() const noexcept { return h_; }
    const Grid& grid() const noexcept { return grid_; }
    const std::vector<HermitianMatrix>& values() const noexcept { return values_; }

    /// Largest x at which u is defined.
    double extent() const {
        return kind_ == Kind::zero ? std::numeric_limits<double>::infinity() : grid_.back();
    }

    CMatrix at(double x) const {
        if (kind_ == Kind::zero) return CMatrix::Zero(h_, h_);
        if (x < -1e-12 || x > grid_.back() * (1.0 + 1e-12) + 1e-12) {
            throw DomainError("potential: x = " + std::to_string(x) + " outside the tabulated range");
        }
        const auto xs = grid_.samples();
        if (xs.size() == 1) return values_.front().matrix();
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        std::size_t k = (it == xs.begin()) ? 0 : static_cast<std::size_t>(it - xs.begin()) - 1;
        if (k + 1 >= xs.size()) k = xs.size() - 2;
        const double w = std::clamp((x - xs[k]) / (xs[k + 1] - xs[k]), 0.0, 1.0);
        if (w == 0.0) return values_[k].matrix();
        if (w == 1.0) return values_[k + 1].matrix();
        return (1.0 - w) * values_[k].matrix() + w * values_[k + 1].matrix();
    }

private:
    Kind kind_ = Kind::zero;
    Eigen::Index h_ = 1;
    Grid grid_;
    std::vector<HermitianMatrix> values_;
};

namespace detail {

struct FlowDerivative {
    CMatrix dPi;
    CMatrix dS;
};

// Π' = A Π q1 + Π q0, S' = Π q1 j Π* written blockwise:
// Φ1' = A Φ2 − Φ2 u, Φ2' = −Φ1, S' = Φ2 Φ2*.
inline FlowDerivative flow(const CMatrix& a, const CMatrix& pi, const CMatrix& u) {
    const Eigen::Index h = pi.cols() / 2;
    const auto phi1 = pi.leftCols(h);
    const auto phi2 = pi.rightCols(h);
    FlowDerivative d;
    d.dPi.resize(pi.rows(), pi.cols());
    d.dPi.leftCols(h) = a * phi2 - phi2 * u;
    d.dPi.rightCols(h) = -phi1;
    d.dS = phi2 * phi2.adjoint();
    return d;
}

inline void rk4_step(const CMatrix& a, const PotentialSpec& u, double x, double step, CMatrix& pi,
                     CompensatedSum& s) {
    const CMatrix u0 = u.at(x);
    const CMatrix um = u.at(x + 0.5 * step);
    const CMatrix u1 = u.at(x + step);
    const auto k1 = flow(a, pi, u0);
    const auto k2 = flow(a, pi + 0.5 * step * k1.dPi, um);
    const auto k3 = flow(a, pi + 0.5 * step * k2.dPi, um);
    const auto k4 = flow(a, pi + step * k3.dPi, u1);
    pi += (step / 6.0) * (k1.dPi + 2.0 * k2.dPi + 2.0 * k3.dPi + k4.dPi);
    s.add((step / 6.0) * (k1.dS + 2.0 * k2.dS + 2.0 * k3.dS + k4.dS));
}

inline void integrate(const CMatrix& a, const PotentialSpec& u, double from, double to, double max_step,
                      CMatrix& pi, CompensatedSum& s) {
    const double span = to - from;
    if (span == 0.0) return;
    const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(span) / max_step - 1e-9)));
    const double step = span / steps;
    for (int i = 0; i < steps; ++i) {
        rk4_step(a, u, from + i * step, step, pi, s);
    }
}

}  // namespace detail

/// Sampled trajectory x ↦ (Π(x), S(x)) on a grid.
struct ContinuousState {
    ParameterTriple triple;
    Grid grid;
    std::vector<CMatrix> Pi;
    std::vector<HermitianMatrix> S;
    PotentialSpec u;
    /// Substep used when evaluating between samples.
    double max_step = 1e-3;

    struct Point {
        CMatrix Pi;
        HermitianMatrix S;
        CMatrix u;
    };

    std::size_t size() const noexcept { return grid.size(); }

    Point sample(std::size_t k) const { return {Pi[k], S[k], u.at(grid[k])}; }

    /// (Π, S, u) at any x in [0, L], integrated from the nearest sample.
    Point at(double x) const {
        if (x < 0.0 || x > grid.back() * (1.0 + 1e-12)) {
            throw DomainError("state: x = " + std::to_string(x) + " outside [0, " + std::to_string(grid.back()) + "]");
        }
        const std::size_t k = grid.nearest(x);
        if (grid[k] == x) return sample(k);
        CMatrix pi = Pi[k];
        CompensatedSum s(S[k].matrix());
        detail::integrate(triple.A, u, grid[k], x, std::min(max_step, 1e-4), pi, s);
        return {std::move(pi), HermitianMatrix::symmetrized(s.value()), u.at(x)};
    }
};

/// ‖A S − S A* − Π j Π*‖_F at one point.
inline double identity_residual(const ParameterTriple& t, const CMatrix& pi, const CMatrix& s) {
    return (t.A * s - s * t.A.adjoint() - pi * t.j.matrix() * pi.adjoint()).norm();
}

/// max_x of the propagated identity residual, normalized by 1 + ‖A‖·max‖S‖.
inline double identity_drift(const ContinuousState& st) {
    double worst = 0.0;
    double s_max = 0.0;
    for (std::size_t k = 0; k < st.size(); ++k) {
        worst = std::max(worst, identity_residual(st.triple, st.Pi[k], st.S[k].matrix()));
        s_max = std::max(s_max, st.S[k].matrix().norm());
    }
    return worst / (1.0 + st.triple.A.norm() * s_max);
}

namespace detail {

inline void require_valid_triple(const ParameterTriple& t, double id_tol) {
    if (t.j.variant != SignatureJ::Variant::continuous) {
        throw DomainError("continuous GBDT needs the continuous signature matrix");
    }
    const double r = validate_triple(t);
    if (r > triple_threshold(t, id_tol)) {
        throw PreconditionError("triple identity violated: ‖A S0 − S0 A* − Π0 j Π0*‖ = " + std::to_string(r), r);
    }
}

}  // namespace detail

/// Closed form for u ≡ 0: [Λ1; Λ2](x) = e^{x𝒜}[Λ1(0); Λ2(0)], 𝒜 = [[0, A], [−I, 0]],
/// S(x) = S(0) + ∫_0^x Λ2 Λ2* by composite Simpson on the grid.
inline ContinuousState evolve_closed_form(const ParameterTriple& t, const Grid& grid,
                                          const ContinuousTolerances& tol = {}) {
    detail::require_valid_triple(t, tol.id_tol);
    const Eigen::Index n = t.n();
    const Eigen::Index h = t.h();

    CMatrix generator = CMatrix::Zero(2 * n, 2 * n);
    generator.topRightCorner(n, n) = t.A;
    generator.bottomLeftCorner(n, n) = -CMatrix::Identity(n, n);

    CMatrix lambda0(2 * n, h);
    lambda0.topRows(n) = t.Pi0.leftCols(h);
    lambda0.bottomRows(n) = t.Pi0.rightCols(h);

    ContinuousState st{t, grid, {}, {}, PotentialSpec::zero(h)};
    st.Pi.reserve(grid.size());
    std::vector<CMatrix> integrand;
    integrand.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        CMatrix pi(n, 2 * h);
        if (k == 0) {
            pi = t.Pi0;
        } else {
            const CMatrix lambda = mat_exp(grid[k] * generator) * lambda0;
            pi.leftCols(h) = lambda.topRows(n);
            pi.rightCols(h) = lambda.bottomRows(n);
        }
        integrand.push_back(pi.rightCols(h) * pi.rightCols(h).adjoint());
        st.Pi.push_back(std::move(pi));
    }
    const auto integral = cumulative_simpson(grid, integrand);
    st.S.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        st.S.push_back(k == 0 ? t.S0 : HermitianMatrix(t.S0.matrix() + integral[k]));
    }
    return st;
}

struct EvolveOptions {
    double max_step = 1e-3;
    ContinuousTolerances tol{};
};

/// Classical RK4 integration of Π' = AΠq1 + Πq0, S' = Πq1jΠ*. Accuracy is
/// policed by the propagated identity; excess drift raises AccuracyError.
inline ContinuousState evolve_ode(const ParameterTriple& t, const PotentialSpec& u, const Grid& grid,
                                  const EvolveOptions& opt = {}) {
    detail::require_valid_triple(t, opt.tol.id_tol);
    if (u.h() != t.h()) {
        throw DimensionError("evolve_ode: potential block size " + std::to_string(u.h()) + " != h = " +
                             std::to_string(t.h()));
    }
    if (u.extent() < grid.back() * (1.0 - 1e-12)) {
        throw DomainError("evolve_ode: potential tabulated only up to x = " + std::to_string(u.extent()));
    }
    ContinuousState st{t, grid, {}, {}, u, opt.max_step};
    st.Pi.reserve(grid.size());
    st.S.reserve(grid.size());
    CMatrix pi = t.Pi0;
    CompensatedSum s(t.S0.matrix());
    st.Pi.push_back(pi);
    st.S.push_back(t.S0);
    for (std::size_t k = 1; k < grid.size(); ++k) {
        detail::integrate(t.A, u, grid[k - 1], grid[k], opt.max_step, pi, s);
        st.Pi.push_back(pi);
        st.S.push_back(HermitianMatrix::symmetrized(s.value()));
    }
    const double drift = identity_drift(st);
    if (drift > opt.tol.id_tol) {
        const double factor = std::min(0.5, 0.8 * std::pow(opt.tol.id_tol / drift, 0.25));
        throw AccuracyError("evolve_ode: identity drift " + std::to_string(drift) + " exceeds id_tol " +
                                std::to_string(opt.tol.id_tol),
                            opt.max_step * factor);
    }
    return st;
}

/// Derived quantities at one point: Z = Π*S⁻¹ = [z1; z2], X = Π*S⁻¹Π.
struct PointQuantities {
    CMatrix z1, z2;
    CMatrix X11, X12, X21, X22;
    CMatrix u;
    /// ũ = u + 2(X12 + X21 + X22²), before symmetrization.
    CMatrix u_tilde;
    /// z1', z2' by direct differentiation of Π*S⁻¹ along the flow.
    CMatrix dz1, dz2;
    /// X22' along the flow: −X12 − X21 − X22².
    CMatrix dX22;
};

inline PointQuantities point_quantities(const CMatrix& a, const CMatrix& pi, const HermitianMatrix& s,
                                        const CMatrix& u) {
    const Eigen::Index h = pi.cols() / 2;
    PointQuantities q;
    const CMatrix z = solve_hpd(s, pi).adjoint();
    q.z1 = z.topRows(h);
    q.z2 = z.bottomRows(h);
    const auto phi1 = pi.leftCols(h);
    const auto phi2 = pi.rightCols(h);
    q.X11 = q.z1 * phi1;
    q.X12 = q.z1 * phi2;
    q.X21 = q.z2 * phi1;
    q.X22 = q.z2 * phi2;
    q.u = u;
    q.u_tilde = u + 2.0 * (q.X12 + q.X21 + q.X22 * q.X22);

    // Z' = Π'*S⁻¹ − Z S' S⁻¹ with S' S⁻¹ = Φ2 z2.
    const auto d = detail::flow(a, pi, u);
    const CMatrix dz = solve_hpd(s, d.dPi).adjoint() - z * phi2 * q.z2;
    q.dz1 = dz.topRows(h);
    q.dz2 = dz.bottomRows(h);
    q.dX22 = -q.X12 - q.X21 - q.X22 * q.X22;
    return q;
}

inline PointQuantities point_quantities(const ContinuousState& st, const ContinuousState::Point& p) {
    return point_quantities(st.triple.A, p.Pi, p.S, p.u);
}

/// The four h×h blocks of X(x) = Π(x)*S(x)⁻¹Π(x) per sample.
struct XBlocks {
    std::vector<CMatrix> X11, X12, X21, X22;
};

namespace detail {

inline void require_positive(const ContinuousState& st, std::size_t k) {
    Eigen::LLT<CMatrix> llt(st.S[k].matrix());
    if (llt.info() != Eigen::Success) {
        throw SingularityError("S(x) is not positive definite at sample " + std::to_string(k) +
                                   " (x = " + std::to_string(st.grid[k]) + ")",
                               k);
    }
}

}  // namespace detail

inline XBlocks x_blocks(const ContinuousState& st) {
    XBlocks xb;
    const std::size_t count = st.size();
    xb.X11.reserve(count);
    xb.X12.reserve(count);
    xb.X21.reserve(count);
    xb.X22.reserve(count);
    const Eigen::Index h = st.triple.h();
    for (std::size_t k = 0; k < count; ++k) {
        detail::require_positive(st, k);
        const CMatrix x = st.Pi[k].adjoint() * solve_hpd(st.S[k], st.Pi[k]);
        xb.X11.push_back(x.topLeftCorner(h, h));
        xb.X12.push_back(x.topRightCorner(h, h));
        xb.X21.push_back(x.bottomLeftCorner(h, h));
        xb.X22.push_back(x.bottomRightCorner(h, h));
    }
    return xb;
}

/// ũ = u + 2(X12 + X21 + X22²) per sample.
inline std::vector<HermitianMatrix> transformed_potential(const ContinuousState& st) {
    const XBlocks xb = x_blocks(st);
    std::vector<HermitianMatrix> out;
    out.reserve(st.size());
    for (std::size_t k = 0; k < st.size(); ++k) {
        const CMatrix u = st.u.at(st.grid[k]);
        out.emplace_back(u + 2.0 * (xb.X12[k] + xb.X21[k] + xb.X22[k] * xb.X22[k]));
    }
    return out;
}

/// Residual of −z2'' + ũ z2 − z2 A with z2'' from the derivative chain
/// z2' = −z1 − X22 z2 and directly differentiated z1'.
inline CMatrix elliptic_chain_residual(const CMatrix& a, const PointQuantities& q) {
    const CMatrix d2z2 = -q.dz1 - q.dX22 * q.z2 - q.X22 * q.dz2;
    return -d2z2 + q.u_tilde * q.z2 - q.z2 * a;
}

/// ψ(x, t) = [0 I] Π(x)* S(x)⁻¹ e^{−itA} = z2(x) e^{−itA} on the state grid.
class DynamicalSolution {
public:
    explicit DynamicalSolution(const ContinuousState& st) : a_(st.triple.A) {
        z2_.reserve(st.size());
        chain_.reserve(st.size());
        for (std::size_t k = 0; k < st.size(); ++k) {
            detail::require_positive(st, k);
            const auto q = point_quantities(st, st.sample(k));
            chain_.push_back(elliptic_chain_residual(a_, q).norm());
            z2_.push_back(q.z2);
        }
    }

    std::size_t size() const noexcept { return z2_.size(); }
    const CMatrix& z2(std::size_t k) const { return z2_[k]; }

    CMatrix propagator(double t) const { return mat_exp(Complex(0.0, -t) * a_); }

    CMatrix psi(std::size_t k, double t) const { return z2_[k] * propagator(t); }

    /// ψ over every sample for one t.
    std::vector<CMatrix> psi_at(double t) const {
        const CMatrix e = propagator(t);
        std::vector<CMatrix> out;
        out.reserve(z2_.size());
        for (const auto& z : z2_) out.push_back(z * e);
        return out;
    }

    /// ‖−z2'' + ũ z2 − z2 A‖_F at sample k, analytic chain.
    double chain_residual(std::size_t k) const { return chain_[k]; }

    double max_chain_residual() const {
        return chain_.empty() ? 0.0 : *std::max_element(chain_.begin(), chain_.end());
    }

private:
    CMatrix a_;
    std::vector<CMatrix> z2_;
    std::vector<double> chain_;
};

inline DynamicalSolution dynamical_solution(const ContinuousState& st) { return DynamicalSolution(st); }

/// ‖i ψ_t − (−ψ_xx + ũ ψ)‖_F at (x, t): ψ_xx by central differences of
/// step δ, ψ_t analytic.
inline double schrodinger_fd_residual(const ContinuousState& st, double x, double t, double delta) {
    const CMatrix e = mat_exp(Complex(0.0, -t) * st.triple.A);
    const auto q = point_quantities(st, st.at(x));
    const auto qm = point_quantities(st, st.at(x - delta));
    const auto qp = point_quantities(st, st.at(x + delta));
    const CMatrix psi = q.z2 * e;
    const CMatrix psi_xx = (qp.z2 - 2.0 * q.z2 + qm.z2) * e / (delta * delta);
    const CMatrix i_psi_t = q.z2 * st.triple.A * e;
    return (i_psi_t - (-psi_xx + q.u_tilde * psi)).norm();
}

/// ‖X22' + X12 + X21 + X22²‖_F with X22' by central differences.
inline double x22_fd_residual(const ContinuousState& st, double x, double delta) {
    const auto q = point_quantities(st, st.at(x));
    const auto qm = point_quantities(st, st.at(x - delta));
    const auto qp = point_quantities(st, st.at(x + delta));
    const CMatrix d = (qp.X22 - qm.X22) / (2.0 * delta);
    return (d + q.X12 + q.X21 + q.X22 * q.X22).norm();
}

namespace detail {

inline CMatrix shifted_resolvent_times(const CMatrix& a, Complex lambda, const CMatrix& rhs,
                                       const ContinuousTolerances& tol) {
    const Eigen::Index n = a.rows();
    const CMatrix shifted = a - lambda * CMatrix::Identity(n, n);
    const double guard = tol.spectral_guard_factor * (1.0 + a.norm());
    Eigen::JacobiSVD<CMatrix> svd(shifted);
    const double smin = svd.singularValues()(n - 1);
    if (smin < guard) {
        throw NearSingularError("darboux matrix: λ = (" + std::to_string(lambda.real()) + ", " +
                                std::to_string(lambda.imag()) + ") is within " + std::to_string(smin) +
                                " of σ(A)");
    }
    return shifted.partialPivLu().solve(rhs);
}

inline CMatrix darboux_from(const CMatrix& a, const SignatureJ& j, const CMatrix& pi, const HermitianMatrix& s,
                            Complex lambda, const ContinuousTolerances& tol) {
    const CMatrix z = solve_hpd(s, pi).adjoint();
    const CMatrix r = shifted_resolvent_times(a, lambda, pi, tol);
    return CMatrix::Identity(j.m(), j.m()) - j.matrix() * z * r;
}

}  // namespace detail

/// w_A(x, λ) = I − j Π(x)* S(x)⁻¹ (A − λI)⁻¹ Π(x).
inline CMatrix darboux_matrix(const ContinuousState& st, Complex lambda, double x,
                              const ContinuousTolerances& tol = {}) {
    const auto p = st.at(x);
    return detail::darboux_from(st.triple.A, st.triple.j, p.Pi, p.S, lambda, tol);
}

/// G(x, λ) = −λ q1 − q0(x).
inline CMatrix coefficient_g(Eigen::Index h, Complex lambda, const CMatrix& u) {
    CMatrix g = CMatrix::Zero(2 * h, 2 * h);
    g.bottomLeftCorner(h, h) = -lambda * CMatrix::Identity(h, h);
    g.topRightCorner(h, h).setIdentity();
    g.bottomLeftCorner(h, h) += u;
    return g;
}

/// G̃ = −λ q1 − q̃0 with q̃0 = q0 − (q1 j X − j X q1).
inline CMatrix coefficient_g_tilde(Eigen::Index h, Complex lambda, const CMatrix& u, const CMatrix& x) {
    const Eigen::Index m = 2 * h;
    CMatrix q1 = CMatrix::Zero(m, m);
    q1.bottomLeftCorner(h, h).setIdentity();
    CMatrix q0 = CMatrix::Zero(m, m);
    q0.topRightCorner(h, h) = -CMatrix::Identity(h, h);
    q0.bottomLeftCorner(h, h) = -u;
    const CMatrix j = SignatureJ::continuous(h).matrix();
    const CMatrix q0_tilde = q0 - (q1 * j * x - j * x * q1);
    return -lambda * q1 - q0_tilde;
}

/// ‖w_A' − (G̃ w_A − w_A G)‖_F at (x, λ), w_A' by central differences of step δ.
inline double intertwining_residual(const ContinuousState& st, Complex lambda, double x, double delta,
                                    const ContinuousTolerances& tol = {}) {
    const Eigen::Index h = st.triple.h();
    const auto p = st.at(x);
    const CMatrix w = detail::darboux_from(st.triple.A, st.triple.j, p.Pi, p.S, lambda, tol);
    const CMatrix dw = (darboux_matrix(st, lambda, x + delta, tol) - darboux_matrix(st, lambda, x - delta, tol)) /
                       (2.0 * delta);
    const CMatrix xmat = p.Pi.adjoint() * solve_hpd(p.S, p.Pi);
    const CMatrix g = coefficient_g(h, lambda, p.u);
    const CMatrix gt = coefficient_g_tilde(h, lambda, p.u, xmat);
    return (dw - (gt * w - w * g)).norm();
}

/// ‖w_A(x, λ) j w_A(x, λ̄)* − j‖_F.
inline double darboux_j_residual(const ContinuousState& st, Complex lambda, double x,
                                 const ContinuousTolerances& tol = {}) {
    const CMatrix j = st.triple.j.matrix();
    const CMatrix w = darboux_matrix(st, lambda, x, tol);
    const CMatrix wc = darboux_matrix(st, std::conj(lambda), x, tol);
    return (w * j * wc.adjoint() - j).norm();
}

/// Caller-supplied solution of −y'' + u y = λ y and its derivative.
using VectorFunction = std::function<CVector(double)>;

struct TransformedEigenfunction {
    std::vector<CVector> y_tilde;
    /// ‖−ỹ'' + ũ ỹ − λ ỹ‖ per sample.
    std::vector<double> residual;
    /// ‖ỹ' − (−X22 ỹ + y̆)‖ per sample, ỹ' by direct differentiation.
    std::vector<double> first_order_residual;

    double max_residual() const {
        double r = 0.0;
        for (std::size_t k = 0; k < residual.size(); ++k) {
            r = std::max({r, residual[k], first_order_residual[k]});
        }
        return r;
    }
};

/// ỹ = [I 0] w_A [y; y'] per sample, with its Schrödinger residual.
inline TransformedEigenfunction transform_eigenfunction(const ContinuousState& st, const VectorFunction& y,
                                                        const VectorFunction& dy, Complex lambda,
                                                        const ContinuousTolerances& tol = {}) {
    const Eigen::Index h = st.triple.h();
    const CMatrix& a = st.triple.A;
    const CMatrix j = st.triple.j.matrix();
    TransformedEigenfunction out;
    out.y_tilde.reserve(st.size());
    out.residual.reserve(st.size());
    out.first_order_residual.reserve(st.size());
    for (std::size_t k = 0; k < st.size(); ++k) {
        detail::require_positive(st, k);
        const double x = st.grid[k];
        const CVector yv = y(x);
        const CVector dyv = dy(x);
        if (yv.size() != h || dyv.size() != h) {
            throw DimensionError("transform_eigenfunction: y and y' must have length h = " + std::to_string(h));
        }
        const auto p = st.sample(k);
        const auto q = point_quantities(st, p);
        const CMatrix r = detail::shifted_resolvent_times(a, lambda, p.Pi, tol);

        CMatrix z(2 * h, a.rows());
        z << q.z1, q.z2;
        CMatrix dz(2 * h, a.rows());
        dz << q.dz1, q.dz2;
        const CMatrix wa = CMatrix::Identity(2 * h, 2 * h) - j * z * r;
        const CMatrix dpi = detail::flow(a, p.Pi, p.u).dPi;
        const CMatrix dwa = -j * (dz * r + z * detail::shifted_resolvent_times(a, lambda, dpi, tol));

        CVector w(2 * h);
        w << yv, dyv;
        CVector dw(2 * h);
        dw << dyv, (p.u - lambda * CMatrix::Identity(h, h)) * yv;

        const CVector wt = wa * w;
        const CVector dwt = dwa * w + wa * dw;
        const CVector yt = wt.head(h);
        const CVector yb = wt.tail(h);
        const CVector dyt = dwt.head(h);
        const CVector dyb = dwt.tail(h);

        const CVector d2yt = -q.dX22 * yt - q.X22 * dyt + dyb;
        out.residual.push_back((-d2yt + q.u_tilde * yt - lambda * yt).norm());
        out.first_order_residual.push_back((dyt - (-q.X22 * yt + yb)).norm());
        out.y_tilde.push_back(yt);
    }
    return out;
}

struct L2Identity {
    /// ∫_0^ℓ z2* z2 dx.
    HermitianMatrix lhs;
    /// S(0)⁻¹ − S(ℓ)⁻¹.
    HermitianMatrix rhs;
    double residual = 0.0;
    /// rhs ≺ S(0)⁻¹, i.e. S(ℓ)⁻¹ ≻ 0.
    bool strictly_below = false;
};

/// Running Gram matrix ∫_0^{x_k} z2* z2 dx on the state grid.
inline std::vector<CMatrix> z2_gram(const ContinuousState& st) {
    std::vector<CMatrix> integrand;
    integrand.reserve(st.size());
    for (std::size_t k = 0; k < st.size(); ++k) {
        detail::require_positive(st, k);
        const CMatrix z2 = solve_hpd(st.S[k], st.Pi[k].rightCols(st.triple.h())).adjoint();
        integrand.push_back(z2.adjoint() * z2);
    }
    return cumulative_simpson(st.grid, integrand);
}

inline L2Identity l2_identity(const ContinuousState& st, double ell) {
    if (!(ell > 0.0)) throw DomainError("l2_identity: ℓ must be positive");
    const std::size_t k = st.grid.index_of(ell);
    const auto gram = z2_gram(st);
    const HermitianMatrix s0_inv = inverse_hpd(st.S.front());
    const HermitianMatrix sl_inv = inverse_hpd(st.S[k]);
    L2Identity out{HermitianMatrix::symmetrized(gram[k]),
                   HermitianMatrix::symmetrized(s0_inv.matrix() - sl_inv.matrix())};
    out.residual = (out.lhs.matrix() - out.rhs.matrix()).norm();
    out.strictly_below = is_posdef(st.S[k]).positive_definite;
    return out;
}

}  // namespace gbdt
