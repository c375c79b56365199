#pragma once

// The invariant suite behind `gbdt verify` and the acceptance binary:
// seeded inputs, one CriterionResult per acceptance criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gbdt/asymptotics.hpp"
#include "gbdt/continuous.hpp"
#include "gbdt/discrete.hpp"
#include "gbdt/random.hpp"

namespace gbdt {

struct Check {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    /// Wall-clock measurements vary run to run and are kept out of files.
    bool timing = false;
    std::string note;
};

struct CriterionResult {
    int id = 0;
    std::string title;
    std::vector<Check> checks;

    bool pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }
};

struct VerifyOptions {
    std::uint64_t seed = 20240601;
    /// Multiplies every residual tolerance (not the runtime budgets).
    double tol_scale = 1.0;
};

namespace detail {

inline Check bound(std::string name, double value, double tol, std::string note = {}) {
    return {std::move(name), value, tol, value <= tol, false, std::move(note)};
}

inline Check holds(std::string name, bool ok, std::string note = {}) {
    return {std::move(name), ok ? 0.0 : 1.0, 0.0, ok, false, std::move(note)};
}

inline Check timing(std::string name, double seconds, double budget) {
    return {std::move(name), seconds, budget, seconds < budget, true, {}};
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline Eigen::Index seeded_n(int s) { return 1 + s % 4; }
inline Eigen::Index seeded_h(int s) { return 1 + (s / 4) % 3; }

inline constexpr int kSeededRuns = 20;

struct SeededContinuous {
    ParameterTriple triple;
    PotentialSpec constant_u;
};

inline std::vector<SeededContinuous> seeded_continuous(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SeededContinuous> out;
    for (int s = 0; s < kSeededRuns; ++s) {
        auto t = random_continuous_triple(rng, seeded_n(s), seeded_h(s));
        auto u = PotentialSpec::constant(rng.hermitian(t.h(), 0.5), 10.0);
        out.push_back({std::move(t), std::move(u)});
    }
    return out;
}

inline double relative_gap(const CMatrix& a, const CMatrix& b) { return (a - b).norm() / (1.0 + b.norm()); }

inline ParameterTriple soliton_triple(double kappa, double center = 3.0) {
    CMatrix a(1, 1);
    a(0, 0) = -kappa * kappa;
    CMatrix s0(1, 1);
    s0(0, 0) = (1.0 + std::exp(2.0 * kappa * center)) / (2.0 * kappa);
    CMatrix pi0(1, 2);
    pi0 << -kappa, 1.0;
    return ParameterTriple::continuous(a, HermitianMatrix(s0), pi0);
}

}  // namespace detail

struct SechFit {
    double c = 0.0;
    double phi = 0.0;
    /// max_x |f(x) − c sech²(κx + φ)|.
    double max_error = 0.0;
};

/// Least-squares fit of f ≈ c sech²(κx + φ) by Gauss-Newton from the sampled minimum.
inline SechFit fit_sech2(std::span<const double> xs, std::span<const double> f, double kappa) {
    if (xs.size() != f.size() || xs.size() < 3) throw DimensionError("fit_sech2: need matching samples");
    const auto peak = static_cast<std::size_t>(
        std::max_element(f.begin(), f.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) -
        f.begin());
    SechFit fit{f[peak], -kappa * xs[peak], 0.0};
    const auto m = static_cast<Eigen::Index>(xs.size());
    for (int iter = 0; iter < 50; ++iter) {
        Eigen::MatrixXd jac(m, 2);
        Eigen::VectorXd r(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double arg = kappa * xs[static_cast<std::size_t>(i)] + fit.phi;
            const double s2 = 1.0 / (std::cosh(arg) * std::cosh(arg));
            r(i) = f[static_cast<std::size_t>(i)] - fit.c * s2;
            jac(i, 0) = s2;
            jac(i, 1) = -2.0 * fit.c * s2 * std::tanh(arg);
        }
        const Eigen::Vector2d step = jac.colPivHouseholderQr().solve(r);
        fit.c += step(0);
        fit.phi += step(1);
        if (step.norm() < 1e-15 * (1.0 + std::abs(fit.c) + std::abs(fit.phi))) break;
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double arg = kappa * xs[i] + fit.phi;
        fit.max_error = std::max(fit.max_error, std::abs(f[i] - fit.c / (std::cosh(arg) * std::cosh(arg))));
    }
    return fit;
}

/// Identity propagation for u ≡ 0 and u = const on [0, 5].
inline CriterionResult criterion_identity(const VerifyOptions& opt) {
    CriterionResult res{1, "identity propagation (continuous)", {}};
    detail::Stopwatch watch;
    const auto runs = detail::seeded_continuous(opt.seed);
    const Grid grid = Grid::uniform(5.0, 1e-3);
    double worst_zero = 0.0;
    double worst_const = 0.0;
    EvolveOptions eo;
    eo.tol.id_tol = 1e-9 * opt.tol_scale;
    for (const auto& r : runs) {
        worst_zero = std::max(worst_zero, identity_drift(evolve_ode(r.triple, PotentialSpec::zero(r.triple.h()), grid, eo)));
        worst_const = std::max(worst_const, identity_drift(evolve_ode(r.triple, r.constant_u, grid, eo)));
    }
    res.checks.push_back(detail::bound("identity drift, u=0 (max over 20 runs)", worst_zero, 1e-9 * opt.tol_scale));
    res.checks.push_back(detail::bound("identity drift, u=const (max over 20 runs)", worst_const, 1e-9 * opt.tol_scale));
    res.checks.push_back(detail::timing("runtime [s]", watch.seconds(), 10.0));
    return res;
}

inline CriterionResult criterion_closed_form(const VerifyOptions& opt) {
    CriterionResult res{2, "closed form vs ODE (u = 0)", {}};
    const auto runs = detail::seeded_continuous(opt.seed);
    const Grid grid = Grid::uniform(5.0, 1e-3);
    double worst = 0.0;
    for (const auto& r : runs) {
        const auto cf = evolve_closed_form(r.triple, grid);
        const auto od = evolve_ode(r.triple, PotentialSpec::zero(r.triple.h()), grid);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            worst = std::max({worst, detail::relative_gap(od.Pi[k], cf.Pi[k]),
                              detail::relative_gap(od.S[k].matrix(), cf.S[k].matrix())});
        }
    }
    res.checks.push_back(detail::bound("max relative gap in (Pi, S)", worst, 1e-8 * opt.tol_scale));
    return res;
}

/// Chain residual of −ψ'' + ũψ = iψ_t and its central-difference check.
inline CriterionResult criterion_dynamical(const VerifyOptions& opt) {
    CriterionResult res{3, "explicit solutions of i psi_t = -psi_xx + u~ psi", {}};
    const auto runs = detail::seeded_continuous(opt.seed);
    const Grid grid = Grid::uniform(5.0, 1e-3);
    double chain = 0.0;
    double fd = 0.0;
    auto account = [&](const ContinuousState& st) {
        chain = std::max(chain, DynamicalSolution(st).max_chain_residual());
        for (const double x : {0.7, 2.5, 4.3}) {
            for (const double t : {0.0, 0.5, 1.0}) fd = std::max(fd, schrodinger_fd_residual(st, x, t, 1e-3));
        }
    };
    for (const auto& r : runs) {
        account(evolve_ode(r.triple, PotentialSpec::zero(r.triple.h()), grid));
        account(evolve_ode(r.triple, r.constant_u, grid));
    }
    account(evolve_closed_form(detail::soliton_triple(1.0), grid));
    res.checks.push_back(detail::bound("analytic chain residual", chain, 1e-9 * opt.tol_scale));
    res.checks.push_back(detail::bound("central-difference residual (dx = 1e-3)", fd, 1e-4 * opt.tol_scale));
    return res;
}

inline CriterionResult criterion_soliton(const VerifyOptions& opt) {
    CriterionResult res{4, "one-soliton reproduction", {}};
    const Grid grid = Grid::uniform(10.0, 1e-3);
    for (const double kappa : {0.5, 1.0, 2.0}) {
        const auto st = evolve_closed_form(detail::soliton_triple(kappa), grid);
        const auto ut = transformed_potential(st);
        std::vector<double> values;
        values.reserve(ut.size());
        for (const auto& u : ut) values.push_back(u.matrix()(0, 0).real());
        const auto fit = fit_sech2(grid.samples(), values, kappa);
        const std::string tag = "kappa=" + std::to_string(kappa).substr(0, 3);
        res.checks.push_back(detail::bound(tag + " |c + 2 kappa^2|", std::abs(fit.c + 2.0 * kappa * kappa),
                                           1e-6 * opt.tol_scale));
        res.checks.push_back(detail::bound(tag + " pointwise fit error", fit.max_error, 1e-8 * opt.tol_scale));

        // Plane wave e^{ikx} of −y'' = k² y carried to the transformed equation.
        const double k = 1.3;
        const VectorFunction y = [k](double x) {
            CVector v(1);
            v(0) = std::exp(Complex(0.0, k * x));
            return v;
        };
        const VectorFunction dy = [k](double x) {
            CVector v(1);
            v(0) = Complex(0.0, k) * std::exp(Complex(0.0, k * x));
            return v;
        };
        const auto te = transform_eigenfunction(st, y, dy, Complex(k * k, 0.0));
        res.checks.push_back(
            detail::bound(tag + " transformed plane-wave residual", te.max_residual(), 1e-8 * opt.tol_scale));
    }
    return res;
}

inline CriterionResult criterion_l2(const VerifyOptions& opt) {
    CriterionResult res{5, "L2 identity for z2", {}};
    const auto runs = detail::seeded_continuous(opt.seed);
    const Grid grid = Grid::uniform(10.0, 1e-3);
    double worst = 0.0;
    bool below = true;
    for (const auto& r : runs) {
        for (const auto& st : {evolve_closed_form(r.triple, grid), evolve_ode(r.triple, r.constant_u, grid)}) {
            for (const double ell : {1.0, 5.0, 10.0}) {
                const auto id = l2_identity(st, ell);
                worst = std::max(worst, id.residual);
                below = below && id.strictly_below;
            }
        }
    }
    res.checks.push_back(detail::bound("||int z2* z2 - (S(0)^-1 - S(l)^-1)||, l in {1,5,10}", worst,
                                       1e-8 * opt.tol_scale));
    res.checks.push_back(detail::holds("S(0)^-1 - S(l)^-1 < S(0)^-1", below));
    return res;
}

inline CriterionResult criterion_intertwining(const VerifyOptions& opt) {
    CriterionResult res{6, "Darboux matrix intertwining", {}};
    const auto runs = detail::seeded_continuous(opt.seed);
    const Grid grid = Grid::uniform(5.0, 1e-3);
    Rng rng(opt.seed + 6);
    double worst = 0.0;
    double j_rel = 0.0;
    int pairs = 0;
    for (const auto& r : runs) {
        const auto st = evolve_ode(r.triple, r.constant_u, grid);
        const Eigen::ComplexEigenSolver<CMatrix> es(r.triple.A, false);
        int taken = 0;
        while (taken < 10) {
            const double x = rng.uniform(0.5, 4.5);
            const Complex lambda(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0));
            double dist = INFINITY;
            for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
                dist = std::min(dist, std::abs(lambda - es.eigenvalues()(i)));
            }
            if (dist < 1.0) continue;
            worst = std::max(worst, intertwining_residual(st, lambda, x, 1e-4));
            j_rel = std::max(j_rel, darboux_j_residual(st, lambda, x));
            ++taken;
            ++pairs;
        }
    }
    res.checks.push_back(detail::bound("intertwining residual (" + std::to_string(pairs) + " pairs, d = 1e-4)",
                                       worst, 1e-5 * opt.tol_scale));
    res.checks.push_back(detail::bound("w_A(l) j w_A(conj l)* - j", j_rel, 1e-9 * opt.tol_scale));
    return res;
}

namespace detail {

struct SeededDiscrete {
    DiscreteTriple triple;
    JacobiData data;
};

inline std::vector<SeededDiscrete> seeded_discrete(std::uint64_t seed, bool j0) {
    Rng rng(seed);
    std::vector<SeededDiscrete> out;
    for (int s = 0; s < kSeededRuns; ++s) {
        auto t = random_discrete_triple(rng, seeded_n(s), seeded_h(s), j0);
        auto d = random_jacobi(rng, t.h, 50);
        out.push_back({std::move(t), std::move(d)});
    }
    return out;
}

}  // namespace detail

inline CriterionResult criterion_discrete_identities(const VerifyOptions& opt) {
    CriterionResult res{7, "discrete identity chain (N = 50)", {}};
    const auto runs = detail::seeded_discrete(opt.seed + 7, false);
    double id = 0.0, unit = 0.0, breve = 0.0, fact = 0.0, fwd = 0.0;
    int skipped = 0;
    for (const auto& r : runs) {
        const auto tr = run_recursion(r.triple, r.data);
        const auto tj = transform_jacobi(tr, r.data);
        const auto rep = xi_tilde_checks(tr, r.data, tj);
        id = std::max(id, tr.max_identity_residual());
        unit = std::max(unit, rep.j_unitarity);
        breve = std::max(breve, rep.c_breve);
        fwd = std::max(fwd, rep.forward);
        if (rep.factorization) {
            fact = std::max(fact, *rep.factorization);
        } else {
            ++skipped;
        }
    }
    const double s = opt.tol_scale;
    res.checks.push_back(detail::bound("A S_k - S_k A* = i Pi_k j Pi_k* (all k)", id, 1e-10 * s));
    res.checks.push_back(detail::bound("xi~ j-unitarity", unit, 1e-10 * s));
    res.checks.push_back(detail::bound("lower-left block of xi~ equals C~(k)^-1", breve, 1e-10 * s));
    res.checks.push_back(detail::bound("factorization xi~ w(k-1) = w(k) xi", fact, 1e-9 * s,
                                       std::to_string(skipped) + " runs skipped (det A ~ 0)"));
    res.checks.push_back(detail::bound("forward identity for Pi_k* S_k^-1", fwd, 1e-10 * s));
    return res;
}

inline CriterionResult criterion_discrete_solutions(const VerifyOptions& opt) {
    CriterionResult res{8, "eigen-blocks and i Psi' = J~ Psi", {}};
    detail::Stopwatch watch;
    const auto runs = detail::seeded_discrete(opt.seed + 8, true);
    double rows = 0.0;
    double dyn = 0.0;
    for (const auto& r : runs) {
        const auto tr = run_recursion(r.triple, r.data);
        const auto tj = transform_jacobi(tr, r.data);
        const auto eb = eigen_blocks(tr, tj);
        rows = std::max(rows, eb.max_row_residual());
        const auto sol = discrete_solution(eb, tj, r.triple.A, {0.1, 1.0, 10.0});
        for (const double v : sol.residual) dyn = std::max(dyn, v / (1.0 + r.triple.A.norm()));
    }
    res.checks.push_back(detail::bound("J~Y = YA rows k <= N-1", rows, 1e-9 * opt.tol_scale));
    res.checks.push_back(
        detail::bound("i Psi' - J~ Psi, t in {0.1,1,10}, / (1+||A||)", dyn, 1e-9 * opt.tol_scale));
    res.checks.push_back(detail::timing("runtime [s]", watch.seconds(), 5.0));
    return res;
}

namespace detail {

// Fraction of seeded g whose fit on both half-lines meets the tolerances.
inline int growth_fit_passes(const ParameterTriple& t, const GrowthExponents& ex, std::uint64_t seed,
                             double tau_tol, double r_tol, double& worst_tau, double& worst_r) {
    const auto st = evolve_closed_form(t, Grid::uniform(5.0, 1e-3));
    Rng rng(seed);
    int passes = 0;
    for (int s = 0; s < 5; ++s) {
        const CVector g = rng.vector(t.n());
        bool ok = true;
        for (const int sign : {1, -1}) {
            const double tau = sign > 0 ? ex.tau_plus : ex.tau_minus;
            const int r = sign > 0 ? ex.r_plus : ex.r_minus;
            const auto ts = fit_window(tau, sign);
            const auto fit = empirical_growth_fit(growth_samples(st, g, ts));
            worst_tau = std::max(worst_tau, std::abs(fit.tau_hat - tau));
            worst_r = std::max(worst_r, std::abs(fit.r_hat - r));
            ok = ok && std::abs(fit.tau_hat - tau) <= tau_tol && std::abs(fit.r_hat - r) <= r_tol;
        }
        if (ok) ++passes;
    }
    return passes;
}

}  // namespace detail

inline CriterionResult criterion_asymptotics(const VerifyOptions& opt) {
    CriterionResult res{9, "long-time growth exponents", {}};
    const Complex i(0.0, 1.0);

    const auto diag = growth_exponents(declared_spectrum({{i, 1}, {-i, 1}}));
    res.checks.push_back(detail::holds("diag(i, -i): tau=(1,-1), r=(0,0)",
                                       diag.tau_plus == 1.0 && diag.tau_minus == -1.0 && diag.r_plus == 0 &&
                                           diag.r_minus == 0));
    const auto nil = growth_exponents(declared_spectrum({{0.0, 3}}));
    res.checks.push_back(detail::holds("Jordan block lambda=0, n=3: tau=0, r=2",
                                       nil.tau_plus == 0.0 && nil.tau_minus == 0.0 && nil.r_plus == 2 &&
                                           nil.r_minus == 2));
    Rng rng(opt.seed + 9);
    const HermitianMatrix herm = rng.hermitian(3);
    const auto hs = growth_exponents(computed_spectrum(herm.matrix()));
    res.checks.push_back(detail::holds("Hermitian A: tau=0", hs.tau_plus == 0.0 && hs.tau_minus == 0.0));

    const double tau_tol = 1e-2 * opt.tol_scale;
    const double r_tol = 0.1 * opt.tol_scale;
    {
        CMatrix a(1, 1);
        a(0, 0) = i;
        CMatrix pi0(1, 2);
        pi0 << i, 1.0;
        const auto t = ParameterTriple::continuous(a, HermitianMatrix::identity(1), pi0);
        double wt = 0.0, wr = 0.0;
        const int passes = detail::growth_fit_passes(t, growth_exponents(computed_spectrum(a)), opt.seed + 91,
                                                     tau_tol, r_tol, wt, wr);
        Check c = detail::bound("A = i: seeds with |tau^-1| <= 1e-2, |r^-0| <= 0.1 (need >= 4/5)",
                                5.0 - passes, 1.0);
        c.note = "worst |dtau| = " + std::to_string(wt) + ", worst |dr| = " + std::to_string(wr);
        res.checks.push_back(c);
    }
    {
        CMatrix a(2, 2);
        a << 0.5, 1.0, 0.0, 0.5;
        CMatrix s0(2, 2);
        s0 << 2.0, 0.0, 0.0, 1.0;
        CMatrix pi0(2, 2);
        pi0 << 1.0, 0.0, 1.0, 1.0;
        const auto t = ParameterTriple::continuous(a, HermitianMatrix(s0), pi0);
        const auto spec = declared_spectrum({{0.5, 2}}, CMatrix::Identity(2, 2));
        double wt = 0.0, wr = 0.0;
        const int passes =
            detail::growth_fit_passes(t, growth_exponents(spec), opt.seed + 92, tau_tol, r_tol, wt, wr);
        Check c = detail::bound("real Jordan block n=2: seeds with |tau^-0| <= 1e-2, |r^-1| <= 0.1 (need >= 4/5)",
                                5.0 - passes, 1.0);
        c.note = "worst |dtau| = " + std::to_string(wt) + ", worst |dr| = " + std::to_string(wr);
        res.checks.push_back(c);
    }
    return res;
}

inline CriterionResult criterion_degenerate(const VerifyOptions& opt) {
    CriterionResult res{10, "degenerate transform (Pi0 = 0)", {}};
    Rng rng(opt.seed + 10);
    bool u_same = true, psi_zero = true, w_identity = true;
    for (int s = 0; s < 6; ++s) {
        const Eigen::Index n = detail::seeded_n(s);
        const Eigen::Index h = detail::seeded_h(s);
        const HermitianMatrix a = rng.hermitian(n);
        const auto t = ParameterTriple::continuous(a.matrix(), HermitianMatrix::identity(n), CMatrix::Zero(n, 2 * h));
        const Grid grid = Grid::uniform(2.0, 1e-2);
        const auto u_const = PotentialSpec::constant(rng.hermitian(h), 2.0);
        for (const auto& st : {evolve_closed_form(t, grid), evolve_ode(t, u_const, grid)}) {
            const auto ut = transformed_potential(st);
            const DynamicalSolution dyn(st);
            for (std::size_t k = 0; k < grid.size(); ++k) {
                u_same = u_same && (ut[k].matrix().array() == st.u.at(grid[k]).array()).all();
                psi_zero = psi_zero && (dyn.psi(k, 1.0).array() == Complex(0.0)).all();
            }
            const CMatrix w = darboux_matrix(st, Complex(7.0, 1.0), 1.0);
            w_identity = w_identity && (w.array() == CMatrix::Identity(2 * h, 2 * h).array()).all();
        }
    }
    bool jacobi_same = true, big_psi_zero = true;
    for (int s = 0; s < 6; ++s) {
        const Eigen::Index n = detail::seeded_n(s);
        const Eigen::Index h = detail::seeded_h(s);
        const DiscreteTriple t{rng.hermitian(n).matrix(), HermitianMatrix::identity(n), CMatrix::Zero(n, 2 * h), h};
        const auto data = random_jacobi(rng, h, 20);
        const auto tr = run_recursion(t, data);
        const auto tj = transform_jacobi(tr, data);
        const auto j = build_initial_jacobi(data);
        for (std::size_t k = 1; k <= data.N(); ++k) {
            jacobi_same = jacobi_same && (tj.c_tilde(k).matrix().array() == data.c(k).matrix().array()).all() &&
                          (tj.q_tilde(k).array() == data.q(k).array()).all() &&
                          (tj.J.a(k).array() == j.a(k).array()).all() && (tj.J.b(k).array() == j.b(k).array()).all();
        }
        const auto sol = discrete_solution(eigen_blocks(tr, tj), tj, t.A, {0.1, 1.0, 10.0});
        for (const auto& psi : sol.Psi) {
            for (const auto& block : psi) big_psi_zero = big_psi_zero && (block.array() == Complex(0.0)).all();
        }
    }
    res.checks.push_back(detail::holds("u~ == u bit-exact (continuous, u = 0 and const)", u_same));
    res.checks.push_back(detail::holds("psi == 0 bit-exact", psi_zero));
    res.checks.push_back(detail::holds("w_A == I bit-exact", w_identity));
    res.checks.push_back(detail::holds("C~ == C, Q~ == Q, J~ == J bit-exact (discrete)", jacobi_same));
    res.checks.push_back(detail::holds("Psi == 0 bit-exact", big_psi_zero));
    return res;
}

using CriterionFn = std::function<CriterionResult(const VerifyOptions&)>;

inline std::vector<CriterionFn> verify_criteria() {
    return {criterion_identity,           criterion_closed_form,       criterion_dynamical,
            criterion_soliton,            criterion_l2,                criterion_intertwining,
            criterion_discrete_identities, criterion_discrete_solutions, criterion_asymptotics,
            criterion_degenerate};
}

inline std::vector<CriterionResult> run_verify_suite(const VerifyOptions& opt = {}) {
    std::vector<CriterionResult> out;
    for (const auto& fn : verify_criteria()) out.push_back(fn(opt));
    return out;
}

}  // namespace gbdt
