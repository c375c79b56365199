#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include "gbdt/asymptotics.hpp"
#include "gbdt/random.hpp"

using namespace gbdt;

namespace {

const Complex kUnit(0.0, 1.0);

CMatrix scalar(Complex v) { return CMatrix::Constant(1, 1, v); }

// Fit of ‖ψ(·, t)g‖ on the declared window for one sign of t.
GrowthFit pipeline_fit(const ContinuousState& st, const CVector& g, double tau, int sign) {
    const auto ts = fit_window(tau, sign);
    const auto samples = growth_samples(st, g, ts);
    return empirical_growth_fit(samples);
}

ContinuousState jordan_state() {
    CMatrix a(2, 2);
    a << 0.5, 1.0, 0.0, 0.5;
    CMatrix s0(2, 2);
    s0 << 2.0, 0.0, 0.0, 1.0;
    CMatrix pi0(2, 2);
    pi0 << 1.0, 0.0, 1.0, 1.0;
    return evolve_closed_form(ParameterTriple::continuous(a, HermitianMatrix(s0), pi0), Grid::uniform(5.0, 1e-3));
}

}  // namespace

TEST(GrowthExponentsTest, DiagonalImaginaryPair) {
    const auto g = growth_exponents(declared_spectrum({{kUnit, 1}, {-kUnit, 1}}));
    EXPECT_EQ(g.tau_plus, 1.0);
    EXPECT_EQ(g.tau_minus, -1.0);
    EXPECT_EQ(g.r_plus, 0);
    EXPECT_EQ(g.r_minus, 0);
}

TEST(GrowthExponentsTest, NilpotentBlock) {
    const auto g = growth_exponents(declared_spectrum({{0.0, 3}}));
    EXPECT_EQ(g.tau_plus, 0.0);
    EXPECT_EQ(g.tau_minus, 0.0);
    EXPECT_EQ(g.r_plus, 2);
    EXPECT_EQ(g.r_minus, 2);
}

TEST(GrowthExponentsTest, HermitianComputedSpectrum) {
    Rng rng(1);
    for (int s = 0; s < 5; ++s) {
        const auto g = growth_exponents(computed_spectrum(rng.hermitian(2 + s).matrix()));
        EXPECT_EQ(g.tau_plus, 0.0);
        EXPECT_EQ(g.tau_minus, 0.0);
    }
}

TEST(GrowthExponentsTest, TiesTakeLargestBlock) {
    const auto g = growth_exponents(declared_spectrum({{Complex(1.0, 2.0), 1}, {Complex(-3.0, 2.0), 3},
                                                      {Complex(0.0, -1.0), 2}, {Complex(5.0, -1.0), 1}}));
    EXPECT_EQ(g.tau_plus, 2.0);
    EXPECT_EQ(g.r_plus, 2);
    EXPECT_EQ(g.tau_minus, -1.0);
    EXPECT_EQ(g.r_minus, 1);
}

TEST(GrowthExponentsTest, PermutationAndDominatedBlocks) {
    std::vector<JordanBlock> blocks{{Complex(0.3, 0.7), 2}, {Complex(-1.0, -0.4), 1}, {Complex(2.0, 0.7), 1}};
    const auto base = growth_exponents(declared_spectrum(blocks));
    std::vector<JordanBlock> perm{blocks[2], blocks[0], blocks[1]};
    const auto p = growth_exponents(declared_spectrum(perm));
    EXPECT_EQ(p.tau_plus, base.tau_plus);
    EXPECT_EQ(p.r_plus, base.r_plus);
    EXPECT_EQ(p.tau_minus, base.tau_minus);
    EXPECT_EQ(p.r_minus, base.r_minus);

    auto more = blocks;
    more.push_back({Complex(9.0, 0.1), 5});
    more.push_back({Complex(-2.0, 0.6999), 4});
    const auto m = growth_exponents(declared_spectrum(more));
    EXPECT_EQ(m.tau_plus, base.tau_plus);
    EXPECT_EQ(m.r_plus, base.r_plus);
}

TEST(GrowthExponentsTest, Errors) {
    EXPECT_THROW(growth_exponents(JordanSpectrum{}), DomainError);
    EXPECT_THROW(declared_spectrum({{0.0, 0}}), DomainError);
    EXPECT_THROW(declared_spectrum({{0.0, 2}}, CMatrix::Identity(3, 3)), DimensionError);
}

TEST(JordanSpectrumTest, ResidualOfDeclaredForm) {
    Rng rng(2);
    const CMatrix u = rng.matrix(3, 3) + 3.0 * CMatrix::Identity(3, 3);
    const auto spec = declared_spectrum({{Complex(0.2, 0.5), 2}, {Complex(-1.0, 0.0), 1}}, u);
    const CMatrix a = u * spec.jordan_matrix() * u.inverse();
    EXPECT_LT(jordan_residual(spec, a), 1e-12);
    CMatrix perturbed = a;
    perturbed(0, 0) += 1e-3;
    EXPECT_GT(jordan_residual(spec, perturbed), 1e-5);
}

TEST(JordanSpectrumTest, ComputedSpectrumRejectsDefective) {
    CMatrix a(2, 2);
    a << 1.0, 1.0, 0.0, 1.0;
    EXPECT_THROW(computed_spectrum(a), DomainError);
}

TEST(JordanSpectrumTest, ClusteringMakesTiesExact) {
    const Complex lambda(0.4, 0.5);
    CMatrix d = CMatrix::Zero(3, 3);
    d(0, 0) = lambda;
    d(1, 1) = lambda * (1.0 + 1e-12);
    d(2, 2) = Complex(-1.0, 0.2);
    Rng rng(8);
    // Unitary similarity: a non-normal one makes the near-tie genuinely ill-conditioned.
    const CMatrix u = Eigen::HouseholderQR<CMatrix>(rng.matrix(3, 3)).householderQ();
    const CMatrix a = u * d * u.adjoint();
    const auto spec = computed_spectrum(a);
    std::vector<double> ims;
    for (const auto& b : spec.blocks) ims.push_back(b.lambda.imag());
    std::sort(ims.begin(), ims.end());
    EXPECT_EQ(ims[1], ims[2]);
    EXPECT_EQ(growth_exponents(spec).tau_plus, ims[2]);
    EXPECT_LT(jordan_residual(spec, a), 1e-10);
}

TEST(ExpProfile, TimeZeroIsIdentity) {
    Rng rng(3);
    const auto spec = computed_spectrum(rng.matrix(3, 3));
    EXPECT_LT((exp_profile(spec, 0.0) - CMatrix::Identity(3, 3)).norm(), 1e-12);
}

TEST(ExpProfile, NilpotentBlock) {
    const auto spec = declared_spectrum({{0.0, 2}}, CMatrix::Identity(2, 2));
    for (const double t : {0.5, 3.0, 40.0}) {
        CMatrix expected(2, 2);
        expected << 1.0, Complex(0.0, -t), 0.0, 1.0;
        EXPECT_LT((exp_profile(spec, t) - expected).norm(), 1e-15);
    }
}

TEST(ExpProfile, MatchesDenseExponential) {
    Rng rng(4);
    for (int s = 0; s < 6; ++s) {
        const CMatrix a = rng.matrix(2 + s % 3, 2 + s % 3, 0.3);
        const auto spec = computed_spectrum(a);
        double max_im = 0.0;
        for (const auto& b : spec.blocks) max_im = std::max(max_im, std::abs(b.lambda.imag()));
        for (const double t : {-50.0, -3.0, 0.7, 10.0, 50.0}) {
            const CMatrix dense = mat_exp(Complex(0.0, -t) * a);
            EXPECT_LT((exp_profile(spec, t) - dense).norm(), 1e-9 * std::exp(std::abs(t) * max_im)) << "t " << t;
        }
    }
}

TEST(ExpProfile, DeclaredJordanFormMatchesDense) {
    Rng rng(5);
    const CMatrix u = rng.matrix(4, 4) + 2.0 * CMatrix::Identity(4, 4);
    const auto spec = declared_spectrum({{Complex(0.3, 0.05), 3}, {Complex(-0.5, -0.1), 1}}, u);
    const CMatrix a = u * spec.jordan_matrix() * u.inverse();
    for (const double t : {-20.0, 1.5, 20.0}) {
        const CMatrix dense = mat_exp(Complex(0.0, -t) * a);
        EXPECT_LT((exp_profile(spec, t) - dense).norm(), 1e-9 * (1.0 + dense.norm()));
    }
}

TEST(ExpProfile, MissingSimilarity) {
    EXPECT_THROW(exp_profile(declared_spectrum({{0.0, 2}}), 1.0), DomainError);
}

TEST(FitWindowTest, Ranges) {
    const auto flat = fit_window(0.0, 1);
    ASSERT_EQ(flat.size(), 40u);
    EXPECT_DOUBLE_EQ(flat.front(), 1e2);
    EXPECT_DOUBLE_EQ(flat.back(), 1e4);
    const auto grow = fit_window(1.0, -1);
    EXPECT_DOUBLE_EQ(grow.front(), -7.0);
    EXPECT_DOUBLE_EQ(grow.back(), -700.0);
}

TEST(EmpiricalFit, RecoversSyntheticExponents) {
    for (const auto& [c, tau, r] : std::vector<std::tuple<double, double, double>>{
             {2.0, 0.0, 1.0}, {0.3, 0.5, 0.0}, {5.0, -0.01, 2.0}}) {
        std::vector<GrowthSample> samples;
        for (const double t : fit_window(tau, 1)) samples.push_back({t, std::log(c) + tau * t + r * std::log(t)});
        const auto fit = empirical_growth_fit(samples);
        EXPECT_NEAR(fit.tau_hat, tau, 1e-10);
        EXPECT_NEAR(fit.r_hat, r, 1e-8);
        EXPECT_NEAR(fit.c_hat, c, 1e-7 * c);
        EXPECT_LT(fit.residual, 1e-10);
    }
}

TEST(EmpiricalFit, Errors) {
    std::vector<GrowthSample> few;
    for (int k = 1; k <= 10; ++k) few.push_back({std::pow(10.0, k / 3.0), 0.0});
    EXPECT_THROW(empirical_growth_fit(few), DomainError);

    std::vector<GrowthSample> narrow;
    for (int k = 0; k < 30; ++k) narrow.push_back({10.0 + k, 0.0});
    EXPECT_THROW(empirical_growth_fit(narrow), DomainError);

    std::vector<GrowthSample> mixed;
    for (const double t : fit_window(0.0, 1)) mixed.push_back({t, 0.0});
    mixed[3].t = -mixed[3].t;
    EXPECT_THROW(empirical_growth_fit(mixed), DomainError);
}

TEST(EmpiricalFit, HermitianScalarIsFlat) {
    const auto t = ParameterTriple::continuous(scalar(0.8), HermitianMatrix::identity(1), CMatrix::Constant(1, 2, 1.0));
    const auto st = evolve_closed_form(t, Grid::uniform(5.0, 1e-3));
    CVector g(1);
    g(0) = Complex(0.6, -0.2);
    for (const int sign : {1, -1}) EXPECT_NEAR(pipeline_fit(st, g, 0.0, sign).tau_hat, 0.0, 1e-2);
}

TEST(EmpiricalFit, ImaginaryUnitGrowth) {
    const auto t = ParameterTriple::continuous(scalar(kUnit), HermitianMatrix::identity(1),
                                               (CMatrix(1, 2) << kUnit, 1.0).finished());
    ASSERT_LT(validate_triple(t), 1e-15);
    const auto st = evolve_closed_form(t, Grid::uniform(5.0, 1e-3));
    CVector g(1);
    g(0) = 1.0;
    // t ∈ [10, 10³]: e^{t} leaves the double range past t ≈ 709, the log norms do not.
    std::vector<double> ts;
    for (int k = 0; k < 40; ++k) ts.push_back(10.0 * std::pow(100.0, k / 39.0));
    const auto samples = growth_samples(st, g, ts);
    for (const auto& s : samples) ASSERT_TRUE(std::isfinite(s.log_norm)) << "t = " << s.t;
    EXPECT_TRUE(std::isinf(samples.back().norm()));
    const auto fit = empirical_growth_fit(samples);
    EXPECT_GE(fit.tau_hat, 0.99);
    EXPECT_LE(fit.tau_hat, 1.01);
    // Decay on the negative half-line against τ₋ = 1 as well (single eigenvalue).
    EXPECT_NEAR(pipeline_fit(st, g, 1.0, -1).tau_hat, 1.0, 1e-2);
}

TEST(EmpiricalFit, RealJordanBlockGivesLinearGrowth) {
    const auto st = jordan_state();
    Rng rng(6);
    int passes = 0;
    for (int s = 0; s < 5; ++s) {
        const CVector g = rng.vector(2);
        const auto fit = pipeline_fit(st, g, 0.0, 1);
        if (fit.r_hat >= 0.9 && fit.r_hat <= 1.1 && std::abs(fit.tau_hat) <= 1e-2) ++passes;
    }
    EXPECT_GE(passes, 4);
}

TEST(EmpiricalFit, NormsAgreeWithL2Quadrature) {
    const auto st = jordan_state();
    Rng rng(7);
    const CVector g = rng.vector(2);
    const std::vector<double> ts{0.0, 2.0, 30.0};
    const auto samples = growth_samples(st, g, ts);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        // Direct trapezoid sum of ‖z2(x) e^{−itA} g‖² over the grid.
        const CVector v = mat_exp(Complex(0.0, -ts[i]) * st.triple.A) * g;
        double sum = 0.0;
        for (std::size_t k = 0; k < st.size(); ++k) {
            const CMatrix z2 = solve_hpd(st.S[k], st.Pi[k].rightCols(1)).adjoint();
            const double w = (k == 0 || k + 1 == st.size()) ? 0.5 : 1.0;
            sum += w * (z2 * v).squaredNorm();
        }
        sum *= st.grid[1] - st.grid[0];
        EXPECT_NEAR(samples[i].norm(), std::sqrt(sum), 1e-5 * std::sqrt(sum));
    }
}

TEST(EmpiricalFit, ZeroOrbitReportsNonpositiveNorm) {
    const auto t = ParameterTriple::continuous(scalar(2.0), HermitianMatrix::identity(1), CMatrix::Zero(1, 2));
    const auto st = evolve_closed_form(t, Grid::uniform(2.0, 1e-2));
    CVector g(1);
    g(0) = 1.0;
    const auto samples = growth_samples(st, g, fit_window(1.0, 1));
    for (const auto& s : samples) EXPECT_EQ(s.norm(), 0.0);
    try {
        empirical_growth_fit(samples);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("nonpositive norm"), std::string::npos);
    }
}
