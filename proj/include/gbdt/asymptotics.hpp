#pragma once

// Long-time growth of ‖ψ(·, t) g‖ from the Jordan structure of A.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "gbdt/continuous.hpp"
#include "gbdt/errors.hpp"
#include "gbdt/linalg.hpp"

namespace gbdt {

struct JordanBlock {
    Complex lambda;
    Eigen::Index size = 1;
};

struct JordanSpectrum {
    enum class Source { user_declared, computed };

    std::vector<JordanBlock> blocks;
    /// A = U J U⁻¹ when present.
    std::optional<CMatrix> U;
    Source source = Source::user_declared;

    Eigen::Index n() const {
        Eigen::Index total = 0;
        for (const auto& b : blocks) total += b.size;
        return total;
    }

    /// J = diag(λ_i I + K_i).
    CMatrix jordan_matrix() const {
        const Eigen::Index dim = n();
        CMatrix j = CMatrix::Zero(dim, dim);
        Eigen::Index offset = 0;
        for (const auto& b : blocks) {
            for (Eigen::Index i = 0; i < b.size; ++i) {
                j(offset + i, offset + i) = b.lambda;
                if (i + 1 < b.size) j(offset + i, offset + i + 1) = 1.0;
            }
            offset += b.size;
        }
        return j;
    }
};

inline JordanSpectrum declared_spectrum(std::vector<JordanBlock> blocks, std::optional<CMatrix> u = std::nullopt) {
    for (const auto& b : blocks) {
        if (b.size < 1) throw DomainError("jordan: block size must be at least 1");
    }
    JordanSpectrum spec{std::move(blocks), std::move(u), JordanSpectrum::Source::user_declared};
    if (spec.U && (spec.U->rows() != spec.n() || spec.U->cols() != spec.n())) {
        throw DimensionError("jordan: U is " + std::to_string(spec.U->rows()) + "x" +
                             std::to_string(spec.U->cols()) + " but the blocks sum to " + std::to_string(spec.n()));
    }
    return spec;
}

/// ‖A − U J U⁻¹‖_F / (1 + ‖A‖_F).
inline double jordan_residual(const JordanSpectrum& spec, const CMatrix& a) {
    if (!spec.U) throw DomainError("jordan: no similarity matrix to check against A");
    if (a.rows() != spec.n()) throw DimensionError("jordan: A does not match the declared block sizes");
    const CMatrix& u = *spec.U;
    const CMatrix rebuilt = u * spec.jordan_matrix() * u.partialPivLu().inverse();
    return (a - rebuilt).norm() / (1.0 + a.norm());
}

/// Eigen-decomposition of a diagonalizable A. Eigenvalues closer than
/// `cluster_tol`·(1+|λ|) are snapped to a common value so ties in Im λ are exact.
inline JordanSpectrum computed_spectrum(const CMatrix& a, double cluster_tol = 1e-8, double cond_limit = 1e10) {
    require_square(a, "A");
    JordanSpectrum spec;
    spec.source = JordanSpectrum::Source::computed;
    if (relative_asymmetry(a) <= kHermitianTol) {
        // Real eigenvalues exactly, so τ± = 0 without rounding noise.
        Eigen::SelfAdjointEigenSolver<CMatrix> hs(0.5 * (a + a.adjoint()));
        for (Eigen::Index i = 0; i < a.rows(); ++i) spec.blocks.push_back({hs.eigenvalues()(i), 1});
        spec.U = hs.eigenvectors();
        return spec;
    }
    Eigen::ComplexEigenSolver<CMatrix> es(a);
    if (es.info() != Eigen::Success) throw DomainError("jordan: eigen-decomposition did not converge");
    std::vector<Complex> values(es.eigenvalues().data(), es.eigenvalues().data() + a.rows());
    for (std::size_t i = 0; i < values.size(); ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            if (std::abs(values[i] - values[k]) <= cluster_tol * (1.0 + std::abs(values[k]))) {
                values[i] = values[k];
                break;
            }
        }
    }
    const CMatrix& v = es.eigenvectors();
    Eigen::JacobiSVD<CMatrix> svd(v);
    const auto& sv = svd.singularValues();
    const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
    if (!(cond <= cond_limit)) {
        throw DomainError("jordan: A looks defective (eigenvector condition " + std::to_string(cond) +
                          "); declare its Jordan blocks and U explicitly");
    }
    for (const auto& lambda : values) spec.blocks.push_back({lambda, 1});
    spec.U = v;
    return spec;
}

struct GrowthExponents {
    double tau_plus = 0.0;
    double tau_minus = 0.0;
    int r_plus = 0;
    int r_minus = 0;
};

/// τ± = max/min Im λ_i, r± = max (n_i − 1) over the blocks attaining τ±.
inline GrowthExponents growth_exponents(const JordanSpectrum& spec) {
    if (spec.blocks.empty()) throw DomainError("growth_exponents: empty spectrum");
    GrowthExponents g;
    g.tau_plus = -INFINITY;
    g.tau_minus = INFINITY;
    for (const auto& b : spec.blocks) {
        g.tau_plus = std::max(g.tau_plus, b.lambda.imag());
        g.tau_minus = std::min(g.tau_minus, b.lambda.imag());
    }
    for (const auto& b : spec.blocks) {
        const int r = static_cast<int>(b.size - 1);
        if (b.lambda.imag() == g.tau_plus) g.r_plus = std::max(g.r_plus, r);
        if (b.lambda.imag() == g.tau_minus) g.r_minus = std::max(g.r_minus, r);
    }
    return g;
}

/// e^{−itA} = U diag(e^{−iλ_i t} Σ_k (−itK_i)^k / k!) U⁻¹.
inline CMatrix exp_profile(const JordanSpectrum& spec, double t) {
    if (!spec.U) throw DomainError("exp_profile: missing U for defective A");
    const Eigen::Index dim = spec.n();
    CMatrix e = CMatrix::Zero(dim, dim);
    Eigen::Index offset = 0;
    for (const auto& b : spec.blocks) {
        const Complex phase = std::exp(Complex(0.0, -t) * b.lambda);
        Complex term = 1.0;
        for (Eigen::Index k = 0; k < b.size; ++k) {
            for (Eigen::Index i = 0; i + k < b.size; ++i) e(offset + i, offset + i + k) = phase * term;
            term *= Complex(0.0, -t) / static_cast<double>(k + 1);
        }
        offset += b.size;
    }
    const CMatrix& u = *spec.U;
    return u * e * u.partialPivLu().inverse();
}

/// The norm is carried as its logarithm so samples with e^{τt} past the
/// double range still fit; log_norm = −∞ marks a zero norm.
struct GrowthSample {
    double t = 0.0;
    double log_norm = -INFINITY;

    double norm() const { return std::exp(log_norm); }
};

/// ‖ψ(·, t) g‖_{L²(0, L)} = ‖G^{1/2} e^{−itA} g‖ with G = ∫_0^L z2* z2 on the state grid.
inline std::vector<GrowthSample> growth_samples(const ContinuousState& st, const CVector& g,
                                                std::span<const double> ts) {
    if (g.size() != st.triple.n()) {
        throw DimensionError("growth_samples: g has " + std::to_string(g.size()) + " entries, expected " +
                             std::to_string(st.triple.n()));
    }
    const CMatrix gram = z2_gram(st).back();
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (gram + gram.adjoint()));
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    // e^{−itA} = e^{σt} e^{−it(A − iσ)}; σ = ±max(±Im λ) keeps the second factor bounded.
    const auto lambda = Eigen::ComplexEigenSolver<CMatrix>(st.triple.A, false).eigenvalues();
    const double up = lambda.imag().maxCoeff();
    const double down = lambda.imag().minCoeff();
    const CMatrix identity = CMatrix::Identity(st.triple.n(), st.triple.n());
    std::vector<GrowthSample> out;
    out.reserve(ts.size());
    for (const double t : ts) {
        const double sigma = t >= 0.0 ? up : down;
        const CVector v = mat_exp(Complex(0.0, -t) * (st.triple.A - Complex(0.0, sigma) * identity)) * g;
        const CVector w = root.asDiagonal() * (es.eigenvectors().adjoint() * v);
        out.push_back({t, sigma * t + std::log(w.stableNorm())});
    }
    return out;
}

/// Log-spaced times: [1e2, 1e4] when τ = 0; otherwise the largest two-decade
/// window with |τ| t ≤ 700. `sign` < 0 gives the mirrored window on t < 0.
inline std::vector<double> fit_window(double tau, int sign, std::size_t count = 40) {
    double hi = 1e4;
    if (tau != 0.0) hi = std::min(hi, 700.0 / std::abs(tau));
    const double lo = hi / 100.0;
    std::vector<double> ts(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double s = static_cast<double>(i) / static_cast<double>(count - 1);
        ts[i] = (sign < 0 ? -1.0 : 1.0) * lo * std::pow(hi / lo, s);
    }
    return ts;
}

struct GrowthFit {
    double tau_hat = 0.0;
    double r_hat = 0.0;
    double c_hat = 0.0;
    /// RMS of the log-residual.
    double residual = 0.0;
};

/// Least squares for log‖·‖ ≈ log C + τ t + r log|t|.
inline GrowthFit empirical_growth_fit(std::span<const GrowthSample> samples) {
    if (samples.size() < 20) {
        throw DomainError("empirical_growth_fit: need at least 20 samples, got " + std::to_string(samples.size()));
    }
    double lo = INFINITY;
    double hi = 0.0;
    const bool positive = samples.front().t > 0.0;
    for (const auto& s : samples) {
        if (!std::isfinite(s.log_norm)) {
            throw DomainError("empirical_growth_fit: nonpositive norm " + std::to_string(s.norm()) +
                              " at t = " + std::to_string(s.t));
        }
        if (s.t == 0.0 || (s.t > 0.0) != positive) {
            throw DomainError("empirical_growth_fit: times must be nonzero and of one sign");
        }
        lo = std::min(lo, std::abs(s.t));
        hi = std::max(hi, std::abs(s.t));
    }
    if (hi < 100.0 * lo) {
        throw DomainError("empirical_growth_fit: t spans " + std::to_string(hi / lo) +
                          "x, need at least two decades");
    }
    const auto m = static_cast<Eigen::Index>(samples.size());
    Eigen::MatrixXd design(m, 3);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        design(i, 0) = 1.0;
        design(i, 1) = s.t;
        design(i, 2) = std::log(std::abs(s.t));
        rhs(i) = s.log_norm;
    }
    // Column scaling keeps the QR well conditioned when t reaches 1e4.
    const Eigen::Vector3d scale = design.colwise().norm().transpose();
    const Eigen::MatrixXd scaled = design * scale.cwiseInverse().asDiagonal();
    const Eigen::Vector3d coef = scaled.colPivHouseholderQr().solve(rhs).cwiseQuotient(scale);
    GrowthFit fit;
    fit.c_hat = std::exp(coef(0));
    fit.tau_hat = coef(1);
    fit.r_hat = coef(2);
    fit.residual = (design * coef - rhs).norm() / std::sqrt(static_cast<double>(m));
    return fit;
}

}  // namespace gbdt
