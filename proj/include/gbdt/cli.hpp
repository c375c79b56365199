#pragma once

// Config ingestion, run orchestration and artifact writing for the gbdt tool.
// Needs nlohmann/json on the include path.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gbdt/asymptotics.hpp"
#include "gbdt/continuous.hpp"
#include "gbdt/discrete.hpp"
#include "gbdt/verify.hpp"

namespace gbdt::cli {

using nlohmann::json;

enum ExitCode : int { kPass = 0, kValidation = 2, kCheckFailure = 3, kIo = 4 };

/// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File-system failure (exit code 4).
class IoError : public Error {
public:
    using Error::Error;
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- parsing -------------------------------------------------------------

inline Complex parse_complex(const json& v, const std::string& where) {
    if (v.is_number()) return {v.get<double>(), 0.0};
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
        return {v[0].get<double>(), v[1].get<double>()};
    }
    throw ConfigError(where + ": expected a number or [re, im], got " + v.dump());
}

/// Row-major nested array of complex entries; a bare number is a 1x1 matrix.
inline CMatrix parse_matrix(const json& v, const std::string& where) {
    if (v.is_number()) return CMatrix::Constant(1, 1, v.get<double>());
    if (!v.is_array() || v.empty() || !v[0].is_array()) {
        throw ConfigError(where + ": expected a matrix as an array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(v.size());
    const auto cols = static_cast<Eigen::Index>(v[0].size());
    CMatrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = v[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ConfigError(where + ": row " + std::to_string(r) + " does not have " + std::to_string(cols) +
                              " entries");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = parse_complex(row[static_cast<std::size_t>(c)],
                                    where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
        }
    }
    return m;
}

inline CVector parse_vector(const json& v, const std::string& where) {
    if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a nonempty array");
    CVector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = parse_complex(v[i], where + "[" + std::to_string(i) + "]");
    }
    return out;
}

inline HermitianMatrix parse_hermitian(const json& v, const std::string& where) {
    const CMatrix m = parse_matrix(v, where);
    if (m.rows() != m.cols()) throw ConfigError(where + ": matrix must be square");
    try {
        return HermitianMatrix(m);
    } catch (const SymmetryError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

inline const json& require_key(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw ConfigError(where + ": missing key \"" + key + "\"");
    return obj.at(key);
}

inline double number_or(const json& obj, const std::string& key, double fallback) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    if (!obj.at(key).is_number()) throw ConfigError("\"" + key + "\" must be a number");
    return obj.at(key).get<double>();
}

inline std::vector<double> numbers_or(const json& obj, const std::string& key, std::vector<double> fallback) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_array()) throw ConfigError("\"" + key + "\" must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError("\"" + key + "\" must be an array of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

struct Tolerances {
    double id_tol = 1e-9;
    double pde_tol = 1e-8;
    double quad_tol = 1e-8;
    double fd_tol = 1e-4;
    double intertwining_tol = 1e-5;
    double discrete_id_tol = 1e-10;
    double eig_tol = 1e-9;
    double factorization_tol = 1e-9;
    double jordan_tol = 1e-9;
    double fit_tau_tol = 1e-2;
    double fit_r_tol = 0.1;
    double sech_c_tol = 1e-6;
    double sech_fit_tol = 1e-8;

    json to_json() const {
        return {{"id_tol", id_tol},
                {"pde_tol", pde_tol},
                {"quad_tol", quad_tol},
                {"fd_tol", fd_tol},
                {"intertwining_tol", intertwining_tol},
                {"discrete_id_tol", discrete_id_tol},
                {"eig_tol", eig_tol},
                {"factorization_tol", factorization_tol},
                {"jordan_tol", jordan_tol},
                {"fit_tau_tol", fit_tau_tol},
                {"fit_r_tol", fit_r_tol},
                {"sech_c_tol", sech_c_tol},
                {"sech_fit_tol", sech_fit_tol}};
    }
};

inline Tolerances parse_tolerances(const json& cfg) {
    Tolerances t;
    if (!cfg.contains("tolerances")) return t;
    const json& o = cfg.at("tolerances");
    if (!o.is_object()) throw ConfigError("\"tolerances\" must be an object");
    const json known = t.to_json();
    for (const auto& [key, value] : o.items()) {
        if (!known.contains(key)) throw ConfigError("tolerances: unknown key \"" + key + "\"");
        if (!value.is_number() || !(value.get<double>() > 0.0)) {
            throw ConfigError("tolerances: \"" + key + "\" must be a positive number");
        }
    }
    t.id_tol = number_or(o, "id_tol", t.id_tol);
    t.pde_tol = number_or(o, "pde_tol", t.pde_tol);
    t.quad_tol = number_or(o, "quad_tol", t.quad_tol);
    t.fd_tol = number_or(o, "fd_tol", t.fd_tol);
    t.intertwining_tol = number_or(o, "intertwining_tol", t.intertwining_tol);
    t.discrete_id_tol = number_or(o, "discrete_id_tol", t.discrete_id_tol);
    t.eig_tol = number_or(o, "eig_tol", t.eig_tol);
    t.factorization_tol = number_or(o, "factorization_tol", t.factorization_tol);
    t.jordan_tol = number_or(o, "jordan_tol", t.jordan_tol);
    t.fit_tau_tol = number_or(o, "fit_tau_tol", t.fit_tau_tol);
    t.fit_r_tol = number_or(o, "fit_r_tol", t.fit_r_tol);
    t.sech_c_tol = number_or(o, "sech_c_tol", t.sech_c_tol);
    t.sech_fit_tol = number_or(o, "sech_fit_tol", t.sech_fit_tol);
    return t;
}

struct TripleInput {
    CMatrix A;
    HermitianMatrix S0;
    CMatrix Pi0;
};

inline TripleInput parse_triple(const json& cfg) {
    const json& t = require_key(cfg, "triple", "config");
    TripleInput in{parse_matrix(require_key(t, "A", "triple"), "triple.A"),
                   parse_hermitian(require_key(t, "S0", "triple"), "triple.S0"),
                   parse_matrix(require_key(t, "Pi0", "triple"), "triple.Pi0")};
    const Eigen::Index n = in.A.rows();
    if (in.A.cols() != n || in.S0.dim() != n || in.Pi0.rows() != n || in.Pi0.cols() % 2 != 0) {
        throw ConfigError("triple: need A and S0 n x n and Pi0 n x 2h (got A " + std::to_string(in.A.rows()) + "x" +
                          std::to_string(in.A.cols()) + ", S0 " + std::to_string(in.S0.dim()) + ", Pi0 " +
                          std::to_string(in.Pi0.rows()) + "x" + std::to_string(in.Pi0.cols()) + ")");
    }
    const auto pd = is_posdef(in.S0);
    if (!pd.positive_definite) {
        throw ConfigError("triple: S0 is not positive definite (smallest eigenvalue " +
                          format_double(pd.min_eigenvalue) + ")");
    }
    return in;
}

inline PotentialSpec parse_potential(const json& cfg, Eigen::Index h, double length) {
    if (!cfg.contains("potential")) return PotentialSpec::zero(h);
    const json& p = cfg.at("potential");
    const std::string kind = require_key(p, "kind", "potential").get<std::string>();
    if (kind == "zero") return PotentialSpec::zero(h);
    if (kind == "constant") {
        const HermitianMatrix v = parse_hermitian(require_key(p, "value", "potential"), "potential.value");
        if (v.dim() != h) throw ConfigError("potential.value must be h x h with h = " + std::to_string(h));
        return PotentialSpec::constant(v, length);
    }
    if (kind == "tabulated") {
        const auto xs = numbers_or(p, "x", {});
        const json& vals = require_key(p, "values", "potential");
        if (!vals.is_array() || vals.size() != xs.size()) {
            throw ConfigError("potential: \"values\" must have one matrix per entry of \"x\"");
        }
        std::vector<HermitianMatrix> values;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            values.push_back(parse_hermitian(vals[i], "potential.values[" + std::to_string(i) + "]"));
            if (values.back().dim() != h) throw ConfigError("potential values must be h x h");
        }
        try {
            return PotentialSpec::tabulated(Grid(xs), std::move(values));
        } catch (const Error& e) {
            throw ConfigError(std::string("potential: ") + e.what());
        }
    }
    throw ConfigError("potential.kind must be zero, constant or tabulated (got \"" + kind + "\")");
}

inline JacobiData parse_jacobi(const json& cfg, Eigen::Index h) {
    const json& j = require_key(cfg, "jacobi", "config");
    const json& n_json = require_key(j, "N", "jacobi");
    if (!n_json.is_number_integer() || n_json.get<long long>() < 2) {
        throw ConfigError("jacobi.N must be an integer >= 2");
    }
    const auto n = static_cast<std::size_t>(n_json.get<long long>());
    JacobiData d;
    if (j.contains("C")) {
        const json& cs = j.at("C");
        if (!cs.is_array() || cs.size() != n + 1) throw ConfigError("jacobi.C must list N+1 blocks");
        for (std::size_t k = 0; k <= n; ++k) d.C.push_back(parse_hermitian(cs[k], "jacobi.C[" + std::to_string(k) + "]"));
    } else {
        d.C.assign(n + 1, parse_hermitian(require_key(j, "C_constant", "jacobi"), "jacobi.C_constant"));
    }
    if (j.contains("Q")) {
        const json& qs = j.at("Q");
        if (!qs.is_array() || qs.size() != n + 1) throw ConfigError("jacobi.Q must list N+1 blocks");
        for (std::size_t k = 0; k <= n; ++k) d.Q.push_back(parse_matrix(qs[k], "jacobi.Q[" + std::to_string(k) + "]"));
    } else if (j.contains("Q_constant")) {
        d.Q.assign(n + 1, parse_matrix(j.at("Q_constant"), "jacobi.Q_constant"));
    } else {
        d.Q.assign(n + 1, CMatrix::Zero(h, h));
    }
    for (std::size_t k = 0; k <= n; ++k) {
        if (d.C[k].dim() != h || d.Q[k].rows() != h || d.Q[k].cols() != h) {
            throw ConfigError("jacobi: blocks must be h x h with h = " + std::to_string(h));
        }
    }
    return d;
}

inline JordanSpectrum parse_jordan(const json& cfg, const CMatrix& a) {
    if (!cfg.contains("jordan")) {
        try {
            return computed_spectrum(a);
        } catch (const DomainError& e) {
            throw ConfigError(std::string("asymptotics: ") + e.what());
        }
    }
    const json& j = cfg.at("jordan");
    const json& blocks = require_key(j, "blocks", "jordan");
    if (!blocks.is_array() || blocks.empty()) throw ConfigError("jordan.blocks must be a nonempty array");
    std::vector<JordanBlock> parsed;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string where = "jordan.blocks[" + std::to_string(i) + "]";
        const json& size = require_key(blocks[i], "size", where);
        if (!size.is_number_integer() || size.get<long long>() < 1) throw ConfigError(where + ".size must be >= 1");
        parsed.push_back({parse_complex(require_key(blocks[i], "lambda", where), where + ".lambda"),
                          static_cast<Eigen::Index>(size.get<long long>())});
    }
    std::optional<CMatrix> u;
    if (j.contains("U")) u = parse_matrix(j.at("U"), "jordan.U");
    try {
        auto spec = declared_spectrum(std::move(parsed), std::move(u));
        if (spec.n() != a.rows()) {
            throw ConfigError("jordan: block sizes sum to " + std::to_string(spec.n()) + " but n = " +
                              std::to_string(a.rows()));
        }
        return spec;
    } catch (const DimensionError& e) {
        throw ConfigError(e.what());
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
}

// ---- reports and files ---------------------------------------------------

struct RunReport {
    std::string mode;
    json config;
    std::vector<Check> checks;
    std::vector<std::string> files;
    double seconds = 0.0;

    bool pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }
};

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw IoError("cannot open " + path.string() + " for writing");
        for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_double(values[i]);
        out_ << '\n';
        if (!out_) throw IoError("write failed");
    }

private:
    std::ofstream out_;
};

/// Header labels prefix_re_i_j, then prefix_im_i_j, row-major.
inline void complex_labels(std::vector<std::string>& header, const std::string& prefix, Eigen::Index rows,
                           Eigen::Index cols) {
    for (const char* part : {"re", "im"}) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                header.push_back(prefix + "_" + part + "_" + std::to_string(r) + "_" + std::to_string(c));
            }
        }
    }
}

inline void complex_values(std::vector<double>& row, const CMatrix& m) {
    for (int part = 0; part < 2; ++part) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(part == 0 ? m(r, c).real() : m(r, c).imag());
        }
    }
}

inline json check_json(const Check& c) {
    json j = {{"name", c.name}, {"tolerance", c.tolerance}, {"pass", c.pass}};
    // Timing values differ between runs; keep files byte-identical.
    if (!c.timing) j["value"] = std::isfinite(c.value) ? json(c.value) : json(nullptr);
    if (!c.note.empty()) j["note"] = c.note;
    return j;
}

inline std::string report_text(const RunReport& r) {
    std::ostringstream os;
    os << "gbdt report\n";
    os << "mode: " << r.mode << "\n";
    os << "config: " << r.config.dump() << "\n\n";
    char line[512];
    std::snprintf(line, sizeof line, "%-72s %-24s %-24s %s\n", "check", "value", "tolerance", "status");
    os << line;
    for (const auto& c : r.checks) {
        const std::string value = c.timing ? "(stdout)" : format_double(c.value);
        std::snprintf(line, sizeof line, "%-72s %-24s %-24.3g %s\n", c.name.c_str(), value.c_str(), c.tolerance,
                      c.pass ? "PASS" : "FAIL");
        os << line;
        if (!c.note.empty()) os << "    note: " << c.note << "\n";
    }
    os << "\noverall: " << (r.pass() ? "PASS" : "FAIL") << "\n";
    return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

inline void write_report(const RunReport& r, const std::filesystem::path& dir) {
    json j = {{"mode", r.mode}, {"config", r.config}, {"pass", r.pass()}, {"files", r.files}};
    j["checks"] = json::array();
    for (const auto& c : r.checks) j["checks"].push_back(check_json(c));
    write_text(dir / "report.json", j.dump(2) + "\n");
    write_text(dir / "report.txt", report_text(r));
}

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
}

struct RunOptions {
    std::filesystem::path out_dir = "gbdt_out";
    std::optional<std::uint64_t> seed;
    double tol_scale = 1.0;
};

namespace detail {

inline Check scaled(Check c, double scale) {
    if (!c.timing) {
        c.tolerance *= scale;
        c.pass = c.value <= c.tolerance;
    }
    return c;
}

inline std::vector<double> default_times(const json& cfg) {
    const json grid = cfg.value("grid", json::object());
    return numbers_or(grid, "t", {0.0, 1.0});
}

}  // namespace detail

// ---- modes ---------------------------------------------------------------

inline RunReport run_continuous(const json& cfg, const RunOptions& opt, const Tolerances& tol) {
    const TripleInput in = parse_triple(cfg);
    const auto triple = ParameterTriple::continuous(in.A, in.S0, in.Pi0);
    const Eigen::Index h = triple.h();
    const json grid_cfg = cfg.value("grid", json::object());
    const double length = number_or(grid_cfg, "L", 5.0);
    const double step = number_or(grid_cfg, "x_step", 1e-3);
    const auto times = detail::default_times(cfg);
    Grid grid;
    try {
        grid = Grid::uniform(length, step);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
    const PotentialSpec u = parse_potential(cfg, h, length);
    const bool zero_u = u.kind() == PotentialSpec::Kind::zero;
    const std::string solver = cfg.value("solver", zero_u ? std::string("closed_form") : std::string("ode"));
    if (solver != "closed_form" && solver != "ode") throw ConfigError("solver must be closed_form or ode");
    if (solver == "closed_form" && !zero_u) throw ConfigError("solver closed_form needs potential kind zero");
    const double ode_step = number_or(cfg, "ode_step", 1e-3);
    const auto output = cfg.value("output", json::object());
    const auto stride = static_cast<std::size_t>(number_or(output, "stride", 10));
    if (stride < 1) throw ConfigError("output.stride must be >= 1");

    const double identity_res = validate_triple(triple);
    const double identity_tol = triple_threshold(triple, tol.id_tol);
    if (identity_res > identity_tol) {
        throw PreconditionError("triple identity violated: ‖A S0 − S0 A* − Π0 j Π0*‖ = " + format_double(identity_res), identity_res);
    }

    ContinuousTolerances ct;
    ct.id_tol = tol.id_tol;
    ct.pde_tol = tol.pde_tol;
    ct.quad_tol = tol.quad_tol;
    EvolveOptions eo{ode_step, ct};
    // Drift is reported as a check rather than raised.
    eo.tol.id_tol = INFINITY;
    const ContinuousState st = solver == "closed_form" ? evolve_closed_form(triple, grid, ct)
                                                       : evolve_ode(triple, u, grid, eo);

    RunReport rep;
    rep.mode = "continuous";
    auto add = [&](Check c) { rep.checks.push_back(detail::scaled(std::move(c), opt.tol_scale)); };
    add(gbdt::detail::bound("triple identity A S0 - S0 A* = Pi0 j Pi0* [abs]", identity_res, identity_tol));
    add(gbdt::detail::bound("identity drift along x [rel]", identity_drift(st), tol.id_tol));
    if (zero_u) {
        const ContinuousState other = solver == "closed_form" ? evolve_ode(triple, u, grid, eo)
                                                              : evolve_closed_form(triple, grid, ct);
        double gap = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            gap = std::max({gap, gbdt::detail::relative_gap(st.Pi[k], other.Pi[k]),
                            gbdt::detail::relative_gap(st.S[k].matrix(), other.S[k].matrix())});
        }
        add(gbdt::detail::bound("closed form vs ODE [rel]", gap, tol.pde_tol));
    }

    // ũ before symmetrization, to report its Hermitian defect.
    std::vector<CMatrix> u_tilde;
    double asym = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto q = point_quantities(st, st.sample(k));
        asym = std::max(asym, relative_asymmetry(q.u_tilde));
        u_tilde.push_back(0.5 * (q.u_tilde + q.u_tilde.adjoint()));
    }
    add(gbdt::detail::bound("u~ Hermitian defect [rel]", asym, kHermitianTol));

    const DynamicalSolution dyn(st);
    add(gbdt::detail::bound("-z2'' + u~ z2 - z2 A, analytic chain", dyn.max_chain_residual(), tol.pde_tol));
    double fd = 0.0;
    double x22_fd = 0.0;
    const double delta = 1e-3;
    for (const double frac : {0.25, 0.5, 0.75}) {
        const double x = std::clamp(frac * length, 2.0 * delta, length - 2.0 * delta);
        x22_fd = std::max(x22_fd, x22_fd_residual(st, x, delta));
        for (const double t : times) fd = std::max(fd, schrodinger_fd_residual(st, x, t, delta));
    }
    add(gbdt::detail::bound("i psi_t = -psi_xx + u~ psi, central difference (dx = 1e-3)", fd, tol.fd_tol));
    add(gbdt::detail::bound("X22' = -X12 - X21 - X22^2, central difference", x22_fd, tol.fd_tol));

    for (const double ell : numbers_or(cfg, "ell", {length})) {
        try {
            const auto id = l2_identity(st, ell);
            add(gbdt::detail::bound("L2 identity for z2 at l = " + format_double(ell), id.residual, tol.quad_tol));
            add(gbdt::detail::holds("S(0)^-1 - S(l)^-1 < S(0)^-1 at l = " + format_double(ell),
                                    id.strictly_below));
        } catch (const DomainError& e) {
            throw ConfigError(std::string("ell: ") + e.what());
        }
    }

    std::vector<Complex> lambdas;
    if (cfg.contains("lambda")) {
        for (std::size_t i = 0; i < cfg.at("lambda").size(); ++i) {
            lambdas.push_back(parse_complex(cfg.at("lambda")[i], "lambda[" + std::to_string(i) + "]"));
        }
    } else {
        Eigen::ComplexEigenSolver<CMatrix> es(triple.A, false);
        double radius = 0.0;
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) radius = std::max(radius, std::abs(es.eigenvalues()(i)));
        lambdas.push_back(Complex(radius + 2.0, 1.0));
    }
    for (const auto& lambda : lambdas) {
        const std::string tag = "(" + format_double(lambda.real()) + ", " + format_double(lambda.imag()) + ")";
        add(gbdt::detail::bound("Darboux intertwining at x = L/2, lambda = " + tag,
                                intertwining_residual(st, lambda, 0.5 * length, 1e-4, ct), tol.intertwining_tol));
        add(gbdt::detail::bound("w_A j w_A(conj lambda)* = j at x = L/2, lambda = " + tag,
                                darboux_j_residual(st, lambda, 0.5 * length, ct), tol.id_tol));
    }

    if (cfg.contains("soliton_fit")) {
        const double kappa = require_key(cfg.at("soliton_fit"), "kappa", "soliton_fit").get<double>();
        if (h != 1) throw ConfigError("soliton_fit needs h = 1");
        std::vector<double> values;
        for (const auto& m : u_tilde) values.push_back(m(0, 0).real() - st.u.at(0.0)(0, 0).real());
        const auto fit = fit_sech2(grid.samples(), values, kappa);
        add(gbdt::detail::bound("sech^2 fit |c + 2 kappa^2|", std::abs(fit.c + 2.0 * kappa * kappa), tol.sech_c_tol,
                                "c = " + format_double(fit.c) + ", phi = " + format_double(fit.phi)));
        add(gbdt::detail::bound("sech^2 fit pointwise error", fit.max_error, tol.sech_fit_tol));
    }

    ensure_dir(opt.out_dir);
    {
        std::vector<std::string> header{"x"};
        complex_labels(header, "u", h, h);
        complex_labels(header, "u_tilde", h, h);
        CsvWriter csv(opt.out_dir / "potential.csv", header);
        for (std::size_t k = 0; k < grid.size(); k += stride) {
            std::vector<double> row{grid[k]};
            complex_values(row, st.u.at(grid[k]));
            complex_values(row, u_tilde[k]);
            csv.row(row);
        }
        rep.files.push_back("potential.csv");
    }
    {
        std::vector<std::string> header{"x", "t"};
        for (Eigen::Index r = 0; r < h; ++r) {
            for (Eigen::Index c = 0; c < triple.n(); ++c) {
                header.push_back("psi_abs_" + std::to_string(r) + "_" + std::to_string(c));
            }
        }
        complex_labels(header, "psi", h, triple.n());
        CsvWriter csv(opt.out_dir / "psi.csv", header);
        for (const double t : times) {
            const CMatrix e = dyn.propagator(t);
            for (std::size_t k = 0; k < grid.size(); k += stride) {
                const CMatrix psi = dyn.z2(k) * e;
                std::vector<double> row{grid[k], t};
                for (Eigen::Index r = 0; r < psi.rows(); ++r) {
                    for (Eigen::Index c = 0; c < psi.cols(); ++c) row.push_back(std::abs(psi(r, c)));
                }
                complex_values(row, psi);
                csv.row(row);
            }
        }
        rep.files.push_back("psi.csv");
    }
    json resolved = cfg;
    resolved["grid"] = {{"L", length}, {"x_step", step}, {"t", times}};
    resolved["solver"] = solver;
    resolved["output"] = {{"stride", stride}};
    rep.config = resolved;
    return rep;
}

inline RunReport run_discrete(const json& cfg, const RunOptions& opt, const Tolerances& tol) {
    const TripleInput in = parse_triple(cfg);
    const Eigen::Index h = in.Pi0.cols() / 2;
    const DiscreteTriple triple{in.A, in.S0, in.Pi0, h};
    const JacobiData data = parse_jacobi(cfg, h);
    const auto times = detail::default_times(cfg);
    const bool eigen = cfg.value("eigen_blocks", true);

    DiscreteTolerances dt;
    dt.id_tol = tol.discrete_id_tol;
    dt.eig_tol = tol.eig_tol;
    const double identity_res = validate_discrete_triple(triple);
    const double identity_tol = dt.id_tol * (1.0 + in.A.norm() * in.S0.matrix().norm());
    if (identity_res > identity_tol) {
        throw PreconditionError("triple identity violated: ‖A S0 − S0 A* − i Π0 j Π0*‖ = " + format_double(identity_res), identity_res);
    }
    validate_jacobi(data, dt.id_tol);
    if (eigen) {
        const double defect = j0_defect(in.Pi0, h);
        if (defect > dt.j0_tol * in.Pi0.norm()) {
            throw PreconditionError("first h columns of Pi0 must vanish: ‖[I 0]Π₀*‖ = " + format_double(defect) +
                                        " (set \"eigen_blocks\": false to run without eigen-blocks)",
                                    defect);
        }
    }

    const auto tr = run_recursion(triple, data, dt);
    const auto tj = transform_jacobi(tr, data);
    const auto xr = xi_tilde_checks(tr, data, tj, dt);

    RunReport rep;
    rep.mode = "discrete";
    auto add = [&](Check c) { rep.checks.push_back(detail::scaled(std::move(c), opt.tol_scale)); };
    double comm_in = 0.0;
    for (std::size_t k = 1; k <= data.C.size(); ++k) comm_in = std::max(comm_in, commutation_residual(data.c(k), data.q(k)));
    double adjoint_form = 0.0;
    for (const double v : tr.adjoint_form_residual) adjoint_form = std::max(adjoint_form, v);
    add(gbdt::detail::bound("triple identity A S0 - S0 A* = i Pi0 j Pi0* [abs]", identity_res, identity_tol));
    add(gbdt::detail::bound("Jacobi data C Q* = Q C [rel]", comm_in, dt.id_tol));
    add(gbdt::detail::bound("A S_k - S_k A* = i Pi_k j Pi_k* at every k [rel]", tr.max_identity_residual(), dt.id_tol));
    add(gbdt::detail::bound("adjoint form of the Pi recursion [rel]", adjoint_form, dt.id_tol));
    add(gbdt::detail::bound("C~ Q~* = Q~ C~ [rel]", tj.commutation, dt.id_tol));
    add(gbdt::detail::bound("b~ Hermitian defect", tj.b_hermitian_defect, dt.id_tol));
    add(gbdt::detail::bound("C~(k) >= C(k): max(0, -min eigen gain)", std::max(0.0, -tj.min_eigen_gain), dt.id_tol));
    add(gbdt::detail::bound("xi~ j-unitarity", xr.j_unitarity, dt.id_tol));
    add(gbdt::detail::bound("lower-left block of xi~ = C~(k)^-1", xr.c_breve, dt.id_tol));
    if (xr.factorization) {
        add(gbdt::detail::bound("factorization xi~ w(k-1) = w(k) xi", *xr.factorization, tol.factorization_tol));
    } else {
        add(gbdt::detail::holds("factorization xi~ w(k-1) = w(k) xi", true, xr.factorization_note));
    }
    add(gbdt::detail::bound("forward identity for Pi_k* S_k^-1", xr.forward, dt.id_tol));
    add(gbdt::detail::bound("xi~ = xi - jX(k)(I-P) + jPX(k-1)", xr.perturbation_form, dt.id_tol));

    ensure_dir(opt.out_dir);
    {
        std::vector<std::string> header{"k"};
        complex_labels(header, "C_tilde", h, h);
        complex_labels(header, "Q_tilde", h, h);
        complex_labels(header, "a_tilde", h, h);
        complex_labels(header, "b_tilde", h, h);
        CsvWriter csv(opt.out_dir / "jacobi_tilde.csv", header);
        for (std::size_t k = 1; k <= tr.N(); ++k) {
            std::vector<double> row{static_cast<double>(k)};
            complex_values(row, tj.c_tilde(k).matrix());
            complex_values(row, tj.q_tilde(k));
            complex_values(row, tj.J.a(k));
            complex_values(row, tj.J.b(k));
            csv.row(row);
        }
        rep.files.push_back("jacobi_tilde.csv");
    }
    if (eigen) {
        const auto eb = eigen_blocks(tr, tj, dt);
        add(gbdt::detail::bound("J~Y = YA rows k <= N-1", eb.max_row_residual(), dt.eig_tol,
                                "row N with y_{N+1} dropped: " + format_double(eb.last_row_truncated)));
        const auto sol = discrete_solution(eb, tj, in.A, times);
        for (std::size_t i = 0; i < times.size(); ++i) {
            add(gbdt::detail::bound("i Psi' = J~ Psi at t = " + format_double(times[i]) + ", / (1+||A||)",
                                    sol.residual[i] / (1.0 + in.A.norm()), tol.eig_tol));
        }
        {
            std::vector<std::string> header{"k"};
            complex_labels(header, "y", h, triple.n());
            CsvWriter csv(opt.out_dir / "Y.csv", header);
            for (std::size_t k = 1; k <= eb.Y.size(); ++k) {
                std::vector<double> row{static_cast<double>(k)};
                complex_values(row, eb.y(k));
                csv.row(row);
            }
            rep.files.push_back("Y.csv");
        }
        {
            CsvWriter csv(opt.out_dir / "eigen_residual.csv", {"k", "residual"});
            for (std::size_t k = 1; k <= eb.row_residual.size(); ++k) {
                csv.row({static_cast<double>(k), eb.row_residual[k - 1]});
            }
            rep.files.push_back("eigen_residual.csv");
        }
        {
            std::vector<std::string> header{"k", "t"};
            complex_labels(header, "psi", h, triple.n());
            CsvWriter csv(opt.out_dir / "psi.csv", header);
            for (std::size_t i = 0; i < times.size(); ++i) {
                for (std::size_t k = 1; k <= sol.Psi[i].size(); ++k) {
                    std::vector<double> row{static_cast<double>(k), times[i]};
                    complex_values(row, sol.Psi[i][k - 1]);
                    csv.row(row);
                }
            }
            rep.files.push_back("psi.csv");
        }
    }
    json resolved = cfg;
    resolved["grid"] = {{"t", times}};
    resolved["eigen_blocks"] = eigen;
    rep.config = resolved;
    return rep;
}

inline RunReport run_asymptotics(const json& cfg, const RunOptions& opt, const Tolerances& tol, std::uint64_t seed) {
    const TripleInput in = parse_triple(cfg);
    const auto triple = ParameterTriple::continuous(in.A, in.S0, in.Pi0);
    const json grid_cfg = cfg.value("grid", json::object());
    const double length = number_or(grid_cfg, "L", 5.0);
    const double step = number_or(grid_cfg, "x_step", 1e-3);
    const JordanSpectrum spec = parse_jordan(cfg, in.A);

    const double identity_res = validate_triple(triple);
    if (identity_res > triple_threshold(triple, tol.id_tol)) {
        throw PreconditionError("triple identity violated: ‖A S0 − S0 A* − Π0 j Π0*‖ = " + format_double(identity_res), identity_res);
    }
    RunReport rep;
    rep.mode = "asymptotics";
    auto add = [&](Check c) { rep.checks.push_back(detail::scaled(std::move(c), opt.tol_scale)); };

    if (spec.U) {
        const double jr = jordan_residual(spec, in.A);
        if (spec.source == JordanSpectrum::Source::user_declared && jr > tol.jordan_tol) {
            throw ConfigError("jordan: ‖A − U J U⁻¹‖ = " + format_double(jr) + " exceeds jordan_tol");
        }
        add(gbdt::detail::bound("Jordan form A = U J U^-1 [rel]", jr, tol.jordan_tol));
        double max_im = 0.0;
        for (const auto& b : spec.blocks) max_im = std::max(max_im, std::abs(b.lambda.imag()));
        double worst = 0.0;
        for (const double t : {-50.0, -1.0, 0.0, 1.0, 10.0, 50.0}) {
            const double gap = (exp_profile(spec, t) - mat_exp(Complex(0.0, -t) * in.A)).norm();
            worst = std::max(worst, gap / std::exp(std::abs(t) * max_im));
        }
        add(gbdt::detail::bound("Jordan exponential vs dense exponential, |t| <= 50", worst, 1e-9));
    }
    const GrowthExponents ex = growth_exponents(spec);

    std::vector<CVector> gs;
    const bool seeded = !cfg.contains("g");
    if (seeded) {
        Rng rng(seed);
        for (int s = 0; s < 5; ++s) gs.push_back(rng.vector(in.A.rows()));
    } else {
        gs.push_back(parse_vector(cfg.at("g"), "g"));
        if (gs.back().size() != in.A.rows()) throw ConfigError("g must have n entries");
    }

    const auto st = evolve_closed_form(triple, Grid::uniform(length, step));
    ensure_dir(opt.out_dir);
    {
        CsvWriter csv(opt.out_dir / "exponents.csv", {"tau_plus", "tau_minus", "r_plus", "r_minus"});
        csv.row({ex.tau_plus, ex.tau_minus, static_cast<double>(ex.r_plus), static_cast<double>(ex.r_minus)});
        rep.files.push_back("exponents.csv");
    }
    CsvWriter fits(opt.out_dir / "fits.csv", {"g", "sign", "tau_hat", "r_hat", "c_hat", "residual"});
    CsvWriter norms(opt.out_dir / "norms.csv", {"g", "t", "norm", "log_norm"});
    rep.files.push_back("fits.csv");
    rep.files.push_back("norms.csv");
    int passes = 0;
    std::string failure;
    double worst_tau = 0.0;
    double worst_r = 0.0;
    for (std::size_t gi = 0; gi < gs.size(); ++gi) {
        bool ok = true;
        for (const int sign : {1, -1}) {
            const double tau = sign > 0 ? ex.tau_plus : ex.tau_minus;
            const int r = sign > 0 ? ex.r_plus : ex.r_minus;
            const auto samples = growth_samples(st, gs[gi], fit_window(tau, sign));
            for (const auto& s : samples) norms.row({static_cast<double>(gi), s.t, s.norm(), s.log_norm});
            try {
                const auto fit = empirical_growth_fit(samples);
                fits.row({static_cast<double>(gi), static_cast<double>(sign), fit.tau_hat, fit.r_hat, fit.c_hat,
                          fit.residual});
                worst_tau = std::max(worst_tau, std::abs(fit.tau_hat - tau));
                worst_r = std::max(worst_r, std::abs(fit.r_hat - r));
                ok = ok && std::abs(fit.tau_hat - tau) <= tol.fit_tau_tol * opt.tol_scale &&
                     std::abs(fit.r_hat - r) <= tol.fit_r_tol * opt.tol_scale;
            } catch (const DomainError& e) {
                ok = false;
                if (failure.empty()) failure = e.what();
            }
        }
        if (ok) ++passes;
    }
    // "Generically": with seeded g, 4 of 5 must meet the tolerances.
    const int needed = seeded ? 4 : 1;
    Check c = gbdt::detail::holds("growth fit recovers (tau, r) for " + std::to_string(needed) + " of " +
                                      std::to_string(gs.size()) + " g",
                                  passes >= needed);
    c.note = failure.empty() ? "passes = " + std::to_string(passes) + ", worst |dtau| = " + format_double(worst_tau) +
                                   ", worst |dr| = " + format_double(worst_r)
                             : failure;
    rep.checks.push_back(c);

    json resolved = cfg;
    resolved["grid"] = {{"L", length}, {"x_step", step}};
    resolved["exponents"] = {{"tau_plus", ex.tau_plus}, {"tau_minus", ex.tau_minus}, {"r_plus", ex.r_plus},
                             {"r_minus", ex.r_minus}};
    resolved["seed"] = seed;
    rep.config = resolved;
    return rep;
}

inline RunReport run_verify(std::uint64_t seed, double tol_scale) {
    RunReport rep;
    rep.mode = "verify";
    rep.config = {{"mode", "verify"}, {"seed", seed}, {"tol_scale", tol_scale}};
    for (const auto& res : run_verify_suite({seed, tol_scale})) {
        for (auto c : res.checks) {
            c.name = "[" + std::to_string(res.id) + "] " + res.title + ": " + c.name;
            rep.checks.push_back(std::move(c));
        }
    }
    return rep;
}

inline json load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
}

/// Dispatch on "mode". Validation problems surface as ConfigError or a
/// gbdt::Error subclass raised before any computation.
inline RunReport run(const json& cfg, const RunOptions& opt) {
    if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
    const std::string mode = require_key(cfg, "mode", "config").get<std::string>();
    const Tolerances tol = parse_tolerances(cfg);
    std::uint64_t seed = 0;
    if (cfg.contains("seed")) {
        if (!cfg.at("seed").is_number_unsigned()) throw ConfigError("seed must be a nonnegative integer");
        seed = cfg.at("seed").get<std::uint64_t>();
    }
    if (opt.seed) seed = *opt.seed;
    if (!(opt.tol_scale > 0.0)) throw ConfigError("--tol-scale must be positive");

    RunReport rep;
    if (mode == "continuous") {
        rep = run_continuous(cfg, opt, tol);
    } else if (mode == "discrete") {
        rep = run_discrete(cfg, opt, tol);
    } else if (mode == "asymptotics") {
        rep = run_asymptotics(cfg, opt, tol, seed);
    } else if (mode == "verify") {
        rep = run_verify(seed, opt.tol_scale);
        ensure_dir(opt.out_dir);
    } else {
        throw ConfigError("mode must be continuous, discrete, verify or asymptotics (got \"" + mode + "\")");
    }
    rep.config["tolerances"] = tol.to_json();
    rep.config["tol_scale"] = opt.tol_scale;
    write_report(rep, opt.out_dir);
    return rep;
}

}  // namespace gbdt::cli
