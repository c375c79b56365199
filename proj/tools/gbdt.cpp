#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "gbdt/cli.hpp"

namespace {

void print_summary(const gbdt::cli::RunReport& rep, const std::filesystem::path* out) {
    for (const auto& c : rep.checks) {
        std::printf("%s  %-90s %-24s <= %g\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                    gbdt::cli::format_double(c.value).c_str(), c.tolerance);
    }
    std::printf("overall: %s (%.2f s)\n", rep.pass() ? "PASS" : "FAIL", rep.seconds);
    if (out != nullptr) std::printf("outputs in %s\n", out->string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Darboux-transformation runs and invariant checks"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    double tol_scale = 1.0;

    auto* run = app.add_subcommand("run", "run a JSON-configured experiment");
    run->add_option("config", config_path, "config file")->required();
    run->add_option("--out", out_dir, "output directory (default gbdt_out)");
    auto* run_seed = run->add_option("--seed", seed, "override the config seed");
    run->add_option("--tol-scale", tol_scale, "multiply every tolerance")->check(CLI::PositiveNumber);

    auto* verify = app.add_subcommand("verify", "run the full invariant suite on seeded inputs");
    auto* verify_seed = verify->add_option("--seed", seed, "suite seed");
    verify->add_option("--out", out_dir, "also write report.txt / report.json here");
    verify->add_option("--tol-scale", tol_scale, "multiply every tolerance")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    namespace cli = gbdt::cli;
    cli::RunOptions opt;
    opt.tol_scale = tol_scale;
    if (!out_dir.empty()) opt.out_dir = out_dir;
    const gbdt::detail::Stopwatch watch;
    try {
        cli::RunReport rep;
        if (run->parsed()) {
            if (run_seed->count() > 0) opt.seed = seed;
            rep = cli::run(cli::load_config(config_path), opt);
        } else {
            rep = cli::run_verify(verify_seed->count() > 0 ? seed : gbdt::VerifyOptions{}.seed, tol_scale);
            if (!out_dir.empty()) {
                cli::ensure_dir(opt.out_dir);
                cli::write_report(rep, opt.out_dir);
            }
        }
        rep.seconds = watch.seconds();
        print_summary(rep, (run->parsed() || !out_dir.empty()) ? &opt.out_dir : nullptr);
        return rep.pass() ? cli::kPass : cli::kCheckFailure;
    } catch (const cli::IoError& e) {
        std::fprintf(stderr, "gbdt: I/O error: %s\n", e.what());
        return cli::kIo;
    } catch (const cli::ConfigError& e) {
        std::fprintf(stderr, "gbdt: invalid config: %s\n", e.what());
        return cli::kValidation;
    } catch (const gbdt::PreconditionError& e) {
        std::fprintf(stderr, "gbdt: precondition failed: %s\n", e.what());
        return cli::kValidation;
    } catch (const gbdt::DimensionError& e) {
        std::fprintf(stderr, "gbdt: invalid config: %s\n", e.what());
        return cli::kValidation;
    } catch (const gbdt::NotPositiveDefiniteError& e) {
        std::fprintf(stderr, "gbdt: precondition failed: %s\n", e.what());
        return cli::kValidation;
    } catch (const gbdt::SymmetryError& e) {
        std::fprintf(stderr, "gbdt: invalid config: %s\n", e.what());
        return cli::kValidation;
    } catch (const gbdt::Error& e) {
        std::fprintf(stderr, "gbdt: check failed: %s\n", e.what());
        return cli::kCheckFailure;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "gbdt: invalid config: %s\n", e.what());
        return cli::kValidation;
    }
}
