#pragma once

// Command-line front end. Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tslab/config.hpp"
#include "tslab/csv.hpp"
#include "tslab/error.hpp"
#include "tslab/experiments.hpp"
#include "tslab/mnist/experiment.hpp"
#include "tslab/selftest.hpp"

#ifndef TSLAB_MNIST_DIR
#define TSLAB_MNIST_DIR "data/mnist"
#endif

namespace tslab::cli {

enum Exit : int { kOk = 0, kRuntime = 1, kUsage = 2 };

/// Raised for bad flags or configuration; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Global {
    std::size_t threads = 0;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool timing = false;
    bool small = false;
};

namespace detail {

inline Variant variant_or_usage(const std::string& name) {
    const auto v = parse_variant(name);
    if (!v) throw UsageError("unknown variant '" + name + "'");
    return *v;
}

inline void emit(const Global& g, const std::string& text, std::ostream& out) {
    if (g.out.empty()) {
        out << text;
    } else {
        csv::write_atomic(g.out, text);
    }
}

/// Reports at most ~20 progress lines to the error stream.
inline experiments::Progress progress_to(std::ostream& err, const std::string& label) {
    return [&err, label](std::size_t done, std::size_t total) {
        const std::size_t step = std::max<std::size_t>(1, total / 20);
        if (done % step == 0 || done == total) err << label << ": " << done << "/" << total << "\n";
    };
}

/// Every replicate seed and the pair seed are offset by the global seed.
inline void apply_globals(experiments::SweepSpec& s, const Global& g) {
    if (g.threads) s.threads = g.threads;
    if (g.timing) s.timing = true;
    if (g.seed) {
        for (auto& x : s.seeds) x += *g.seed;
        s.pair_seed += *g.seed;
    }
    if (g.small) {
        s.n_s = 10;
        s.n_x = 500;
        if (s.seeds.size() > 5) s.seeds.resize(5);
    }
}

inline experiments::SweepSpec load_sweep(const std::string& path, experiments::SweepSpec base = {}) {
    try {
        return config::sweep_from_json(config::load_json(path), std::move(base));
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

}  // namespace detail

inline std::string theory_header() { return "variant,rho_a,rho_b,hyper,transfer,retention,valid"; }

struct TheoryArgs {
    std::string variant = "vanilla";
    std::vector<double> rho_a, rho_b, hypers;
    std::size_t grid = 11;
    Eigen::Index n_s = 30, n_x = 3000;
};

inline std::string cmd_theory(const TheoryArgs& a) {
    const Variant v = detail::variant_or_usage(a.variant);
    if ((a.rho_a.empty() || a.rho_b.empty()) && a.grid < 2) throw UsageError("--grid needs at least 2 points");
    const std::vector<double> ra = a.rho_a.empty() ? experiments::unit_grid(a.grid) : a.rho_a;
    const std::vector<double> rb = a.rho_b.empty() ? experiments::unit_grid(a.grid) : a.rho_b;
    const std::vector<double> hs = a.hypers.empty() ? std::vector<double>{1.0} : a.hypers;
    if (ra.empty() || rb.empty()) throw UsageError("similarity grid is empty");
    std::string text = theory_header() + "\n";
    for (double x : ra)
        for (double y : rb)
            for (double h : hs) {
                const theory::SimilarityPoint p{x, y};
                double alpha_used = h;
                std::optional<theory::Prediction> pr;
                try {
                    p.validate();
                    if (v == Variant::gated_optimal) alpha_used = experiments::gated_optimal_alpha(p, a.n_s, a.n_x);
                    pr = experiments::cell_theory(v, p, h, alpha_used, a.n_s, a.n_x);
                } catch (const Error& e) {
                    throw UsageError(e.what());
                }
                if (!pr) throw UsageError("variant " + a.variant + " has no closed-form prediction");
                text += std::string(to_string(v)) + "," + csv::format_double(x) + "," + csv::format_double(y) + "," +
                        csv::format_double(h) + "," + csv::format_double(pr->transfer) + "," +
                        csv::format_double(pr->retention) + "," + (pr->valid ? "1" : "0") + "\n";
            }
    return text;
}

inline std::string average_header() {
    return "variant,hyper,pairs,errors,transfer_sim,transfer_stderr,retention_sim,retention_stderr,"
           "transfer_theory_quadrature,retention_theory_quadrature,transfer_theory_sampled,retention_theory_sampled";
}

inline std::string format_average(const experiments::SweepSpec& s, double hyper, const experiments::PriorResult& r) {
    auto opt = [](bool has, double x) { return has ? csv::format_double(x) : std::string(); };
    const bool th = r.theory_sampled.has_value();
    return std::string(to_string(s.variant)) + "," + csv::format_double(hyper) + "," + std::to_string(r.pairs) + "," +
           std::to_string(r.errors) + "," + csv::format_double(r.transfer.mean) + "," +
           csv::format_double(r.transfer.stderr_) + "," + csv::format_double(r.retention.mean) + "," +
           csv::format_double(r.retention.stderr_) + "," + opt(th, r.theory_quadrature.transfer) + "," +
           opt(th, r.theory_quadrature.retention) + "," + opt(th, th ? r.theory_sampled->transfer : 0.0) + "," +
           opt(th, th ? r.theory_sampled->retention : 0.0) + "\n";
}

struct MnistArgs {
    std::string data_dir = TSLAB_MNIST_DIR;
    std::string profile = "desk";
    std::string variant = "vanilla";
    std::vector<double> rho_a{1.0}, rho_b{1.0}, amplitude, alpha;
    std::size_t seeds = 1;
};

/// Parses argv and runs one subcommand, writing results to `out` (or the
/// --out file) and diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Teacher-student continual learning laboratory"};
    app.require_subcommand(1);
    app.fallthrough();
    Global g;
    app.add_option("--threads", g.threads, "Worker threads (0: all cores)");
    app.add_option("--seed", g.seed, "Base seed added to every replicate seed");
    app.add_option("--out", g.out, "Output CSV path (default: standard output)");
    app.add_flag("--timing", g.timing, "Record wall-clock seconds per cell");
    app.add_flag("--small", g.small, "Reduced dimensions N_s=10, N_x=500 and at most 5 seeds");

    TheoryArgs ta;
    auto* theory_cmd = app.add_subcommand("theory", "Closed-form predictions over a similarity grid");
    theory_cmd->add_option("--variant", ta.variant, "Variant name");
    theory_cmd->add_option("--rho-a", ta.rho_a, "Feature similarities (default: unit grid)");
    theory_cmd->add_option("--rho-b", ta.rho_b, "Readout similarities (default: unit grid)");
    theory_cmd->add_option("--grid", ta.grid, "Points per axis of the default unit grid");
    std::vector<double> t_alpha, t_gamma;
    theory_cmd->add_option("--alpha", t_alpha, "Gate densities");
    theory_cmd->add_option("--gamma", t_gamma, "Regularizer amplitudes in gamma units");
    theory_cmd->add_option("--hyper", ta.hypers, "Hyperparameter values");
    theory_cmd->add_option("--n-s", ta.n_s, "Latent dimension for validity flags");
    theory_cmd->add_option("--n-x", ta.n_x, "Input dimension for validity flags");

    std::string sweep_config;
    auto* sweep_cmd = app.add_subcommand("sweep", "Simulated sweep from a JSON config");
    sweep_cmd->add_option("config,--config", sweep_config, "Config path")->required();

    std::string avg_config, avg_variant;
    std::vector<double> avg_hypers;
    std::size_t avg_pairs = 100;
    auto* avg_cmd = app.add_subcommand("average", "Simulated and theoretical averages over the uniform prior");
    avg_cmd->add_option("config,--config", avg_config, "Optional config path for dimensions and seeds");
    avg_cmd->add_option("--variant", avg_variant, "Variant name (overrides the config)");
    avg_cmd->add_option("--hyper", avg_hypers, "Hyperparameter values (overrides the config)");
    avg_cmd->add_option("--pairs", avg_pairs, "Number of uniform similarity pairs");

    MnistArgs ma;
    auto* mnist_cmd = app.add_subcommand("mnist", "Permuted MNIST with latent targets");
    mnist_cmd->add_option("--data-dir", ma.data_dir, "Directory with the four IDX files");
    mnist_cmd->add_option("--profile", ma.profile, "Scale profile")->check(CLI::IsMember({"desk", "paper"}));
    mnist_cmd->add_option("--variant", ma.variant, "vanilla, gated, adaptive, euclid, fim or fim_diag");
    mnist_cmd->add_option("--rho-a", ma.rho_a, "Feature similarities");
    mnist_cmd->add_option("--rho-b", ma.rho_b, "Readout similarities");
    mnist_cmd->add_option("--amplitude", ma.amplitude, "Regularizer amplitudes");
    mnist_cmd->add_option("--alpha", ma.alpha, "Gate densities");
    mnist_cmd->add_option("--seeds", ma.seeds, "Number of replicate seeds");

    auto* selftest_cmd = app.add_subcommand("selftest", "Fast invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (theory_cmd->parsed()) {
            ta.hypers.insert(ta.hypers.end(), t_alpha.begin(), t_alpha.end());
            ta.hypers.insert(ta.hypers.end(), t_gamma.begin(), t_gamma.end());
            detail::emit(g, cmd_theory(ta), out);
        } else if (sweep_cmd->parsed()) {
            experiments::SweepSpec s = detail::load_sweep(sweep_config);
            detail::apply_globals(s, g);
            const auto rows = experiments::run_sweep(s, detail::progress_to(err, "sweep"));
            detail::emit(g, csv::render(rows), out);
        } else if (avg_cmd->parsed()) {
            if (avg_pairs == 0) throw UsageError("--pairs must be positive");
            experiments::SweepSpec base;
            base.random_pairs = avg_pairs;
            experiments::SweepSpec s = avg_config.empty() ? base : detail::load_sweep(avg_config, base);
            if (!avg_variant.empty()) s.variant = detail::variant_or_usage(avg_variant);
            if (!avg_hypers.empty()) s.hypers = avg_hypers;
            detail::apply_globals(s, g);
            std::string text = average_header() + "\n";
            for (double h : s.hypers) {
                err << "average: " << to_string(s.variant) << " hyper " << h << "\n";
                text += format_average(s, h, experiments::average_over_prior(s, h, avg_pairs));
            }
            detail::emit(g, text, out);
        } else if (mnist_cmd->parsed()) {
            mnist::MnistSweep sw;
            sw.profile = mnist::profile_by_name(ma.profile);
            sw.variant = detail::variant_or_usage(ma.variant);
            if (!mnist::supports(sw.variant)) throw UsageError("variant " + ma.variant + " is not available for MNIST");
            sw.rho_a = ma.rho_a;
            sw.rho_b = ma.rho_b;
            const bool gated = sw.variant == Variant::gated || sw.variant == Variant::adaptive;
            const bool regularized = mnist::reg_kind(sw.variant) != mnist::RegKind::none;
            if (gated) sw.hypers = ma.alpha.empty() ? std::vector<double>{0.5} : ma.alpha;
            if (regularized) sw.hypers = ma.amplitude.empty() ? std::vector<double>{1.0} : ma.amplitude;
            if (!gated && !ma.alpha.empty()) throw UsageError("--alpha applies to gated and adaptive only");
            if (!regularized && !ma.amplitude.empty())
                throw UsageError("--amplitude applies to euclid, fim and fim_diag only");
            if (ma.seeds == 0) throw UsageError("--seeds must be positive");
            for (double r : sw.rho_a)
                if (r < 0.0 || r > 1.0) throw UsageError("rho_a must lie in [0, 1]");
            for (double r : sw.rho_b)
                if (r < 0.0 || r > 1.0) throw UsageError("rho_b must lie in [0, 1]");
            sw.seeds.clear();
            for (std::size_t i = 0; i < ma.seeds; ++i) sw.seeds.push_back(g.seed.value_or(0) + i);
            sw.threads = g.threads ? g.threads : 1;
            sw.timing = g.timing;
            const mnist::MnistData data = mnist::load_mnist_dir(ma.data_dir);
            const auto rows = mnist::run_mnist_sweep(data, sw, detail::progress_to(err, "mnist"));
            detail::emit(g, csv::render(rows, mnist::extra_columns()), out);
        } else if (selftest_cmd->parsed()) {
            const auto checks = selftest::run_all();
            std::size_t failed = 0;
            for (const auto& c : checks) {
                out << (c.pass ? "PASS " : "FAIL ") << c.name;
                if (!c.pass) out << ": " << c.detail;
                out << "\n";
                failed += !c.pass;
            }
            out << (failed ? "selftest failed: " + std::to_string(failed) + " of " : "selftest passed: ")
                << checks.size() << " checks\n";
            return failed ? kRuntime : kOk;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}

}  // namespace tslab::cli
