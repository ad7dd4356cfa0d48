#pragma once

// Sweep harness for the linear model: one cell is a (variant, similarity
// point, hyperparameter, seed) episode of two sequential tasks.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "tslab/error.hpp"
#include "tslab/linalg.hpp"
#include "tslab/rng.hpp"
#include "tslab/students.hpp"
#include "tslab/taskgen.hpp"
#include "tslab/theory.hpp"

namespace tslab::experiments {

enum class Mode { closed_form, iterative };

constexpr std::string_view to_string(Mode m) noexcept {
    return m == Mode::closed_form ? "closed_form" : "iterative";
}

struct SweepSpec {
    Variant variant = Variant::vanilla;
    std::vector<double> rho_a;      // explicit grid axes (Cartesian product)
    std::vector<double> rho_b;
    std::size_t random_pairs = 0;   // > 0: uniform pairs replace the grid
    std::uint64_t pair_seed = 0;
    std::vector<double> hypers{1.0};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    Eigen::Index n_s = 30;
    Eigen::Index n_x = 3000;
    Eigen::Index n_y = 10;
    Mode mode = Mode::closed_form;
    double eta = 0.001;                  // iterative mode, rate of dW/dt = -eta (WA - B) A^T
    std::size_t iters = 100;             // iterative mode, per task
    std::size_t iters_regularized = 500; // iterative mode, regularized variants
    SoftThresholdOptions soft;           // alpha is taken from the hyper value
    std::size_t eval_samples = 10000;    // Monte Carlo error samples for soft thresholding
    std::size_t threads = 0;             // 0: hardware concurrency
    bool timing = false;                 // record wall-clock seconds per cell

    void validate() const {
        require(!hypers.empty() && !seeds.empty(), ErrorCode::invalid_input, "hyper and seed lists must be non-empty");
        require(random_pairs > 0 || (!rho_a.empty() && !rho_b.empty()), ErrorCode::invalid_input,
                "similarity grid is empty");
        for (double r : rho_a) require(r >= 0.0 && r <= 1.0, ErrorCode::invalid_input, "rho_a outside [0, 1]");
        for (double r : rho_b) require(r >= 0.0 && r <= 1.0, ErrorCode::invalid_input, "rho_b outside [0, 1]");
        EnsembleConfig{n_s, n_x, n_y, 0.0, 0.0, 0}.validate();
        require(eta > 0.0 && iters >= 1 && iters_regularized >= 1, ErrorCode::invalid_input,
                "iterative settings must be positive");
        require(soft.n_samples >= 1 && soft.iters >= 1 && soft.eta > 0.0 && eval_samples >= 1,
                ErrorCode::invalid_input, "soft-threshold settings must be positive");
    }

    [[nodiscard]] std::vector<theory::SimilarityPoint> points() const {
        if (random_pairs > 0) {
            Rng rng{pair_seed, key_of(Stream::similarity_pairs)};
            return theory::sample_uniform_pairs(random_pairs, rng);
        }
        std::vector<theory::SimilarityPoint> pts;
        for (double a : rho_a)
            for (double b : rho_b) pts.push_back({a, b});
        return pts;
    }
};

/// Grid {0, 1/(n-1), ..., 1} with exact endpoints.
inline std::vector<double> unit_grid(std::size_t n) {
    require(n >= 2, ErrorCode::invalid_input, "grid needs at least two points");
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

struct ProbeRecord {
    double probe_error = 0.0;     // eps on task 2 evaluated with task 1's gate
    double baseline_error = 0.0;  // ||B2||^2 / N_y
    double rho_g = 0.0;
    double overlap = 0.0;         // realized |g1 and g2| / |g1|
};

struct ResultRow {
    Variant variant = Variant::vanilla;
    double rho_a = 0.0;
    double rho_b = 0.0;
    double hyper = 0.0;
    std::uint64_t seed = 0;
    std::optional<double> transfer_sim;
    std::optional<double> retention_sim;
    std::optional<double> transfer_theory;
    std::optional<double> retention_theory;
    std::string valid = "1";  // "1", "0" (asymptotic assumption violated) or "error:<code>"
    double seconds = 0.0;
    // Raw errors behind the differences: eps2[W0], eps2[W1], eps1[W0], eps1[W2].
    double eps2_w0 = 0.0, eps2_w1 = 0.0, eps1_w0 = 0.0, eps1_w2 = 0.0;
    std::optional<ProbeRecord> probe;
    std::vector<std::optional<double>> extra;  // variant-specific trailing CSV columns

    [[nodiscard]] bool ok() const { return valid.rfind("error:", 0) != 0; }

    [[nodiscard]] auto key() const { return std::make_tuple(to_string(variant), rho_a, rho_b, hyper, seed); }
};

/// Theory attached to a cell, or nullopt where the variant has no closed form.
inline std::optional<theory::Prediction> cell_theory(Variant v, theory::SimilarityPoint p, double hyper,
                                                     double alpha_used, Eigen::Index n_s, Eigen::Index n_x) {
    const theory::Dims dims{static_cast<double>(n_s), static_cast<double>(n_x)};
    switch (v) {
        case Variant::vanilla:
        case Variant::plasticity:
        case Variant::soft_threshold: return theory::vanilla(p);
        case Variant::gated:
        case Variant::gated_optimal: return theory::gated(alpha_used, p, dims);
        case Variant::adaptive: return theory::gated(theory::adaptive_alpha_eff(hyper, p), p, dims);
        case Variant::euclid: return theory::euclid(hyper, p);
        case Variant::fim: {
            const double lambda = students::lambda_from_gamma(hyper, n_s, n_x);
            if (p.rho_a == 1.0) return theory::fim_fixed_feature(1.0 / (1.0 + lambda), p.rho_b, false);
            return theory::fim(p, static_cast<double>(n_s), static_cast<double>(n_x));
        }
        case Variant::fim_diag: return std::nullopt;
    }
    return std::nullopt;
}

/// Density used by the per-task optimal gating variant. The floor keeps
/// alpha N_x at three times N_s so the gated task stays well posed.
inline double gated_optimal_alpha(theory::SimilarityPoint p, Eigen::Index n_s, Eigen::Index n_x) {
    const double floor = std::min(1.0, 3.0 * static_cast<double>(n_s) / static_cast<double>(n_x));
    return std::max(theory::optimal_alpha_transfer(p), floor);
}

namespace detail {

struct Episode {
    Matrix W1, W2;
    std::optional<GateVector> g1, g2;  // activity gates, used in every error
    std::optional<ProbeRecord> probe;
};

inline Matrix fit_one(const SweepSpec& spec, Variant v, const Matrix& W_prev, const Matrix* A_prev,
                      const Matrix& A, const Matrix& B, const GateVector* gate, double hyper) {
    using namespace students;
    const bool iterative = spec.mode == Mode::iterative;
    const double lambda = (v == Variant::euclid || v == Variant::fim || v == Variant::fim_diag)
                              ? lambda_from_gamma(hyper, spec.n_s, spec.n_x)
                              : 0.0;
    if (!iterative) {
        switch (v) {
            case Variant::vanilla: return fit_vanilla(W_prev, A, B);
            case Variant::gated:
            case Variant::adaptive:
            case Variant::gated_optimal: return fit_gated(W_prev, A, B, *gate);
            case Variant::plasticity: return fit_plasticity_gated(W_prev, A, B, *gate);
            case Variant::euclid: return fit_reg_euclid(W_prev, A, B, lambda);
            case Variant::fim:
                return A_prev ? fit_reg_fim(W_prev, *A_prev, A, B, lambda) : fit_vanilla(W_prev, A, B);
            case Variant::fim_diag:
                return A_prev ? fit_reg_fim_diag(W_prev, *A_prev, A, B, lambda) : fit_vanilla(W_prev, A, B);
            case Variant::soft_threshold: break;
        }
        throw Error(ErrorCode::precondition, "soft thresholding has no closed form");
    }

    // gd_train scales its step by 2 / N_y; undo it so eta is the rate of the
    // flow dW/dt = -eta (W D A - B)(D A)^T.
    GdOptions opt;
    opt.eta = spec.eta * static_cast<double>(spec.n_y) / 2.0;
    opt.iters = spec.iters;
    const GateVector* activity = nullptr;
    switch (v) {
        case Variant::vanilla: break;
        case Variant::gated:
        case Variant::adaptive:
        case Variant::gated_optimal: activity = gate; break;
        case Variant::plasticity: opt.plasticity_gate = gate; break;
        case Variant::euclid:
            opt.iters = spec.iters_regularized;
            opt.penalty = {GdPenalty::Kind::euclid, lambda, nullptr};
            break;
        case Variant::fim:
        case Variant::fim_diag:
            opt.iters = spec.iters_regularized;
            if (A_prev)
                opt.penalty = {v == Variant::fim ? GdPenalty::Kind::fim : GdPenalty::Kind::fim_diag, lambda, A_prev};
            break;
        case Variant::soft_threshold: throw Error(ErrorCode::precondition, "soft thresholding is sample based");
    }
    const LinearTask t{A, B, activity};
    return gd_train(W_prev, t, opt, t, t).W;
}

inline Rng gate_rng(const EnsembleConfig& cfg, double hyper, Stream s) {
    return Rng{cfg.seed, key_of(s), key_of(cfg.rho_a), key_of(cfg.rho_b), key_of(hyper)};
}

}  // namespace detail

/// Runs one two-task episode. Library errors become an error-tagged row.
inline ResultRow run_cell(const SweepSpec& spec, theory::SimilarityPoint p, double hyper, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    ResultRow row;
    row.variant = spec.variant;
    row.rho_a = p.rho_a;
    row.rho_b = p.rho_b;
    row.hyper = hyper;
    row.seed = seed;
    const Variant v = spec.variant;

    try {
        const EnsembleConfig cfg{spec.n_s, spec.n_x, spec.n_y, p.rho_a, p.rho_b, seed};
        double alpha = uses_density(v) ? hyper : 1.0;
        if (v == Variant::gated_optimal) alpha = gated_optimal_alpha(p, spec.n_s, spec.n_x);

        if (auto th = cell_theory(v, p, hyper, alpha, spec.n_s, spec.n_x)) {
            row.transfer_theory = th->transfer;
            row.retention_theory = th->retention;
            if (!th->valid) row.valid = "0";
        }

        const TaskPair tp = gen_task_pair(cfg);
        const Matrix W0 = Matrix::Zero(spec.n_y, spec.n_x);

        if (v == Variant::soft_threshold) {
            Rng sgd = detail::gate_rng(cfg, hyper, Stream::latents);
            Rng eval = detail::gate_rng(cfg, hyper, Stream::evaluation);
            SoftThresholdOptions opt = spec.soft;
            opt.alpha = hyper;
            const auto f1 = students::fit_soft_threshold(W0, tp.A1, tp.B1, opt, sgd);
            const auto f2 = students::fit_soft_threshold(f1.W, tp.A2, tp.B2, opt, sgd);
            const Matrix S = sample_latents(spec.n_s, static_cast<Eigen::Index>(spec.eval_samples), eval);
            const double h = f1.threshold;
            row.eps2_w0 = students::error_soft_threshold(W0, tp.A2, tp.B2, h, S);
            row.eps2_w1 = students::error_soft_threshold(f1.W, tp.A2, tp.B2, h, S);
            row.eps1_w0 = students::error_soft_threshold(W0, tp.A1, tp.B1, h, S);
            row.eps1_w2 = students::error_soft_threshold(f2.W, tp.A1, tp.B1, h, S);
            if (f1.not_converged || f2.not_converged) row.valid = "0";
        } else {
            const bool gated_variant = v == Variant::gated || v == Variant::adaptive ||
                                       v == Variant::gated_optimal || v == Variant::plasticity;
            std::optional<GateVector> g1;
            std::optional<GateVector> g2;
            if (gated_variant) {
                // g1 is shared by random and adaptive gating at the same cell.
                Rng r1 = detail::gate_rng(cfg, hyper, Stream::gate1);
                g1 = gen_gate(spec.n_x, alpha, r1);
            }
            const Matrix W1 = detail::fit_one(spec, v, W0, nullptr, tp.A1, tp.B1, g1 ? &*g1 : nullptr, hyper);

            if (gated_variant) {
                Rng r2 = detail::gate_rng(cfg, hyper, Stream::gate2);
                if (v == Variant::adaptive) {
                    ProbeRecord pr;
                    pr.probe_error = students::error_linear(W1, tp.A2, tp.B2, *g1);
                    pr.baseline_error = tp.B2.squaredNorm() / static_cast<double>(spec.n_y);
                    pr.rho_g = std::max(0.0, 1.0 - pr.probe_error / pr.baseline_error);
                    g2 = gen_correlated_gate(*g1, pr.rho_g, alpha, r2);
                    pr.overlap = gate_overlap(*g1, *g2);
                    row.probe = pr;
                } else {
                    g2 = gen_gate(spec.n_x, alpha, r2);
                }
            }
            const Matrix W2 = detail::fit_one(spec, v, W1, &tp.A1, tp.A2, tp.B2, g2 ? &*g2 : nullptr, hyper);

            // Plasticity gating leaves the activity intact, so errors are ungated.
            const bool activity = gated_variant && v != Variant::plasticity;
            auto err1 = [&](const Matrix& W) {
                return activity ? students::error_linear(W, tp.A1, tp.B1, *g1) : students::error_linear(W, tp.A1, tp.B1);
            };
            auto err2 = [&](const Matrix& W) {
                return activity ? students::error_linear(W, tp.A2, tp.B2, *g2) : students::error_linear(W, tp.A2, tp.B2);
            };
            row.eps2_w0 = err2(W0);
            row.eps2_w1 = err2(W1);
            row.eps1_w0 = err1(W0);
            row.eps1_w2 = err1(W2);
        }
        row.transfer_sim = row.eps2_w0 - row.eps2_w1;
        row.retention_sim = row.eps1_w0 - row.eps1_w2;
        require(std::isfinite(*row.transfer_sim) && std::isfinite(*row.retention_sim), ErrorCode::instability,
                "non-finite simulated performance");
    } catch (const Error& e) {
        row.transfer_sim.reset();
        row.retention_sim.reset();
        row.valid = "error:" + std::string(to_string(e.code()));
    }
    if (spec.timing) row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

/// Runs fn(i) for i in [0, n) on a bounded pool of worker threads.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

inline void sort_rows(std::vector<ResultRow>& rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) { return a.key() < b.key(); });
}

using Progress = std::function<void(std::size_t done, std::size_t total)>;

struct Job {
    theory::SimilarityPoint p;
    double hyper;
    std::uint64_t seed;
};

/// Runs an explicit job list in parallel and returns the rows in canonical order.
inline std::vector<ResultRow> run_jobs(const SweepSpec& spec, const std::vector<Job>& jobs,
                                       const Progress& progress = {}) {
    std::vector<ResultRow> rows(jobs.size());
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    parallel_for(jobs.size(), spec.threads, [&](std::size_t i) {
        rows[i] = run_cell(spec, jobs[i].p, jobs[i].hyper, jobs[i].seed);
        const std::size_t d = ++done;
        if (progress) {
            std::lock_guard lock(progress_mutex);
            progress(d, jobs.size());
        }
    });
    sort_rows(rows);
    return rows;
}

inline std::vector<ResultRow> run_sweep(const SweepSpec& spec, const Progress& progress = {}) {
    spec.validate();
    std::vector<Job> jobs;
    for (const auto& p : spec.points())
        for (double h : spec.hypers)
            for (std::uint64_t s : spec.seeds) jobs.push_back({p, h, s});
    return run_jobs(spec, jobs, progress);
}

// ---------------------------------------------------------------------------
// Aggregation over seeds

struct Stat {
    double mean = 0.0;
    double std = 0.0;     // population convention (divide by n)
    double stderr_ = 0.0; // sample standard deviation / sqrt(n)
};

inline Stat summarize(const std::vector<double>& xs) {
    Stat s;
    if (xs.empty()) return s;
    const auto n = static_cast<double>(xs.size());
    for (double x : xs) s.mean += x;
    s.mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / n);
    s.stderr_ = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    return s;
}

struct CellSummary {
    Variant variant = Variant::vanilla;
    double rho_a = 0.0, rho_b = 0.0, hyper = 0.0;
    std::size_t n = 0;       // rows with simulated values
    std::size_t errors = 0;  // error-tagged rows
    Stat transfer, retention;
    std::optional<double> transfer_theory, retention_theory;
};

inline std::vector<CellSummary> aggregate(const std::vector<ResultRow>& rows) {
    using Key = std::tuple<std::string_view, double, double, double>;
    std::map<Key, std::vector<const ResultRow*>> groups;
    for (const auto& r : rows) groups[{to_string(r.variant), r.rho_a, r.rho_b, r.hyper}].push_back(&r);

    std::vector<CellSummary> out;
    for (const auto& [key, members] : groups) {
        CellSummary c;
        c.variant = members.front()->variant;
        c.rho_a = std::get<1>(key);
        c.rho_b = std::get<2>(key);
        c.hyper = std::get<3>(key);
        c.transfer_theory = members.front()->transfer_theory;
        c.retention_theory = members.front()->retention_theory;
        std::vector<double> tf;
        std::vector<double> rt;
        for (const ResultRow* r : members) {
            if (!r->ok() || !r->transfer_sim) {
                ++c.errors;
                continue;
            }
            tf.push_back(*r->transfer_sim);
            rt.push_back(*r->retention_sim);
        }
        c.n = tf.size();
        c.transfer = summarize(tf);
        c.retention = summarize(rt);
        out.push_back(c);
    }
    return out;
}

inline const CellSummary* find_cell(const std::vector<CellSummary>& cells, double rho_a, double rho_b, double hyper) {
    for (const auto& c : cells)
        if (std::abs(c.rho_a - rho_a) < 1e-12 && std::abs(c.rho_b - rho_b) < 1e-12 && std::abs(c.hyper - hyper) < 1e-12)
            return &c;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Averages over the uniform similarity prior

struct PriorResult {
    Stat transfer;   // over pairs of seed means; stderr over pairs
    Stat retention;
    theory::PriorAverage theory_quadrature;
    std::optional<theory::PriorAverage> theory_sampled;  // same pairs as the simulation
    std::size_t pairs = 0;
    std::size_t errors = 0;
    std::vector<ResultRow> rows;
};

/// Predictor matching cell_theory over the prior, where one exists.
inline std::optional<theory::Predictor> prior_predictor(Variant v, double hyper, Eigen::Index n_s, Eigen::Index n_x) {
    switch (v) {
        case Variant::vanilla:
        case Variant::plasticity:
        case Variant::soft_threshold: return theory::Predictor(theory::vanilla);
        case Variant::gated: return theory::Predictor([hyper](theory::SimilarityPoint p) { return theory::gated(hyper, p); });
        case Variant::gated_optimal:
            return theory::Predictor(
                [n_s, n_x](theory::SimilarityPoint p) { return theory::gated(gated_optimal_alpha(p, n_s, n_x), p); });
        case Variant::adaptive:
            return theory::Predictor([hyper](theory::SimilarityPoint p) {
                return theory::gated(theory::adaptive_alpha_eff(hyper, p), p);
            });
        case Variant::euclid:
            return theory::Predictor([hyper](theory::SimilarityPoint p) { return theory::euclid(hyper, p); });
        case Variant::fim:
            // rho_a = 1 has measure zero under the prior.
            return theory::Predictor([](theory::SimilarityPoint p) {
                theory::Prediction out = theory::vanilla(p);
                out.retention = 1.0;
                return out;
            });
        case Variant::fim_diag: return std::nullopt;
    }
    return std::nullopt;
}

/// Simulated averages over n_pairs uniform similarity pairs and the given
/// seeds, with the matching theory averages.
inline PriorResult average_over_prior(SweepSpec spec, double hyper, std::size_t n_pairs) {
    require(n_pairs >= 1, ErrorCode::invalid_input, "need at least one similarity pair");
    spec.random_pairs = n_pairs;
    spec.hypers = {hyper};
    spec.validate();
    // Pair k with replicate seed s uses teacher seed s * n_pairs + k, so the
    // pairs see independent teachers instead of sharing one draw per seed.
    const auto pts = spec.points();
    std::vector<Job> jobs;
    for (std::size_t k = 0; k < pts.size(); ++k)
        for (std::uint64_t s : spec.seeds) jobs.push_back({pts[k], hyper, s * n_pairs + k});
    PriorResult res;
    res.rows = run_jobs(spec, jobs);
    const auto cells = aggregate(res.rows);
    std::vector<double> tf;
    std::vector<double> rt;
    for (const auto& c : cells) {
        res.errors += c.errors;
        if (c.n == 0) continue;
        tf.push_back(c.transfer.mean);
        rt.push_back(c.retention.mean);
    }
    res.pairs = tf.size();
    res.transfer = summarize(tf);
    res.retention = summarize(rt);
    if (auto pred = prior_predictor(spec.variant, hyper, spec.n_s, spec.n_x)) {
        res.theory_quadrature = theory::uniform_prior_average(*pred);
        res.theory_sampled = theory::sampled_prior_average(*pred, spec.points());
    }
    return res;
}

// ---------------------------------------------------------------------------
// Learning curve across a task switch

/// Full-gradient training on task 1 for `iters` steps and then on task 2,
/// recording both task errors at every step (2 iters + 1 entries).
inline students::Trajectory learning_curve(const TaskPair& tp, double eta, std::size_t iters,
                                           const GateVector* g1 = nullptr, const GateVector* g2 = nullptr) {
    using namespace students;
    const Matrix W0 = Matrix::Zero(tp.B1.rows(), tp.A1.rows());
    const LinearTask t1{tp.A1, tp.B1, g1};
    const LinearTask t2{tp.A2, tp.B2, g2};
    GdOptions opt;
    opt.eta = eta * static_cast<double>(tp.B1.rows()) / 2.0;
    opt.iters = iters;
    GdResult first = gd_train(W0, t1, opt, t1, t2);
    const GdResult second = gd_train(first.W, t2, opt, t1, t2);
    Trajectory out = first.trajectory;
    for (std::size_t i = 1; i < second.trajectory.iteration.size(); ++i) {
        out.iteration.push_back(iters + second.trajectory.iteration[i]);
        out.task1_error.push_back(second.trajectory.task1_error[i]);
        out.task2_error.push_back(second.trajectory.task2_error[i]);
        out.train_error.push_back(second.trajectory.train_error[i]);
    }
    return out;
}

}  // namespace tslab::experiments
