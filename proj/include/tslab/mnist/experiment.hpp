#pragma once

// Two-task protocol on permuted MNIST with latent targets: train task 1,
// measure transfer on task 2's test split, train task 2 and measure
// retention on task 1's test split.

#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "tslab/error.hpp"
#include "tslab/experiments.hpp"
#include "tslab/mnist/idx.hpp"
#include "tslab/mnist/mlp.hpp"
#include "tslab/mnist/task.hpp"
#include "tslab/students.hpp"

namespace tslab::mnist {

struct MnistProfile {
    std::string name;
    Eigen::Index n_hidden = 200;
    Eigen::Index n_train = 10000;  // capped at the loaded split size
    Eigen::Index n_test = 2000;
    std::size_t epochs_task1 = 10;
    std::size_t epochs_task2 = 5;  // retention is evaluated after this many task-2 epochs
    SgdOptions sgd;
    Eigen::Index anchor_samples = 5000;
};

inline MnistProfile desk_profile() { return {"desk", 200, 10000, 2000, 10, 5, {}, 5000}; }

inline MnistProfile paper_profile() { return {"paper", 1500, 60000, 10000, 100, 10, {}, 5000}; }

inline MnistProfile profile_by_name(const std::string& name) {
    if (name == "desk") return desk_profile();
    if (name == "paper") return paper_profile();
    throw Error(ErrorCode::invalid_input, "unknown profile '" + name + "' (expected desk or paper)");
}

inline bool supports(Variant v) {
    switch (v) {
        case Variant::vanilla:
        case Variant::gated:
        case Variant::adaptive:
        case Variant::euclid:
        case Variant::fim:
        case Variant::fim_diag: return true;
        default: return false;
    }
}

inline RegKind reg_kind(Variant v) {
    switch (v) {
        case Variant::euclid: return RegKind::euclid;
        case Variant::fim: return RegKind::fim_layerwise;
        case Variant::fim_diag: return RegKind::fim_diag;
        default: return RegKind::none;
    }
}

/// `hyper` is the gate density for gated/adaptive and the regularizer
/// amplitude for euclid/fim/fim_diag; vanilla ignores it.
struct MnistRunSpec {
    MnistProfile profile = desk_profile();
    Variant variant = Variant::vanilla;
    double rho_a = 1.0;
    double rho_b = 1.0;
    double hyper = 1.0;
    std::uint64_t seed = 0;
    bool timing = false;
};

inline const std::vector<std::string>& extra_columns() {
    static const std::vector<std::string> cols{"epoch_T2_at_eval", "test_mse_task1", "test_mse_task2"};
    return cols;
}

namespace detail {

inline double zero_predictor_mse(const TaskData& d) {
    return d.Y.squaredNorm() / (static_cast<double>(d.Y.cols()) * static_cast<double>(d.Y.rows()));
}

inline Matrix anchor_inputs(const Matrix& X, Eigen::Index count, Rng& rng) {
    const Eigen::Index n = X.cols();
    if (count >= n) return X;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    rng.shuffle(std::span<Eigen::Index>(order));
    Matrix out(X.rows(), count);
    for (Eigen::Index k = 0; k < count; ++k) out.col(k) = X.col(order[static_cast<std::size_t>(k)]);
    return out;
}

}  // namespace detail

/// Runs one (variant, rho_a, rho_b, hyper, seed) experiment. Library errors
/// become a tagged row rather than propagating.
inline experiments::ResultRow run_mnist_experiment(const MnistData& data, const MnistRunSpec& spec) {
    require(supports(spec.variant), ErrorCode::invalid_input,
            "variant " + std::string(to_string(spec.variant)) + " is not available for MNIST");
    const auto t0 = std::chrono::steady_clock::now();
    experiments::ResultRow row;
    row.variant = spec.variant;
    row.rho_a = spec.rho_a;
    row.rho_b = spec.rho_b;
    row.hyper = spec.hyper;
    row.seed = spec.seed;
    try {
        const MnistProfile& prof = spec.profile;
        const Dataset train = data.train.head(std::min(prof.n_train, data.train.size()));
        const Dataset test = data.test.head(std::min(prof.n_test, data.test.size()));
        require(train.size() >= prof.sgd.batch && test.size() > 0, ErrorCode::invalid_input,
                "dataset too small for the batch size");

        Rng first_rng{spec.seed, key_of(Stream::mnist_task), 1};
        const MnistLatentTask t1 = gen_first_task(first_rng);
        Rng next_rng{spec.seed, key_of(Stream::mnist_task), 2, key_of(spec.rho_a), key_of(spec.rho_b)};
        const MnistLatentTask t2 = gen_successor_task(t1, spec.rho_a, spec.rho_b, next_rng);
        const TaskData train1 = task_data(train, t1), train2 = task_data(train, t2);
        const TaskData test1 = task_data(test, t1), test2 = task_data(test, t2);

        Rng init_rng{spec.seed, key_of(Stream::mlp_init)};
        MlpParams W = init_params(kPixels, prof.n_hidden, kOutputDim, init_rng);
        const MlpParams W0 = W;

        const bool gated = spec.variant == Variant::gated || spec.variant == Variant::adaptive;
        std::optional<MlpGates> g1, g2;
        if (gated) {
            Rng gate1_rng{spec.seed, key_of(Stream::mnist_gates), 1, key_of(spec.hyper)};
            g1 = gen_mlp_gates(kPixels, prof.n_hidden, spec.hyper, gate1_rng);
            if (spec.variant == Variant::gated) {
                Rng gate2_rng{spec.seed, key_of(Stream::mnist_gates), 2, key_of(spec.hyper)};
                g2 = gen_mlp_gates(kPixels, prof.n_hidden, spec.hyper, gate2_rng);
            }
        }
        const MlpGates* gate1 = g1 ? &*g1 : nullptr;
        const double eps1_w0 = test_mse(W0, test1, gate1);

        Rng shuffle1{spec.seed, key_of(Stream::mlp_shuffle), 1};
        for (std::size_t e = 0; e < prof.epochs_task1; ++e) sgd_epoch(W, train1, gate1, nullptr, prof.sgd, shuffle1);

        if (spec.variant == Variant::adaptive) {
            const double probe = test_mse(W, test2, gate1);
            const double baseline = detail::zero_predictor_mse(test2);
            const double rho_g = std::max(0.0, 1.0 - probe / baseline);
            Rng gate2_rng{spec.seed, key_of(Stream::mnist_gates), 2, key_of(spec.hyper)};
            g2 = gen_correlated_mlp_gates(*g1, rho_g, spec.hyper, gate2_rng);
            row.probe = experiments::ProbeRecord{probe, baseline, rho_g,
                                                 gate_overlap({g1->hidden, spec.hyper}, {g2->hidden, spec.hyper})};
        }
        const MlpGates* gate2 = g2 ? &*g2 : nullptr;
        row.eps1_w0 = eps1_w0;
        row.eps2_w0 = test_mse(W0, test2, gate2);
        row.eps2_w1 = test_mse(W, test2, gate2);

        std::optional<Regularizer> reg;
        if (reg_kind(spec.variant) != RegKind::none) {
            Rng anchor_rng{spec.seed, key_of(Stream::anchor_samples)};
            const Matrix Xa = detail::anchor_inputs(train1.X, prof.anchor_samples, anchor_rng);
            reg = make_regularizer(reg_kind(spec.variant), spec.hyper, W, Xa);
        }

        Rng shuffle2{spec.seed, key_of(Stream::mlp_shuffle), 2};
        for (std::size_t e = 0; e < prof.epochs_task2; ++e)
            sgd_epoch(W, train2, gate2, reg ? &*reg : nullptr, prof.sgd, shuffle2);

        row.eps1_w2 = test_mse(W, test1, gate1);
        const double task2_final = test_mse(W, test2, gate2);
        row.transfer_sim = row.eps2_w0 - row.eps2_w1;
        row.retention_sim = row.eps1_w0 - row.eps1_w2;
        row.extra = {static_cast<double>(prof.epochs_task2), row.eps1_w2, task2_final};
    } catch (const Error& e) {
        row.valid = "error:" + std::string(to_string(e.code()));
        row.transfer_sim.reset();
        row.retention_sim.reset();
        row.extra = {static_cast<double>(spec.profile.epochs_task2), std::nullopt, std::nullopt};
    }
    if (spec.timing) row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

/// Grid of MNIST experiments for one variant.
struct MnistSweep {
    MnistProfile profile = desk_profile();
    Variant variant = Variant::vanilla;
    std::vector<double> rho_a{1.0};
    std::vector<double> rho_b{1.0};
    std::vector<double> hypers{1.0};
    std::vector<std::uint64_t> seeds{0};
    std::size_t threads = 0;
    bool timing = false;
};

inline std::vector<experiments::ResultRow> run_mnist_sweep(const MnistData& data, const MnistSweep& sweep,
                                                           const experiments::Progress& progress = {}) {
    require(!sweep.rho_a.empty() && !sweep.rho_b.empty() && !sweep.hypers.empty() && !sweep.seeds.empty(),
            ErrorCode::invalid_input, "MNIST sweep needs non-empty grids");
    std::vector<MnistRunSpec> jobs;
    for (double a : sweep.rho_a)
        for (double b : sweep.rho_b)
            for (double h : sweep.hypers)
                for (std::uint64_t s : sweep.seeds) jobs.push_back({sweep.profile, sweep.variant, a, b, h, s, sweep.timing});
    std::vector<experiments::ResultRow> rows(jobs.size());
    std::mutex m;
    std::size_t done = 0;
    experiments::parallel_for(jobs.size(), sweep.threads, [&](std::size_t i) {
        rows[i] = run_mnist_experiment(data, jobs[i]);
        if (progress) {
            std::lock_guard lock(m);
            progress(++done, jobs.size());
        }
    });
    experiments::sort_rows(rows);
    return rows;
}

}  // namespace tslab::mnist
