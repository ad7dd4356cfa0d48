// Acceptance checks. Each criterion prints exactly one PASS or FAIL line;
// the exit code is nonzero when any selected criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "tslab/experiments.hpp"
#include "tslab/linalg.hpp"
#include "tslab/mnist/experiment.hpp"
#include "tslab/mnist/gradcheck.hpp"
#include "tslab/taskgen.hpp"
#include "tslab/theory.hpp"

#ifndef TSLAB_MNIST_DIR
#define TSLAB_MNIST_DIR "data/mnist"
#endif

namespace {

using namespace tslab;
using experiments::CellSummary;
using experiments::SweepSpec;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

std::vector<std::uint64_t> seed_range(std::uint64_t n) {
    std::vector<std::uint64_t> s;
    for (std::uint64_t i = 0; i < n; ++i) s.push_back(i);
    return s;
}

SweepSpec base_spec(Variant v, std::vector<double> hypers, std::size_t n_seeds) {
    SweepSpec s;
    s.variant = v;
    s.hypers = std::move(hypers);
    s.seeds = seed_range(n_seeds);
    s.n_s = 30;
    s.n_x = 3000;
    s.n_y = 10;
    return s;
}

SweepSpec grid_spec(Variant v, std::vector<double> hypers, std::size_t n_seeds = 10) {
    SweepSpec s = base_spec(v, std::move(hypers), n_seeds);
    s.rho_a = experiments::unit_grid(11);
    s.rho_b = experiments::unit_grid(11);
    return s;
}

std::vector<CellSummary> cells_of(const SweepSpec& s) { return experiments::aggregate(experiments::run_sweep(s)); }

const CellSummary& cell(const std::vector<CellSummary>& cells, double rho_a, double rho_b, double hyper) {
    const CellSummary* c = experiments::find_cell(cells, rho_a, rho_b, hyper);
    if (!c) throw std::runtime_error("missing cell (" + num(rho_a) + ", " + num(rho_b) + ", " + num(hyper) + ")");
    if (c->n == 0) throw std::runtime_error("cell (" + num(rho_a) + ", " + num(rho_b) + ") has only error rows");
    return *c;
}

/// Largest seed-mean deviation from a predictor over all cells of one hyper.
struct GridDeviation {
    double transfer = 0.0;
    double retention = 0.0;
    std::size_t errors = 0;
};

GridDeviation grid_deviation(const std::vector<CellSummary>& cells, double hyper,
                             const std::function<theory::Prediction(theory::SimilarityPoint)>& predict) {
    GridDeviation d;
    for (const auto& c : cells) {
        if (std::abs(c.hyper - hyper) > 1e-12) continue;
        d.errors += c.errors;
        if (c.n == 0) continue;
        const theory::Prediction p = predict({c.rho_a, c.rho_b});
        d.transfer = std::max(d.transfer, std::abs(c.transfer.mean - p.transfer));
        d.retention = std::max(d.retention, std::abs(c.retention.mean - p.retention));
    }
    return d;
}

double spread(const std::vector<double>& xs) {
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    return *hi - *lo;
}

// ---------------------------------------------------------------------------

constexpr double kGridTol = 0.05;

Verdict criterion_1() {
    const auto cells = cells_of(grid_spec(Variant::vanilla, {1.0}));
    const auto d = grid_deviation(cells, 1.0, [](theory::SimilarityPoint p) {
        return theory::Prediction{p.rho_a * (2.0 * p.rho_b - p.rho_a),
                                  1.0 - p.rho_a * p.rho_a * (p.rho_a * p.rho_a - 2.0 * p.rho_a * p.rho_b + 1.0),
                                  true,
                                  {}};
    });
    const bool pass = d.errors == 0 && d.transfer <= kGridTol && d.retention <= kGridTol;
    return {pass, "vanilla 11x11 grid, 10 seeds: max |dTF| = " + num(d.transfer) + ", max |dRT| = " + num(d.retention) +
                      " (tol " + num(kGridTol) + "), error rows " + std::to_string(d.errors)};
}

Verdict criterion_2() {
    SweepSpec s = base_spec(Variant::vanilla, {1.0}, 10);
    s.rho_a = {0.2, 0.5, 0.6, 0.85, 0.9, 1.0};
    s.rho_b = {0.5, 1.0};
    const auto cells = cells_of(s);
    auto tf = [&](double a) { return cell(cells, a, 0.5, 1.0).transfer.mean; };
    auto rt = [&](double a) { return cell(cells, a, 1.0, 1.0).retention.mean; };
    constexpr double margin = 0.05;
    const bool transfer_peak = tf(0.5) - tf(0.2) >= margin && tf(0.5) - tf(0.9) >= margin;
    const bool retention_dip = rt(0.85) < rt(0.6) && rt(0.85) < rt(1.0);
    return {transfer_peak && retention_dip,
            "rho_b=0.5 TF(0.2, 0.5, 0.9) = " + num(tf(0.2)) + ", " + num(tf(0.5)) + ", " + num(tf(0.9)) +
                (transfer_peak ? " [peak ok]" : " [no peak]") + "; rho_b=1 RT(0.6, 0.85, 1) = " + num(rt(0.6)) + ", " +
                num(rt(0.85)) + ", " + num(rt(1.0)) + (retention_dip ? " [dip ok]" : " [no dip]")};
}

Verdict criterion_3() {
    const std::vector<double> alphas{0.25, 0.5, 0.75, 1.0};
    const auto cells = cells_of(grid_spec(Variant::gated, alphas));
    GridDeviation worst;
    for (double a : alphas) {
        const auto d = grid_deviation(cells, a, [a](theory::SimilarityPoint p) { return theory::gated(a, p); });
        worst.transfer = std::max(worst.transfer, d.transfer);
        worst.retention = std::max(worst.retention, d.retention);
        worst.errors += d.errors;
    }
    const SweepSpec prior = base_spec(Variant::gated, {0.75}, 10);
    const auto avg = experiments::average_over_prior(prior, 0.75, 100);
    const theory::PriorAverage target = theory::gated_prior_average(0.75);
    constexpr double prior_tol = 0.03;
    const bool grid_ok = worst.errors == 0 && worst.transfer <= kGridTol && worst.retention <= kGridTol;
    const bool prior_ok = std::abs(avg.transfer.mean - target.transfer) <= prior_tol &&
                          std::abs(avg.retention.mean - target.retention) <= prior_tol;
    return {grid_ok && prior_ok, "grid max |dTF| = " + num(worst.transfer) + ", max |dRT| = " + num(worst.retention) +
                                     "; prior average at 0.75 TF = " + num(avg.transfer.mean) + " vs " +
                                     num(target.transfer) + ", RT = " + num(avg.retention.mean) + " vs " +
                                     num(target.retention) + " (tol " + num(prior_tol) + ")"};
}

Verdict criterion_4() {
    constexpr std::size_t pairs = 100, seeds = 3;
    constexpr double noise = 0.02, max_deficit = 0.1;
    double worst_gain = 1e300, worst_deficit = -1e300;
    bool pass = true;
    for (int i = 1; i <= 9; ++i) {
        const double a = i / 10.0;
        const auto gated = experiments::average_over_prior(base_spec(Variant::gated, {a}, seeds), a, pairs);
        const auto adaptive = experiments::average_over_prior(base_spec(Variant::adaptive, {a}, seeds), a, pairs);
        const double gain = adaptive.transfer.mean - gated.transfer.mean;
        const double deficit = gated.retention.mean - adaptive.retention.mean;
        worst_gain = std::min(worst_gain, gain);
        worst_deficit = std::max(worst_deficit, deficit);
        pass = pass && gain >= -noise && deficit <= max_deficit && gated.errors == 0 && adaptive.errors == 0;
    }
    return {pass, "min adaptive-minus-random transfer = " + num(worst_gain) + " (>= -" + num(noise) +
                      "), max retention deficit = " + num(worst_deficit) + " (<= " + num(max_deficit) + ")"};
}

/// Largest spread of seed-mean transfer and retention across the hyper list
/// at the three reference similarity points.
Verdict invariance(const SweepSpec& s, double tol, const std::string& label) {
    const std::vector<theory::SimilarityPoint> pts{{0.3, 0.7}, {0.5, 0.5}, {0.9, 0.2}};
    double worst_tf = 0.0, worst_rt = 0.0;
    std::size_t errors = 0;
    for (const auto& p : pts) {
        SweepSpec one = s;
        one.rho_a = {p.rho_a};
        one.rho_b = {p.rho_b};
        const auto cells = cells_of(one);
        std::vector<double> tf, rt;
        for (double h : s.hypers) {
            const CellSummary* c = experiments::find_cell(cells, p.rho_a, p.rho_b, h);
            if (!c || c->n == 0) {
                ++errors;
                continue;
            }
            errors += c->errors;
            tf.push_back(c->transfer.mean);
            rt.push_back(c->retention.mean);
        }
        if (tf.empty()) continue;
        worst_tf = std::max(worst_tf, spread(tf));
        worst_rt = std::max(worst_rt, spread(rt));
    }
    return {errors == 0 && worst_tf <= tol && worst_rt <= tol,
            label + ": max spread TF = " + num(worst_tf) + ", RT = " + num(worst_rt) + " (tol " + num(tol) +
                "), error rows " + std::to_string(errors)};
}

Verdict criterion_5() {
    return invariance(base_spec(Variant::plasticity, {0.2, 0.4, 0.6, 0.8, 1.0}, 10), 0.05,
                      "plasticity gating, alpha 0.2..1.0, 10 seeds");
}

// Reduced dimensions keep the sample-based SGD tractable on one core; the
// schedule (eta, iterations) is the full-scale one.
Verdict criterion_6() {
    SweepSpec s = base_spec(Variant::soft_threshold, {0.4, 0.7, 1.0}, 3);
    s.n_s = 10;
    s.n_x = 300;
    s.soft.n_samples = 500;
    s.soft.eta = 0.01;
    s.soft.iters = 5000;
    s.eval_samples = 5000;
    return invariance(s, 0.1, "soft thresholding at N_s=10, N_x=300, 500 samples per step, 3 seeds");
}

Verdict criterion_7() {
    const std::vector<double> gammas{0.25, 0.5, 0.75, 1.0};
    const auto cells = cells_of(grid_spec(Variant::euclid, gammas));
    GridDeviation worst;
    for (double g : gammas) {
        const auto d = grid_deviation(cells, g, [g](theory::SimilarityPoint p) { return theory::euclid(g, p); });
        worst.transfer = std::max(worst.transfer, d.transfer);
        worst.retention = std::max(worst.retention, d.retention);
        worst.errors += d.errors;
    }
    std::size_t mismatches = 0;
    for (double g : gammas)
        for (double a : experiments::unit_grid(11))
            for (double b : experiments::unit_grid(11))
                if (theory::euclid(g, {a, b}).transfer != theory::gated(g, {a, b}).transfer) ++mismatches;
    return {worst.errors == 0 && worst.transfer <= kGridTol && worst.retention <= kGridTol && mismatches == 0,
            "grid max |dTF| = " + num(worst.transfer) + ", max |dRT| = " + num(worst.retention) + " (tol " +
                num(kGridTol) + "); euclid/gated transfer identity mismatches " + std::to_string(mismatches)};
}

Verdict criterion_8() {
    std::vector<double> gammas;
    for (int i = 1; i <= 9; ++i) gammas.push_back(i / 10.0);
    SweepSpec s = base_spec(Variant::fim, gammas, 10);
    for (int i = 0; i <= 8; ++i) s.rho_a.push_back(i / 10.0);
    s.rho_b = experiments::unit_grid(11);
    const auto rows = experiments::run_sweep(s);
    const auto cells = experiments::aggregate(rows);

    double min_rt = 1e300, max_dtf = 0.0;
    std::size_t errors = 0;
    for (const auto& c : cells) {
        errors += c.errors;
        if (c.n == 0) continue;
        min_rt = std::min(min_rt, c.retention.mean);
        max_dtf = std::max(max_dtf, std::abs(c.transfer.mean - theory::vanilla({c.rho_a, c.rho_b}).transfer));
    }
    // Seed-mean task errors per (rho_a, rho_b, gamma), then spread over gamma.
    std::map<std::pair<double, double>, std::map<double, std::pair<double, std::size_t>>> err1;
    std::map<std::pair<double, double>, std::map<double, std::pair<double, std::size_t>>> err2;
    for (const auto& r : rows) {
        if (!r.ok() || !r.transfer_sim) continue;
        auto& e1 = err1[{r.rho_a, r.rho_b}][r.hyper];
        e1.first += r.eps1_w2;
        ++e1.second;
        auto& e2 = err2[{r.rho_a, r.rho_b}][r.hyper];
        e2.first += r.eps2_w1;
        ++e2.second;
    }
    double lambda_spread = 0.0;
    for (const auto* table : {&err1, &err2})
        for (const auto& [pt, by_gamma] : *table) {
            std::vector<double> means;
            for (const auto& [g, acc] : by_gamma) means.push_back(acc.first / static_cast<double>(acc.second));
            lambda_spread = std::max(lambda_spread, spread(means));
        }
    return {errors == 0 && min_rt >= 0.9 && max_dtf <= kGridTol && lambda_spread <= 0.02,
            "rho_a <= 0.8, 9 lambdas, 10 seeds: min RT = " + num(min_rt) + " (>= 0.9), max |dTF| = " + num(max_dtf) +
                " (tol " + num(kGridTol) + "), max task-error spread over lambda = " + num(lambda_spread) +
                " (tol 0.02)"};
}

Verdict criterion_9() {
    const std::vector<double> gammas{0.1, 0.3, 0.5, 0.7, 0.9};
    SweepSpec s = base_spec(Variant::fim, gammas, 5);
    s.rho_a = {0.8, 0.9, 1.0};
    s.rho_b = experiments::unit_grid(11);
    const auto exact = cells_of(s);
    s.variant = Variant::fim_diag;
    const auto diag = cells_of(s);
    double best = -1e300;
    std::string where;
    for (const auto& d : diag) {
        if (d.n == 0) continue;
        const CellSummary* e = experiments::find_cell(exact, d.rho_a, d.rho_b, d.hyper);
        if (!e || e->n == 0) continue;
        const double gap = e->retention.mean - d.retention.mean;
        if (gap > best) {
            best = gap;
            where = "(" + num(d.rho_a) + ", " + num(d.rho_b) + ", gamma " + num(d.hyper) + ")";
        }
    }
    return {best >= 0.2, "largest exact-minus-diagonal retention gap = " + num(best) + " at " + where + " (>= 0.2)"};
}

Verdict criterion_10() {
    constexpr double quad_tol = 1e-6, sim_tol = 0.03;
    const auto v = theory::uniform_prior_average(theory::vanilla);
    const auto g = theory::uniform_prior_average(theory::gated_optimal);
    const bool quad_ok = std::abs(v.transfer - 1.0 / 6.0) <= quad_tol &&
                         std::abs(v.retention - 43.0 / 60.0) <= quad_tol && std::abs(g.transfer - 0.25) <= quad_tol;
    const auto sv = experiments::average_over_prior(base_spec(Variant::vanilla, {1.0}, 10), 1.0, 100);
    const auto sg = experiments::average_over_prior(base_spec(Variant::gated_optimal, {1.0}, 10), 1.0, 100);
    const bool sim_ok = std::abs(sv.transfer.mean - 1.0 / 6.0) <= sim_tol &&
                        std::abs(sv.retention.mean - 43.0 / 60.0) <= sim_tol &&
                        std::abs(sg.transfer.mean - 0.25) <= sim_tol && sv.errors == 0 && sg.errors == 0;
    return {quad_ok && sim_ok, "quadrature " + num(v.transfer) + ", " + num(v.retention) + ", " + num(g.transfer) +
                                   "; 100-pair simulation " + num(sv.transfer.mean) + ", " + num(sv.retention.mean) +
                                   ", " + num(sg.transfer.mean) + " (targets 1/6, 43/60, 1/4; tol " + num(sim_tol) +
                                   ")"};
}

Verdict criterion_11() {
    struct Setting {
        Eigen::Index n_x, n_s;
    };
    constexpr std::size_t samples = 200;
    bool pass = true;
    std::string detail;
    for (const Setting st : {Setting{3000, 30}, Setting{500, 10}}) {
        std::vector<double> dev;
        for (std::uint64_t seed = 0; seed < samples; ++seed) {
            const TaskPair tp = gen_task_pair({st.n_s, st.n_x, 1, 1.0, 1.0, seed});
            dev.push_back(gram_deviation(tp.A1));
        }
        const auto stat = experiments::summarize(dev);
        const double expected = (1.0 / static_cast<double>(st.n_x)) * (1.0 + 1.0 / static_cast<double>(st.n_s));
        const double z = std::abs(stat.mean - expected) / stat.stderr_;
        pass = pass && z <= 3.0;
        detail += "gram (" + std::to_string(st.n_x) + ", " + std::to_string(st.n_s) + ") mean " + num(stat.mean) +
                  " vs " + num(expected) + " (" + num(z) + " SE); ";
    }
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed)
        worst = std::max(worst, projector_approx_error(gen_task_pair({30, 3000, 1, 1.0, 1.0, seed}).A1));
    pass = pass && worst < 0.2;
    return {pass, detail + "max projector error at N_s/N_x = 0.01 = " + num(worst) + " (< 0.2)"};
}

Verdict criterion_12() {
    const mnist::MnistData data = mnist::load_mnist_dir(TSLAB_MNIST_DIR);
    const mnist::MnistProfile profile = mnist::desk_profile();
    constexpr std::size_t n_seeds = 3;
    constexpr double amplitude = 100.0;
    struct Mean {
        double transfer = 0.0, retention = 0.0, eps2_w0 = 0.0;
    };
    auto run = [&](Variant v, double ra, double rb, double hyper) {
        mnist::MnistSweep sw;
        sw.profile = profile;
        sw.variant = v;
        sw.rho_a = {ra};
        sw.rho_b = {rb};
        sw.hypers = {hyper};
        sw.seeds = seed_range(n_seeds);
        sw.threads = 0;
        Mean m;
        for (const auto& r : mnist::run_mnist_sweep(data, sw)) {
            if (!r.ok() || !r.transfer_sim) throw std::runtime_error("MNIST run failed: " + r.valid);
            m.transfer += *r.transfer_sim / n_seeds;
            m.retention += *r.retention_sim / n_seeds;
            m.eps2_w0 += r.eps2_w0 / n_seeds;
        }
        return m;
    };
    const Mean cross = run(Variant::vanilla, 1.0, 0.0, 1.0);
    const Mean readout = run(Variant::vanilla, 0.0, 1.0, 1.0);
    const Mean same = run(Variant::vanilla, 1.0, 1.0, 1.0);
    const Mean mid = run(Variant::vanilla, 1.0, 0.5, 1.0);
    const Mean gated = run(Variant::gated, 1.0, 0.5, 0.3);
    const Mean euclid = run(Variant::euclid, 0.5, 0.5, amplitude);
    const Mean fim = run(Variant::fim, 0.5, 0.5, amplitude);

    double grad = 0.0;
    for (const auto& g : mnist::gradient_check_suite()) grad = std::max(grad, g.max_rel_error);

    const double scale = 0.3 * cross.eps2_w0;
    std::vector<std::pair<std::string, bool>> checks{
        {"RT(1,0) = " + num(cross.retention) + " < 0", cross.retention < 0.0},
        {"RT(0,1) - RT(1,0) = " + num(readout.retention - cross.retention) + " >= " + num(scale),
         readout.retention - cross.retention >= scale},
        {"TF(1,1) = " + num(same.transfer) + " > 0", same.transfer > 0.0},
        {"gated RT " + num(gated.retention) + " > " + num(mid.retention), gated.retention > mid.retention},
        {"gated TF " + num(gated.transfer) + " < " + num(mid.transfer), gated.transfer < mid.transfer},
        {"FIM RT " + num(fim.retention) + " >= Euclid RT " + num(euclid.retention) + " at amplitude " + num(amplitude),
         fim.retention >= euclid.retention},
        {"gradient check " + num(grad) + " <= 1e-5", grad <= 1e-5},
    };
    bool pass = true;
    std::string detail = "desk profile, 3 seeds:";
    for (const auto& [text, ok] : checks) {
        pass = pass && ok;
        detail += " " + text + (ok ? " [ok];" : " [FAILED];");
    }
    return {pass, detail};
}

const std::vector<std::pair<std::string, Verdict (*)()>>& criteria() {
    static const std::vector<std::pair<std::string, Verdict (*)()>> all{
        {"vanilla theory agreement", criterion_1},
        {"non-monotonicity witnesses", criterion_2},
        {"random gating", criterion_3},
        {"adaptive gating", criterion_4},
        {"plasticity gating invariance", criterion_5},
        {"soft-threshold invariance", criterion_6},
        {"Euclidean regularization", criterion_7},
        {"Fisher-metric regularization", criterion_8},
        {"diagonal FIM degradation", criterion_9},
        {"uniform-prior constants", criterion_10},
        {"tall-matrix properties", criterion_11},
        {"MNIST latent qualitative reproduction", criterion_12},
    };
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::vector<int> selected;
    app.add_option("--criterion", selected, "Criterion numbers to run (default: all)")->check(CLI::Range(1, 12));
    CLI11_PARSE(app, argc, argv);
    if (selected.empty())
        for (int i = 1; i <= 12; ++i) selected.push_back(i);

    int failed = 0;
    for (int n : selected) {
        const auto& [name, fn] = criteria()[static_cast<std::size_t>(n - 1)];
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::cout << "criterion " << n << " " << (v.pass ? "PASS" : "FAIL") << " (" << name << "): " << v.detail
                  << std::endl;
        failed += !v.pass;
    }
    return failed ? 1 : 0;
}
