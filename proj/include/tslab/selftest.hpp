#pragma once

// Fast invariant suite behind `tslab_cli selftest`: linear-algebra contracts,
// closed-form constants, gamma/alpha equivalence, closed-form fits against
// independent dense solves, and the MLP gradient check.

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "tslab/linalg.hpp"
#include "tslab/mnist/gradcheck.hpp"
#include "tslab/rng.hpp"
#include "tslab/students.hpp"
#include "tslab/taskgen.hpp"
#include "tslab/theory.hpp"

namespace tslab::selftest {

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;  // expected vs actual
};

namespace detail {

inline std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

inline Check near(const std::string& name, double actual, double expected, double tol) {
    const bool ok = std::isfinite(actual) && std::abs(actual - expected) <= tol;
    return {name, ok, "expected " + num(expected) + " +- " + num(tol) + ", actual " + num(actual)};
}

inline Check below(const std::string& name, double actual, double bound) {
    const bool ok = std::isfinite(actual) && actual <= bound;
    return {name, ok, "expected <= " + num(bound) + ", actual " + num(actual)};
}

/// Relative Frobenius distance.
inline double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

inline Matrix cod_pinv(const Matrix& M) { return Eigen::CompleteOrthogonalDecomposition<Matrix>(M).pseudoInverse(); }

}  // namespace detail

inline std::vector<Check> pinv_contract() {
    Rng rng{0, 0x51};
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        const auto rows = static_cast<Eigen::Index>(20 + rng.below(61));
        const auto cols = static_cast<Eigen::Index>(2 + rng.below(14));
        const Matrix A = tslab::detail::gaussian_matrix(rows, cols, 1.0, rng);
        const Matrix P = pinv(A);
        worst = std::max({worst, detail::rel(A * P * A, A), detail::rel(P * A * P, P),
                          detail::rel((A * P).transpose(), A * P), detail::rel((P * A).transpose(), P * A),
                          detail::rel(P, detail::cod_pinv(A))});
    }
    return {detail::below("pinv Penrose conditions on 50 tall matrices", worst, 1e-10)};
}

inline std::vector<Check> theory_constants() {
    using namespace theory;
    std::vector<Check> out;
    const PriorAverage v = uniform_prior_average(vanilla);
    out.push_back(detail::near("prior average vanilla transfer", v.transfer, 1.0 / 6.0, 1e-6));
    out.push_back(detail::near("prior average vanilla retention", v.retention, 43.0 / 60.0, 1e-6));
    out.push_back(detail::near("prior average transfer at optimal alpha",
                               uniform_prior_average(gated_optimal).transfer, 0.25, 1e-6));
    const PriorAverage g = uniform_prior_average([](SimilarityPoint p) { return gated(0.75, p); });
    out.push_back(detail::near("prior average gated transfer at 0.75", g.transfer, gated_prior_average(0.75).transfer, 1e-6));
    out.push_back(
        detail::near("prior average gated retention at 0.75", g.retention, gated_prior_average(0.75).retention, 1e-6));
    out.push_back(detail::near("best average density", optimal_alpha_average_transfer(), 0.75, 0.0));
    const Prediction cross = vanilla({1.0, 0.0});
    out.push_back(detail::near("vanilla (1, 0) transfer", cross.transfer, -1.0, 0.0));
    out.push_back(detail::near("vanilla (1, 0) retention", cross.retention, -1.0, 0.0));
    return out;
}

inline std::vector<Check> gamma_alpha_equivalence() {
    std::size_t mismatches = 0;
    double worst_round_trip = 0.0;
    for (int gi = 1; gi <= 10; ++gi) {
        const double gamma = gi / 10.0;
        for (int i = 0; i <= 10; ++i)
            for (int j = 0; j <= 10; ++j) {
                const theory::SimilarityPoint p{i / 10.0, j / 10.0};
                if (theory::euclid(gamma, p).transfer != theory::gated(gamma, p).transfer) ++mismatches;
            }
        const double lambda = students::lambda_from_gamma(gamma, 30, 3000);
        worst_round_trip = std::max(worst_round_trip, std::abs(students::gamma_from_lambda(lambda, 30, 3000) - gamma));
    }
    return {detail::near("euclid transfer equals gated transfer (bitwise, 1210 points)",
                         static_cast<double>(mismatches), 0.0, 0.0),
            detail::below("gamma -> lambda -> gamma round trip", worst_round_trip, 1e-12)};
}

/// Closed-form fits on a small instance against dense normal-equation solves.
inline std::vector<Check> fit_oracles() {
    using namespace students;
    EnsembleConfig cfg{5, 40, 3, 0.5, 0.5, 7};
    const TaskPair tp = gen_task_pair(cfg);
    Rng rng{7, 0x52};
    const Matrix W_prev = tslab::detail::gaussian_matrix(3, 40, 0.3, rng);
    const Matrix I = Matrix::Identity(40, 40);
    const double lambda = 0.8;
    std::vector<Check> out;

    const Matrix R = tp.B2 - W_prev * tp.A2;
    const Matrix vanilla_ref = W_prev + R * detail::cod_pinv(tp.A2);
    out.push_back(detail::below("fit_vanilla vs minimum-norm least squares",
                                detail::rel(fit_vanilla(W_prev, tp.A2, tp.B2), vanilla_ref), 1e-10));

    const Matrix AAt = tp.A2 * tp.A2.transpose();
    const Matrix euclid_ref = (tp.B2 * tp.A2.transpose() + lambda * W_prev) * (AAt + lambda * I).inverse();
    out.push_back(detail::below("fit_reg_euclid vs dense ridge solve",
                                detail::rel(fit_reg_euclid(W_prev, tp.A2, tp.B2, lambda), euclid_ref), 1e-10));

    const Matrix PPt = tp.A1 * tp.A1.transpose();
    const Matrix fim_ref = W_prev + R * tp.A2.transpose() * detail::cod_pinv(AAt + lambda * PPt);
    out.push_back(detail::below("fit_reg_fim vs dense minimum-norm solve",
                                detail::rel(fit_reg_fim(W_prev, tp.A1, tp.A2, tp.B2, lambda), fim_ref), 1e-8));

    const Matrix C = diagonal_fisher(tp.A1).asDiagonal();
    const Matrix diag_ref = (tp.B2 * tp.A2.transpose() + lambda * W_prev * C) * (AAt + lambda * C).inverse();
    out.push_back(detail::below("fit_reg_fim_diag vs dense solve",
                                detail::rel(fit_reg_fim_diag(W_prev, tp.A1, tp.A2, tp.B2, lambda), diag_ref), 1e-10));
    return out;
}

inline std::vector<Check> mlp_gradients() {
    std::vector<Check> out;
    for (const auto& g : mnist::gradient_check_suite())
        out.push_back(detail::below("MLP gradient vs finite differences (" + g.name + ")", g.max_rel_error, 1e-5));
    return out;
}

inline std::vector<Check> run_all() {
    std::vector<Check> out;
    for (auto group : {pinv_contract, theory_constants, gamma_alpha_equivalence, fit_oracles, mlp_gradients}) {
        try {
            for (auto& c : group()) out.push_back(std::move(c));
        } catch (const std::exception& e) {
            out.push_back({"unexpected exception", false, e.what()});
        }
    }
    return out;
}

}  // namespace tslab::selftest
