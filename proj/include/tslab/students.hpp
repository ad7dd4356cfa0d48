#pragma once

// Student learning rules for the linear teacher-student model y = W psi(x).
//
// Closed-form rules return the post-training weight of gradient flow started
// from W_prev (or the unique minimizer, for the regularized losses). All
// errors use the analytic expectation over the latent s, so
// eps[W] = ||B - W D A||_F^2 / N_y.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tslab/error.hpp"
#include "tslab/linalg.hpp"
#include "tslab/rng.hpp"
#include "tslab/taskgen.hpp"

namespace tslab {

enum class Variant {
    vanilla,
    gated,          // random activity gating
    adaptive,       // activity gating with probe-driven gate reuse
    gated_optimal,  // random activity gating at the per-task optimal density
    plasticity,     // plasticity gating
    soft_threshold,
    euclid,
    fim,
    fim_diag,
};

constexpr std::string_view to_string(Variant v) noexcept {
    switch (v) {
        case Variant::vanilla: return "vanilla";
        case Variant::gated: return "gated";
        case Variant::adaptive: return "adaptive";
        case Variant::gated_optimal: return "gated_optimal";
        case Variant::plasticity: return "plasticity";
        case Variant::soft_threshold: return "soft_threshold";
        case Variant::euclid: return "euclid";
        case Variant::fim: return "fim";
        case Variant::fim_diag: return "fim_diag";
    }
    return "unknown";
}

inline constexpr Variant kAllVariants[] = {
    Variant::vanilla,    Variant::gated,          Variant::adaptive, Variant::gated_optimal, Variant::plasticity,
    Variant::soft_threshold, Variant::euclid, Variant::fim,      Variant::fim_diag,
};

inline std::optional<Variant> parse_variant(std::string_view name) {
    for (Variant v : kAllVariants)
        if (to_string(v) == name) return v;
    return std::nullopt;
}

/// Variants whose hyperparameter is a density alpha (the rest take gamma).
constexpr bool uses_density(Variant v) noexcept {
    return v == Variant::gated || v == Variant::adaptive || v == Variant::gated_optimal ||
           v == Variant::plasticity || v == Variant::soft_threshold;
}

struct SoftThresholdOptions {
    double alpha = 1.0;
    std::size_t n_samples = 10000;
    double eta = 0.01;
    std::size_t iters = 5000;
};

struct StudentHyper {
    double alpha = 1.0;   // gate or activity density
    double gamma = 1.0;   // normalized regularizer amplitude
    double lambda = 0.0;  // raw regularizer amplitude
    SoftThresholdOptions sgd;
};

struct StudentState {
    Matrix W;
    Variant variant = Variant::vanilla;
    StudentHyper hyper;

    static StudentState zero(Eigen::Index n_y, Eigen::Index n_x, Variant v, StudentHyper h = {}) {
        return {Matrix::Zero(n_y, n_x), v, h};
    }
};

namespace students {

namespace detail {

inline void check_shapes(const Matrix& W, const Matrix& A, const Matrix& B) {
    require(W.cols() == A.rows() && W.rows() == B.rows() && A.cols() == B.cols(), ErrorCode::shape_mismatch,
            "W " + shape_of(W) + ", A " + shape_of(A) + ", B " + shape_of(B));
}

inline void check_gate(const GateVector& g, const Matrix& A) {
    require(g.size() == A.rows(), ErrorCode::shape_mismatch,
            "gate length " + std::to_string(g.size()) + " vs A " + shape_of(A));
}

// W_prev (I - U U^T) + B V S^-1 U^T, written so no N_x x N_x matrix appears.
inline Matrix project_and_interpolate(const Matrix& W_prev, const Matrix& B, const ThinSvd& svd) {
    const Matrix coeff = B * svd.V * svd.S.cwiseInverse().asDiagonal() - W_prev * svd.U;
    return W_prev + coeff * svd.U.transpose();
}

}  // namespace detail

inline double error_linear(const Matrix& W, const Matrix& A, const Matrix& B) {
    detail::check_shapes(W, A, B);
    return (B - W * A).squaredNorm() / static_cast<double>(B.rows());
}

inline double error_linear(const Matrix& W, const Matrix& A, const Matrix& B, const GateVector& gate) {
    detail::check_shapes(W, A, B);
    detail::check_gate(gate, A);
    return (B - W * (gate.bits.asDiagonal() * A)).squaredNorm() / static_cast<double>(B.rows());
}

/// Gradient-flow fixed point: W = W_prev (I - U U^T) + B A^+.
inline Matrix fit_vanilla(const Matrix& W_prev, const Matrix& A, const Matrix& B) {
    detail::check_shapes(W_prev, A, B);
    const ThinSvd svd = thin_svd(A);
    require(svd.rank() == A.cols(), ErrorCode::degenerate_task,
            "A has rank " + std::to_string(svd.rank()) + " < " + std::to_string(A.cols()));
    return detail::project_and_interpolate(W_prev, B, svd);
}

/// Activity gating: the same fixed point with A replaced by D A.
inline Matrix fit_gated(const Matrix& W_prev, const Matrix& A, const Matrix& B, const GateVector& gate) {
    detail::check_shapes(W_prev, A, B);
    detail::check_gate(gate, A);
    require(gate.popcount() >= A.cols(), ErrorCode::degenerate_gate,
            "gate has " + std::to_string(gate.popcount()) + " active units, need at least " +
                std::to_string(A.cols()));
    const ThinSvd svd = thin_svd(gate.bits.asDiagonal() * A);
    require(svd.rank() == A.cols(), ErrorCode::degenerate_gate,
            "gated input has rank " + std::to_string(svd.rank()) + " < " + std::to_string(A.cols()));
    return detail::project_and_interpolate(W_prev, B, svd);
}

/// Plasticity gating: only synapses from active inputs learn, the activity is
/// left intact. W = W_prev + (B V L^-1 - W_prev U)(U^T D U)^-1 U^T D.
inline Matrix fit_plasticity_gated(const Matrix& W_prev, const Matrix& A, const Matrix& B,
                                   const GateVector& gate) {
    detail::check_shapes(W_prev, A, B);
    detail::check_gate(gate, A);
    const ThinSvd svd = thin_svd(A);
    require(svd.rank() == A.cols(), ErrorCode::degenerate_task,
            "A has rank " + std::to_string(svd.rank()) + " < " + std::to_string(A.cols()));

    const Matrix DU = gate.bits.asDiagonal() * svd.U;
    const Matrix UtDU = DU.transpose() * DU;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(UtDU, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    require(hi > 0.0 && lo > kDefaultRankTol * hi, ErrorCode::degenerate_gate,
            "U^T D U is singular: gate too sparse for the latent dimension");

    const Matrix coeff = B * svd.V * svd.S.cwiseInverse().asDiagonal() - W_prev * svd.U;
    const Matrix scaled = UtDU.llt().solve(coeff.transpose()).transpose();
    return W_prev + scaled * DU.transpose();
}

/// Minimizer of 1/2 ||B - W A||^2 + lambda/2 ||W - W_prev||^2.
///
/// Uses the push-through form of the Woodbury identity,
/// W = W_prev + (B - W_prev A)(lambda I_s + A^T A)^-1 A^T,
/// so only an N_s x N_s system is factorized.
inline Matrix fit_reg_euclid(const Matrix& W_prev, const Matrix& A, const Matrix& B, double lambda) {
    detail::check_shapes(W_prev, A, B);
    require(std::isfinite(lambda) && lambda >= 0.0, ErrorCode::invalid_regularizer,
            "lambda must be a finite non-negative number");
    if (lambda == 0.0) return fit_vanilla(W_prev, A, B);

    Matrix M = A.transpose() * A;
    M.diagonal().array() += lambda;
    const Matrix R = B - W_prev * A;
    const Matrix Q = M.llt().solve(R.transpose()).transpose();
    return W_prev + Q * A.transpose();
}

/// Minimizer of 1/2 ||B - W A||^2 + lambda/2 ||(W - W_prev) A_prev||^2.
///
/// For A_prev != A the weight change is Q [A_prev, A]^T with Q taken from the
/// exact 2 N_s x 2 N_s stacked Gram system. When A_prev equals A bit for bit
/// the stacked system is singular and the fixed-feature solution
/// W = W_prev (I - g U U^T) + g B A^+ with g = 1 / (1 + lambda) is used.
inline Matrix fit_reg_fim(const Matrix& W_prev, const Matrix& A_prev, const Matrix& A, const Matrix& B,
                          double lambda) {
    detail::check_shapes(W_prev, A, B);
    require(A_prev.rows() == A.rows() && A_prev.cols() == A.cols(), ErrorCode::shape_mismatch,
            "A_prev " + shape_of(A_prev) + " vs A " + shape_of(A));
    require(std::isfinite(lambda) && lambda > 0.0, ErrorCode::invalid_regularizer,
            "FIM regularization needs lambda > 0");

    if (A_prev == A) {
        const ThinSvd svd = thin_svd(A);
        require(svd.rank() == A.cols(), ErrorCode::degenerate_task, "A is rank deficient");
        const double g = 1.0 / (1.0 + lambda);
        const Matrix coeff = g * (B * svd.V * svd.S.cwiseInverse().asDiagonal() - W_prev * svd.U);
        return W_prev + coeff * svd.U.transpose();
    }

    const Eigen::Index n = A.cols();
    const Matrix PtP = A_prev.transpose() * A_prev;
    const Matrix PtA = A_prev.transpose() * A;
    const Matrix AtA = A.transpose() * A;
    Matrix G(2 * n, 2 * n);
    G.topLeftCorner(n, n) = lambda * PtP;
    G.topRightCorner(n, n) = PtA;
    G.bottomLeftCorner(n, n) = lambda * PtA.transpose();
    G.bottomRightCorner(n, n) = AtA;

    Matrix rhs = Matrix::Zero(B.rows(), 2 * n);
    rhs.rightCols(n) = B - W_prev * A;

    // Q G = rhs  <=>  G^T Q^T = rhs^T
    const Eigen::PartialPivLU<Matrix> lu(G.transpose());
    require(lu.rcond() > 1e-13, ErrorCode::near_duplicate_feature,
            "stacked Gram matrix is singular; A_prev and A span nearly the same features");
    const Matrix Q = lu.solve(rhs.transpose()).transpose();
    return W_prev + Q.leftCols(n) * A_prev.transpose() + Q.rightCols(n) * A.transpose();
}

/// Diagonal of the per-row Fisher metric A_prev A_prev^T.
inline Vector diagonal_fisher(const Matrix& A_prev) { return A_prev.rowwise().squaredNorm(); }

/// Minimizer of 1/2 ||B - W A||^2 + lambda/2 sum_ij c_j (w_ij - w_prev_ij)^2
/// with c the diagonal Fisher metric of A_prev. An all-zero metric is the
/// unregularized problem and returns the vanilla fixed point.
inline Matrix fit_reg_fim_diag(const Matrix& W_prev, const Matrix& A_prev, const Matrix& A, const Matrix& B,
                               double lambda) {
    detail::check_shapes(W_prev, A, B);
    require(A_prev.rows() == A.rows() && A_prev.cols() == A.cols(), ErrorCode::shape_mismatch,
            "A_prev " + shape_of(A_prev) + " vs A " + shape_of(A));
    require(std::isfinite(lambda) && lambda > 0.0, ErrorCode::invalid_regularizer,
            "FIM regularization needs lambda > 0");

    const Vector c = diagonal_fisher(A_prev);
    require(c.allFinite(), ErrorCode::degenerate_metric, "diagonal metric has non-finite entries");
    if ((c.array() == 0.0).all()) return fit_vanilla(W_prev, A, B);
    require((c.array() > 0.0).all(), ErrorCode::degenerate_metric,
            "diagonal metric has zero entries; it is not positive definite");

    // (A A^T + lambda C)^-1 pushed through A^T: (lambda I + A^T C^-1 A)^-1 A^T C^-1
    const Matrix AtCi = A.transpose() * c.cwiseInverse().asDiagonal();
    Matrix M = AtCi * A;
    M.diagonal().array() += lambda;
    const Matrix R = B - W_prev * A;
    const Matrix Q = M.llt().solve(R.transpose()).transpose();
    return W_prev + Q * AtCi;
}

inline void soft_threshold_inplace(Matrix& x, double h) {
    require(h >= 0.0, ErrorCode::invalid_input, "threshold must be non-negative");
    if (h == 0.0) return;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double& v = x.data()[i];
        v = v > h ? v - h : (v < -h ? v + h : 0.0);
    }
}

/// Element-wise sgn(x) max(0, |x| - h).
template <typename Derived>
Matrix soft_threshold(const Eigen::MatrixBase<Derived>& x, double h) {
    Matrix out = x;
    soft_threshold_inplace(out, h);
    return out;
}

/// h such that erfc(h / sqrt 2) = alpha, i.e. a standard normal input stays
/// nonzero with probability alpha. Bisection on [0, 10].
inline double threshold_for_density(double alpha, double tol = 1e-10) {
    require(alpha > 0.0 && alpha <= 1.0, ErrorCode::invalid_density, "density must lie in (0, 1]");
    double lo = 0.0;
    double hi = 10.0;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (std::erfc(mid / std::numbers::sqrt2) > alpha) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

/// Monte Carlo error of the soft-threshold student on a fixed latent sample.
inline double error_soft_threshold(const Matrix& W, const Matrix& A, const Matrix& B, double h,
                                   const Matrix& latents) {
    detail::check_shapes(W, A, B);
    double total = 0.0;
    constexpr Eigen::Index chunk = 2048;
    Matrix psi;
    Matrix resid;
    for (Eigen::Index start = 0; start < latents.cols(); start += chunk) {
        const Eigen::Index len = std::min(chunk, latents.cols() - start);
        const auto S = latents.middleCols(start, len);
        psi.noalias() = A * S;
        soft_threshold_inplace(psi, h);
        resid.noalias() = B * S;
        resid.noalias() -= W * psi;
        total += resid.squaredNorm();
    }
    return total / (static_cast<double>(B.rows()) * static_cast<double>(latents.cols()));
}

struct SoftThresholdFit {
    Matrix W;
    double threshold = 0.0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    bool not_converged = false;  // loss did not decrease over the run
};

/// SGD on the Monte Carlo mean-squared loss with a fresh latent batch per step.
inline SoftThresholdFit fit_soft_threshold(const Matrix& W_prev, const Matrix& A, const Matrix& B,
                                           const SoftThresholdOptions& opt, Rng& rng) {
    detail::check_shapes(W_prev, A, B);
    require(opt.n_samples >= 1 && opt.iters >= 1, ErrorCode::invalid_input, "need n_samples, iters >= 1");
    SoftThresholdFit fit;
    fit.threshold = threshold_for_density(opt.alpha);
    fit.W = W_prev;
    const double ny = static_cast<double>(B.rows());
    const auto n = static_cast<Eigen::Index>(opt.n_samples);

    Matrix S(A.cols(), n);
    Matrix psi(A.rows(), n);
    Matrix E(B.rows(), n);
    const double grad_scale = opt.eta * 2.0 / (ny * static_cast<double>(n));
    for (std::size_t it = 0; it < opt.iters; ++it) {
        for (Eigen::Index i = 0; i < S.size(); ++i) S.data()[i] = rng.normal();
        psi.noalias() = A * S;
        soft_threshold_inplace(psi, fit.threshold);
        E.noalias() = fit.W * psi;
        E.noalias() -= B * S;
        const double loss = E.squaredNorm() / (ny * static_cast<double>(n));
        if (it == 0) fit.initial_loss = loss;
        fit.final_loss = loss;
        require(std::isfinite(loss), ErrorCode::instability, "soft-threshold SGD diverged");
        fit.W.noalias() -= grad_scale * E * psi.transpose();
    }
    fit.not_converged = !(fit.final_loss < fit.initial_loss);
    return fit;
}

/// lambda = (N_x / N_s)(1 / gamma - 1).
inline double lambda_from_gamma(double gamma, Eigen::Index n_s, Eigen::Index n_x) {
    require(gamma > 0.0 && gamma <= 1.0, ErrorCode::invalid_regularizer, "gamma must lie in (0, 1]");
    return static_cast<double>(n_x) / static_cast<double>(n_s) * (1.0 / gamma - 1.0);
}

inline double gamma_from_lambda(double lambda, Eigen::Index n_s, Eigen::Index n_x) {
    require(lambda >= 0.0, ErrorCode::invalid_regularizer, "lambda must be non-negative");
    const auto nx = static_cast<double>(n_x);
    return nx / (nx + lambda * static_cast<double>(n_s));
}

// ---------------------------------------------------------------------------
// Iterative full-gradient training

struct LinearTask {
    const Matrix& A;
    const Matrix& B;
    const GateVector* gate = nullptr;  // activity gate, D = I when absent
};

inline double error_of(const Matrix& W, const LinearTask& t) {
    return t.gate ? error_linear(W, t.A, t.B, *t.gate) : error_linear(W, t.A, t.B);
}

/// Quadratic weight penalty lambda/2 * <W - W0, (W - W0) M> anchored at the
/// starting weight W0.
struct GdPenalty {
    enum class Kind { none, euclid, fim, fim_diag } kind = Kind::none;
    double lambda = 0.0;
    const Matrix* A_prev = nullptr;  // metric A_prev A_prev^T for fim / fim_diag
};

struct GdOptions {
    double eta = 0.001;
    std::size_t iters = 100;
    GdPenalty penalty;
    const GateVector* plasticity_gate = nullptr;  // masks gradient columns
};

struct Trajectory {
    std::vector<std::size_t> iteration;
    std::vector<double> task1_error;
    std::vector<double> task2_error;
    std::vector<double> train_error;
};

struct GdResult {
    Matrix W;
    Trajectory trajectory;
};

/// Discrete gradient descent W <- W - (2 eta / N_y) [(W X - B) X_p^T + lambda (W - W0) M]
/// with X = D A and X_p the plasticity-masked X. Errors on both monitored
/// tasks are recorded before the first and after every update.
inline GdResult gd_train(const Matrix& W0, const LinearTask& train, const GdOptions& opt,
                         const LinearTask& task1, const LinearTask& task2) {
    detail::check_shapes(W0, train.A, train.B);
    const Matrix X = train.gate ? Matrix(train.gate->bits.asDiagonal() * train.A) : train.A;
    const Matrix Xp = opt.plasticity_gate ? Matrix(opt.plasticity_gate->bits.asDiagonal() * X) : X;
    const double step = 2.0 * opt.eta / static_cast<double>(train.B.rows());

    Vector diag_metric;
    if (opt.penalty.kind == GdPenalty::Kind::fim || opt.penalty.kind == GdPenalty::Kind::fim_diag) {
        require(opt.penalty.A_prev != nullptr, ErrorCode::precondition, "FIM penalty needs A_prev");
        if (opt.penalty.kind == GdPenalty::Kind::fim_diag) diag_metric = diagonal_fisher(*opt.penalty.A_prev);
    }

    GdResult out{W0, {}};
    auto record = [&](std::size_t it) {
        out.trajectory.iteration.push_back(it);
        out.trajectory.task1_error.push_back(error_of(out.W, task1));
        out.trajectory.task2_error.push_back(error_of(out.W, task2));
        out.trajectory.train_error.push_back(error_of(out.W, train));
    };
    record(0);
    const double initial = std::max(out.trajectory.train_error.front(), 1e-12);

    for (std::size_t it = 1; it <= opt.iters; ++it) {
        Matrix grad = (out.W * X - train.B) * Xp.transpose();
        const double lam = opt.penalty.lambda;
        switch (opt.penalty.kind) {
            case GdPenalty::Kind::none: break;
            case GdPenalty::Kind::euclid: grad += lam * (out.W - W0); break;
            case GdPenalty::Kind::fim:
                grad += lam * ((out.W - W0) * *opt.penalty.A_prev) * opt.penalty.A_prev->transpose();
                break;
            case GdPenalty::Kind::fim_diag: grad += lam * (out.W - W0) * diag_metric.asDiagonal(); break;
        }
        out.W.noalias() -= step * grad;
        record(it);
        const double e = out.trajectory.train_error.back();
        require(std::isfinite(e) && e <= 10.0 * initial, ErrorCode::instability,
                "gradient descent diverged at iteration " + std::to_string(it));
    }
    return out;
}

/// Single-task form with the task itself monitored in both slots.
inline GdResult gd_train(const Matrix& W0, const Matrix& A, const Matrix& B, double eta, std::size_t iters,
                         const GateVector* gate = nullptr) {
    const LinearTask t{A, B, gate};
    return gd_train(W0, t, GdOptions{eta, iters, {}, nullptr}, t, t);
}

}  // namespace students
}  // namespace tslab
