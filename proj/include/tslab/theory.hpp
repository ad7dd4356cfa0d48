#pragma once

// Closed-form transfer and retention predictions for the linear model in the
// limit N_s << alpha N_x, plus prior averages and the gating phase map.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tslab/error.hpp"
#include "tslab/rng.hpp"

namespace tslab::theory {

struct SimilarityPoint {
    double rho_a = 0.0;
    double rho_b = 0.0;

    void validate() const {
        require(rho_a >= 0.0 && rho_a <= 1.0 && rho_b >= 0.0 && rho_b <= 1.0, ErrorCode::invalid_input,
                "similarity point must lie in [0, 1]^2");
    }
};

struct Prediction {
    double transfer = 0.0;
    double retention = 0.0;
    bool valid = true;
    std::string message;
};

using Predictor = std::function<Prediction(SimilarityPoint)>;

inline Prediction vanilla(SimilarityPoint p) {
    p.validate();
    const double a = p.rho_a;
    const double b = p.rho_b;
    return {a * (2.0 * b - a), 1.0 - a * a * (a * a - 2.0 * a * b + 1.0), true, {}};
}

/// Optional dimensions for the asymptotic validity check of the gated forms.
struct Dims {
    double n_s = 0.0;
    double n_x = 0.0;
};

inline Prediction gated(double alpha_eff, SimilarityPoint p, Dims dims = {}) {
    require(alpha_eff > 0.0 && alpha_eff <= 1.0, ErrorCode::invalid_density, "alpha_eff must lie in (0, 1]");
    p.validate();
    const double k = alpha_eff * p.rho_a;
    const double b = p.rho_b;
    Prediction out{k * (2.0 * b - k), 1.0 - k * k * (k * k - 2.0 * k * b + 1.0), true, {}};
    if (dims.n_x > 0.0 && alpha_eff * dims.n_x <= 10.0 * dims.n_s) {
        out.valid = false;
        out.message = "alpha N_x is not large compared with N_s";
    }
    return out;
}

/// Per-task optimal density for transfer, min(rho_b / rho_a, 1); 1 when rho_a = 0.
inline double optimal_alpha_transfer(SimilarityPoint p) {
    p.validate();
    if (p.rho_a == 0.0) return 1.0;
    return std::min(p.rho_b / p.rho_a, 1.0);
}

/// Effective density when the second gate reuses the first with probability
/// rho_g = 1 - <probe error> (clamped at zero).
inline double adaptive_alpha_eff(double alpha, SimilarityPoint p) {
    require(alpha > 0.0 && alpha <= 1.0, ErrorCode::invalid_density, "alpha must lie in (0, 1]");
    p.validate();
    if (2.0 * p.rho_b < p.rho_a) return alpha;
    return alpha + (1.0 - alpha) * p.rho_a * (2.0 * p.rho_b - p.rho_a);
}

inline Prediction euclid(double gamma, SimilarityPoint p) {
    require(gamma > 0.0 && gamma <= 1.0, ErrorCode::invalid_regularizer, "gamma must lie in (0, 1]");
    p.validate();
    const double g = gamma;
    const double a = p.rho_a;
    const double b = p.rho_b;
    const double k = g * a;
    const double transfer = k * (2.0 * b - k);
    const double retention = 1.0 - k * k * (1.0 - 2.0 * k * b + k * k) + 2.0 * k * (1.0 - g) * (b - k) -
                             (1.0 - g) * (1.0 - g);
    return {transfer, retention, true, {}};
}

/// Fisher-metric regularization with distinct features (rho_a < 1).
inline Prediction fim(SimilarityPoint p, double n_s, double n_x) {
    p.validate();
    require(p.rho_a < 1.0, ErrorCode::precondition, "rho_a = 1 needs the fixed-feature prediction");
    Prediction out = vanilla(p);
    out.retention = 1.0;
    if (n_s > 0.1 * n_x * (1.0 - p.rho_a * p.rho_a)) {
        out.valid = false;
        out.message = "N_s is not small compared with N_x (1 - rho_a^2)";
    }
    return out;
}

/// Fisher-metric regularization with identical features, g = 1 / (1 + lambda).
/// Without a regularized first task, W1 is the plain fixed point and the
/// second fit starts from it.
inline Prediction fim_fixed_feature(double gamma_f, double rho_b, bool first_task_regularized) {
    require(gamma_f > 0.0 && gamma_f <= 1.0, ErrorCode::invalid_regularizer, "gamma_f must lie in (0, 1]");
    require(rho_b >= 0.0 && rho_b <= 1.0, ErrorCode::invalid_input, "rho_b must lie in [0, 1]");
    const double g = gamma_f;
    const double h = 1.0 - g;
    if (first_task_regularized) {
        const double transfer = g * (2.0 * rho_b - g);
        // W2 A = g (1 - g) B1 + g B2, so the residual on task 1 is (1 - g + g^2) B1 - g B2.
        const double retention = 2.0 * g * h * h - g * g * g * g + 2.0 * g * (1.0 - g + g * g) * rho_b;
        return {transfer, retention, true, {}};
    }
    return {2.0 * rho_b - 1.0, 1.0 - 2.0 * g * g * (1.0 - rho_b), true, {}};
}

/// Gated prediction at the per-task optimal density. Transfer there is
/// rho_b^2 below the diagonal; rho_b = 0 takes the alpha -> 0 limit.
inline Prediction gated_optimal(SimilarityPoint p) {
    const double alpha = optimal_alpha_transfer(p);
    if (alpha > 0.0) return gated(alpha, p);
    return {0.0, 1.0, true, {}};
}

// ---------------------------------------------------------------------------
// Averages over the uniform prior on [0, 1]^2

struct PriorAverage {
    double transfer = 0.0;
    double retention = 0.0;
};

/// Composite 4-point Gauss-Legendre rule on quadrature_n cells per axis.
inline PriorAverage uniform_prior_average(const Predictor& predictor, std::size_t quadrature_n = 100) {
    require(quadrature_n >= 100, ErrorCode::invalid_input, "quadrature needs at least 100 cells per axis");
    const double r1 = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
    const double r2 = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
    const double w1 = (18.0 + std::sqrt(30.0)) / 36.0;
    const double w2 = (18.0 - std::sqrt(30.0)) / 36.0;
    const std::array<double, 4> nodes{-r2, -r1, r1, r2};
    const std::array<double, 4> weights{w2, w1, w1, w2};

    const double h = 1.0 / static_cast<double>(quadrature_n);
    std::vector<double> xs;
    std::vector<double> ws;
    xs.reserve(4 * quadrature_n);
    ws.reserve(4 * quadrature_n);
    for (std::size_t c = 0; c < quadrature_n; ++c) {
        const double mid = (static_cast<double>(c) + 0.5) * h;
        for (std::size_t q = 0; q < 4; ++q) {
            xs.push_back(mid + 0.5 * h * nodes[q]);
            ws.push_back(0.5 * h * weights[q]);
        }
    }
    PriorAverage avg;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 0; j < xs.size(); ++j) {
            const Prediction pr = predictor({xs[i], xs[j]});
            const double w = ws[i] * ws[j];
            avg.transfer += w * pr.transfer;
            avg.retention += w * pr.retention;
        }
    }
    return avg;
}

/// n similarity pairs drawn uniformly on [0, 1]^2. A square n uses a jittered
/// sqrt(n) x sqrt(n) grid, any other n a Latin hypercube; both are unbiased
/// and have lower variance than independent draws.
inline std::vector<SimilarityPoint> sample_uniform_pairs(std::size_t n, Rng& rng) {
    require(n >= 1, ErrorCode::invalid_input, "need at least one pair");
    std::vector<SimilarityPoint> pts;
    pts.reserve(n);
    const auto k = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (k * k == n) {
        const double h = 1.0 / static_cast<double>(k);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                pts.push_back({(static_cast<double>(i) + rng.uniform()) * h, (static_cast<double>(j) + rng.uniform()) * h});
        return pts;
    }
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(std::span<std::size_t>(perm));
    const double h = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        pts.push_back({(static_cast<double>(i) + rng.uniform()) * h, (static_cast<double>(perm[i]) + rng.uniform()) * h});
    return pts;
}

/// Monte Carlo prior average over sampled pairs.
inline PriorAverage sampled_prior_average(const Predictor& predictor, const std::vector<SimilarityPoint>& pts) {
    require(!pts.empty(), ErrorCode::invalid_input, "no similarity pairs");
    PriorAverage avg;
    for (const auto& p : pts) {
        const Prediction pr = predictor(p);
        avg.transfer += pr.transfer;
        avg.retention += pr.retention;
    }
    avg.transfer /= static_cast<double>(pts.size());
    avg.retention /= static_cast<double>(pts.size());
    return avg;
}

/// Prior-averaged gated transfer alpha/2 - alpha^2/3 peaks at alpha = 3/4.
constexpr double optimal_alpha_average_transfer() noexcept { return 0.75; }

inline PriorAverage gated_prior_average(double alpha) {
    require(alpha > 0.0 && alpha <= 1.0, ErrorCode::invalid_density, "alpha must lie in (0, 1]");
    const double a2 = alpha * alpha;
    return {alpha / 2.0 - a2 / 3.0, 1.0 - a2 / 3.0 + a2 * alpha / 4.0 - a2 * a2 / 5.0};
}

// ---------------------------------------------------------------------------
// Phase of the retention dependence on alpha

enum class GatingPhase { tradeoff, high_alpha_retention, no_benefit };

constexpr std::string_view to_string(GatingPhase ph) noexcept {
    switch (ph) {
        case GatingPhase::tradeoff: return "tradeoff";
        case GatingPhase::high_alpha_retention: return "high-alpha-retention";
        case GatingPhase::no_benefit: return "no-benefit";
    }
    return "unknown";
}

inline GatingPhase gating_phase(SimilarityPoint p) {
    p.validate();
    if (p.rho_b < p.rho_a) return GatingPhase::no_benefit;
    if (p.rho_a == 0.0) return GatingPhase::tradeoff;
    const bool curve = p.rho_b >= 2.0 * p.rho_a / 3.0 + 1.0 / (3.0 * p.rho_a);
    const bool corner = p.rho_b >= 2.0 * std::numbers::sqrt2 / 3.0 && p.rho_a >= 1.0 / std::numbers::sqrt2;
    return curve || corner ? GatingPhase::high_alpha_retention : GatingPhase::tradeoff;
}

// ---------------------------------------------------------------------------
// Numeric optimum of the Euclidean retention over gamma

struct GammaOptimum {
    double gamma = 1.0;
    double retention = 0.0;
};

/// Dense scan of gamma in (0, 1] followed by golden-section refinement around
/// the best grid point.
inline GammaOptimum euclid_optimal_gamma_retention(SimilarityPoint p, std::size_t grid = 1000) {
    require(grid >= 10, ErrorCode::invalid_input, "grid too coarse");
    auto f = [&](double g) { return euclid(g, p).retention; };
    const double step = 1.0 / static_cast<double>(grid);
    GammaOptimum best{1.0, f(1.0)};
    for (std::size_t i = 1; i < grid; ++i) {
        const double g = static_cast<double>(i) * step;
        const double r = f(g);
        if (r > best.retention) best = {g, r};
    }
    double lo = std::max(best.gamma - step, 1e-12);
    double hi = std::min(best.gamma + step, 1.0);
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - phi * (hi - lo);
    double x2 = lo + phi * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    while (hi - lo > 1e-12) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        }
    }
    const double g = 0.5 * (lo + hi);
    if (f(g) > best.retention) best = {g, f(g)};
    return best;
}

}  // namespace tslab::theory
