#pragma once

// Seeded generation of correlated teacher task pairs, binary gates and latent
// samples for the linear teacher-student model.

#include <cmath>
#include <cstdint>
#include <string>

#include "tslab/error.hpp"
#include "tslab/linalg.hpp"
#include "tslab/rng.hpp"

namespace tslab {

struct EnsembleConfig {
    Eigen::Index n_s = 30;
    Eigen::Index n_x = 3000;
    Eigen::Index n_y = 10;
    double rho_a = 0.0;
    double rho_b = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        require(n_s >= 1 && n_x >= n_s && n_y >= 1, ErrorCode::invalid_input,
                "dimensions must satisfy N_s >= 1, N_x >= N_s, N_y >= 1");
        require(rho_a >= 0.0 && rho_a <= 1.0, ErrorCode::invalid_input, "rho_a must lie in [0, 1]");
        require(rho_b >= 0.0 && rho_b <= 1.0, ErrorCode::invalid_input, "rho_b must lie in [0, 1]");
    }
};

/// The four teacher matrices of one two-task episode.
struct TaskPair {
    Matrix A1, A2;  // N_x x N_s
    Matrix B1, B2;  // N_y x N_s
    EnsembleConfig config;
};

/// Binary per-input-unit gate stored as 0/1 doubles so it can scale rows directly.
struct GateVector {
    Vector bits;
    double alpha = 1.0;

    [[nodiscard]] Eigen::Index size() const noexcept { return bits.size(); }
    [[nodiscard]] Eigen::Index popcount() const { return static_cast<Eigen::Index>(bits.sum()); }
    [[nodiscard]] double density() const { return bits.size() ? bits.mean() : 0.0; }

    static GateVector ones(Eigen::Index n) { return {Vector::Ones(n), 1.0}; }
};

namespace detail {

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
    return m;
}

// Each entry keeps the parent value with probability rho, otherwise takes the
// fresh draw. The keep and fresh streams are consumed in full for every rho so
// that cells differing only in rho share their random numbers.
inline Matrix keep_or_resample(const Matrix& parent, double rho, double stddev, Rng& keep_rng, Rng& fresh_rng) {
    if (rho == 1.0) return parent;
    Matrix out(parent.rows(), parent.cols());
    for (Eigen::Index j = 0; j < parent.cols(); ++j) {
        for (Eigen::Index i = 0; i < parent.rows(); ++i) {
            const double u = keep_rng.uniform();
            const double fresh = stddev * fresh_rng.normal();
            out(i, j) = u < rho ? parent(i, j) : fresh;
        }
    }
    return out;
}

}  // namespace detail

inline TaskPair gen_task_pair(const EnsembleConfig& cfg) {
    cfg.validate();
    const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.n_s));
    Rng a1_rng{cfg.seed, key_of(Stream::a1)};
    Rng b1_rng{cfg.seed, key_of(Stream::b1)};
    Rng a2_keep{cfg.seed, key_of(Stream::a2_keep)};
    Rng a2_fresh{cfg.seed, key_of(Stream::a2_fresh)};
    Rng b2_keep{cfg.seed, key_of(Stream::b2_keep)};
    Rng b2_fresh{cfg.seed, key_of(Stream::b2_fresh)};

    TaskPair tp;
    tp.config = cfg;
    tp.A1 = detail::gaussian_matrix(cfg.n_x, cfg.n_s, sd, a1_rng);
    tp.B1 = detail::gaussian_matrix(cfg.n_y, cfg.n_s, sd, b1_rng);
    tp.A2 = detail::keep_or_resample(tp.A1, cfg.rho_a, sd, a2_keep, a2_fresh);
    tp.B2 = detail::keep_or_resample(tp.B1, cfg.rho_b, sd, b2_keep, b2_fresh);
    return tp;
}

inline GateVector gen_gate(Eigen::Index n_x, double alpha, Rng& rng) {
    require(alpha > 0.0 && alpha <= 1.0, ErrorCode::invalid_density,
            "gate density must lie in (0, 1], got " + std::to_string(alpha));
    GateVector g{Vector(n_x), alpha};
    for (Eigen::Index i = 0; i < n_x; ++i) g.bits(i) = rng.bernoulli(alpha) ? 1.0 : 0.0;
    return g;
}

/// Each bit is copied from prev with probability rho_g, else redrawn as
/// Bernoulli(alpha). The expected overlap among prev's active units is
/// rho_g + (1 - rho_g) alpha.
inline GateVector gen_correlated_gate(const GateVector& prev, double rho_g, double alpha, Rng& rng) {
    require(rho_g >= 0.0 && rho_g <= 1.0, ErrorCode::invalid_input, "rho_g must lie in [0, 1]");
    require(alpha > 0.0 && alpha <= 1.0, ErrorCode::invalid_density, "gate density must lie in (0, 1]");
    GateVector g{Vector(prev.size()), alpha};
    for (Eigen::Index i = 0; i < prev.size(); ++i) {
        const double keep = rng.uniform();
        const bool fresh = rng.bernoulli(alpha);
        g.bits(i) = keep < rho_g ? prev.bits(i) : (fresh ? 1.0 : 0.0);
    }
    return g;
}

/// Realized overlap |g1 and g2| / |g1|.
inline double gate_overlap(const GateVector& g1, const GateVector& g2) {
    const double active = g1.bits.sum();
    return active > 0 ? g1.bits.cwiseProduct(g2.bits).sum() / active : 0.0;
}

/// N_s x n matrix of i.i.d. standard normal latent columns.
inline Matrix sample_latents(Eigen::Index n_s, Eigen::Index n, Rng& rng) {
    require(n >= 1 && n_s >= 1, ErrorCode::invalid_input, "sample_latents needs n >= 1");
    return detail::gaussian_matrix(n_s, n, 1.0, rng);
}

}  // namespace tslab
