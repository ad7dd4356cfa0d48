#pragma once

// One-hidden-layer ReLU network y = b2 + W2 relu(b1 + W1 x) trained by
// mini-batch SGD on the squared loss 1/2 |y - y*|^2, with optional binary
// activity gates on the input and hidden layers and optional quadratic weight
// regularizers anchored at the previous task's weights.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "tslab/error.hpp"
#include "tslab/linalg.hpp"
#include "tslab/mnist/task.hpp"
#include "tslab/rng.hpp"
#include "tslab/taskgen.hpp"

namespace tslab::mnist {

struct MlpParams {
    Matrix W1;  // N_h x N_x
    Vector b1;  // N_h
    Matrix W2;  // N_y x N_h
    Vector b2;  // N_y

    [[nodiscard]] Eigen::Index n_hidden() const { return W1.rows(); }
    [[nodiscard]] Eigen::Index n_in() const { return W1.cols(); }
    [[nodiscard]] Eigen::Index n_out() const { return W2.rows(); }

    static MlpParams zeros(Eigen::Index n_in, Eigen::Index n_hidden, Eigen::Index n_out) {
        return {Matrix::Zero(n_hidden, n_in), Vector::Zero(n_hidden), Matrix::Zero(n_out, n_hidden),
                Vector::Zero(n_out)};
    }

    [[nodiscard]] MlpParams zeros_like() const { return zeros(n_in(), n_hidden(), n_out()); }

    /// this += s * other
    void axpy(double s, const MlpParams& other) {
        W1 += s * other.W1;
        b1 += s * other.b1;
        W2 += s * other.W2;
        b2 += s * other.b2;
    }

    [[nodiscard]] bool all_finite() const {
        return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite();
    }
};

/// Layer 1 entries have variance 1/N_h^2 and layer 2 entries 1/N_y^2.
inline MlpParams init_params(Eigen::Index n_in, Eigen::Index n_hidden, Eigen::Index n_out, Rng& rng) {
    require(n_in >= 1 && n_hidden >= 1 && n_out >= 1, ErrorCode::invalid_input, "layer widths must be positive");
    const double sd1 = 1.0 / static_cast<double>(n_hidden);
    const double sd2 = 1.0 / static_cast<double>(n_out);
    MlpParams p;
    p.W1 = tslab::detail::gaussian_matrix(n_hidden, n_in, sd1, rng);
    p.b1 = tslab::detail::gaussian_matrix(n_hidden, 1, sd1, rng);
    p.W2 = tslab::detail::gaussian_matrix(n_out, n_hidden, sd2, rng);
    p.b2 = tslab::detail::gaussian_matrix(n_out, 1, sd2, rng);
    return p;
}

/// 0/1 masks multiplying the input before W1 and the hidden activity before W2.
struct MlpGates {
    Vector input;
    Vector hidden;
};

inline MlpGates gen_mlp_gates(Eigen::Index n_in, Eigen::Index n_hidden, double alpha, Rng& rng) {
    return {gen_gate(n_in, alpha, rng).bits, gen_gate(n_hidden, alpha, rng).bits};
}

/// Each layer's gate reuses prev's bits with probability rho_g, independently
/// per unit and per layer.
inline MlpGates gen_correlated_mlp_gates(const MlpGates& prev, double rho_g, double alpha, Rng& rng) {
    return {gen_correlated_gate({prev.input, alpha}, rho_g, alpha, rng).bits,
            gen_correlated_gate({prev.hidden, alpha}, rho_g, alpha, rng).bits};
}

struct Forward {
    Matrix pre;     // N_h x n pre-activations
    Matrix hidden;  // N_h x n, relu(pre) times the hidden gate
    Matrix mask;    // N_h x n, relu'(pre) in {0, 1}
    Matrix output;  // N_y x n
};

inline Forward mlp_forward(const MlpParams& p, const Matrix& X, const MlpGates* gates = nullptr) {
    require(X.rows() == p.n_in(), ErrorCode::shape_mismatch, "input width does not match W1");
    Forward f;
    if (gates)
        f.pre.noalias() = p.W1 * (gates->input.asDiagonal() * X);
    else
        f.pre.noalias() = p.W1 * X;
    f.pre.colwise() += p.b1;
    f.mask = (f.pre.array() > 0.0).cast<double>();
    f.hidden = f.pre.cwiseMax(0.0);
    if (gates) f.hidden = gates->hidden.asDiagonal() * f.hidden;
    f.output.noalias() = p.W2 * f.hidden;
    f.output.colwise() += p.b2;
    return f;
}

/// Mean over the batch of 1/2 |y - y*|^2; writes its gradient to `grad` when
/// non-null.
inline double loss_and_grad(const MlpParams& p, const Matrix& X, const Matrix& Y, const MlpGates* gates,
                            MlpParams* grad) {
    require(X.cols() == Y.cols() && X.cols() > 0 && Y.rows() == p.n_out(), ErrorCode::shape_mismatch,
            "batch inputs and targets must align");
    const Forward f = mlp_forward(p, X, gates);
    const double n = static_cast<double>(X.cols());
    const Matrix dY = (f.output - Y) / n;
    const double loss = 0.5 * (f.output - Y).squaredNorm() / n;
    if (grad) {
        grad->W2.noalias() = dY * f.hidden.transpose();
        grad->b2 = dY.rowwise().sum();
        Matrix dH = p.W2.transpose() * dY;
        if (gates) dH = gates->hidden.asDiagonal() * dH;
        dH.array() *= f.mask.array();
        if (gates)
            grad->W1.noalias() = dH * (gates->input.asDiagonal() * X).transpose();
        else
            grad->W1.noalias() = dH * X.transpose();
        grad->b1 = dH.rowwise().sum();
    }
    return loss;
}

/// Test error: mean |y - y*|^2 / N_y, evaluated in column chunks.
inline double test_mse(const MlpParams& p, const TaskData& d, const MlpGates* gates = nullptr) {
    const Eigen::Index n = d.X.cols();
    require(n > 0, ErrorCode::invalid_input, "test_mse needs at least one sample");
    constexpr Eigen::Index kChunk = 2048;
    double total = 0.0;
    for (Eigen::Index start = 0; start < n; start += kChunk) {
        const Eigen::Index len = std::min(kChunk, n - start);
        const Forward f = mlp_forward(p, d.X.middleCols(start, len), gates);
        total += (f.output - d.Y.middleCols(start, len)).squaredNorm();
    }
    return total / (static_cast<double>(n) * static_cast<double>(p.n_out()));
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration: at most 100 steps, stopping at relative change below 1e-8.
inline double spectral_norm_psd(const Matrix& M) {
    require(M.rows() == M.cols(), ErrorCode::shape_mismatch, "spectral_norm_psd needs a square matrix");
    if (M.rows() == 0) return 0.0;
    Vector v(M.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 1.0 + 0.5 * static_cast<double>(i) / static_cast<double>(v.size());
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 100; ++it) {
        Vector w = M * v;
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        const double next = v.dot(w);  // Rayleigh quotient
        v = w / norm;
        const bool done = std::abs(next - lambda) < 1e-8 * next;
        lambda = next;
        if (done) break;
    }
    return lambda;
}

/// Second moments for the layer-wise Fisher approximation, taken at the anchor
/// weights over previous-task inputs.
struct LayerwiseStats {
    Matrix M_x;    // <x x^T>
    Matrix M_phi;  // <phi phi^T>
    Matrix G;      // <diag(phi') W2^T W2 diag(phi')>
    double Z1 = 0.0;  // |W2 W2^T|_2 |M_x|_2
    double Z2 = 0.0;  // |M_phi|_2
};

inline LayerwiseStats layerwise_stats(const MlpParams& anchor, const Matrix& X) {
    require(X.cols() > 0, ErrorCode::precondition, "anchor statistics need samples");
    const Forward f = mlp_forward(anchor, X);
    const double n = static_cast<double>(X.cols());
    LayerwiseStats s;
    s.M_x.noalias() = X * X.transpose() / n;
    s.M_phi.noalias() = f.hidden * f.hidden.transpose() / n;
    const Matrix mask_moment = f.mask * f.mask.transpose() / n;
    s.G = (anchor.W2.transpose() * anchor.W2).cwiseProduct(mask_moment);
    s.Z1 = spectral_norm_psd(anchor.W2 * anchor.W2.transpose()) * spectral_norm_psd(s.M_x);
    s.Z2 = spectral_norm_psd(s.M_phi);
    return s;
}

/// Per-weight factors for the diagonal Fisher approximation:
/// F1_ij = <sum_k (W2_ki phi'_i x_j)^2> and F2_j = <phi_j^2>, normalized by
/// their maxima Z1 and Z2.
struct DiagStats {
    Matrix F1;  // N_h x N_x
    Vector F2;  // N_h
    double Z1 = 0.0;
    double Z2 = 0.0;
};

inline DiagStats diag_stats(const MlpParams& anchor, const Matrix& X) {
    require(X.cols() > 0, ErrorCode::precondition, "anchor statistics need samples");
    const Forward f = mlp_forward(anchor, X);
    const double n = static_cast<double>(X.cols());
    DiagStats s;
    const Vector col_energy = anchor.W2.colwise().squaredNorm().transpose();
    // phi' is 0/1, so (phi'_i)^2 = phi'_i.
    s.F1 = col_energy.asDiagonal() * (f.mask * X.cwiseAbs2().transpose()) / n;
    s.F2 = f.hidden.cwiseAbs2().rowwise().sum() / n;
    s.Z1 = s.F1.maxCoeff();
    s.Z2 = s.F2.maxCoeff();
    return s;
}

/// Gradient of amplitude/2 (|dW1|^2 + |dW2|^2); biases are not regularized.
inline MlpParams reg_euclid_mlp(const MlpParams& p, const MlpParams& anchor, double amplitude) {
    require(amplitude >= 0.0, ErrorCode::invalid_regularizer, "amplitude must be non-negative");
    MlpParams g = p.zeros_like();
    g.W1 = amplitude * (p.W1 - anchor.W1);
    g.W2 = amplitude * (p.W2 - anchor.W2);
    return g;
}

inline double reg_euclid_value(const MlpParams& p, const MlpParams& anchor, double amplitude) {
    return 0.5 * amplitude * ((p.W1 - anchor.W1).squaredNorm() + (p.W2 - anchor.W2).squaredNorm());
}

/// Gradient of amplitude/2 [tr(dW1^T G dW1 M_x)/Z1 + tr(dW2 M_phi dW2^T)/Z2].
/// A layer whose normalizer is zero has a zero metric and contributes nothing.
inline MlpParams reg_fim_layerwise(const MlpParams& p, const MlpParams& anchor, const LayerwiseStats* stats,
                                   double amplitude) {
    require(stats != nullptr, ErrorCode::precondition, "layer-wise FIM needs anchor statistics");
    require(amplitude >= 0.0, ErrorCode::invalid_regularizer, "amplitude must be non-negative");
    MlpParams g = p.zeros_like();
    if (stats->Z1 > 0.0) g.W1.noalias() = (amplitude / stats->Z1) * (stats->G * (p.W1 - anchor.W1) * stats->M_x);
    if (stats->Z2 > 0.0) g.W2.noalias() = (amplitude / stats->Z2) * ((p.W2 - anchor.W2) * stats->M_phi);
    return g;
}

inline double reg_fim_layerwise_value(const MlpParams& p, const MlpParams& anchor, const LayerwiseStats& stats,
                                      double amplitude) {
    const Matrix d1 = p.W1 - anchor.W1;
    const Matrix d2 = p.W2 - anchor.W2;
    double v = 0.0;
    if (stats.Z1 > 0.0) v += (d1.transpose() * stats.G * d1 * stats.M_x).trace() / stats.Z1;
    if (stats.Z2 > 0.0) v += (d2 * stats.M_phi * d2.transpose()).trace() / stats.Z2;
    return 0.5 * amplitude * v;
}

inline void check_diag_stats(const DiagStats* stats) {
    require(stats != nullptr, ErrorCode::precondition, "diagonal FIM needs anchor statistics");
    require(stats->Z1 > 0.0 && stats->Z2 > 0.0, ErrorCode::degenerate_metric,
            "diagonal FIM normalizer is zero at the anchor");
}

inline MlpParams reg_fim_diag(const MlpParams& p, const MlpParams& anchor, const DiagStats* stats,
                              double amplitude) {
    check_diag_stats(stats);
    require(amplitude >= 0.0, ErrorCode::invalid_regularizer, "amplitude must be non-negative");
    MlpParams g = p.zeros_like();
    g.W1 = (amplitude / stats->Z1) * stats->F1.cwiseProduct(p.W1 - anchor.W1);
    g.W2 = (amplitude / stats->Z2) * ((p.W2 - anchor.W2) * stats->F2.asDiagonal());
    return g;
}

inline double reg_fim_diag_value(const MlpParams& p, const MlpParams& anchor, const DiagStats& stats,
                                 double amplitude) {
    check_diag_stats(&stats);
    const double v1 = stats.F1.cwiseProduct((p.W1 - anchor.W1).cwiseAbs2()).sum() / stats.Z1;
    const double v2 = ((p.W2 - anchor.W2).cwiseAbs2() * stats.F2).sum() / stats.Z2;
    return 0.5 * amplitude * (v1 + v2);
}

enum class RegKind { none, euclid, fim_layerwise, fim_diag };

/// A quadratic penalty anchored at the previous task's final weights.
struct Regularizer {
    RegKind kind = RegKind::none;
    double amplitude = 0.0;
    MlpParams anchor;
    std::optional<LayerwiseStats> layerwise;
    std::optional<DiagStats> diag;

    [[nodiscard]] double value(const MlpParams& p) const {
        switch (kind) {
            case RegKind::none: return 0.0;
            case RegKind::euclid: return reg_euclid_value(p, anchor, amplitude);
            case RegKind::fim_layerwise:
                require(layerwise.has_value(), ErrorCode::precondition, "layer-wise FIM needs anchor statistics");
                return reg_fim_layerwise_value(p, anchor, *layerwise, amplitude);
            case RegKind::fim_diag:
                require(diag.has_value(), ErrorCode::precondition, "diagonal FIM needs anchor statistics");
                return reg_fim_diag_value(p, anchor, *diag, amplitude);
        }
        return 0.0;
    }

    void add_gradient(const MlpParams& p, MlpParams& grad) const {
        switch (kind) {
            case RegKind::none: return;
            case RegKind::euclid: grad.axpy(1.0, reg_euclid_mlp(p, anchor, amplitude)); return;
            case RegKind::fim_layerwise:
                grad.axpy(1.0, reg_fim_layerwise(p, anchor, layerwise ? &*layerwise : nullptr, amplitude));
                return;
            case RegKind::fim_diag:
                grad.axpy(1.0, reg_fim_diag(p, anchor, diag ? &*diag : nullptr, amplitude));
                return;
        }
    }
};

/// Builds a regularizer anchored at `anchor`, estimating the metric from the
/// columns of X (previous-task inputs).
inline Regularizer make_regularizer(RegKind kind, double amplitude, const MlpParams& anchor, const Matrix& X) {
    Regularizer r{kind, amplitude, anchor, std::nullopt, std::nullopt};
    if (kind == RegKind::fim_layerwise) r.layerwise = layerwise_stats(anchor, X);
    if (kind == RegKind::fim_diag) {
        r.diag = diag_stats(anchor, X);
        check_diag_stats(&*r.diag);
    }
    return r;
}

/// Data loss plus penalty, with the gradient of both when grad is non-null.
inline double regularized_loss_and_grad(const MlpParams& p, const Matrix& X, const Matrix& Y, const MlpGates* gates,
                                        const Regularizer* reg, MlpParams* grad) {
    double loss = loss_and_grad(p, X, Y, gates, grad);
    if (reg) {
        loss += reg->value(p);
        if (grad) reg->add_gradient(p, *grad);
    }
    return loss;
}

struct SgdOptions {
    Eigen::Index batch = 300;
    double eta = 0.01;
};

inline constexpr double kDivergenceLoss = 1e3;

/// One pass over shuffled mini-batches (the last batch may be short). Returns
/// the sample-weighted mean data loss over the epoch.
inline double sgd_epoch(MlpParams& p, const TaskData& data, const MlpGates* gates, const Regularizer* reg,
                        const SgdOptions& opt, Rng& rng) {
    const Eigen::Index n = data.X.cols();
    require(opt.batch >= 1 && opt.batch <= n, ErrorCode::invalid_input,
            "batch size must lie in [1, " + std::to_string(n) + "]");
    require(opt.eta >= 0.0, ErrorCode::invalid_input, "learning rate must be non-negative");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    rng.shuffle(std::span<Eigen::Index>(order));

    MlpParams grad = p.zeros_like();
    Matrix Xb(data.X.rows(), opt.batch);
    Matrix Yb(data.Y.rows(), opt.batch);
    double total = 0.0;
    for (Eigen::Index start = 0; start < n; start += opt.batch) {
        const Eigen::Index len = std::min(opt.batch, n - start);
        Xb.resize(Eigen::NoChange, len);
        Yb.resize(Eigen::NoChange, len);
        for (Eigen::Index k = 0; k < len; ++k) {
            const Eigen::Index idx = order[static_cast<std::size_t>(start + k)];
            Xb.col(k) = data.X.col(idx);
            Yb.col(k) = data.Y.col(idx);
        }
        const double loss = loss_and_grad(p, Xb, Yb, gates, &grad);
        require(std::isfinite(loss) && loss <= kDivergenceLoss, ErrorCode::instability,
                "training loss diverged (" + std::to_string(loss) + ")");
        if (reg) reg->add_gradient(p, grad);
        p.axpy(-opt.eta, grad);
        total += loss * static_cast<double>(len);
    }
    return total / static_cast<double>(n);
}

}  // namespace tslab::mnist
