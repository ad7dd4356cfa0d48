#pragma once

// Dense real matrix primitives on top of Eigen, plus the tall-random-matrix
// diagnostics used by the property tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "tslab/error.hpp"

namespace tslab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultRankTol = 1e-10;

/// Thin singular value decomposition M = U diag(S) V^T restricted to the
/// retained singular triplets. S is sorted in descending order.
struct ThinSvd {
    Matrix U;
    Vector S;
    Matrix V;

    [[nodiscard]] Eigen::Index rank() const noexcept { return S.size(); }
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline std::string shape_of(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

/// Keeps the triplets with sigma > rank_tol * sigma_max.
inline ThinSvd thin_svd(const Matrix& M, double rank_tol = kDefaultRankTol) {
    require(M.size() > 0, ErrorCode::invalid_input, "thin_svd of an empty matrix");
    require(all_finite(M), ErrorCode::invalid_input, "thin_svd input has non-finite entries");

    Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double smax = s.size() > 0 ? s(0) : 0.0;
    Eigen::Index keep = 0;
    while (keep < s.size() && s(keep) > rank_tol * smax && s(keep) > 0.0) ++keep;

    ThinSvd out;
    out.U = svd.matrixU().leftCols(keep);
    out.S = s.head(keep);
    out.V = svd.matrixV().leftCols(keep);
    return out;
}

inline Matrix pinv(const ThinSvd& svd) {
    return svd.V * svd.S.cwiseInverse().asDiagonal() * svd.U.transpose();
}

inline Matrix pinv(const Matrix& M, double rank_tol = kDefaultRankTol) {
    return pinv(thin_svd(M, rank_tol));
}

inline double frobenius_sq(const Matrix& M) { return M.squaredNorm(); }

/// ||(1/N_x) A^T A - (1/N_s) I||_F^2 for an N_x-by-N_s matrix A.
inline double gram_deviation(const Matrix& A) {
    const auto nx = static_cast<double>(A.rows());
    const auto ns = static_cast<double>(A.cols());
    Matrix g = A.transpose() * A / nx;
    g.diagonal().array() -= 1.0 / ns;
    return g.squaredNorm();
}

/// Relative Frobenius error of U U^T ~ (N_s / (alpha N_x)) D A A^T D, where U
/// spans the columns of DA and alpha is the nominal gate density. Evaluated
/// through N_s-sized Gram matrices so no N_x-by-N_x product is formed.
inline double projector_approx_error(const Matrix& A, const Vector& gate_bits, double alpha) {
    require(gate_bits.size() == A.rows(), ErrorCode::shape_mismatch,
            "gate length " + std::to_string(gate_bits.size()) + " vs A " + shape_of(A));
    require(alpha > 0.0 && alpha <= 1.0, ErrorCode::invalid_density, "alpha must lie in (0, 1]");
    const Matrix X = gate_bits.asDiagonal() * A;
    const ThinSvd svd = thin_svd(X);
    require(svd.rank() == A.cols(), ErrorCode::degenerate_gate,
            "gated matrix has rank " + std::to_string(svd.rank()) + " < " + std::to_string(A.cols()));

    const double c = static_cast<double>(A.cols()) / (alpha * static_cast<double>(A.rows()));
    const auto r = static_cast<double>(svd.rank());
    const double cross = (svd.U.transpose() * X).squaredNorm();
    const double quartic = (X.transpose() * X).squaredNorm();
    const double err_sq = std::max(0.0, r - 2.0 * c * cross + c * c * quartic);
    return std::sqrt(err_sq / r);
}

inline double projector_approx_error(const Matrix& A) {
    return projector_approx_error(A, Vector::Ones(A.rows()), 1.0);
}

}  // namespace tslab
