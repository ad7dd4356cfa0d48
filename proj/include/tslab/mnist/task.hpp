#pragma once

// Permuted MNIST with a 4-dimensional binary latent. A task is a pixel
// permutation plus a 10 x 4 readout B; the target of digit d is
// B (s(d) - 1/2) where s(d) is the 4-bit binary expansion of d.

#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "tslab/error.hpp"
#include "tslab/linalg.hpp"
#include "tslab/mnist/idx.hpp"
#include "tslab/rng.hpp"

namespace tslab::mnist {

inline constexpr Eigen::Index kLatentDim = 4;
inline constexpr Eigen::Index kOutputDim = 10;

struct MnistLatentTask {
    std::vector<int> permutation;  // task input pixel i reads raw pixel permutation[i]
    Matrix B;                      // 10 x 4
    double rho_a = 1.0;
    double rho_b = 1.0;
};

/// Big-endian binary expansion: 9 -> (1, 0, 0, 1).
inline Vector latent_of_digit(int d) {
    require(d >= 0 && d <= 9, ErrorCode::invalid_input, "digit must lie in 0..9, got " + std::to_string(d));
    Vector s(kLatentDim);
    for (Eigen::Index k = 0; k < kLatentDim; ++k) s(k) = (d >> (kLatentDim - 1 - k)) & 1;
    return s;
}

inline Vector make_target(int d, const Matrix& B) {
    require(B.rows() == kOutputDim && B.cols() == kLatentDim, ErrorCode::shape_mismatch, "B must be 10 x 4");
    return B * (latent_of_digit(d).array() - 0.5).matrix();
}

/// Identity permutation and an i.i.d. standard normal readout.
inline MnistLatentTask gen_first_task(Rng& rng) {
    MnistLatentTask t;
    t.permutation.resize(kPixels);
    std::iota(t.permutation.begin(), t.permutation.end(), 0);
    t.B = Matrix(kOutputDim, kLatentDim);
    for (Eigen::Index j = 0; j < t.B.cols(); ++j)
        for (Eigen::Index i = 0; i < t.B.rows(); ++i) t.B(i, j) = rng.normal();
    return t;
}

/// Shuffles round((1 - rho_a) 784) uniformly chosen pixel positions among
/// themselves and keeps round(rho_b 40) uniformly chosen entries of B.
inline MnistLatentTask gen_successor_task(const MnistLatentTask& prev, double rho_a, double rho_b, Rng& rng) {
    require(rho_a >= 0.0 && rho_a <= 1.0 && rho_b >= 0.0 && rho_b <= 1.0, ErrorCode::invalid_input,
            "similarities must lie in [0, 1]");
    MnistLatentTask t{prev.permutation, prev.B, rho_a, rho_b};

    std::vector<int> positions(kPixels);
    std::iota(positions.begin(), positions.end(), 0);
    rng.shuffle(std::span<int>(positions));
    const auto moved = static_cast<std::size_t>(std::lround((1.0 - rho_a) * static_cast<double>(kPixels)));
    std::vector<int> chosen(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(moved));
    std::vector<int> images = chosen;
    rng.shuffle(std::span<int>(images));
    for (std::size_t k = 0; k < moved; ++k)
        t.permutation[static_cast<std::size_t>(chosen[k])] = prev.permutation[static_cast<std::size_t>(images[k])];

    const Eigen::Index entries = prev.B.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(entries));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    rng.shuffle(std::span<Eigen::Index>(order));
    const auto kept = static_cast<std::size_t>(std::lround(rho_b * static_cast<double>(entries)));
    for (std::size_t k = kept; k < order.size(); ++k) t.B.data()[order[k]] = rng.normal();
    return t;
}

/// Pixel-permuted copy of the images: row i of the result is row
/// permutation[i] of the input.
inline Matrix permute_inputs(const Matrix& images, const std::vector<int>& permutation) {
    require(static_cast<Eigen::Index>(permutation.size()) == images.rows(), ErrorCode::shape_mismatch,
            "permutation length must match the pixel count");
    Matrix out(images.rows(), images.cols());
    for (Eigen::Index n = 0; n < images.cols(); ++n)
        for (Eigen::Index i = 0; i < images.rows(); ++i) out(i, n) = images(permutation[static_cast<std::size_t>(i)], n);
    return out;
}

/// 10 x n target matrix for the given labels.
inline Matrix make_targets(const std::vector<std::uint8_t>& labels, const Matrix& B) {
    Matrix S(kLatentDim, static_cast<Eigen::Index>(labels.size()));
    for (std::size_t n = 0; n < labels.size(); ++n)
        S.col(static_cast<Eigen::Index>(n)) = latent_of_digit(labels[n]).array() - 0.5;
    return B * S;
}

/// Inputs and targets of one task on one dataset split.
struct TaskData {
    Matrix X;  // 784 x n
    Matrix Y;  // 10 x n
    std::vector<std::uint8_t> labels;
};

inline TaskData task_data(const Dataset& d, const MnistLatentTask& t) {
    return {permute_inputs(d.images, t.permutation), make_targets(d.labels, t.B), d.labels};
}

/// Fraction of outputs whose nearest target (Euclidean) is the true digit's.
inline double nearest_target_accuracy(const Matrix& outputs, const std::vector<std::uint8_t>& labels, const Matrix& B) {
    require(outputs.cols() == static_cast<Eigen::Index>(labels.size()), ErrorCode::shape_mismatch,
            "one output column per label");
    if (labels.empty()) return 0.0;
    Matrix targets(kOutputDim, 10);
    for (int d = 0; d < 10; ++d) targets.col(d) = make_target(d, B);
    std::size_t hits = 0;
    for (Eigen::Index n = 0; n < outputs.cols(); ++n) {
        Eigen::Index best = 0;
        (targets.colwise() - outputs.col(n)).colwise().squaredNorm().minCoeff(&best);
        if (best == labels[static_cast<std::size_t>(n)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace tslab::mnist
