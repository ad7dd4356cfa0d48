#pragma once

// Central-difference check of the MLP backward pass and the regularizer
// gradients on a small network (N_h = 16, 64 inputs, 10 samples).

#include <functional>
#include <string>
#include <vector>

#include "tslab/mnist/mlp.hpp"

namespace tslab::mnist {

struct GradCheck {
    std::string name;
    double max_rel_error = 0.0;  // over parameter blocks, |fd - bp| / |bp|
};

namespace detail {

inline MlpParams central_difference(const std::function<double(const MlpParams&)>& f, const MlpParams& p,
                                    double h) {
    MlpParams g = p.zeros_like();
    auto block = [&](auto member) {
        MlpParams q = p;
        auto& x = q.*member;
        auto& out = g.*member;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double orig = x.data()[i];
            x.data()[i] = orig + h;
            const double up = f(q);
            x.data()[i] = orig - h;
            const double down = f(q);
            x.data()[i] = orig;
            out.data()[i] = (up - down) / (2.0 * h);
        }
    };
    block(&MlpParams::W1);
    block(&MlpParams::b1);
    block(&MlpParams::W2);
    block(&MlpParams::b2);
    return g;
}

inline double rel_error(const Matrix& fd, const Matrix& bp) {
    if (bp.norm() == 0.0) return fd.norm();
    return (fd - bp).norm() / bp.norm();
}

}  // namespace detail

/// Gradient of the full (data + penalty) loss against central differences
/// with step 1e-6 for the plain, gated and three regularized networks.
inline std::vector<GradCheck> gradient_check_suite(std::uint64_t seed = 0) {
    constexpr Eigen::Index n_in = 64, n_h = 16, n_out = 10, n = 10;
    Rng rng{seed, 0x9c};
    MlpParams anchor = init_params(n_in, n_h, n_out, rng);
    // Scaled up from the init so pre-activations sit away from the ReLU kink.
    anchor.W1 *= static_cast<double>(n_h);
    anchor.W2 *= 3.0;
    anchor.b1.setConstant(0.1);
    MlpParams p = anchor;
    p.W1 += tslab::detail::gaussian_matrix(n_h, n_in, 0.05, rng);
    p.W2 += tslab::detail::gaussian_matrix(n_out, n_h, 0.05, rng);
    p.b1 += tslab::detail::gaussian_matrix(n_h, 1, 0.01, rng);
    p.b2 += tslab::detail::gaussian_matrix(n_out, 1, 0.05, rng);
    const Matrix X = tslab::detail::gaussian_matrix(n_in, n, 1.0, rng).cwiseAbs();
    const Matrix Y = tslab::detail::gaussian_matrix(n_out, n, 1.0, rng);
    const MlpGates gates = gen_mlp_gates(n_in, n_h, 0.7, rng);

    struct Case {
        std::string name;
        const MlpGates* gates;
        RegKind reg;
    };
    const std::vector<Case> cases{{"plain", nullptr, RegKind::none},
                                  {"gated", &gates, RegKind::none},
                                  {"euclid", nullptr, RegKind::euclid},
                                  {"fim_layerwise", nullptr, RegKind::fim_layerwise},
                                  {"fim_diag", nullptr, RegKind::fim_diag}};
    std::vector<GradCheck> out;
    for (const Case& c : cases) {
        const Regularizer reg = make_regularizer(c.reg, 0.7, anchor, X);
        const Regularizer* r = c.reg == RegKind::none ? nullptr : &reg;
        MlpParams bp = p.zeros_like();
        regularized_loss_and_grad(p, X, Y, c.gates, r, &bp);
        const MlpParams fd = detail::central_difference(
            [&](const MlpParams& q) { return regularized_loss_and_grad(q, X, Y, c.gates, r, nullptr); }, p, 1e-6);
        const double err = std::max({detail::rel_error(fd.W1, bp.W1), detail::rel_error(fd.b1, bp.b1),
                                     detail::rel_error(fd.W2, bp.W2), detail::rel_error(fd.b2, bp.b2)});
        out.push_back({c.name, err});
    }
    return out;
}

}  // namespace tslab::mnist
