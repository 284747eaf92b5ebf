#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gadd/common.hpp"
#include "gadd/state_space.hpp"

namespace gadd {

// ---------------------------------------------------------------------------
// Uniform-rate forward CTMC. Every token jumps to each other value at rate
// 1/S, independently of the others, so the d-token kernel factorizes into a
// single closed-form S x S kernel applied per axis.
// ---------------------------------------------------------------------------

/// Entry of the S^d x S^d generator. 1/S on Hamming-1 pairs, 0 at distance
/// >= 2, and -d(S-1)/S on the diagonal.
inline double rate_entry(const Sequence& x, const Sequence& y, const StateSpaceSpec& spec) {
    validate_sequence(x, spec);
    validate_sequence(y, spec);
    const int h = hamming(x, y);
    if (h == 1) return 1.0 / static_cast<double>(spec.S);
    if (h >= 2) return 0.0;
    return -static_cast<double>(spec.d) * static_cast<double>(spec.S - 1) /
           static_cast<double>(spec.S);
}

/// Per-token transition kernel at elapsed time t:
///   p_stay   = (1 + (S-1) e^{-t}) / S
///   p_switch = (1 - e^{-t}) / S      (to one specific other token)
/// so p_stay + (S-1) p_switch = 1.
struct TokenKernel {
    double t = 0.0;
    int S = 2;
    double p_stay = 1.0;
    double p_switch = 0.0;
};

inline TokenKernel token_kernel(double t, int S) {
    if (S < 2) throw InvalidConfig("token_kernel: S must be >= 2");
    if (!(t >= 0.0)) throw InvalidTime("token_kernel: t must be >= 0");
    const double e = std::exp(-t);
    TokenKernel k;
    k.t = t;
    k.S = S;
    k.p_stay = (1.0 + static_cast<double>(S - 1) * e) / static_cast<double>(S);
    k.p_switch = (1.0 - e) / static_cast<double>(S);
    return k;
}

// ---------------------------------------------------------------------------
// Dense matrix exponential by scaling and squaring with a Taylor core.
// Kept in-house as the numerical oracle that the closed-form kernel is
// validated against; sized for the per-token S x S generator.
// ---------------------------------------------------------------------------

inline std::vector<double> expm_dense(const std::vector<double>& a, int n) {
    if (n < 1 || a.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
        throw InvalidConfig("expm_dense: bad dimensions");

    double norm = 0.0;  // max row sum of |a|
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) row += std::abs(a[static_cast<std::size_t>(i) * n + j]);
        norm = std::max(norm, row);
    }
    int squarings = 0;
    double scale = 1.0;
    while (norm * scale > 0.5) {
        scale *= 0.5;
        ++squarings;
    }

    const std::size_t nn = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    std::vector<double> scaled(nn);
    for (std::size_t k = 0; k < nn; ++k) scaled[k] = a[k] * scale;

    auto matmul = [n, nn](const std::vector<double>& x, const std::vector<double>& y) {
        std::vector<double> z(nn, 0.0);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) {
                const double xv = x[static_cast<std::size_t>(i) * n + k];
                if (xv == 0.0) continue;
                for (int j = 0; j < n; ++j)
                    z[static_cast<std::size_t>(i) * n + j] +=
                        xv * y[static_cast<std::size_t>(k) * n + j];
            }
        return z;
    };

    // Taylor series at norm <= 0.5: 24 terms puts truncation below 1e-18.
    std::vector<double> result(nn, 0.0);
    for (int i = 0; i < n; ++i) result[static_cast<std::size_t>(i) * n + i] = 1.0;
    std::vector<double> term = result;
    for (int k = 1; k <= 24; ++k) {
        term = matmul(term, scaled);
        for (std::size_t idx = 0; idx < nn; ++idx) term[idx] /= static_cast<double>(k);
        for (std::size_t idx = 0; idx < nn; ++idx) result[idx] += term[idx];
    }
    for (int s = 0; s < squarings; ++s) result = matmul(result, result);
    return result;
}

/// The S x S per-token generator: off-diagonal 1/S, diagonal -(S-1)/S.
inline std::vector<double> token_generator(int S) {
    if (S < 2) throw InvalidConfig("token_generator: S must be >= 2");
    std::vector<double> g(static_cast<std::size_t>(S) * static_cast<std::size_t>(S),
                          1.0 / static_cast<double>(S));
    for (int i = 0; i < S; ++i)
        g[static_cast<std::size_t>(i) * S + i] = -static_cast<double>(S - 1) / static_cast<double>(S);
    return g;
}

/// Numerically exponentiated per-token kernel; oracle for token_kernel.
inline std::vector<double> token_kernel_numerical(double t, int S) {
    if (!(t >= 0.0)) throw InvalidTime("token_kernel_numerical: t must be >= 0");
    std::vector<double> g = token_generator(S);
    for (double& v : g) v *= t;
    return expm_dense(g, S);
}

// ---------------------------------------------------------------------------
// Exact marginal evolution and trajectory sampling.
// ---------------------------------------------------------------------------

namespace detail {

/// Applies the per-token kernel along one axis of a dense law in place.
/// Uses the fiber identity new[a] = (p_stay - p_switch) old[a] + p_switch * fiber_sum.
inline void apply_token_kernel_axis(std::vector<double>& mass, const StateSpaceSpec& spec,
                                    int axis, const TokenKernel& k) {
    const std::uint64_t n = mass.size();
    std::uint64_t stride = 1;
    for (int i = 0; i < axis; ++i) stride *= static_cast<std::uint64_t>(spec.S);
    const std::uint64_t block = stride * static_cast<std::uint64_t>(spec.S);
    const double diff = k.p_stay - k.p_switch;
    for (std::uint64_t base = 0; base < n; base += block) {
        for (std::uint64_t off = 0; off < stride; ++off) {
            double fiber_sum = 0.0;
            for (int a = 0; a < spec.S; ++a)
                fiber_sum += mass[base + off + static_cast<std::uint64_t>(a) * stride];
            for (int a = 0; a < spec.S; ++a) {
                double& cell = mass[base + off + static_cast<std::uint64_t>(a) * stride];
                cell = diff * cell + k.p_switch * fiber_sum;
            }
        }
    }
}

}  // namespace detail

/// Exact q_t from q_0 by contracting the closed-form kernel along each axis.
inline Pmf forward_marginal(const Pmf& q0, double t) {
    if (!(t >= 0.0)) throw InvalidTime("forward_marginal: t must be >= 0");
    const StateSpaceSpec& spec = q0.space();
    if (!spec.enumerable()) throw TooLarge("forward_marginal: space not enumerable");
    std::vector<double> mass = q0.mass();
    const TokenKernel k = token_kernel(t, spec.S);
    for (int axis = 0; axis < spec.d; ++axis)
        detail::apply_token_kernel_axis(mass, spec, axis, k);
    return Pmf(spec, std::move(mass));
}

/// One forward draw: each token independently stays with p_stay, else moves
/// uniformly over the other S-1 values.
inline Sequence sample_forward(const Sequence& x0, double t, const StateSpaceSpec& spec,
                               Rng& rng) {
    validate_sequence(x0, spec);
    const TokenKernel k = token_kernel(t, spec.S);
    Sequence x = x0;
    for (int i = 0; i < spec.d; ++i) {
        const double u = rng.uniform01();
        if (u < k.p_stay) continue;
        // Map the residual uniformly over the S-1 other tokens.
        const double v = (u - k.p_stay) / (1.0 - k.p_stay);
        int off = std::min(spec.S - 2, static_cast<int>(v * static_cast<double>(spec.S - 1)));
        Token a = static_cast<Token>(off);
        if (a >= x[i]) ++a;
        x[i] = a;
    }
    return x;
}

}  // namespace gadd
