#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gadd/common.hpp"
#include "gadd/kernel.hpp"
#include "gadd/score_oracle.hpp"
#include "gadd/state_space.hpp"

namespace gadd {

/// Policy for an Euler step whose per-token move mass exceeds 1.
enum class OverflowPolicy {
    Strict,  // throw StepTooLarge
    Clamp,   // renormalize the move vector; stay probability drops to 0
};

/// One reverse Euler step from t_hi down to t_lo (scores evaluated at t_hi).
struct EulerStepSpec {
    double t_hi = 0.0;
    double t_lo = 0.0;

    EulerStepSpec() = default;
    EulerStepSpec(double hi, double lo) : t_hi(hi), t_lo(lo) {
        if (!(lo > 0.0) || !(hi > lo))
            throw InvalidConfig("EulerStepSpec: need 0 < t_lo < t_hi");
    }
    double h() const { return t_hi - t_lo; }
};

// ---------------------------------------------------------------------------
// Per-token Euler move distribution. On the uniform-rate chain the estimated
// reverse rate to token a is (1/S) * s_t(..a.., x), so the move probability is
// (1/S) * row[a] * h; the current token keeps the remaining mass.
// ---------------------------------------------------------------------------

inline std::vector<double> euler_move_probs(std::span<const double> row, int current, double h,
                                            int S, OverflowPolicy policy = OverflowPolicy::Strict,
                                            bool* clamped = nullptr) {
    if (!(h > 0.0)) throw InvalidConfig("euler_move_probs: h must be > 0");
    if (static_cast<int>(row.size()) != S)
        throw SpecMismatch("euler_move_probs: row length != S");
    std::vector<double> p(static_cast<std::size_t>(S), 0.0);
    double move_mass = 0.0;
    const double scale = h / static_cast<double>(S);
    for (int a = 0; a < S; ++a) {
        if (a == current) continue;
        const double v = row[static_cast<std::size_t>(a)] * scale;
        p[static_cast<std::size_t>(a)] = v;
        move_mass += v;
    }
    if (move_mass > 1.0) {
        if (policy == OverflowPolicy::Strict)
            throw StepTooLarge("euler_move_probs: move mass " + std::to_string(move_mass) +
                               " > 1; shrink the step or use clamp mode");
        for (double& v : p) v /= move_mass;
        p[static_cast<std::size_t>(current)] = 0.0;
        if (clamped) *clamped = true;
    } else {
        p[static_cast<std::size_t>(current)] = 1.0 - move_mass;
    }
    return p;
}

namespace detail {

/// Fills the d*S move table for one Euler step from source state x.
inline void euler_move_table(const ScoreOracle& oracle, double t_hi, double h, const Sequence& x,
                             OverflowPolicy policy, std::vector<double>& table,
                             std::vector<double>& row_buf, bool* clamped = nullptr) {
    const StateSpaceSpec& spec = oracle.space();
    table.resize(static_cast<std::size_t>(spec.d) * static_cast<std::size_t>(spec.S));
    row_buf.resize(static_cast<std::size_t>(spec.S));
    const double scale = h / static_cast<double>(spec.S);
    for (int i = 0; i < spec.d; ++i) {
        oracle.score_row(t_hi, x, i, row_buf);
        double* dst = table.data() + static_cast<std::size_t>(i) * spec.S;
        double move_mass = 0.0;
        for (int a = 0; a < spec.S; ++a) {
            const double v = (a == x[i]) ? 0.0 : row_buf[static_cast<std::size_t>(a)] * scale;
            dst[a] = v;
            move_mass += v;
        }
        if (move_mass > 1.0) {
            if (policy == OverflowPolicy::Strict)
                throw StepTooLarge("euler step: per-token move mass > 1");
            for (int a = 0; a < spec.S; ++a) dst[a] /= move_mass;
            dst[x[i]] = 0.0;
            if (clamped) *clamped = true;
        } else {
            dst[x[i]] = 1.0 - move_mass;
        }
    }
}

}  // namespace detail

/// Trajectory form of the Euler step: every token updated independently from
/// its move distribution built at the pre-step state. One score batch per step.
inline Sequence euler_step_sample(const Sequence& x, const EulerStepSpec& step,
                                  const ScoreOracle& oracle, Rng& rng,
                                  OverflowPolicy policy = OverflowPolicy::Strict) {
    const StateSpaceSpec& spec = oracle.space();
    validate_sequence(x, spec);
    thread_local std::vector<double> table, row_buf;
    detail::euler_move_table(oracle, step.t_hi, step.h(), x, policy, table, row_buf);
    Sequence y = x;
    for (int i = 0; i < spec.d; ++i) {
        std::span<const double> m(table.data() + static_cast<std::size_t>(i) * spec.S,
                                  static_cast<std::size_t>(spec.S));
        y[i] = static_cast<Token>(rng.categorical(m));
    }
    return y;
}

/// Exact-pushforward form: p_out = p_in * P_euler without materializing the
/// kernel. Works on raw normalized mass vectors.
inline std::vector<double> apply_euler_step(std::span<const double> law,
                                            const EulerStepSpec& step, const ScoreOracle& oracle,
                                            OverflowPolicy policy = OverflowPolicy::Strict) {
    const StateSpaceSpec& spec = oracle.space();
    const std::uint64_t n = spec.state_count();
    if (law.size() != n) throw SpecMismatch("apply_euler_step: law size mismatch");
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    std::vector<double> table, row_buf;
    Sequence x;
    for (StateIndex idx = 0; idx < n; ++idx) {
        const double px = law[idx];
        if (px == 0.0) continue;
        decode_into(idx, spec, x);
        detail::euler_move_table(oracle, step.t_hi, step.h(), x, policy, table, row_buf);
        detail::accumulate_product_kernel_row(table, spec.d, spec.S, px, out);
    }
    return out;
}

/// Dense Euler step kernel; row x is the product of per-token move
/// distributions.
inline DenseKernel euler_step_kernel(const EulerStepSpec& step, const ScoreOracle& oracle,
                                     OverflowPolicy policy = OverflowPolicy::Strict) {
    const StateSpaceSpec& spec = oracle.space();
    DenseKernel kernel(spec);
    std::vector<double> table, row_buf;
    Sequence x;
    for (StateIndex idx = 0; idx < kernel.size(); ++idx) {
        decode_into(idx, spec, x);
        detail::euler_move_table(oracle, step.t_hi, step.h(), x, policy, table, row_buf);
        detail::accumulate_product_kernel_row(table, spec.d, spec.S, 1.0, kernel.row(idx));
    }
    return kernel;
}

}  // namespace gadd
