#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gadd/common.hpp"
#include "gadd/kernel.hpp"
#include "gadd/predictor.hpp"
#include "gadd/score_oracle.hpp"
#include "gadd/state_space.hpp"

namespace gadd {

// ---------------------------------------------------------------------------
// Score-to-posterior estimators. All four coincide with the true conditional
// q_t^i(.|x^{-i}) under exact scores; they differ once scores carry error.
// ---------------------------------------------------------------------------

enum class EstimatorVariant {
    InverseSum,     // q(a) ~ 1 / sum_y s(x^{-i}+y, x^{-i}+a)
    AnchorRatio,    // q(a) ~ s(x^{-i}+a, x^{-i}+anchor), one row at the anchor base
    AveragedRatio,  // average of AnchorRatio over all anchors
    SumNormalized,  // q(a) ~ sum_y s(x^{-i}+a, x^{-i}+y)
};

inline const char* to_string(EstimatorVariant v) {
    switch (v) {
        case EstimatorVariant::InverseSum: return "inverse-sum";
        case EstimatorVariant::AnchorRatio: return "anchor-ratio";
        case EstimatorVariant::AveragedRatio: return "averaged-ratio";
        case EstimatorVariant::SumNormalized: return "sum-normalized";
    }
    return "?";
}

struct PosteriorWorkspace {
    std::vector<double> rows;
    std::vector<double> accum;
    Sequence base;
};

namespace detail {

inline void normalize_posterior(std::span<double> out) {
    double sum = 0.0;
    for (double v : out) {
        if (!std::isfinite(v) || v < 0.0)
            throw DegenerateScore("posterior_estimate: non-finite or negative mass");
        sum += v;
    }
    if (sum <= 0.0) throw DegenerateScore("posterior_estimate: zero total mass");
    for (double& v : out) v /= sum;
}

}  // namespace detail

/// Fresh posterior estimate for position i at state x, built from oracle
/// score rows. `anchor` applies to AnchorRatio only; nullopt means the
/// current token x[i].
inline void posterior_estimate_into(const ScoreOracle& oracle, double t, const Sequence& x, int i,
                                    EstimatorVariant variant, std::optional<int> anchor,
                                    std::span<double> out, PosteriorWorkspace& ws) {
    const StateSpaceSpec& spec = oracle.space();
    const int S = spec.S;
    if (static_cast<int>(out.size()) != S)
        throw SpecMismatch("posterior_estimate: output length != S");

    ws.base = x;
    switch (variant) {
        case EstimatorVariant::AnchorRatio: {
            const int anchor_tok = anchor.value_or(x[i]);
            if (anchor_tok < 0 || anchor_tok >= S)
                throw InvalidConfig("posterior_estimate: anchor token out of range");
            ws.base[i] = static_cast<Token>(anchor_tok);
            oracle.score_row(t, ws.base, i, out);
            break;
        }
        case EstimatorVariant::InverseSum: {
            ws.rows.resize(static_cast<std::size_t>(S));
            for (int a = 0; a < S; ++a) {
                ws.base[i] = static_cast<Token>(a);
                oracle.score_row(t, ws.base, i, ws.rows);
                double denom = 0.0;
                for (double v : ws.rows) denom += v;
                if (!(denom > 0.0)) throw DegenerateScore("posterior_estimate: zero row sum");
                out[static_cast<std::size_t>(a)] = 1.0 / denom;
            }
            break;
        }
        case EstimatorVariant::AveragedRatio:
        case EstimatorVariant::SumNormalized: {
            ws.rows.resize(static_cast<std::size_t>(S));
            for (int a = 0; a < S; ++a) out[static_cast<std::size_t>(a)] = 0.0;
            for (int y = 0; y < S; ++y) {
                ws.base[i] = static_cast<Token>(y);
                oracle.score_row(t, ws.base, i, ws.rows);
                if (variant == EstimatorVariant::AveragedRatio) {
                    double denom = 0.0;
                    for (double v : ws.rows) denom += v;
                    if (!(denom > 0.0))
                        throw DegenerateScore("posterior_estimate: zero row sum");
                    for (int a = 0; a < S; ++a)
                        out[static_cast<std::size_t>(a)] += ws.rows[static_cast<std::size_t>(a)] / denom;
                } else {
                    for (int a = 0; a < S; ++a)
                        out[static_cast<std::size_t>(a)] += ws.rows[static_cast<std::size_t>(a)];
                }
            }
            break;
        }
    }
    detail::normalize_posterior(out);
}

inline std::vector<double> posterior_estimate(const ScoreOracle& oracle, double t,
                                              const Sequence& x, int i, EstimatorVariant variant,
                                              std::optional<int> anchor = std::nullopt) {
    std::vector<double> out(static_cast<std::size_t>(oracle.space().S));
    PosteriorWorkspace ws;
    posterior_estimate_into(oracle, t, x, i, variant, anchor, out, ws);
    return out;
}

// ---------------------------------------------------------------------------
// Stale score policy: one batched oracle query at corrector-loop entry. The
// frozen table holds the d score rows rooted at the entry state; every ratio
// an estimator needs is reconstructed from the same row, under which all
// variants coincide with the normalized row. The gap to a fresh query is
// exactly the stale-score error the experiments accept.
// ---------------------------------------------------------------------------

struct FrozenScoreTable {
    double t = 0.0;
    int d = 0;
    int S = 0;
    std::vector<double> posteriors;  // d rows of length S, each normalized

    std::span<const double> posterior(int i) const {
        return {posteriors.data() + static_cast<std::size_t>(i) * S,
                static_cast<std::size_t>(S)};
    }
};

inline FrozenScoreTable freeze_scores(const ScoreOracle& oracle, double t, const Sequence& z0) {
    const StateSpaceSpec& spec = oracle.space();
    validate_sequence(z0, spec);
    FrozenScoreTable table;
    table.t = t;
    table.d = spec.d;
    table.S = spec.S;
    table.posteriors.resize(static_cast<std::size_t>(spec.d) * static_cast<std::size_t>(spec.S));
    for (int i = 0; i < spec.d; ++i) {
        std::span<double> row(table.posteriors.data() + static_cast<std::size_t>(i) * spec.S,
                              static_cast<std::size_t>(spec.S));
        oracle.score_row(t, z0, i, row);
        detail::normalize_posterior(row);
    }
    return table;
}

// ---------------------------------------------------------------------------
// Gibbs corrector configuration.
// ---------------------------------------------------------------------------

enum class ScanKind { Random, Systematic };
enum class ScorePolicy { Fresh, Stale };

struct GibbsCorrectorConfig {
    ScanKind scan = ScanKind::Random;
    /// Scan weights over positions; empty means uniform. Stored normalized.
    std::vector<double> weights;
    /// Steps per outer loop (random scan: single-site steps; systematic:
    /// full sweeps). Size 1 means a constant schedule.
    std::vector<int> L = {40};
    EstimatorVariant estimator = EstimatorVariant::InverseSum;
    std::optional<int> anchor;
    ScorePolicy policy = ScorePolicy::Stale;
    /// Selective update: skip the resample when the current token's estimated
    /// posterior probability is at or above this value.
    std::optional<double> threshold;
    /// Charge S NFE per fresh InverseSum posterior instead of 1.
    bool strict_nfe = false;

    int steps_at(int k) const {
        if (L.empty()) throw InvalidConfig("GibbsCorrectorConfig: empty L schedule");
        const int v = (L.size() == 1) ? L[0] : L.at(static_cast<std::size_t>(k));
        if (v < 0) throw InvalidConfig("GibbsCorrectorConfig: L must be >= 0");
        return v;
    }

    std::vector<double> resolved_weights(int d) const {
        if (weights.empty())
            return std::vector<double>(static_cast<std::size_t>(d), 1.0 / static_cast<double>(d));
        if (static_cast<int>(weights.size()) != d)
            throw InvalidConfig("GibbsCorrectorConfig: weights length != d");
        double sum = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw InvalidConfig("GibbsCorrectorConfig: negative weight");
            sum += w;
        }
        if (sum <= 0.0) throw InvalidConfig("GibbsCorrectorConfig: zero weight sum");
        std::vector<double> out = weights;
        for (double& w : out) w /= sum;
        return out;
    }

    /// NFE charged per fresh posterior construction.
    long fresh_charge(int S) const {
        return (estimator == EstimatorVariant::InverseSum && strict_nfe) ? S : 1;
    }

    bool gate_passes(std::span<const double> posterior, Token current) const {
        return threshold && posterior[static_cast<std::size_t>(current)] >= *threshold;
    }
};

// ---------------------------------------------------------------------------
// Single Gibbs updates (trajectory form).
// ---------------------------------------------------------------------------

/// One random-scan Gibbs step with fresh posteriors: draw a position from the
/// scan weights, optionally gate on the current token, else resample it.
inline Sequence gibbs_step_random(const Sequence& z, double t, const GibbsCorrectorConfig& cfg,
                                  const ScoreOracle& oracle, Rng& rng) {
    if (cfg.scan != ScanKind::Random)
        throw InvalidConfig("gibbs_step_random: config is not random-scan");
    const StateSpaceSpec& spec = oracle.space();
    validate_sequence(z, spec);
    const std::vector<double> w = cfg.resolved_weights(spec.d);
    const int i = rng.categorical(w);
    thread_local PosteriorWorkspace ws;
    thread_local std::vector<double> posterior;
    posterior.resize(static_cast<std::size_t>(spec.S));
    posterior_estimate_into(oracle, t, z, i, cfg.estimator, cfg.anchor, posterior, ws);
    Sequence out = z;
    if (!cfg.gate_passes(posterior, z[i]))
        out[i] = static_cast<Token>(rng.categorical(posterior));
    return out;
}

/// One systematic sweep with fresh posteriors: positions updated in order,
/// each conditioned on the current partial state.
inline Sequence gibbs_sweep_systematic(const Sequence& z, double t,
                                       const GibbsCorrectorConfig& cfg, const ScoreOracle& oracle,
                                       Rng& rng) {
    if (cfg.scan != ScanKind::Systematic)
        throw InvalidConfig("gibbs_sweep_systematic: config is not systematic-scan");
    const StateSpaceSpec& spec = oracle.space();
    validate_sequence(z, spec);
    thread_local PosteriorWorkspace ws;
    thread_local std::vector<double> posterior;
    posterior.resize(static_cast<std::size_t>(spec.S));
    Sequence out = z;
    for (int i = 0; i < spec.d; ++i) {
        posterior_estimate_into(oracle, t, out, i, cfg.estimator, cfg.anchor, posterior, ws);
        if (!cfg.gate_passes(posterior, out[i]))
            out[i] = static_cast<Token>(rng.categorical(posterior));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exact kernels and pushforwards (fresh posteriors only; stale kernels depend
// on loop-entry history and are not expressible as a state kernel).
// ---------------------------------------------------------------------------

namespace detail {

/// Adds one random-scan Gibbs step's row for source state x into `row`.
inline void gibbs_row_random(const ScoreOracle& oracle, double t, const GibbsCorrectorConfig& cfg,
                             std::span<const double> w, const Sequence& x, StateIndex idx,
                             std::span<double> row, PosteriorWorkspace& ws,
                             std::vector<double>& posterior) {
    const StateSpaceSpec& spec = oracle.space();
    StateIndex stride = 1;
    for (int i = 0; i < spec.d; ++i) {
        if (w[static_cast<std::size_t>(i)] > 0.0) {
            posterior_estimate_into(oracle, t, x, i, cfg.estimator, cfg.anchor, posterior, ws);
            if (cfg.gate_passes(posterior, x[i])) {
                row[idx] += w[static_cast<std::size_t>(i)];
            } else {
                const StateIndex base = idx - static_cast<StateIndex>(x[i]) * stride;
                for (int a = 0; a < spec.S; ++a)
                    row[base + static_cast<StateIndex>(a) * stride] +=
                        w[static_cast<std::size_t>(i)] * posterior[static_cast<std::size_t>(a)];
            }
        }
        stride *= static_cast<StateIndex>(spec.S);
    }
}

/// Pushforward through the single-site resample kernel at position i.
inline std::vector<double> apply_single_site(std::span<const double> law, double t, int i,
                                             const GibbsCorrectorConfig& cfg,
                                             const ScoreOracle& oracle) {
    const StateSpaceSpec& spec = oracle.space();
    const std::uint64_t n = spec.state_count();
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    StateIndex stride = 1;
    for (int j = 0; j < i; ++j) stride *= static_cast<StateIndex>(spec.S);
    PosteriorWorkspace ws;
    std::vector<double> posterior(static_cast<std::size_t>(spec.S));
    Sequence x;
    for (StateIndex idx = 0; idx < n; ++idx) {
        const double px = law[idx];
        if (px == 0.0) continue;
        decode_into(idx, spec, x);
        posterior_estimate_into(oracle, t, x, i, cfg.estimator, cfg.anchor, posterior, ws);
        if (cfg.gate_passes(posterior, x[i])) {
            out[idx] += px;
        } else {
            const StateIndex base = idx - static_cast<StateIndex>(x[i]) * stride;
            for (int a = 0; a < spec.S; ++a)
                out[base + static_cast<StateIndex>(a) * stride] +=
                    px * posterior[static_cast<std::size_t>(a)];
        }
    }
    return out;
}

}  // namespace detail

/// Exact one-step Gibbs transition kernel. Random scan follows the mixture
/// kernel P(x,y) = w_i q^i(y^i | x^{-i}) on Hamming<=1 moves; systematic scan
/// composes the d single-site kernels in order.
inline DenseKernel gibbs_kernel_exact(double t, const GibbsCorrectorConfig& cfg,
                                      const ScoreOracle& oracle) {
    if (cfg.policy == ScorePolicy::Stale)
        throw UnsupportedExact("gibbs_kernel_exact: stale kernels are history-dependent");
    const StateSpaceSpec& spec = oracle.space();
    DenseKernel kernel(spec);
    if (cfg.scan == ScanKind::Random) {
        const std::vector<double> w = cfg.resolved_weights(spec.d);
        PosteriorWorkspace ws;
        std::vector<double> posterior(static_cast<std::size_t>(spec.S));
        Sequence x;
        for (StateIndex idx = 0; idx < kernel.size(); ++idx) {
            decode_into(idx, spec, x);
            detail::gibbs_row_random(oracle, t, cfg, w, x, idx, kernel.row(idx), ws, posterior);
        }
    } else {
        GibbsCorrectorConfig site = cfg;
        site.scan = ScanKind::Random;
        // Identity start, then compose site kernels in scan order.
        for (StateIndex idx = 0; idx < kernel.size(); ++idx) kernel.at(idx, idx) = 1.0;
        for (int i = 0; i < spec.d; ++i) {
            DenseKernel step(spec);
            std::vector<double> w(static_cast<std::size_t>(spec.d), 0.0);
            w[static_cast<std::size_t>(i)] = 1.0;
            PosteriorWorkspace ws;
            std::vector<double> posterior(static_cast<std::size_t>(spec.S));
            Sequence x;
            for (StateIndex idx = 0; idx < step.size(); ++idx) {
                decode_into(idx, spec, x);
                detail::gibbs_row_random(oracle, t, site, w, x, idx, step.row(idx), ws, posterior);
            }
            kernel = kernel.compose(step);
        }
    }
    return kernel;
}

/// Exact pushforward through one corrector unit: a random-scan step, or a
/// full systematic sweep.
inline std::vector<double> apply_gibbs_step(std::span<const double> law, double t,
                                            const GibbsCorrectorConfig& cfg,
                                            const ScoreOracle& oracle) {
    if (cfg.policy == ScorePolicy::Stale)
        throw UnsupportedExact("apply_gibbs_step: stale kernels are history-dependent");
    const StateSpaceSpec& spec = oracle.space();
    const std::uint64_t n = spec.state_count();
    if (law.size() != n) throw SpecMismatch("apply_gibbs_step: law size mismatch");
    if (cfg.scan == ScanKind::Systematic) {
        std::vector<double> cur(law.begin(), law.end());
        for (int i = 0; i < spec.d; ++i) cur = detail::apply_single_site(cur, t, i, cfg, oracle);
        return cur;
    }
    const std::vector<double> w = cfg.resolved_weights(spec.d);
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    PosteriorWorkspace ws;
    std::vector<double> posterior(static_cast<std::size_t>(spec.S));
    Sequence x;
    for (StateIndex idx = 0; idx < n; ++idx) {
        const double px = law[idx];
        if (px == 0.0) continue;
        decode_into(idx, spec, x);
        StateIndex stride = 1;
        for (int i = 0; i < spec.d; ++i) {
            if (w[static_cast<std::size_t>(i)] > 0.0) {
                posterior_estimate_into(oracle, t, x, i, cfg.estimator, cfg.anchor, posterior, ws);
                if (cfg.gate_passes(posterior, x[i])) {
                    out[idx] += px * w[static_cast<std::size_t>(i)];
                } else {
                    const StateIndex base = idx - static_cast<StateIndex>(x[i]) * stride;
                    for (int a = 0; a < spec.S; ++a)
                        out[base + static_cast<StateIndex>(a) * stride] +=
                            px * w[static_cast<std::size_t>(i)] *
                            posterior[static_cast<std::size_t>(a)];
                }
            }
            stride *= static_cast<StateIndex>(spec.S);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CTMC corrector baseline: the rate R^c(x,y) = R(x,y) + R(y,x) s_t(y,x) has
// q_t as its stationary law; steps are Euler discretizations of duration eta.
// ---------------------------------------------------------------------------

struct CtmcCorrectorConfig {
    double eta = 0.05;  // inner step size
    int steps = 1;      // inner Euler steps per outer loop
    /// When true, eta is a multiple of the local predictor step h_k rather
    /// than an absolute duration.
    bool eta_relative = false;

    void validate() const {
        if (!(eta > 0.0)) throw InvalidConfig("CtmcCorrectorConfig: eta must be > 0");
        if (steps < 1) throw InvalidConfig("CtmcCorrectorConfig: steps must be >= 1");
    }

    double eta_at(double h_k) const { return eta_relative ? eta * h_k : eta; }
};

/// Corrector rate entry. Hamming-1 pairs only; the diagonal balances the row.
inline double ctmc_corrector_rate(const Sequence& x, const Sequence& y, double t,
                                  const ScoreOracle& oracle) {
    const StateSpaceSpec& spec = oracle.space();
    validate_sequence(x, spec);
    validate_sequence(y, spec);
    const int h = hamming(x, y);
    if (h >= 2) return 0.0;
    thread_local std::vector<double> row;
    row.resize(static_cast<std::size_t>(spec.S));
    if (h == 1) {
        int i = 0;
        while (x[i] == y[i]) ++i;
        oracle.score_row(t, x, i, row);
        return (1.0 + row[static_cast<std::size_t>(y[i])]) / static_cast<double>(spec.S);
    }
    double total = 0.0;
    for (int i = 0; i < spec.d; ++i) {
        oracle.score_row(t, x, i, row);
        for (int a = 0; a < spec.S; ++a)
            if (a != x[i]) total += (1.0 + row[static_cast<std::size_t>(a)]) / static_cast<double>(spec.S);
    }
    return -total;
}

namespace detail {

inline void ctmc_move_table(const ScoreOracle& oracle, double t, double eta, const Sequence& x,
                            OverflowPolicy policy, std::vector<double>& table,
                            std::vector<double>& row_buf) {
    const StateSpaceSpec& spec = oracle.space();
    table.resize(static_cast<std::size_t>(spec.d) * static_cast<std::size_t>(spec.S));
    row_buf.resize(static_cast<std::size_t>(spec.S));
    const double scale = eta / static_cast<double>(spec.S);
    for (int i = 0; i < spec.d; ++i) {
        oracle.score_row(t, x, i, row_buf);
        double* dst = table.data() + static_cast<std::size_t>(i) * spec.S;
        double move_mass = 0.0;
        for (int a = 0; a < spec.S; ++a) {
            const double v =
                (a == x[i]) ? 0.0 : (1.0 + row_buf[static_cast<std::size_t>(a)]) * scale;
            dst[a] = v;
            move_mass += v;
        }
        if (move_mass > 1.0) {
            if (policy == OverflowPolicy::Strict)
                throw StepTooLarge("ctmc corrector step: per-token move mass > 1");
            for (int a = 0; a < spec.S; ++a) dst[a] /= move_mass;
            dst[x[i]] = 0.0;
        } else {
            dst[x[i]] = 1.0 - move_mass;
        }
    }
}

}  // namespace detail

/// One Euler step of duration eta under the corrector rate (trajectory form).
inline Sequence ctmc_corrector_step(const Sequence& z, double t, double eta,
                                    const ScoreOracle& oracle, Rng& rng,
                                    OverflowPolicy policy = OverflowPolicy::Strict) {
    const StateSpaceSpec& spec = oracle.space();
    validate_sequence(z, spec);
    if (!(eta > 0.0)) throw InvalidConfig("ctmc_corrector_step: eta must be > 0");
    thread_local std::vector<double> table, row_buf;
    detail::ctmc_move_table(oracle, t, eta, z, policy, table, row_buf);
    Sequence out = z;
    for (int i = 0; i < spec.d; ++i) {
        std::span<const double> m(table.data() + static_cast<std::size_t>(i) * spec.S,
                                  static_cast<std::size_t>(spec.S));
        out[i] = static_cast<Token>(rng.categorical(m));
    }
    return out;
}

/// Exact pushforward through one CTMC corrector Euler step.
inline std::vector<double> apply_ctmc_step(std::span<const double> law, double t, double eta,
                                           const ScoreOracle& oracle,
                                           OverflowPolicy policy = OverflowPolicy::Strict) {
    const StateSpaceSpec& spec = oracle.space();
    const std::uint64_t n = spec.state_count();
    if (law.size() != n) throw SpecMismatch("apply_ctmc_step: law size mismatch");
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    std::vector<double> table, row_buf;
    Sequence x;
    for (StateIndex idx = 0; idx < n; ++idx) {
        const double px = law[idx];
        if (px == 0.0) continue;
        decode_into(idx, spec, x);
        detail::ctmc_move_table(oracle, t, eta, x, policy, table, row_buf);
        detail::accumulate_product_kernel_row(table, spec.d, spec.S, px, out);
    }
    return out;
}

/// Dense one-step kernel of the discretized corrector chain.
inline DenseKernel ctmc_corrector_kernel(double t, double eta, const ScoreOracle& oracle,
                                         OverflowPolicy policy = OverflowPolicy::Strict) {
    const StateSpaceSpec& spec = oracle.space();
    DenseKernel kernel(spec);
    std::vector<double> table, row_buf;
    Sequence x;
    for (StateIndex idx = 0; idx < kernel.size(); ++idx) {
        decode_into(idx, spec, x);
        detail::ctmc_move_table(oracle, t, eta, x, policy, table, row_buf);
        detail::accumulate_product_kernel_row(table, spec.d, spec.S, 1.0, kernel.row(idx));
    }
    return kernel;
}

}  // namespace gadd
