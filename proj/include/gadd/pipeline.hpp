#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include "gadd/common.hpp"
#include "gadd/corrector.hpp"
#include "gadd/predictor.hpp"
#include "gadd/score_oracle.hpp"
#include "gadd/state_space.hpp"

namespace gadd {

// ---------------------------------------------------------------------------
// Time grid: t_N = T > ... > t_0 = delta with every step obeying
// t_{k+1} - t_k <= kappa * min(1, t_{k+1}). Uniform steps of size kappa above
// 1, geometric steps t_k = t_{k+1} / (1 + kappa) below 1, endpoints snapped.
// ---------------------------------------------------------------------------

struct TimeGrid {
    double T = 1.0;
    double delta = 0.1;
    double kappa = 0.5;
    /// Decreasing times, points.front() == T, points.back() == delta.
    std::vector<double> points;

    int steps() const { return static_cast<int>(points.size()) - 1; }
    /// Time after the k-th outer step counted from the terminal end:
    /// t(k) with k in [0, steps()], t(steps()) = T, t(0) = delta.
    double t(int k) const { return points[static_cast<std::size_t>(steps() - k)]; }
};

inline TimeGrid build_time_grid(double T, double delta, double kappa) {
    if (!(delta > 0.0) || !(T > delta)) throw InvalidConfig("time grid: need 0 < delta < T");
    if (!(kappa > 0.0) || !(kappa < 1.0)) throw InvalidConfig("time grid: need 0 < kappa < 1");
    TimeGrid grid;
    grid.T = T;
    grid.delta = delta;
    grid.kappa = kappa;
    grid.points.push_back(T);
    double t = T;
    const double eps = 1e-12 * std::max(1.0, T);
    while (t > delta + eps) {
        const double bound = kappa * std::min(1.0, t);
        double next;
        if (t - delta <= bound + eps) {
            next = delta;
        } else if (t > 1.0 + eps) {
            next = std::max(1.0, t - kappa);
        } else {
            next = t / (1.0 + kappa);
        }
        grid.points.push_back(next);
        t = next;
    }
    grid.points.back() = delta;
    // Post-construction recheck of the step bound.
    for (std::size_t k = 0; k + 1 < grid.points.size(); ++k) {
        const double hi = grid.points[k];
        const double lo = grid.points[k + 1];
        if (hi - lo > kappa * std::min(1.0, hi) + 1e-9)
            throw InvalidConfig("time grid: constructed step violates the kappa bound");
    }
    return grid;
}

/// Schedule defaults for a requested terminal accuracy eps:
/// T = log(d log(S) / eps^2) and delta = eps / d. Callers usually override.
struct GridDefaults {
    double T = 1.0;
    double delta = 0.1;
};

inline GridDefaults grid_defaults_for_accuracy(const StateSpaceSpec& spec, double eps) {
    if (!(eps > 0.0) || !(eps < 1.0))
        throw InvalidConfig("grid_defaults_for_accuracy: need 0 < eps < 1");
    GridDefaults g;
    g.T = std::log(static_cast<double>(spec.d) * std::log(static_cast<double>(spec.S)) /
                   (eps * eps));
    g.delta = eps / static_cast<double>(spec.d);
    if (!(g.T > g.delta))
        throw InvalidConfig("grid_defaults_for_accuracy: eps too loose for this space");
    return g;
}

/// Finds a kappa whose grid has exactly `n_steps` outer steps.
inline double kappa_for_steps(double T, double delta, int n_steps) {
    if (n_steps < 1) throw InvalidConfig("kappa_for_steps: need n_steps >= 1");
    auto count = [&](double kappa) { return build_time_grid(T, delta, kappa).steps(); };
    double lo = 1e-6, hi = 1.0 - 1e-9;
    if (count(hi) > n_steps)
        throw InvalidConfig("kappa_for_steps: requested step count below the grid minimum");
    if (count(lo) < n_steps)
        throw InvalidConfig("kappa_for_steps: requested step count above resolution");
    // count is nonincreasing in kappa; bisect to the boundary.
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (count(mid) > n_steps)
            lo = mid;
        else
            hi = mid;
    }
    if (count(hi) != n_steps)
        throw InvalidConfig("kappa_for_steps: no kappa attains the requested step count");
    return hi;
}

// ---------------------------------------------------------------------------
// NFE ledger and conditioning mask.
// ---------------------------------------------------------------------------

struct NfeLedger {
    long predictor_calls = 0;
    long corrector_calls = 0;

    long total() const { return predictor_calls + corrector_calls; }
    bool operator==(const NfeLedger& o) const {
        return predictor_calls == o.predictor_calls && corrector_calls == o.corrector_calls;
    }
};

struct ClampMask {
    std::vector<int> positions;
    std::vector<Token> values;

    void validate(const StateSpaceSpec& spec) const {
        if (positions.size() != values.size())
            throw InvalidConfig("ClampMask: positions/values length mismatch");
        for (std::size_t j = 0; j < positions.size(); ++j) {
            if (positions[j] < 0 || positions[j] >= spec.d)
                throw InvalidConfig("ClampMask: position out of range");
            if (values[j] < 0 || values[j] >= spec.S)
                throw InvalidConfig("ClampMask: value out of range");
        }
    }

    void apply(Sequence& x) const {
        for (std::size_t j = 0; j < positions.size(); ++j)
            x[positions[j]] = values[j];
    }

    bool covers_all(int d) const { return static_cast<int>(positions.size()) >= d; }
};

// ---------------------------------------------------------------------------
// Sampler configuration.
// ---------------------------------------------------------------------------

enum class CorrectorKind { None, Gibbs, Ctmc };

inline const char* to_string(CorrectorKind k) {
    switch (k) {
        case CorrectorKind::None: return "none";
        case CorrectorKind::Gibbs: return "gibbs";
        case CorrectorKind::Ctmc: return "ctmc";
    }
    return "?";
}

struct SamplerConfig {
    StateSpaceSpec space;
    TimeGrid grid;
    CorrectorKind corrector = CorrectorKind::None;
    GibbsCorrectorConfig gibbs;
    CtmcCorrectorConfig ctmc;
    std::optional<ClampMask> clamp;
    OverflowPolicy overflow = OverflowPolicy::Strict;
    std::uint64_t seed = 0;

    void validate() const {
        if (grid.points.size() < 2) throw InvalidConfig("SamplerConfig: empty time grid");
        if (clamp) clamp->validate(space);
        if (corrector == CorrectorKind::Ctmc) ctmc.validate();
    }
};

// ---------------------------------------------------------------------------
// Trajectory sampling.
// ---------------------------------------------------------------------------

struct SampleResult {
    Sequence terminal;
    NfeLedger ledger;
};

namespace detail {

inline Sequence uniform_init(const StateSpaceSpec& spec, Rng& rng) {
    Sequence x;
    x.tokens.resize(static_cast<std::size_t>(spec.d));
    for (int i = 0; i < spec.d; ++i) x[i] = static_cast<Token>(rng.uniform_int(spec.S));
    return x;
}

inline void record(std::vector<Sequence>* trajectory, const Sequence& x) {
    if (trajectory) trajectory->push_back(x);
}

}  // namespace detail

/// Standalone Euler baseline: uniform init, one Euler predictor step per grid
/// interval, no correction.
inline SampleResult run_euler_sample(const SamplerConfig& config, const ScoreOracle& oracle,
                                     Rng& rng, std::vector<Sequence>* trajectory = nullptr) {
    config.validate();
    if (oracle.space() != config.space) throw SpecMismatch("run_euler_sample: oracle spec mismatch");
    const TimeGrid& grid = config.grid;
    Sequence x = detail::uniform_init(config.space, rng);
    if (config.clamp) config.clamp->apply(x);
    detail::record(trajectory, x);
    NfeLedger ledger;
    for (int k = grid.steps() - 1; k >= 0; --k) {
        const EulerStepSpec step(grid.t(k + 1), grid.t(k));
        x = euler_step_sample(x, step, oracle, rng, config.overflow);
        ledger.predictor_calls += 1;
        if (config.clamp) config.clamp->apply(x);
        detail::record(trajectory, x);
    }
    return {std::move(x), ledger};
}

/// The full predictor-corrector sampler. With corrector == None (or a Gibbs
/// schedule of all zeros) this reduces to run_euler_sample exactly, draw for
/// draw.
inline SampleResult run_gadd_sample(const SamplerConfig& config, const ScoreOracle& oracle,
                                    Rng& rng, std::vector<Sequence>* trajectory = nullptr) {
    config.validate();
    if (oracle.space() != config.space) throw SpecMismatch("run_gadd_sample: oracle spec mismatch");
    const StateSpaceSpec& spec = config.space;
    const TimeGrid& grid = config.grid;

    Sequence x = detail::uniform_init(spec, rng);
    if (config.clamp) config.clamp->apply(x);
    detail::record(trajectory, x);
    NfeLedger ledger;

    std::vector<double> scan_weights;
    if (config.corrector == CorrectorKind::Gibbs)
        scan_weights = config.gibbs.resolved_weights(spec.d);

    for (int k = grid.steps() - 1; k >= 0; --k) {
        const double t_hi = grid.t(k + 1);
        const double t_lo = grid.t(k);
        const EulerStepSpec step(t_hi, t_lo);
        x = euler_step_sample(x, step, oracle, rng, config.overflow);
        ledger.predictor_calls += 1;
        if (config.clamp) config.clamp->apply(x);
        detail::record(trajectory, x);

        if (config.corrector == CorrectorKind::Gibbs) {
            const GibbsCorrectorConfig& g = config.gibbs;
            const int L = g.steps_at(k);
            if (L == 0) continue;
            if (g.policy == ScorePolicy::Stale) {
                const FrozenScoreTable table = freeze_scores(oracle, t_lo, x);
                ledger.corrector_calls += 1;
                for (int l = 0; l < L; ++l) {
                    if (g.scan == ScanKind::Random) {
                        const int i = rng.categorical(scan_weights);
                        const auto posterior = table.posterior(i);
                        if (!g.gate_passes(posterior, x[i]))
                            x[i] = static_cast<Token>(rng.categorical(posterior));
                    } else {
                        for (int i = 0; i < spec.d; ++i) {
                            const auto posterior = table.posterior(i);
                            if (!g.gate_passes(posterior, x[i]))
                                x[i] = static_cast<Token>(rng.categorical(posterior));
                        }
                    }
                    if (config.clamp) config.clamp->apply(x);
                    detail::record(trajectory, x);
                }
            } else {
                for (int l = 0; l < L; ++l) {
                    x = (g.scan == ScanKind::Random)
                            ? gibbs_step_random(x, t_lo, g, oracle, rng)
                            : gibbs_sweep_systematic(x, t_lo, g, oracle, rng);
                    ledger.corrector_calls += g.fresh_charge(spec.S);
                    if (config.clamp) config.clamp->apply(x);
                    detail::record(trajectory, x);
                }
            }
        } else if (config.corrector == CorrectorKind::Ctmc) {
            const double eta = config.ctmc.eta_at(step.h());
            for (int l = 0; l < config.ctmc.steps; ++l) {
                x = ctmc_corrector_step(x, t_lo, eta, oracle, rng, config.overflow);
                ledger.corrector_calls += 1;
                if (config.clamp) config.clamp->apply(x);
                detail::record(trajectory, x);
            }
        }
    }
    return {std::move(x), ledger};
}

// ---------------------------------------------------------------------------
// Exact pushforward: evolve the full law through the step kernels. Demands
// fresh-score correctors; stale kernels depend on loop-entry history and are
// rejected.
// ---------------------------------------------------------------------------

struct PushforwardRecord {
    double t = 0.0;
    long nfe = 0;  // trajectory-equivalent NFE after this outer step
    Pmf law;
};

namespace detail {

inline void renormalize(std::vector<double>& mass) {
    double sum = 0.0;
    for (double v : mass) sum += v;
    for (double& v : mass) v /= sum;
}

inline void clamp_project(std::vector<double>& mass, const StateSpaceSpec& spec,
                          const ClampMask& clamp) {
    std::vector<double> out(mass.size(), 0.0);
    std::vector<StateIndex> strides(static_cast<std::size_t>(spec.d));
    StateIndex s = 1;
    for (int i = 0; i < spec.d; ++i) {
        strides[static_cast<std::size_t>(i)] = s;
        s *= static_cast<StateIndex>(spec.S);
    }
    Sequence x;
    for (StateIndex idx = 0; idx < mass.size(); ++idx) {
        if (mass[idx] == 0.0) continue;
        StateIndex to = idx;
        for (std::size_t j = 0; j < clamp.positions.size(); ++j) {
            const int i = clamp.positions[j];
            const StateIndex stride = strides[static_cast<std::size_t>(i)];
            const Token cur = static_cast<Token>((idx / stride) % static_cast<StateIndex>(spec.S));
            to += (static_cast<StateIndex>(clamp.values[j]) - static_cast<StateIndex>(cur)) *
                  stride;
        }
        out[to] += mass[idx];
    }
    mass.swap(out);
}

}  // namespace detail

/// `init` overrides the uniform initial law (it must live on config.space).
inline std::vector<PushforwardRecord> run_pushforward(const SamplerConfig& config,
                                                      const ScoreOracle& oracle,
                                                      const Pmf* init = nullptr) {
    config.validate();
    if (oracle.space() != config.space)
        throw SpecMismatch("run_pushforward: oracle spec mismatch");
    const StateSpaceSpec& spec = config.space;
    if (!spec.enumerable()) throw TooLarge("run_pushforward: space not enumerable");
    if (config.corrector == CorrectorKind::Gibbs && config.gibbs.policy == ScorePolicy::Stale)
        throw UnsupportedExact("run_pushforward: stale score policy has no state kernel");
    if (init && init->space() != spec) throw SpecMismatch("run_pushforward: init spec mismatch");

    const TimeGrid& grid = config.grid;
    const std::uint64_t n = spec.state_count();
    std::vector<double> law = init ? init->mass()
                                   : std::vector<double>(static_cast<std::size_t>(n),
                                                         1.0 / static_cast<double>(n));
    if (config.clamp) detail::clamp_project(law, spec, *config.clamp);

    std::vector<PushforwardRecord> records;
    records.push_back({grid.T, 0, Pmf(spec, law)});
    long nfe = 0;

    for (int k = grid.steps() - 1; k >= 0; --k) {
        const double t_hi = grid.t(k + 1);
        const double t_lo = grid.t(k);
        const EulerStepSpec step(t_hi, t_lo);
        law = apply_euler_step(law, step, oracle, config.overflow);
        nfe += 1;
        if (config.clamp) detail::clamp_project(law, spec, *config.clamp);
        detail::renormalize(law);

        if (config.corrector == CorrectorKind::Gibbs) {
            const int L = config.gibbs.steps_at(k);
            for (int l = 0; l < L; ++l) {
                law = apply_gibbs_step(law, t_lo, config.gibbs, oracle);
                nfe += config.gibbs.fresh_charge(spec.S);
                if (config.clamp) detail::clamp_project(law, spec, *config.clamp);
                detail::renormalize(law);
            }
        } else if (config.corrector == CorrectorKind::Ctmc) {
            const double eta = config.ctmc.eta_at(step.h());
            for (int l = 0; l < config.ctmc.steps; ++l) {
                law = apply_ctmc_step(law, t_lo, eta, oracle, config.overflow);
                nfe += 1;
                if (config.clamp) detail::clamp_project(law, spec, *config.clamp);
                detail::renormalize(law);
            }
        }
        records.push_back({t_lo, nfe, Pmf(spec, law)});
    }
    return records;
}

// ---------------------------------------------------------------------------
// Monte Carlo harness: independent chains on split RNG streams.
// ---------------------------------------------------------------------------

struct MonteCarloResult {
    std::vector<Sequence> samples;
    /// Aggregated terminal histogram, present when the space is enumerable.
    std::optional<Pmf> empirical;
    /// NFE ledger of one chain; counts are structural, so every chain agrees.
    NfeLedger per_chain;
};

inline MonteCarloResult run_monte_carlo(const SamplerConfig& config, const ScoreOracle& oracle,
                                        long n_chains, unsigned n_threads = 0) {
    config.validate();
    if (n_chains < 1) throw InvalidConfig("run_monte_carlo: need n_chains >= 1");
    if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<long>(n_threads, n_chains));

    MonteCarloResult result;
    result.samples.resize(static_cast<std::size_t>(n_chains));

    auto worker = [&](long begin, long end, NfeLedger* ledger_out) {
        for (long c = begin; c < end; ++c) {
            Rng rng(config.seed, static_cast<std::uint64_t>(c));
            SampleResult run = run_gadd_sample(config, oracle, rng);
            result.samples[static_cast<std::size_t>(c)] = std::move(run.terminal);
            if (c == begin && ledger_out) *ledger_out = run.ledger;
        }
    };

    if (n_threads <= 1) {
        worker(0, n_chains, &result.per_chain);
    } else {
        std::vector<std::thread> pool;
        const long per = (n_chains + n_threads - 1) / n_threads;
        for (unsigned ti = 0; ti < n_threads; ++ti) {
            const long begin = static_cast<long>(ti) * per;
            const long end = std::min(n_chains, begin + per);
            if (begin >= end) break;
            pool.emplace_back(worker, begin, end, ti == 0 ? &result.per_chain : nullptr);
        }
        for (auto& th : pool) th.join();
    }

    if (config.space.enumerable()) {
        std::vector<double> hist(config.space.state_count(), 0.0);
        for (const Sequence& s : result.samples)
            hist[encode(s, config.space)] += 1.0;
        result.empirical = Pmf::from_weights(config.space, std::move(hist));
    }
    return result;
}

}  // namespace gadd
