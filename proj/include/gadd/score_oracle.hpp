#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "gadd/common.hpp"
#include "gadd/forward_process.hpp"
#include "gadd/state_space.hpp"

namespace gadd {

// ---------------------------------------------------------------------------
// ScoreOracle: provider of concrete scores s_t(y, x) = q_t(y) / q_t(x) for
// Hamming-1 pairs. score_row returns the whole length-S batch for one (x, i),
// mirroring a score network emitting every ratio in a single forward pass.
// The entry at a = x[i] is identically 1.
// ---------------------------------------------------------------------------

class ScoreOracle {
public:
    virtual ~ScoreOracle() = default;

    /// Fills out[a] = s_t(x with position i set to a, x) for a in [S].
    /// All entries strictly positive; out[x[i]] == 1.
    virtual void score_row(double t, const Sequence& x, int i,
                           std::span<double> out) const = 0;

    virtual const StateSpaceSpec& space() const = 0;

    std::vector<double> score_row(double t, const Sequence& x, int i) const {
        std::vector<double> out(static_cast<std::size_t>(space().S));
        score_row(t, x, i, out);
        return out;
    }
};

// ---------------------------------------------------------------------------
// ExactScoreOracle: scores from a known q0 through the exact forward marginal.
// Marginals are cached per distinct t; the cache is internally synchronized
// and entries are immutable once published, so concurrent readers are safe.
// ---------------------------------------------------------------------------

class ExactScoreOracle : public ScoreOracle {
public:
    explicit ExactScoreOracle(Pmf q0) : q0_(std::move(q0)) {
        if (!q0_.space().enumerable())
            throw TooLarge("ExactScoreOracle: space not enumerable");
    }

    using ScoreOracle::score_row;

    const StateSpaceSpec& space() const override { return q0_.space(); }
    const Pmf& initial() const { return q0_; }

    /// Cached exact forward marginal at time t. The returned reference stays
    /// valid for the oracle's lifetime.
    const Pmf& marginal(double t) const {
        const std::uint64_t key = double_bits(t);
        // Per-thread memo of recent lookups keeps hot sampling loops off the
        // mutex entirely. Keyed by a unique instance id, never by address.
        struct Memo {
            std::uint64_t owner[4] = {0, 0, 0, 0};
            std::uint64_t tbits[4] = {0, 0, 0, 0};
            const Pmf* pmf[4] = {nullptr, nullptr, nullptr, nullptr};
            int next = 0;
        };
        thread_local Memo memo;
        for (int s = 0; s < 4; ++s)
            if (memo.owner[s] == instance_id_ && memo.tbits[s] == key) return *memo.pmf[s];

        const Pmf* found = nullptr;
        {
            std::lock_guard<std::mutex> lock(cache_mutex_);
            for (const auto& entry : cache_)
                if (entry.first == key) {
                    found = entry.second.get();
                    break;
                }
            if (!found) {
                auto fresh = std::make_unique<Pmf>(forward_marginal(q0_, t));
                found = fresh.get();
                cache_.emplace_back(key, std::move(fresh));
            }
        }
        memo.owner[memo.next] = instance_id_;
        memo.tbits[memo.next] = key;
        memo.pmf[memo.next] = found;
        memo.next = (memo.next + 1) % 4;
        return *found;
    }

    void score_row(double t, const Sequence& x, int i, std::span<double> out) const override {
        const StateSpaceSpec& spec = q0_.space();
        validate_sequence(x, spec);
        if (i < 0 || i >= spec.d) throw InvalidIndex("score_row: position out of range");
        const Pmf& qt = marginal(t);
        const StateIndex idx = encode(x, spec);
        StateIndex stride = 1;
        for (int j = 0; j < i; ++j) stride *= static_cast<StateIndex>(spec.S);
        const double qx = qt[idx];
        if (qx <= 0.0)
            throw ZeroDensity("score_row: q_t(x) = 0; impossible for t > 0 under uniform rate");
        const StateIndex base = idx - static_cast<StateIndex>(x[i]) * stride;
        for (int a = 0; a < spec.S; ++a)
            out[static_cast<std::size_t>(a)] = qt[base + static_cast<StateIndex>(a) * stride] / qx;
        out[static_cast<std::size_t>(x[i])] = 1.0;
    }

private:
    static std::uint64_t next_instance_id() {
        static std::atomic<std::uint64_t> counter{1};
        return counter.fetch_add(1, std::memory_order_relaxed);
    }

    Pmf q0_;
    std::uint64_t instance_id_ = next_instance_id();
    mutable std::mutex cache_mutex_;
    // Pointer-stable values; entries are append-only and never mutated.
    mutable std::vector<std::pair<std::uint64_t, std::unique_ptr<Pmf>>> cache_;
};

// ---------------------------------------------------------------------------
// PerturbedScoreOracle: wraps an inner oracle with deterministic keyed
// log-multiplicative noise, then clamps into [1/M, M]. Same query always
// yields the same answer, so measured estimation error is reproducible.
// ---------------------------------------------------------------------------

/// Applies the perturbation to one precomputed row. Entry `current` is the
/// identity entry and stays exactly 1.
inline void perturb_score_row(std::span<double> row, int current, double m_bound, double sigma,
                              std::uint64_t key_base) {
    if (m_bound < 1.0) throw InvalidConfig("perturb_score_row: M must be >= 1");
    if (sigma < 0.0) throw InvalidConfig("perturb_score_row: sigma must be >= 0");
    for (std::size_t a = 0; a < row.size(); ++a) {
        if (static_cast<int>(a) == current) {
            row[a] = 1.0;
            continue;
        }
        const std::uint64_t bits = hash_combine(key_base, static_cast<std::uint64_t>(a));
        const double u = (2.0 * unit_double(bits) - 1.0) * sigma;
        row[a] = std::clamp(row[a] * std::exp(u), 1.0 / m_bound, m_bound);
    }
}

class PerturbedScoreOracle : public ScoreOracle {
public:
    PerturbedScoreOracle(std::shared_ptr<const ScoreOracle> inner, double m_bound, double sigma,
                         std::uint64_t seed)
        : inner_(std::move(inner)), m_bound_(m_bound), sigma_(sigma), seed_(seed) {
        if (!inner_) throw InvalidConfig("PerturbedScoreOracle: null inner oracle");
        if (m_bound_ < 1.0) throw InvalidConfig("PerturbedScoreOracle: M must be >= 1");
        if (sigma_ < 0.0) throw InvalidConfig("PerturbedScoreOracle: sigma must be >= 0");
    }

    using ScoreOracle::score_row;

    const StateSpaceSpec& space() const override { return inner_->space(); }
    double m_bound() const { return m_bound_; }
    double sigma() const { return sigma_; }

    void score_row(double t, const Sequence& x, int i, std::span<double> out) const override {
        inner_->score_row(t, x, i, out);
        std::uint64_t key = mix64(seed_);
        key = hash_combine(key, double_bits(t));
        for (Token tok : x.tokens) key = hash_combine(key, static_cast<std::uint64_t>(tok) + 1);
        key = hash_combine(key, static_cast<std::uint64_t>(i));
        perturb_score_row(out, x[i], m_bound_, sigma_, key);
    }

private:
    std::shared_ptr<const ScoreOracle> inner_;
    double m_bound_;
    double sigma_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Measured score-estimation error: the L1 functional
//   E_{x ~ weighting} sum_{y: Ham(x,y)=1} (1/S) |s_hat(y,x) - s(y,x)|,
// reported both aggregated over positions and per position. The weighting pmf
// is a parameter because the theory weights by the sampler's own marginal;
// q_t is the usual fallback.
// ---------------------------------------------------------------------------

struct Assumption1Error {
    double aggregate = 0.0;
    std::vector<double> per_position;

    double max_per_position() const {
        double m = 0.0;
        for (double v : per_position) m = std::max(m, v);
        return m;
    }
};

inline Assumption1Error assumption1_error(const ScoreOracle& oracle, const ExactScoreOracle& exact,
                                          double t, const Pmf& weighting) {
    const StateSpaceSpec& spec = exact.space();
    if (oracle.space() != spec || weighting.space() != spec)
        throw SpecMismatch("assumption1_error: spec mismatch");
    if (!spec.enumerable()) throw TooLarge("assumption1_error: space not enumerable");

    Assumption1Error result;
    result.per_position.assign(static_cast<std::size_t>(spec.d), 0.0);
    const double rate = 1.0 / static_cast<double>(spec.S);
    std::vector<double> est(static_cast<std::size_t>(spec.S));
    std::vector<double> ref(static_cast<std::size_t>(spec.S));
    Sequence x;
    const std::uint64_t n = spec.state_count();
    for (StateIndex idx = 0; idx < n; ++idx) {
        const double w = weighting[idx];
        if (w == 0.0) continue;
        decode_into(idx, spec, x);
        for (int i = 0; i < spec.d; ++i) {
            oracle.score_row(t, x, i, est);
            exact.score_row(t, x, i, ref);
            double acc = 0.0;
            for (int a = 0; a < spec.S; ++a)
                if (a != x[i]) acc += std::abs(est[static_cast<std::size_t>(a)] -
                                               ref[static_cast<std::size_t>(a)]);
            result.per_position[static_cast<std::size_t>(i)] += w * rate * acc;
        }
    }
    for (double v : result.per_position) result.aggregate += v;
    return result;
}

}  // namespace gadd
