#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "gadd/common.hpp"
#include "gadd/state_space.hpp"

namespace gadd {

// ---------------------------------------------------------------------------
// Target distribution builders for the experiment harness.
// ---------------------------------------------------------------------------

enum class TargetKind {
    UniformBand,          // entries drawn in [l, u], normalized
    Ar,                   // order-h autoregressive conditional tables
    MixtureOfSingletons,  // sparse support of random sequences
    File,                 // user-provided pmf file
};

inline const char* to_string(TargetKind k) {
    switch (k) {
        case TargetKind::UniformBand: return "uniform-band";
        case TargetKind::Ar: return "ar";
        case TargetKind::MixtureOfSingletons: return "mixture";
        case TargetKind::File: return "file";
    }
    return "?";
}

struct TargetSpec {
    TargetKind kind = TargetKind::UniformBand;
    StateSpaceSpec space;
    double band_lo = 0.5;
    double band_hi = 2.0;
    int ar_order = 2;
    int support = 0;  // mixture support size; 0 means ceil to d
    std::string path;
};

namespace detail {

/// Positive random row summing to 1 (exponential draws, a Dirichlet(1) row).
inline void dirichlet_row(Rng& rng, std::span<double> row) {
    double sum = 0.0;
    for (double& v : row) {
        v = -std::log(1.0 - rng.uniform01());
        sum += v;
    }
    for (double& v : row) v /= sum;
}

}  // namespace detail

inline Pmf build_target(const TargetSpec& target, Rng& rng) {
    const StateSpaceSpec& spec = target.space;
    const std::uint64_t n = spec.state_count();

    switch (target.kind) {
        case TargetKind::UniformBand: {
            if (!(target.band_lo >= 0.0) || !(target.band_hi >= target.band_lo) ||
                !(target.band_hi > 0.0))
                throw InvalidConfig("uniform-band target: need 0 <= l <= u, u > 0");
            std::vector<double> w(static_cast<std::size_t>(n));
            for (double& v : w)
                v = target.band_lo + (target.band_hi - target.band_lo) * rng.uniform01();
            return Pmf::from_weights(spec, std::move(w));
        }

        case TargetKind::Ar: {
            const int h = target.ar_order;
            if (h < 0) throw InvalidConfig("ar target: order must be >= 0");
            // Conditional tables: position i has S^min(i,h) contexts over the
            // preceding min(i,h) tokens, each row a random distribution.
            std::vector<std::vector<double>> tables(static_cast<std::size_t>(spec.d));
            for (int i = 0; i < spec.d; ++i) {
                const int m = std::min(i, h);
                std::uint64_t n_ctx = 1;
                for (int j = 0; j < m; ++j) n_ctx *= static_cast<std::uint64_t>(spec.S);
                auto& tab = tables[static_cast<std::size_t>(i)];
                tab.resize(n_ctx * static_cast<std::uint64_t>(spec.S));
                for (std::uint64_t c = 0; c < n_ctx; ++c)
                    detail::dirichlet_row(
                        rng, {tab.data() + c * static_cast<std::uint64_t>(spec.S),
                              static_cast<std::size_t>(spec.S)});
            }
            std::vector<double> w(static_cast<std::size_t>(n));
            Sequence x;
            for (StateIndex idx = 0; idx < n; ++idx) {
                decode_into(idx, spec, x);
                double prob = 1.0;
                for (int i = 0; i < spec.d; ++i) {
                    const int m = std::min(i, h);
                    std::uint64_t ctx = 0;
                    for (int j = 1; j <= m; ++j)
                        ctx = ctx * static_cast<std::uint64_t>(spec.S) +
                              static_cast<std::uint64_t>(x[i - j]);
                    prob *= tables[static_cast<std::size_t>(i)]
                                  [ctx * static_cast<std::uint64_t>(spec.S) +
                                   static_cast<std::uint64_t>(x[i])];
                }
                w[idx] = prob;
            }
            return Pmf::from_weights(spec, std::move(w));
        }

        case TargetKind::MixtureOfSingletons: {
            const std::uint64_t support =
                target.support > 0 ? static_cast<std::uint64_t>(target.support)
                                   : static_cast<std::uint64_t>(spec.d);
            if (support > n) throw InvalidConfig("mixture target: support exceeds S^d");
            std::unordered_set<std::uint64_t> picked;
            while (picked.size() < support)
                picked.insert(static_cast<std::uint64_t>(rng.uniform01() * static_cast<double>(n)) % n);
            std::vector<double> w(static_cast<std::size_t>(n), 0.0);
            for (std::uint64_t idx : picked)
                w[idx] = -std::log(1.0 - rng.uniform01());
            return Pmf::from_weights(spec, std::move(w));
        }

        case TargetKind::File: {
            Pmf p = read_pmf_file(target.path);
            if (p.space() != spec)
                throw SpecMismatch("file target: pmf dimensions disagree with configured space");
            return p;
        }
    }
    throw InvalidConfig("build_target: unknown kind");
}

}  // namespace gadd
