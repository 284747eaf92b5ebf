#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gadd/common.hpp"
#include "gadd/kernel.hpp"
#include "gadd/state_space.hpp"

namespace gadd {

// ---------------------------------------------------------------------------
// TV-vs-NFE curves.
// ---------------------------------------------------------------------------

struct TvPoint {
    long nfe = 0;
    double tv = 0.0;
};

struct TvCurve {
    std::string method;
    std::uint64_t seed = 0;
    std::vector<TvPoint> points;  // nfe strictly increasing
};

/// Smallest NFE on the curve whose tv is at or below eps.
inline std::optional<long> steps_to_epsilon(const TvCurve& curve, double eps) {
    if (curve.points.empty()) throw EmptyInput("steps_to_epsilon: empty curve");
    for (const TvPoint& p : curve.points)
        if (p.tv <= eps) return p.nfe;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Token-marginal histograms and Hellinger distance.
// ---------------------------------------------------------------------------

/// Pooled token histogram of a sample set: counts of each token value across
/// all positions of all samples, normalized.
inline std::vector<double> token_histogram(std::span<const Sequence> samples, int S) {
    if (samples.empty()) throw EmptyInput("token_histogram: no samples");
    std::vector<double> hist(static_cast<std::size_t>(S), 0.0);
    double total = 0.0;
    for (const Sequence& s : samples)
        for (Token tok : s.tokens) {
            if (tok < 0 || tok >= S) throw InvalidSequence("token_histogram: token out of range");
            hist[static_cast<std::size_t>(tok)] += 1.0;
            total += 1.0;
        }
    for (double& v : hist) v /= total;
    return hist;
}

/// Expected pooled token histogram of an exact law.
inline std::vector<double> token_marginal(const Pmf& p) {
    const StateSpaceSpec& spec = p.space();
    std::vector<double> hist(static_cast<std::size_t>(spec.S), 0.0);
    Sequence x;
    for (StateIndex idx = 0; idx < p.size(); ++idx) {
        const double w = p[idx];
        if (w == 0.0) continue;
        decode_into(idx, spec, x);
        for (Token tok : x.tokens) hist[static_cast<std::size_t>(tok)] += w;
    }
    for (double& v : hist) v /= static_cast<double>(spec.d);
    return hist;
}

/// Hellinger distance (1/sqrt(2)) || sqrt(p) - sqrt(q) ||_2 between two
/// distributions over the same support.
inline double hellinger(std::span<const double> p, std::span<const double> q) {
    if (p.empty()) throw EmptyInput("hellinger: empty input");
    if (p.size() != q.size()) throw SpecMismatch("hellinger: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double diff = std::sqrt(p[i]) - std::sqrt(q[i]);
        acc += diff * diff;
    }
    return std::sqrt(0.5 * acc);
}

inline double hellinger_histogram(std::span<const Sequence> samples,
                                  std::span<const Sequence> reference, int S) {
    return hellinger(token_histogram(samples, S), token_histogram(reference, S));
}

inline double hellinger_histogram(std::span<const Sequence> samples, const Pmf& reference) {
    return hellinger(token_histogram(samples, reference.space().S), token_marginal(reference));
}

// ---------------------------------------------------------------------------
// Contraction estimation for reversible kernels.
// ---------------------------------------------------------------------------

enum class ContractionMethod { Eigen, TvDecayFit };

struct ContractionEstimate {
    double rho = 0.0;
    ContractionMethod method = ContractionMethod::Eigen;
};

inline double reversibility_error(const DenseKernel& kernel, const Pmf& target) {
    if (kernel.space() != target.space())
        throw SpecMismatch("reversibility_error: spec mismatch");
    double worst = 0.0;
    const std::uint64_t n = kernel.size();
    for (StateIndex x = 0; x < n; ++x)
        for (StateIndex y = x + 1; y < n; ++y)
            worst = std::max(worst,
                             std::abs(target[x] * kernel.at(x, y) - target[y] * kernel.at(y, x)));
    return worst;
}

/// Spectral gap rho = 1 - |lambda_2| of the target-symmetrized kernel, by
/// power iteration with the top eigenvector sqrt(target) deflated out.
inline ContractionEstimate spectral_gap(const DenseKernel& kernel, const Pmf& target,
                                        double reversibility_tol = 1e-8, double tol = 1e-10,
                                        long max_iters = 100000) {
    if (reversibility_error(kernel, target) > reversibility_tol)
        throw NotReversible("spectral_gap: kernel is not reversible w.r.t. the target");
    const std::uint64_t n = kernel.size();
    for (StateIndex x = 0; x < n; ++x)
        if (!(target[x] > 0.0))
            throw InvalidConfig("spectral_gap: target must be strictly positive");

    // A(x,y) = sqrt(q(x)/q(y)) P(x,y); symmetric with top eigenpair (1, sqrt q).
    std::vector<double> a(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    std::vector<double> sq(static_cast<std::size_t>(n));
    for (StateIndex x = 0; x < n; ++x) sq[x] = std::sqrt(target[x]);
    for (StateIndex x = 0; x < n; ++x)
        for (StateIndex y = 0; y < n; ++y)
            a[static_cast<std::size_t>(x) * n + y] = kernel.at(x, y) * sq[x] / sq[y];

    std::vector<double> v = sq;  // unit top eigenvector (sum q = 1)
    auto deflate = [&](std::vector<double>& w) {
        double dot = 0.0;
        for (StateIndex x = 0; x < n; ++x) dot += w[x] * v[x];
        for (StateIndex x = 0; x < n; ++x) w[x] -= dot * v[x];
    };
    auto norm2 = [&](const std::vector<double>& w) {
        double acc = 0.0;
        for (double val : w) acc += val * val;
        return std::sqrt(acc);
    };

    Rng rng(0x5eed);
    std::vector<double> w(static_cast<std::size_t>(n));
    for (double& val : w) val = rng.uniform01() - 0.5;
    deflate(w);
    double wn = norm2(w);
    if (wn < 1e-14) throw NoConvergence("spectral_gap: degenerate start vector");
    for (double& val : w) val /= wn;

    std::vector<double> next(static_cast<std::size_t>(n));
    double lambda = 0.0;
    for (long iter = 0; iter < max_iters; ++iter) {
        for (StateIndex x = 0; x < n; ++x) {
            double acc = 0.0;
            const double* row = a.data() + static_cast<std::size_t>(x) * n;
            for (StateIndex y = 0; y < n; ++y) acc += row[y] * w[y];
            next[x] = acc;
        }
        deflate(next);
        const double nn = norm2(next);
        if (nn < 1e-15) {
            // Deflated operator annihilates the vector: |lambda_2| = 0.
            return {1.0, ContractionMethod::Eigen};
        }
        const double prev = lambda;
        lambda = nn;  // |lambda_2| estimate via norm growth of a unit vector
        for (StateIndex x = 0; x < n; ++x) w[x] = next[x] / nn;
        if (iter > 0 && std::abs(lambda - prev) <= tol * std::max(1.0, lambda))
            return {std::max(0.0, 1.0 - lambda), ContractionMethod::Eigen};
    }
    throw NoConvergence("spectral_gap: power iteration did not converge");
}

// ---------------------------------------------------------------------------
// Least-squares fits and the TV-decay contraction estimate.
// ---------------------------------------------------------------------------

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

inline LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw InvalidConfig("linear_fit: need >= 2 matched points");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
        syy += ys[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-30) throw InvalidConfig("linear_fit: degenerate abscissae");
    LinearFit fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss_res = 0.0;
    const double mean_y = sy / n;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double pred = fit.intercept + fit.slope * xs[i];
        ss_res += (ys[i] - pred) * (ys[i] - pred);
        ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
    }
    fit.r2 = (ss_tot <= 0.0) ? 1.0 : 1.0 - ss_res / ss_tot;
    return fit;
}

/// Contraction rate from the geometric regime of log tv(init P^l, target):
/// rho = 1 - exp(slope of the least-squares line over the tail).
inline ContractionEstimate tv_decay_rate(const DenseKernel& kernel, const Pmf& target,
                                         const Pmf& init, int steps, double floor = 1e-12) {
    if (steps < 4) throw InvalidConfig("tv_decay_rate: need steps >= 4");
    Pmf p = init;
    std::vector<double> ls, logtv;
    for (int l = 0; l <= steps; ++l) {
        const double tv = tv_distance(p, target);
        if (tv > floor) {
            ls.push_back(static_cast<double>(l));
            logtv.push_back(std::log(tv));
        }
        if (l < steps) p = kernel.push(p);
    }
    if (ls.size() < 4)
        throw InsufficientDecay("tv_decay_rate: tv at the numerical floor before the fit window");
    // Fit over the tail where the leading eigenmode dominates.
    const std::size_t start = ls.size() - std::max<std::size_t>(4, (ls.size() * 3) / 5);
    LinearFit fit = linear_fit(std::span(ls).subspan(start), std::span(logtv).subspan(start));
    const double rho = 1.0 - std::exp(fit.slope);
    return {std::clamp(rho, 0.0, 1.0), ContractionMethod::TvDecayFit};
}

/// Largest violation of tv(pK, qK) <= tv(p, q) over supplied pairs.
inline double data_processing_violation(const DenseKernel& kernel, const Pmf& p, const Pmf& q) {
    return tv_distance(kernel.push(p), kernel.push(q)) - tv_distance(p, q);
}

}  // namespace gadd
