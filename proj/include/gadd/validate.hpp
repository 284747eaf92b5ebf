#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gadd/corrector.hpp"
#include "gadd/evaluation.hpp"
#include "gadd/experiment.hpp"
#include "gadd/forward_process.hpp"
#include "gadd/pipeline.hpp"
#include "gadd/predictor.hpp"
#include "gadd/score_oracle.hpp"
#include "gadd/state_space.hpp"

namespace gadd {

// ---------------------------------------------------------------------------
// The built-in invariant suite behind the `validate` command. Every bullet in
// the modules' invariant lists runs here as a named check on small instances.
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct ValidationOptions {
    /// Test hook: corrupt a kernel row so the row-sum check must fail.
    bool inject_bad_kernel = false;
};

namespace validate_detail {

inline Pmf random_pmf(const StateSpaceSpec& spec, Rng& rng) {
    std::vector<double> w(spec.state_count());
    for (double& v : w) v = 0.05 + rng.uniform01();
    return Pmf::from_weights(spec, std::move(w));
}

inline Pmf product_pmf(const StateSpaceSpec& spec, Rng& rng) {
    std::vector<std::vector<double>> marg(static_cast<std::size_t>(spec.d));
    for (auto& m : marg) {
        m.resize(static_cast<std::size_t>(spec.S));
        double sum = 0.0;
        for (double& v : m) {
            v = 0.2 + rng.uniform01();
            sum += v;
        }
        for (double& v : m) v /= sum;
    }
    std::vector<double> w(spec.state_count());
    Sequence x;
    for (StateIndex idx = 0; idx < spec.state_count(); ++idx) {
        decode_into(idx, spec, x);
        double prob = 1.0;
        for (int i = 0; i < spec.d; ++i)
            prob *= marg[static_cast<std::size_t>(i)][static_cast<std::size_t>(x[i])];
        w[idx] = prob;
    }
    return Pmf::from_weights(spec, std::move(w));
}

inline std::vector<double> true_conditional(const Pmf& q, const Sequence& x, int i) {
    const StateSpaceSpec& spec = q.space();
    StateIndex stride = 1;
    for (int j = 0; j < i; ++j) stride *= static_cast<StateIndex>(spec.S);
    const StateIndex base = encode(x, spec) - static_cast<StateIndex>(x[i]) * stride;
    std::vector<double> out(static_cast<std::size_t>(spec.S));
    double sum = 0.0;
    for (int a = 0; a < spec.S; ++a)
        sum += out[static_cast<std::size_t>(a)] = q[base + static_cast<StateIndex>(a) * stride];
    for (double& v : out) v /= sum;
    return out;
}

struct Checker {
    std::vector<CheckResult> results;

    void run(const std::string& name, const std::function<std::string()>& body) {
        CheckResult r;
        r.name = name;
        try {
            r.detail = body();
            r.pass = true;
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = e.what();
        }
        results.push_back(std::move(r));
    }
};

inline void require(bool cond, const std::string& message) {
    if (!cond) throw Error(message);
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

}  // namespace validate_detail

inline std::vector<CheckResult> run_validation(const ValidationOptions& opts = {}) {
    using namespace validate_detail;
    Checker c;

    // ---- state_space ----
    c.run("state-space/codec-roundtrip", [] {
        for (const StateSpaceSpec spec : {StateSpaceSpec(4, 10), StateSpaceSpec(13, 2),
                                          StateSpaceSpec(3, 21)})
            for (StateIndex idx = 0; idx < spec.state_count(); ++idx)
                require(encode(decode(idx, spec), spec) == idx, "round-trip failed");
        return "exhaustive over three spaces up to 10^4 states";
    });

    c.run("state-space/tv-metric", [] {
        Rng rng(101);
        const StateSpaceSpec spec(2, 3);
        for (int rep = 0; rep < 50; ++rep) {
            const Pmf p = random_pmf(spec, rng);
            const Pmf q = random_pmf(spec, rng);
            const Pmf r = random_pmf(spec, rng);
            const double pq = tv_distance(p, q);
            require(pq >= 0.0 && pq <= 1.0, "tv out of range");
            require(std::abs(pq - tv_distance(q, p)) <= 1e-12, "tv asymmetric");
            require(pq <= tv_distance(p, r) + tv_distance(r, q) + 1e-12, "triangle violated");
        }
        return "symmetry, range, triangle inequality on 50 random pmf triples";
    });

    c.run("state-space/pmf-normalization", [] {
        Rng rng(102);
        for (int rep = 0; rep < 50; ++rep) {
            const Pmf p = random_pmf(StateSpaceSpec(3, 3), rng);
            double sum = 0.0;
            for (StateIndex i = 0; i < p.size(); ++i) sum += p[i];
            require(std::abs(sum - 1.0) <= 1e-12, "normalization residual too large");
        }
        return "residual <= 1e-12 after 50 constructions";
    });

    // ---- forward_process ----
    c.run("forward/kernel-vs-expm", [] {
        double worst = 0.0;
        for (int S : {2, 4, 8})
            for (double t : {0.1, 1.0, 5.0}) {
                const TokenKernel k = token_kernel(t, S);
                const auto m = token_kernel_numerical(t, S);
                for (int a = 0; a < S; ++a)
                    for (int b = 0; b < S; ++b)
                        worst = std::max(worst,
                                         std::abs(m[static_cast<std::size_t>(a) * S + b] -
                                                  (a == b ? k.p_stay : k.p_switch)));
            }
        require(worst <= 1e-10, "closed form disagrees with matrix exponential");
        return "max entry error " + fmt(worst);
    });

    c.run("forward/semigroup", [] {
        for (double s : {0.1, 0.5, 2.0})
            for (double t : {0.1, 0.5, 2.0})
                for (int S : {2, 3, 4}) {
                    const TokenKernel ks = token_kernel(s, S);
                    const TokenKernel kt = token_kernel(t, S);
                    const TokenKernel kst = token_kernel(s + t, S);
                    const double stay =
                        ks.p_stay * kt.p_stay + (S - 1) * ks.p_switch * kt.p_switch;
                    require(std::abs(stay - kst.p_stay) <= 1e-12, "semigroup violated");
                }
        return "K_s K_t = K_{s+t} over the {0.1,0.5,2} grid";
    });

    c.run("forward/generator-limit", [] {
        const int S = 3;
        auto err = [S](double h) {
            const TokenKernel k = token_kernel(h, S);
            return std::max(std::abs((k.p_stay - 1.0) / h + (double)(S - 1) / S),
                            std::abs(k.p_switch / h - 1.0 / S));
        };
        const double ratio = err(1e-3) / err(1e-4);
        require(ratio > 7.0 && ratio < 13.0, "first-order error ratio " + fmt(ratio));
        return "(K_h - I)/h -> G with error ratio " + fmt(ratio);
    });

    c.run("forward/marginal-brute-force", [] {
        Rng rng(103);
        double worst = 0.0;
        for (const StateSpaceSpec spec : {StateSpaceSpec(3, 4), StateSpaceSpec(2, 3)}) {
            const Pmf q0 = random_pmf(spec, rng);
            for (double t : {0.05, 0.4, 1.3}) {
                const Pmf fast = forward_marginal(q0, t);
                const auto k = token_kernel_numerical(t, spec.S);
                std::vector<double> slow(spec.state_count(), 0.0);
                Sequence from, to;
                for (StateIndex xi = 0; xi < spec.state_count(); ++xi) {
                    decode_into(xi, spec, to);
                    for (StateIndex x0 = 0; x0 < spec.state_count(); ++x0) {
                        decode_into(x0, spec, from);
                        double prob = q0[x0];
                        for (int i = 0; i < spec.d; ++i)
                            prob *= k[static_cast<std::size_t>(from[i]) * spec.S +
                                     static_cast<std::size_t>(to[i])];
                        slow[xi] += prob;
                    }
                }
                for (StateIndex i = 0; i < spec.state_count(); ++i)
                    worst = std::max(worst, std::abs(fast[i] - slow[i]));
            }
        }
        require(worst <= 1e-12, "axis contraction disagrees with double sum");
        return "max entry error " + fmt(worst);
    });

    c.run("forward/monotone-mixing", [] {
        Rng rng(104);
        const StateSpaceSpec spec(3, 3);
        const Pmf q0 = random_pmf(spec, rng);
        const Pmf u = Pmf::uniform(spec);
        double prev = tv_distance(q0, u);
        for (double t : {0.1, 0.25, 0.5, 1.0, 2.0, 4.0}) {
            const double cur = tv_distance(forward_marginal(q0, t), u);
            require(cur <= prev + 1e-13, "tv to uniform increased");
            prev = cur;
        }
        return "tv to uniform nonincreasing on the sampled grid";
    });

    // ---- score_oracle ----
    c.run("score/consistency-identity", [] {
        Rng rng(105);
        double worst = 0.0;
        for (const StateSpaceSpec spec : {StateSpaceSpec(3, 4), StateSpaceSpec(2, 3)}) {
            ExactScoreOracle oracle(random_pmf(spec, rng));
            const double t = 0.7;
            Sequence x, y;
            for (StateIndex idx = 0; idx < spec.state_count(); ++idx) {
                decode_into(idx, spec, x);
                for (int i = 0; i < spec.d; ++i) {
                    const auto row_x = oracle.score_row(t, x, i);
                    for (int a = 0; a < spec.S; ++a) {
                        if (a == x[i]) continue;
                        y = x;
                        y[i] = static_cast<Token>(a);
                        const auto row_y = oracle.score_row(t, y, i);
                        worst = std::max(worst, std::abs(row_x[static_cast<std::size_t>(a)] *
                                                             row_y[static_cast<std::size_t>(x[i])] -
                                                         1.0));
                    }
                }
            }
        }
        require(worst <= 1e-10, "s(y,x) s(x,y) != 1");
        return "max |s(y,x) s(x,y) - 1| = " + fmt(worst);
    });

    c.run("score/perturbed-range", [] {
        const StateSpaceSpec spec(3, 4);
        Rng rng(106);
        auto inner = std::make_shared<ExactScoreOracle>(random_pmf(spec, rng));
        const double m_bound = 1.4;
        PerturbedScoreOracle oracle(inner, m_bound, 0.8, 9);
        Sequence x;
        for (int rep = 0; rep < 400; ++rep) {
            decode_into(static_cast<StateIndex>(rng.uniform01() * 64), spec, x);
            const auto row = oracle.score_row(0.1 + rng.uniform01(), x, rng.uniform_int(spec.d));
            for (double v : row)
                require(v >= 1.0 / m_bound - 1e-15 && v <= m_bound + 1e-15, "score out of [1/M,M]");
        }
        return "400 random queries stayed in [1/M, M]";
    });

    c.run("score/assumption1-exact-zero", [] {
        const StateSpaceSpec spec(2, 3);
        Rng rng(107);
        ExactScoreOracle oracle(random_pmf(spec, rng));
        const double eps = assumption1_error(oracle, oracle, 0.6, oracle.marginal(0.6)).aggregate;
        require(eps == 0.0, "exact oracle has nonzero estimation error");
        return "assumption-1 error of the exact oracle is exactly 0";
    });

    c.run("score/assumption1-monotone-sigma", [] {
        const StateSpaceSpec spec(2, 3);
        Rng rng(108);
        auto inner = std::make_shared<ExactScoreOracle>(random_pmf(spec, rng));
        const Pmf qt = inner->marginal(0.6);
        double prev = -1.0;
        for (double sigma : {0.0, 0.05, 0.1, 0.2}) {
            PerturbedScoreOracle noisy(inner, 1e12, sigma, 5);
            const double eps = assumption1_error(noisy, *inner, 0.6, qt).aggregate;
            require(eps >= prev, "error not monotone in sigma");
            prev = eps;
        }
        return "nondecreasing over sigma in {0, 0.05, 0.1, 0.2}";
    });

    // ---- predictor ----
    c.run("predictor/kernel-rows-stochastic", [&opts] {
        const StateSpaceSpec spec(2, 3);
        Rng rng(109);
        ExactScoreOracle oracle(random_pmf(spec, rng));
        DenseKernel kernel = euler_step_kernel(EulerStepSpec(0.8, 0.7), oracle);
        if (opts.inject_bad_kernel) kernel.at(0, 0) += 0.25;
        const double err = kernel.max_row_sum_error();
        require(err <= 1e-12, "kernel row sums off by " + fmt(err));
        double least = 1.0;
        for (StateIndex x = 0; x < kernel.size(); ++x)
            for (StateIndex y = 0; y < kernel.size(); ++y) least = std::min(least, kernel.at(x, y));
        require(least >= 0.0, "negative kernel entry");
        return "rows nonnegative, max row-sum error " + fmt(err);
    });

    c.run("predictor/one-step-order-h2", [] {
        const StateSpaceSpec spec(2, 3);
        Rng rng(110);
        ExactScoreOracle oracle(random_pmf(spec, rng));
        const double t_hi = 0.8;
        auto err = [&](double h) {
            const Pmf q_hi = oracle.marginal(t_hi);
            const Pmf q_lo = oracle.marginal(t_hi - h);
            const auto pushed = apply_euler_step(q_hi.mass(), EulerStepSpec(t_hi, t_hi - h), oracle);
            return tv_distance(std::span<const double>(pushed),
                               std::span<const double>(q_lo.mass()));
        };
        const double ratio = err(0.02) / err(0.01);
        require(ratio >= 3.0 && ratio <= 5.0, "halving h gave error ratio " + fmt(ratio));
        return "halving h scales one-step tv by " + fmt(ratio);
    });

    c.run("predictor/sampling-kernel-agreement", [] {
        const StateSpaceSpec spec(2, 2);
        Rng rng(111);
        ExactScoreOracle oracle(random_pmf(spec, rng));
        const EulerStepSpec step(0.7, 0.5);
        const DenseKernel kernel = euler_step_kernel(step, oracle);
        const Sequence x{1, 0};
        const StateIndex xi = encode(x, spec);
        const int n = 100000;
        std::vector<long> counts(spec.state_count(), 0);
        Rng draws(112);
        for (int rep = 0; rep < n; ++rep)
            counts[encode(euler_step_sample(x, step, oracle, draws), spec)]++;
        for (StateIndex y = 0; y < spec.state_count(); ++y) {
            const double p = kernel.at(xi, y);
            const double sigma = std::sqrt(n * p * (1.0 - p));
            require(std::abs(counts[y] - n * p) <= 3.0 * sigma + 1.0,
                    "empirical frequency outside 3 sigma");
        }
        return "10^5 draws match kernel row within 3 sigma";
    });

    // ---- corrector ----
    c.run("corrector/estimator-equivalence", [] {
        Rng rng(113);
        double worst = 0.0;
        for (const StateSpaceSpec spec : {StateSpaceSpec(3, 4), StateSpaceSpec(2, 3)}) {
            ExactScoreOracle oracle(random_pmf(spec, rng));
            for (double t : {0.2, 1.0, 3.0}) {
                const Pmf qt = oracle.marginal(t);
                Sequence x;
                for (StateIndex idx = 0; idx < spec.state_count(); ++idx) {
                    decode_into(idx, spec, x);
                    for (int i = 0; i < spec.d; ++i) {
                        const auto truth = true_conditional(qt, x, i);
                        for (EstimatorVariant v :
                             {EstimatorVariant::InverseSum, EstimatorVariant::AnchorRatio,
                              EstimatorVariant::AveragedRatio, EstimatorVariant::SumNormalized}) {
                            const auto est = posterior_estimate(oracle, t, x, i, v);
                            for (int a = 0; a < spec.S; ++a)
                                worst = std::max(worst, std::abs(est[(std::size_t)a] -
                                                                 truth[(std::size_t)a]));
                        }
                    }
                }
            }
        }
        require(worst <= 1e-12, "estimator variants disagree with the true conditional");
        return "four variants vs true conditional, max error " + fmt(worst);
    });

    c.run("corrector/gibbs-stationarity", [] {
        Rng rng(114);
        GibbsCorrectorConfig cfg;
        cfg.policy = ScorePolicy::Fresh;
        double worst = 0.0;
        for (const StateSpaceSpec spec : {StateSpaceSpec(2, 3), StateSpaceSpec(4, 2)}) {
            ExactScoreOracle oracle(random_pmf(spec, rng));
            for (double t : {0.2, 1.0, 3.0}) {
                const Pmf qt = oracle.marginal(t);
                const auto pushed = apply_gibbs_step(qt.mass(), t, cfg, oracle);
                worst = std::max(worst, tv_distance(std::span<const double>(pushed),
                                                    std::span<const double>(qt.mass())));
            }
        }
        require(worst <= 1e-10, "q_t is not stationary for the Gibbs kernel");
        return "max tv(q_t P, q_t) = " + fmt(worst);
    });

    c.run("corrector/gibbs-detailed-balance", [] {
        Rng rng(115);
        GibbsCorrectorConfig cfg;
        cfg.policy = ScorePolicy::Fresh;
        double worst = 0.0;
        for (const StateSpaceSpec spec : {StateSpaceSpec(2, 3), StateSpaceSpec(3, 3)}) {
            ExactScoreOracle oracle(random_pmf(spec, rng));
            const double t = 0.5;
            const Pmf qt = oracle.marginal(t);
            worst = std::max(worst, reversibility_error(gibbs_kernel_exact(t, cfg, oracle), qt));
        }
        require(worst <= 1e-12, "detailed balance violated");
        return "max flux asymmetry " + fmt(worst);
    });

    c.run("corrector/mismatched-kernel-bound", [] {
        Rng rng(116);
        const StateSpaceSpec spec(2, 3);
        auto inner = std::make_shared<ExactScoreOracle>(random_pmf(spec, rng));
        PerturbedScoreOracle noisy(inner, 40.0, 0.3, 321);
        const double t = 0.8;
        GibbsCorrectorConfig cfg;
        cfg.policy = ScorePolicy::Fresh;
        const std::uint64_t n = spec.state_count();
        std::vector<double> mismatch(n, 0.0);
        Sequence x;
        for (StateIndex idx = 0; idx < n; ++idx) {
            decode_into(idx, spec, x);
            for (int i = 0; i < spec.d; ++i) {
                const auto exact_post = posterior_estimate(*inner, t, x, i, cfg.estimator);
                const auto noisy_post = posterior_estimate(noisy, t, x, i, cfg.estimator);
                mismatch[idx] += tv_distance(std::span<const double>(noisy_post),
                                             std::span<const double>(exact_post)) /
                                 spec.d;
            }
        }
        std::vector<double> p(Pmf::uniform(spec).mass());
        std::vector<double> p_hat = p;
        double eps = 0.0;
        for (int l = 1; l <= 20; ++l) {
            double step_mismatch = 0.0;
            for (StateIndex idx = 0; idx < n; ++idx) step_mismatch += p[idx] * mismatch[idx];
            eps = std::max(eps, step_mismatch);
            p = apply_gibbs_step(p, t, cfg, *inner);
            p_hat = apply_gibbs_step(p_hat, t, cfg, noisy);
            require(tv_distance(std::span<const double>(p_hat), std::span<const double>(p)) <=
                        l * eps + 1e-10,
                    "tv(p_hat_L, p_L) exceeded L * eps at L = " + std::to_string(l));
        }
        return "tv(p_hat_L, p_L) <= L*eps for L <= 20, eps = " + fmt(eps);
    });

    c.run("corrector/spectral-gap-product-target", [] {
        Rng rng(117);
        GibbsCorrectorConfig cfg;
        cfg.policy = ScorePolicy::Fresh;
        std::string detail;
        for (int d : {2, 3, 4}) {
            const StateSpaceSpec spec(d, 2);
            ExactScoreOracle oracle(product_pmf(spec, rng));
            const double t = 0.4;
            const Pmf qt = oracle.marginal(t);
            const double rho = spectral_gap(gibbs_kernel_exact(t, cfg, oracle), qt).rho;
            require(std::abs(rho - 1.0 / d) <= 0.1 / d,
                    "gap " + fmt(rho) + " != 1/" + std::to_string(d));
            detail += "d=" + std::to_string(d) + ":" + fmt(rho) + " ";
        }
        return detail;
    });

    c.run("corrector/nfe-accounting", [] {
        const StateSpaceSpec spec(2, 3);
        Rng rng(118);
        ExactScoreOracle oracle(random_pmf(spec, rng));
        SamplerConfig cfg;
        cfg.space = spec;
        cfg.grid = build_time_grid(6.0, 0.05, kappa_for_steps(6.0, 0.05, 16));
        cfg.corrector = CorrectorKind::Gibbs;
        cfg.gibbs.L = {5};
        cfg.gibbs.policy = ScorePolicy::Stale;
        cfg.seed = 3;
        Rng r1(3);
        const SampleResult stale = run_gadd_sample(cfg, oracle, r1);
        require(stale.ledger.predictor_calls == 16 && stale.ledger.corrector_calls == 16,
                "stale ledger mismatch");
        cfg.gibbs.policy = ScorePolicy::Fresh;
        Rng r2(3);
        const SampleResult fresh = run_gadd_sample(cfg, oracle, r2);
        require(fresh.ledger.corrector_calls == 80, "fresh ledger mismatch");
        return "predictor 16; stale loops 16; fresh steps 80";
    });

    c.run("corrector/ctmc-stationarity", [] {
        Rng rng(119);
        double worst = 0.0;
        for (const StateSpaceSpec spec : {StateSpaceSpec(2, 3), StateSpaceSpec(3, 3)}) {
            ExactScoreOracle oracle(random_pmf(spec, rng));
            const double t = 0.6;
            const Pmf qt = oracle.marginal(t);
            Sequence x, y;
            for (StateIndex yi = 0; yi < spec.state_count(); ++yi) {
                decode_into(yi, spec, y);
                double residual = 0.0;
                for (StateIndex xi = 0; xi < spec.state_count(); ++xi) {
                    decode_into(xi, spec, x);
                    if (hamming(x, y) <= 1) residual += qt[xi] * ctmc_corrector_rate(x, y, t, oracle);
                }
                worst = std::max(worst, std::abs(residual));
            }
        }
        require(worst <= 1e-10, "generator residual " + fmt(worst));
        return "max_y |sum_x q_t(x) R^c(x,y)| = " + fmt(worst);
    });

    c.run("corrector/ctmc-discretization-floor", [] {
        const StateSpaceSpec spec(2, 3);
        Rng rng(120);
        ExactScoreOracle oracle(random_pmf(spec, rng));
        const double t = 0.6;
        const Pmf qt = oracle.marginal(t);
        auto plateau = [&](double eta) {
            std::vector<double> law(Pmf::uniform(spec).mass());
            for (int l = 0; l < 2500; ++l) law = apply_ctmc_step(law, t, eta, oracle);
            return tv_distance(std::span<const double>(law), std::span<const double>(qt.mass()));
        };
        const double p1 = plateau(0.08), p2 = plateau(0.04);
        require(p1 > 1e-8, "plateau vanished");
        require(p1 / p2 >= 1.5 && p1 / p2 <= 3.0, "plateau ratio " + fmt(p1 / p2));
        return "plateau(0.08)/plateau(0.04) = " + fmt(p1 / p2);
    });

    // ---- pipeline ----
    c.run("pipeline/grid-invariant-fuzz", [] {
        Rng rng(121);
        for (int rep = 0; rep < 200; ++rep) {
            const double T = 1.0 + 9.0 * rng.uniform01();
            const double delta = 1e-3 + 0.499 * rng.uniform01();
            const double kappa = 0.05 + 0.45 * rng.uniform01();
            const TimeGrid grid = build_time_grid(T, delta, kappa);
            require(grid.points.front() == T && grid.points.back() == delta, "endpoints off");
            for (std::size_t k = 0; k + 1 < grid.points.size(); ++k)
                require(grid.points[k] - grid.points[k + 1] <=
                            kappa * std::min(1.0, grid.points[k]) + 1e-9,
                        "kappa bound violated");
        }
        return "200 random (T, delta, kappa) draws satisfy the step bound";
    });

    c.run("pipeline/ledger-counts", [] {
        const StateSpaceSpec spec(2, 2);
        Rng rng(122);
        ExactScoreOracle oracle(random_pmf(spec, rng));
        SamplerConfig cfg;
        cfg.space = spec;
        cfg.grid = build_time_grid(4.0, 0.1, kappa_for_steps(4.0, 0.1, 8));
        cfg.corrector = CorrectorKind::Gibbs;
        std::vector<int> schedule{0, 2, 0, 3, 0, 0, 1, 0};
        cfg.gibbs.L = schedule;
        cfg.gibbs.policy = ScorePolicy::Fresh;
        Rng r1(9);
        const SampleResult fresh = run_gadd_sample(cfg, oracle, r1);
        require(fresh.ledger.predictor_calls == 8, "predictor != N");
        require(fresh.ledger.corrector_calls == 6, "fresh != sum L_k");
        cfg.gibbs.policy = ScorePolicy::Stale;
        Rng r2(9);
        const SampleResult stale = run_gadd_sample(cfg, oracle, r2);
        require(stale.ledger.corrector_calls == 3, "stale != #{L_k > 0}");
        require(stale.ledger.total() == stale.ledger.predictor_calls + stale.ledger.corrector_calls,
                "total mismatch");
        return "predictor N, fresh sum L_k, stale #{L_k > 0}";
    });

    c.run("pipeline/clamp-invariance", [] {
        const StateSpaceSpec spec(3, 3);
        Rng rng(123);
        ExactScoreOracle oracle(random_pmf(spec, rng));
        SamplerConfig cfg;
        cfg.space = spec;
        cfg.grid = build_time_grid(4.0, 0.1, 0.3);
        cfg.clamp = ClampMask{{1}, {2}};
        for (CorrectorKind kind : {CorrectorKind::None, CorrectorKind::Gibbs, CorrectorKind::Ctmc}) {
            cfg.corrector = kind;
            cfg.gibbs.L = {3};
            cfg.ctmc.eta = 0.02;
            cfg.ctmc.steps = 2;
            Rng r(77);
            std::vector<Sequence> traj;
            run_gadd_sample(cfg, oracle, r, &traj);
            for (const Sequence& s : traj) require(s[1] == 2, "clamped position moved");
        }
        return "clamped token pinned through every mode's trajectory";
    });

    c.run("pipeline/pushforward-vs-monte-carlo", [] {
        const StateSpaceSpec spec(2, 2);
        Rng rng(124);
        ExactScoreOracle oracle(random_pmf(spec, rng));
        SamplerConfig cfg;
        cfg.space = spec;
        cfg.grid = build_time_grid(4.0, 0.1, 0.25);
        cfg.seed = 5;
        const auto records = run_pushforward(cfg, oracle);
        const long n = 40000;
        const MonteCarloResult mc = run_monte_carlo(cfg, oracle, n);
        const double tv = tv_distance(*mc.empirical, records.back().law);
        const double bound = 3.0 * std::sqrt(static_cast<double>(spec.state_count()) / n);
        require(tv <= bound, "empirical histogram off by " + fmt(tv));
        return "tv(empirical, exact law) = " + fmt(tv) + " within " + fmt(bound);
    });

    c.run("pipeline/euler-reduction-bit-identical", [] {
        const StateSpaceSpec spec(3, 3);
        Rng rng(125);
        ExactScoreOracle oracle(random_pmf(spec, rng));
        SamplerConfig cfg;
        cfg.space = spec;
        cfg.grid = build_time_grid(4.0, 0.05, 0.3);
        for (std::uint64_t seed : {1ull, 7ull, 19ull}) {
            SamplerConfig gadd_cfg = cfg;
            gadd_cfg.corrector = CorrectorKind::Gibbs;
            gadd_cfg.gibbs.L = {0};
            Rng ra(seed), rb(seed);
            std::vector<Sequence> ta, tb;
            const SampleResult a = run_euler_sample(cfg, oracle, ra, &ta);
            const SampleResult b = run_gadd_sample(gadd_cfg, oracle, rb, &tb);
            require(a.terminal == b.terminal && a.ledger == b.ledger && ta == tb,
                    "GADD with L=0 diverged from the Euler baseline");
        }
        return "trajectories and ledgers identical across 3 seeds";
    });

    // ---- evaluation ----
    c.run("evaluation/gap-estimators-agree", [] {
        Rng rng(126);
        GibbsCorrectorConfig cfg;
        cfg.policy = ScorePolicy::Fresh;
        std::string detail;
        for (const StateSpaceSpec spec : {StateSpaceSpec(2, 3), StateSpaceSpec(3, 2)}) {
            ExactScoreOracle oracle(random_pmf(spec, rng));
            const double t = 0.5;
            const Pmf qt = oracle.marginal(t);
            const DenseKernel kernel = gibbs_kernel_exact(t, cfg, oracle);
            const double eig = spectral_gap(kernel, qt).rho;
            const double fit = tv_decay_rate(kernel, qt, Pmf::point(spec, 0), 220).rho;
            require(std::abs(fit - eig) <= 0.15 * eig,
                    "estimators differ: " + fmt(eig) + " vs " + fmt(fit));
            detail += fmt(eig) + "/" + fmt(fit) + " ";
        }
        return "eigen vs decay-fit: " + detail;
    });

    c.run("evaluation/data-processing-inequality", [] {
        Rng rng(127);
        const StateSpaceSpec spec(2, 3);
        ExactScoreOracle oracle(random_pmf(spec, rng));
        GibbsCorrectorConfig gcfg;
        gcfg.policy = ScorePolicy::Fresh;
        const DenseKernel gibbs = gibbs_kernel_exact(0.5, gcfg, oracle);
        const DenseKernel euler = euler_step_kernel(EulerStepSpec(0.6, 0.5), oracle);
        for (int rep = 0; rep < 20; ++rep) {
            const Pmf p = random_pmf(spec, rng);
            const Pmf q = random_pmf(spec, rng);
            require(data_processing_violation(gibbs, p, q) <= 1e-12, "gibbs kernel expanded tv");
            require(data_processing_violation(euler, p, q) <= 1e-12, "euler kernel expanded tv");
        }
        return "tv(pK, qK) <= tv(p, q) over 20 random pairs, both kernel families";
    });

    c.run("evaluation/hellinger-bounds", [] {
        Rng rng(128);
        const StateSpaceSpec spec(3, 3);
        for (int rep = 0; rep < 30; ++rep) {
            const Pmf p = random_pmf(spec, rng);
            const Pmf q = random_pmf(spec, rng);
            const auto mp = token_marginal(p);
            const auto mq = token_marginal(q);
            const double h = hellinger(mp, mq);
            require(h >= 0.0 && h <= 1.0, "hellinger out of [0,1]");
            require(h * h <= tv_distance(std::span<const double>(mp),
                                         std::span<const double>(mq)) +
                                1e-12,
                    "h^2 > tv");
        }
        return "h in [0,1] and h^2 <= tv on 30 random token marginals";
    });

    // ---- experiment records ----
    c.run("experiment/csv-deterministic", [] {
        std::vector<ExperimentRecord> rows(2);
        rows[0] = {"euler", 3, 16, 0.125, std::nullopt, 1};
        rows[1] = {"gadd", 3, 16, 0.015625, 0.25, 2};
        const std::string a = format_csv(rows);
        const std::string b = format_csv(rows);
        require(a == b, "formatting is unstable");
        require(a.find("gadd,3,16,0.015625,0.25,") != std::string::npos, "row layout changed");
        require(a.find("euler,3,16,0.125,,") != std::string::npos,
                "absent optional metric must serialize as empty");
        return "byte-identical rows; empty strings for absent metrics";
    });

    c.run("experiment/seed-override-recorded", [] {
        ConfigFile cfg = ConfigFile::parse_string(
            "[target]\nkind = uniform-band\nd = 2\nS = 2\nseed = 4\n"
            "[grid]\nT = 2.0\ndelta = 0.2\nkappa = 0.4\n[sampler]\nseed = 11\n");
        cfg.set("sampler.seed=77");
        const ExperimentSetup setup = load_setup(cfg);
        require(setup.seed == 77, "override did not take");
        const auto rows = cmd_run(setup);
        for (const ExperimentRecord& r : rows) require(r.seed == 77, "row seed mismatch");
        return "sampler.seed override lands in every emitted row";
    });

    return c.results;
}

inline int validation_exit_code(std::span<const CheckResult> results) {
    for (const CheckResult& r : results)
        if (!r.pass) return 1;
    return 0;
}

}  // namespace gadd
