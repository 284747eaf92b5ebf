#include <doctest.h>

#include <cmath>
#include <memory>

#include "gadd/corrector.hpp"
#include "gadd/evaluation.hpp"
#include "test_oracles.hpp"

using namespace gadd;

namespace {

constexpr EstimatorVariant kAllVariants[] = {
    EstimatorVariant::InverseSum,
    EstimatorVariant::AnchorRatio,
    EstimatorVariant::AveragedRatio,
    EstimatorVariant::SumNormalized,
};

GibbsCorrectorConfig fresh_random_config() {
    GibbsCorrectorConfig cfg;
    cfg.scan = ScanKind::Random;
    cfg.policy = ScorePolicy::Fresh;
    cfg.estimator = EstimatorVariant::InverseSum;
    return cfg;
}

}  // namespace

TEST_CASE("posterior_estimate: all variants equal the true conditional under exact scores") {
    Rng rng(7);
    for (const StateSpaceSpec spec : {StateSpaceSpec(3, 4), StateSpaceSpec(2, 3)}) {
        ExactScoreOracle oracle(testing::random_pmf(spec, rng));
        for (double t : {0.2, 1.0, 3.0}) {
            const Pmf qt = oracle.marginal(t);
            Sequence x;
            for (StateIndex idx = 0; idx < spec.state_count(); ++idx) {
                decode_into(idx, spec, x);
                for (int i = 0; i < spec.d; ++i) {
                    const auto truth = testing::exact_conditional(qt, x, i);
                    for (EstimatorVariant v : kAllVariants) {
                        const auto est = posterior_estimate(oracle, t, x, i, v);
                        for (int a = 0; a < spec.S; ++a)
                            CHECK(std::abs(est[static_cast<std::size_t>(a)] -
                                           truth[static_cast<std::size_t>(a)]) <= 1e-12);
                    }
                }
            }
        }
    }
}

TEST_CASE("posterior_estimate: all-ones scores give the uniform posterior") {
    const StateSpaceSpec spec(2, 4);
    ExactScoreOracle oracle(Pmf::uniform(spec));
    for (EstimatorVariant v : kAllVariants) {
        const auto est = posterior_estimate(oracle, 0.5, Sequence{1, 3}, 1, v);
        for (double p : est) CHECK(p == doctest::Approx(0.25).epsilon(1e-14));
    }
}

TEST_CASE("posterior_estimate: inverse-sum hand value on the two-state example") {
    const StateSpaceSpec spec(1, 2);
    ExactScoreOracle oracle(Pmf(spec, {0.9, 0.1}));
    const auto est =
        posterior_estimate(oracle, std::log(2.0), Sequence{0}, 0, EstimatorVariant::InverseSum);
    CHECK(est[0] == doctest::Approx(0.7).epsilon(1e-13));
}

namespace {

struct ZeroRowOracle final : ScoreOracle {
    StateSpaceSpec spec{1, 3};
    const StateSpaceSpec& space() const override { return spec; }
    void score_row(double, const Sequence&, int, std::span<double> out) const override {
        for (double& v : out) v = 0.0;
    }
};

}  // namespace

TEST_CASE("posterior_estimate: degenerate scores surface as DegenerateScore") {
    ZeroRowOracle oracle;
    CHECK_THROWS_AS(
        posterior_estimate(oracle, 0.5, Sequence{0}, 0, EstimatorVariant::SumNormalized),
        DegenerateScore);
}

TEST_CASE("gibbs_step_random: threshold gate semantics") {
    const StateSpaceSpec spec(2, 2);
    Rng seed_rng(11);
    ExactScoreOracle oracle(testing::random_pmf(spec, seed_rng));
    GibbsCorrectorConfig cfg = fresh_random_config();
    const double t = 0.4;

    // threshold = 1 on a nondegenerate posterior never gates; resampling occurs.
    cfg.threshold = 1.0;
    Rng rng(13);
    int changed = 0;
    Sequence z{0, 0};
    for (int rep = 0; rep < 400; ++rep) {
        const Sequence next = gibbs_step_random(z, t, cfg, oracle, rng);
        if (next != z) ++changed;
    }
    CHECK(changed > 0);

    // A near-point-mass conditional with a low threshold always gates.
    const StateSpaceSpec sp1(1, 2);
    ExactScoreOracle spiky(Pmf(sp1, {1.0 - 1e-9, 1e-9}));
    GibbsCorrectorConfig gated = fresh_random_config();
    gated.threshold = 0.9;
    Rng rng2(17);
    for (int rep = 0; rep < 200; ++rep)
        CHECK(gibbs_step_random(Sequence{0}, 0.01, gated, spiky, rng2) == Sequence{0});
}

TEST_CASE("gibbs_kernel_exact: stationarity and detailed balance under exact scores") {
    Rng rng(19);
    for (const StateSpaceSpec spec : {StateSpaceSpec(2, 3), StateSpaceSpec(3, 3),
                                      StateSpaceSpec(3, 2)}) {
        ExactScoreOracle oracle(testing::random_pmf(spec, rng));
        for (double t : {0.2, 1.0}) {
            const Pmf qt = oracle.marginal(t);
            const DenseKernel kernel = gibbs_kernel_exact(t, fresh_random_config(), oracle);
            CHECK(kernel.max_row_sum_error() <= 1e-12);
            CHECK(tv_distance(kernel.push(qt), qt) <= 1e-10);
            CHECK(reversibility_error(kernel, qt) <= 1e-12);
        }
    }
}

TEST_CASE("gibbs_kernel_exact: uniform target gives 1/(dS) off-diagonal entries") {
    const StateSpaceSpec spec(2, 3);
    ExactScoreOracle oracle(Pmf::uniform(spec));
    const DenseKernel kernel = gibbs_kernel_exact(0.7, fresh_random_config(), oracle);
    Sequence x, y;
    for (StateIndex xi = 0; xi < kernel.size(); ++xi) {
        decode_into(xi, spec, x);
        for (StateIndex yi = 0; yi < kernel.size(); ++yi) {
            decode_into(yi, spec, y);
            if (hamming(x, y) == 1)
                CHECK(kernel.at(xi, yi) == doctest::Approx(1.0 / 6).epsilon(1e-13));
            else if (hamming(x, y) > 1)
                CHECK(kernel.at(xi, yi) == 0.0);
        }
    }
}

TEST_CASE("systematic scan: d=1 sweep kernel equals the random-scan kernel") {
    const StateSpaceSpec spec(1, 4);
    Rng rng(23);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    GibbsCorrectorConfig sys = fresh_random_config();
    sys.scan = ScanKind::Systematic;
    const DenseKernel ks = gibbs_kernel_exact(0.5, sys, oracle);
    const DenseKernel kr = gibbs_kernel_exact(0.5, fresh_random_config(), oracle);
    for (StateIndex x = 0; x < ks.size(); ++x)
        for (StateIndex y = 0; y < ks.size(); ++y)
            CHECK(ks.at(x, y) == doctest::Approx(kr.at(x, y)).epsilon(1e-13));
}

TEST_CASE("systematic scan: one sweep samples a product target exactly") {
    // Product q0 stays product under the forward process, so a full sweep
    // lands exactly on q_t from any starting law.
    const StateSpaceSpec spec(3, 2);
    std::vector<double> w(spec.state_count());
    const double marg[3][2] = {{0.8, 0.2}, {0.35, 0.65}, {0.5, 0.5}};
    Sequence x;
    for (StateIndex idx = 0; idx < spec.state_count(); ++idx) {
        decode_into(idx, spec, x);
        w[idx] = marg[0][x[0]] * marg[1][x[1]] * marg[2][x[2]];
    }
    ExactScoreOracle oracle(Pmf::from_weights(spec, std::move(w)));
    const double t = 0.3;
    const Pmf qt = oracle.marginal(t);

    GibbsCorrectorConfig sys = fresh_random_config();
    sys.scan = ScanKind::Systematic;
    Rng rng(29);
    const Pmf init = testing::random_pmf(spec, rng);
    const auto swept = apply_gibbs_step(init.mass(), t, sys, oracle);
    CHECK(tv_distance(std::span<const double>(swept), std::span<const double>(qt.mass())) <= 1e-12);
}

TEST_CASE("apply_gibbs_step matches the materialized kernel") {
    const StateSpaceSpec spec(3, 3);
    Rng rng(31);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    const Pmf p = testing::random_pmf(spec, rng);
    for (ScanKind scan : {ScanKind::Random, ScanKind::Systematic}) {
        GibbsCorrectorConfig cfg = fresh_random_config();
        cfg.scan = scan;
        cfg.threshold = 0.45;
        const Pmf via_kernel = gibbs_kernel_exact(0.6, cfg, oracle).push(p);
        const auto direct = apply_gibbs_step(p.mass(), 0.6, cfg, oracle);
        for (StateIndex i = 0; i < spec.state_count(); ++i)
            CHECK(direct[i] == doctest::Approx(via_kernel[i]).epsilon(1e-12));
    }
}

TEST_CASE("stale policy is rejected by exact kernels") {
    const StateSpaceSpec spec(2, 2);
    Rng rng(37);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    GibbsCorrectorConfig cfg = fresh_random_config();
    cfg.policy = ScorePolicy::Stale;
    CHECK_THROWS_AS(gibbs_kernel_exact(0.5, cfg, oracle), UnsupportedExact);
    const Pmf p = Pmf::uniform(spec);
    CHECK_THROWS_AS(apply_gibbs_step(p.mass(), 0.5, cfg, oracle), UnsupportedExact);
}

TEST_CASE("mismatched-kernel error propagation: tv(p_hat_L, p_L) <= L * eps") {
    Rng rng(41);
    const StateSpaceSpec spec(2, 3);
    auto inner = std::make_shared<ExactScoreOracle>(testing::random_pmf(spec, rng));
    PerturbedScoreOracle noisy(inner, 40.0, 0.3, 4242);
    const double t = 0.8;
    const GibbsCorrectorConfig cfg = fresh_random_config();

    // Per-state mismatch sum over positions with uniform scan weights.
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
    for (int l = 1; l <= 10; ++l) {
        double step_mismatch = 0.0;
        for (StateIndex idx = 0; idx < n; ++idx) step_mismatch += p[idx] * mismatch[idx];
        eps = std::max(eps, step_mismatch);
        p = apply_gibbs_step(p, t, cfg, *inner);
        p_hat = apply_gibbs_step(p_hat, t, cfg, noisy);
        CHECK(tv_distance(std::span<const double>(p_hat), std::span<const double>(p)) <=
              l * eps + 1e-10);
    }
}

TEST_CASE("ctmc_corrector_rate: hand values and stationarity residual") {
    const StateSpaceSpec spec4(2, 4);
    ExactScoreOracle uniform_oracle(Pmf::uniform(spec4));
    CHECK(ctmc_corrector_rate(Sequence{0, 1}, Sequence{0, 2}, 0.5, uniform_oracle) ==
          doctest::Approx(0.5).epsilon(1e-14));
    CHECK(ctmc_corrector_rate(Sequence{0, 1}, Sequence{1, 2}, 0.5, uniform_oracle) == 0.0);

    Rng rng(43);
    for (const StateSpaceSpec spec : {StateSpaceSpec(2, 3), StateSpaceSpec(3, 3)}) {
        ExactScoreOracle oracle(testing::random_pmf(spec, rng));
        for (double t : {0.3, 1.2}) {
            const Pmf qt = oracle.marginal(t);
            const std::uint64_t n = spec.state_count();
            Sequence x, y;
            for (StateIndex yi = 0; yi < n; ++yi) {
                decode_into(yi, spec, y);
                double residual = 0.0;
                for (StateIndex xi = 0; xi < n; ++xi) {
                    decode_into(xi, spec, x);
                    if (hamming(x, y) <= 1)
                        residual += qt[xi] * ctmc_corrector_rate(x, y, t, oracle);
                }
                CHECK(std::abs(residual) <= 1e-10);
            }
        }
    }
}

TEST_CASE("ctmc corrector step: uniform law is preserved and kernel agrees with sampling form") {
    const StateSpaceSpec spec(2, 3);
    ExactScoreOracle oracle(Pmf::uniform(spec));
    const double t = 0.5, eta = 0.1;
    const Pmf u = Pmf::uniform(spec);
    const auto pushed = apply_ctmc_step(u.mass(), t, eta, oracle);
    CHECK(tv_distance(std::span<const double>(pushed), std::span<const double>(u.mass())) <= 1e-12);

    Rng rng(47);
    ExactScoreOracle oracle2(testing::random_pmf(spec, rng));
    const DenseKernel kernel = ctmc_corrector_kernel(t, eta, oracle2);
    CHECK(kernel.max_row_sum_error() <= 1e-12);
    const Pmf p = testing::random_pmf(spec, rng);
    const auto direct = apply_ctmc_step(p.mass(), t, eta, oracle2);
    const Pmf via = kernel.push(p);
    for (StateIndex i = 0; i < spec.state_count(); ++i)
        CHECK(direct[i] == doctest::Approx(via[i]).epsilon(1e-12));
}

TEST_CASE("ctmc corrector: tv decays to an O(eta) plateau as steps grow") {
    const StateSpaceSpec spec(2, 3);
    Rng rng(53);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    const double t = 0.6;
    const Pmf qt = oracle.marginal(t);

    auto plateau = [&](double eta) {
        std::vector<double> law(Pmf::uniform(spec).mass());
        double tv = 1.0;
        for (int l = 0; l < 3000; ++l) {
            law = apply_ctmc_step(law, t, eta, oracle);
            tv = tv_distance(std::span<const double>(law), std::span<const double>(qt.mass()));
        }
        return tv;
    };
    const double p1 = plateau(0.08);
    const double p2 = plateau(0.04);
    CHECK(p1 > 1e-8);  // genuinely positive floor
    CHECK(p1 / p2 >= 1.5);
    CHECK(p1 / p2 <= 3.0);
}

TEST_CASE("ctmc corrector step: eta -> 0 approaches the identity") {
    const StateSpaceSpec spec(2, 3);
    Rng rng(57);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    const Pmf p = testing::random_pmf(spec, rng);
    const auto pushed = apply_ctmc_step(p.mass(), 0.5, 1e-9, oracle);
    CHECK(tv_distance(std::span<const double>(pushed), std::span<const double>(p.mass())) <= 1e-8);
}

TEST_CASE("ctmc corrector step: strict overflow policy throws on oversized eta") {
    const StateSpaceSpec spec(1, 2);
    ExactScoreOracle oracle(Pmf::uniform(spec));
    Rng rng(59);
    CHECK_THROWS_AS(ctmc_corrector_step(Sequence{0}, 0.5, 3.0, oracle, rng), StepTooLarge);
}

TEST_CASE("frozen score tables: loop-entry posteriors are the normalized rows") {
    const StateSpaceSpec spec(2, 3);
    Rng rng(61);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    const double t = 0.4;
    const Sequence z0{1, 2};
    const FrozenScoreTable table = freeze_scores(oracle, t, z0);
    const Pmf qt = oracle.marginal(t);
    for (int i = 0; i < spec.d; ++i) {
        const auto truth = testing::exact_conditional(qt, z0, i);
        const auto frozen = table.posterior(i);
        for (int a = 0; a < spec.S; ++a)
            CHECK(frozen[static_cast<std::size_t>(a)] ==
                  doctest::Approx(truth[static_cast<std::size_t>(a)]).epsilon(1e-12));
    }
}
