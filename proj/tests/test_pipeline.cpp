#include <doctest.h>

#include <cmath>

#include "gadd/pipeline.hpp"
#include "test_oracles.hpp"

using namespace gadd;

namespace {

SamplerConfig base_config(const StateSpaceSpec& spec, double T, double delta, double kappa,
                          std::uint64_t seed) {
    SamplerConfig cfg;
    cfg.space = spec;
    cfg.grid = build_time_grid(T, delta, kappa);
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("build_time_grid: worked example and snapping") {
    const TimeGrid grid = build_time_grid(2.0, 0.5, 0.5);
    REQUIRE(grid.points.size() == 4);
    CHECK(grid.points[0] == 2.0);
    CHECK(grid.points[1] == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(grid.points[2] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(grid.points[3] == 0.5);
    CHECK(grid.steps() == 3);

    // delta = T - kappa gives a single step, above and below 1.
    CHECK(build_time_grid(2.0, 1.5, 0.5).steps() == 1);
    CHECK(build_time_grid(0.9, 0.72, 0.2).steps() == 1);

    CHECK_THROWS_AS(build_time_grid(1.0, 1.0, 0.5), InvalidConfig);
    CHECK_THROWS_AS(build_time_grid(2.0, 0.5, 1.0), InvalidConfig);
    CHECK_THROWS_AS(build_time_grid(2.0, 0.5, 0.0), InvalidConfig);
}

TEST_CASE("build_time_grid: kappa bound holds under fuzzing") {
    Rng rng(3);
    for (int rep = 0; rep < 300; ++rep) {
        const double T = 1.0 + 9.0 * rng.uniform01();
        const double delta = 1e-3 + 0.499 * rng.uniform01();
        const double kappa = 0.05 + 0.45 * rng.uniform01();
        const TimeGrid grid = build_time_grid(T, delta, kappa);
        CHECK(grid.points.front() == T);
        CHECK(grid.points.back() == delta);
        for (std::size_t k = 0; k + 1 < grid.points.size(); ++k) {
            const double hi = grid.points[k];
            const double lo = grid.points[k + 1];
            CHECK(hi > lo);
            CHECK(hi - lo <= kappa * std::min(1.0, hi) + 1e-9);
        }
    }
}

TEST_CASE("grid_defaults_for_accuracy: hand values") {
    const GridDefaults g = grid_defaults_for_accuracy(StateSpaceSpec(4, 3), 0.1);
    CHECK(g.T == doctest::Approx(std::log(4.0 * std::log(3.0) / 0.01)).epsilon(1e-14));
    CHECK(g.delta == doctest::Approx(0.025).epsilon(1e-14));
    CHECK_NOTHROW(build_time_grid(g.T, g.delta, 0.3));
    CHECK_THROWS_AS(grid_defaults_for_accuracy(StateSpaceSpec(2, 2), 1.5), InvalidConfig);
}

TEST_CASE("kappa_for_steps hits exact outer-step counts") {
    for (int n : {16, 32, 64, 128, 200}) {
        const double kappa = kappa_for_steps(8.0, 0.05, n);
        CHECK(build_time_grid(8.0, 0.05, kappa).steps() == n);
    }
    for (int n : {2, 3, 4, 8, 17}) {
        const double kappa = kappa_for_steps(2.0, 0.5, n);
        CHECK(build_time_grid(2.0, 0.5, kappa).steps() == n);
    }
    // Below the coarsest grid the requested count is unattainable.
    CHECK_THROWS_AS(kappa_for_steps(8.0, 0.05, 2), InvalidConfig);
}

TEST_CASE("reduction: GADD with L == 0 is bit-identical to the Euler baseline") {
    const StateSpaceSpec spec(3, 3);
    Rng seed_rng(5);
    ExactScoreOracle oracle(testing::random_pmf(spec, seed_rng));

    for (std::uint64_t seed : {1ull, 2ull, 3ull, 17ull, 255ull}) {
        SamplerConfig euler_cfg = base_config(spec, 4.0, 0.05, 0.3, seed);
        SamplerConfig gadd_cfg = euler_cfg;
        gadd_cfg.corrector = CorrectorKind::Gibbs;
        gadd_cfg.gibbs.L = {0};
        gadd_cfg.gibbs.policy = ScorePolicy::Stale;

        Rng rng_a(seed), rng_b(seed);
        std::vector<Sequence> traj_a, traj_b;
        const SampleResult a = run_euler_sample(euler_cfg, oracle, rng_a, &traj_a);
        const SampleResult b = run_gadd_sample(gadd_cfg, oracle, rng_b, &traj_b);
        CHECK(a.terminal == b.terminal);
        CHECK(a.ledger == b.ledger);
        REQUIRE(traj_a.size() == traj_b.size());
        for (std::size_t s = 0; s < traj_a.size(); ++s) CHECK(traj_a[s] == traj_b[s]);
    }
}

TEST_CASE("ledger: stale charges one corrector call per loop, fresh charges per step") {
    const StateSpaceSpec spec(2, 3);
    Rng seed_rng(7);
    ExactScoreOracle oracle(testing::random_pmf(spec, seed_rng));

    SamplerConfig cfg = base_config(spec, 6.0, 0.05, 0.25, 9);
    cfg.grid = build_time_grid(6.0, 0.05, kappa_for_steps(6.0, 0.05, 16));
    REQUIRE(cfg.grid.steps() == 16);
    cfg.corrector = CorrectorKind::Gibbs;
    cfg.gibbs.L = {7};
    cfg.gibbs.policy = ScorePolicy::Stale;

    Rng rng(11);
    const SampleResult stale = run_gadd_sample(cfg, oracle, rng);
    CHECK(stale.ledger.predictor_calls == 16);
    CHECK(stale.ledger.corrector_calls == 16);
    CHECK(stale.ledger.total() == 32);

    cfg.gibbs.policy = ScorePolicy::Fresh;
    Rng rng2(11);
    const SampleResult fresh = run_gadd_sample(cfg, oracle, rng2);
    CHECK(fresh.ledger.predictor_calls == 16);
    CHECK(fresh.ledger.corrector_calls == 16 * 7);

    cfg.gibbs.strict_nfe = true;  // InverseSum now charges S per step
    Rng rng3(11);
    const SampleResult strict = run_gadd_sample(cfg, oracle, rng3);
    CHECK(strict.ledger.corrector_calls == 16 * 7 * spec.S);

    // Mixed schedule: stale counts only loops with L_k > 0.
    cfg.gibbs.strict_nfe = false;
    cfg.gibbs.policy = ScorePolicy::Stale;
    std::vector<int> schedule(16, 0);
    for (int k = 0; k < 16; k += 2) schedule[static_cast<std::size_t>(k)] = 3;
    cfg.gibbs.L = schedule;
    Rng rng4(11);
    const SampleResult mixed = run_gadd_sample(cfg, oracle, rng4);
    CHECK(mixed.ledger.corrector_calls == 8);

    // CTMC corrector charges one call per inner step.
    SamplerConfig ctmc_cfg = base_config(spec, 6.0, 0.05, cfg.grid.kappa, 9);
    ctmc_cfg.grid = cfg.grid;
    ctmc_cfg.corrector = CorrectorKind::Ctmc;
    ctmc_cfg.ctmc.eta = 0.02;
    ctmc_cfg.ctmc.steps = 3;
    Rng rng5(11);
    const SampleResult ctmc = run_gadd_sample(ctmc_cfg, oracle, rng5);
    CHECK(ctmc.ledger.predictor_calls == 16);
    CHECK(ctmc.ledger.corrector_calls == 48);
}

TEST_CASE("clamp: fixed positions never change; full clamp pins the output") {
    const StateSpaceSpec spec(3, 3);
    Rng seed_rng(13);
    ExactScoreOracle oracle(testing::random_pmf(spec, seed_rng));

    SamplerConfig cfg = base_config(spec, 4.0, 0.1, 0.3, 21);
    cfg.clamp = ClampMask{{1}, {2}};
    for (CorrectorKind kind : {CorrectorKind::None, CorrectorKind::Gibbs, CorrectorKind::Ctmc}) {
        cfg.corrector = kind;
        cfg.gibbs.L = {4};
        cfg.gibbs.policy = ScorePolicy::Stale;
        cfg.ctmc.eta = 0.02;
        cfg.ctmc.steps = 2;
        Rng rng(31);
        std::vector<Sequence> traj;
        run_gadd_sample(cfg, oracle, rng, &traj);
        for (const Sequence& s : traj) CHECK(s[1] == 2);
    }

    cfg.corrector = CorrectorKind::Gibbs;
    cfg.gibbs.policy = ScorePolicy::Fresh;
    Rng rng(37);
    std::vector<Sequence> traj;
    run_gadd_sample(cfg, oracle, rng, &traj);
    for (const Sequence& s : traj) CHECK(s[1] == 2);

    cfg.clamp = ClampMask{{0, 1, 2}, {1, 0, 2}};
    Rng rng2(41);
    const SampleResult full = run_gadd_sample(cfg, oracle, rng2);
    CHECK(full.terminal == Sequence{1, 0, 2});

    ClampMask bad{{5}, {0}};
    CHECK_THROWS_AS(bad.validate(spec), InvalidConfig);
}

TEST_CASE("run_pushforward: Euler terminal error shrinks as kappa shrinks") {
    const StateSpaceSpec spec(2, 3);
    Rng seed_rng(17);
    ExactScoreOracle oracle(testing::random_pmf(spec, seed_rng));
    const double T = 5.0, delta = 0.1;
    const Pmf q_delta = oracle.marginal(delta);

    double prev = 1.0;
    for (double kappa : {0.4, 0.2, 0.1}) {
        SamplerConfig cfg = base_config(spec, T, delta, kappa, 0);
        const auto records = run_pushforward(cfg, oracle);
        CHECK(records.front().t == T);
        CHECK(records.front().nfe == 0);
        CHECK(records.back().t == delta);
        const double tv = tv_distance(records.back().law, q_delta);
        CHECK(tv < prev);
        prev = tv;
    }
}

TEST_CASE("run_pushforward: long Gibbs loops contract onto the target") {
    const StateSpaceSpec spec(2, 3);
    Rng seed_rng(19);
    ExactScoreOracle oracle(testing::random_pmf(spec, seed_rng));
    SamplerConfig cfg = base_config(spec, 3.0, 0.1, 0.4, 0);
    cfg.corrector = CorrectorKind::Gibbs;
    cfg.gibbs.policy = ScorePolicy::Fresh;
    cfg.gibbs.L = {200};
    const auto records = run_pushforward(cfg, oracle);
    CHECK(tv_distance(records.back().law, oracle.marginal(0.1)) <= 1e-6);
}

TEST_CASE("run_pushforward: q_T start with a fine grid tracks the reverse process") {
    const StateSpaceSpec spec(2, 3);
    Rng seed_rng(23);
    ExactScoreOracle oracle(testing::random_pmf(spec, seed_rng));
    const double T = 2.0, delta = 0.2;
    double prev = 1.0;
    for (double kappa : {0.2, 0.05, 0.0125}) {
        SamplerConfig cfg = base_config(spec, T, delta, kappa, 0);
        const Pmf qT = oracle.marginal(T);
        const auto records = run_pushforward(cfg, oracle, &qT);
        const double tv = tv_distance(records.back().law, oracle.marginal(delta));
        CHECK(tv < prev);
        prev = tv;
    }
    CHECK(prev <= 0.01);
}

TEST_CASE("run_pushforward: stale policy and oversized spaces are rejected") {
    const StateSpaceSpec spec(2, 2);
    ExactScoreOracle oracle(Pmf::uniform(spec));
    SamplerConfig cfg = base_config(spec, 2.0, 0.2, 0.4, 0);
    cfg.corrector = CorrectorKind::Gibbs;
    cfg.gibbs.policy = ScorePolicy::Stale;
    CHECK_THROWS_AS(run_pushforward(cfg, oracle), UnsupportedExact);
}

TEST_CASE("run_monte_carlo: single chain reproduces run_gadd_sample") {
    const StateSpaceSpec spec(2, 2);
    Rng seed_rng(29);
    ExactScoreOracle oracle(testing::random_pmf(spec, seed_rng));
    SamplerConfig cfg = base_config(spec, 3.0, 0.1, 0.3, 77);
    cfg.corrector = CorrectorKind::Gibbs;
    cfg.gibbs.L = {5};
    cfg.gibbs.policy = ScorePolicy::Stale;

    const MonteCarloResult mc = run_monte_carlo(cfg, oracle, 1);
    Rng rng(cfg.seed, 0);
    const SampleResult direct = run_gadd_sample(cfg, oracle, rng);
    REQUIRE(mc.samples.size() == 1);
    CHECK(mc.samples[0] == direct.terminal);
    CHECK(mc.per_chain == direct.ledger);
}

TEST_CASE("run_monte_carlo: deterministic across runs and thread counts") {
    const StateSpaceSpec spec(2, 2);
    Rng seed_rng(31);
    ExactScoreOracle oracle(testing::random_pmf(spec, seed_rng));
    SamplerConfig cfg = base_config(spec, 3.0, 0.1, 0.3, 123);

    const MonteCarloResult a = run_monte_carlo(cfg, oracle, 500, 1);
    const MonteCarloResult b = run_monte_carlo(cfg, oracle, 500, 2);
    const MonteCarloResult c = run_monte_carlo(cfg, oracle, 500, 2);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i] == b.samples[i]);
        CHECK(b.samples[i] == c.samples[i]);
    }
}

TEST_CASE("trajectory sampler and exact pushforward agree for fresh gibbs and ctmc") {
    const StateSpaceSpec spec(2, 2);
    Rng seed_rng(43);
    ExactScoreOracle oracle(testing::random_pmf(spec, seed_rng));
    const long n = 60000;
    const double bound = 3.0 * std::sqrt(static_cast<double>(spec.state_count()) /
                                         static_cast<double>(n));

    SamplerConfig gibbs_cfg = base_config(spec, 3.0, 0.1, 0.3, 11);
    gibbs_cfg.corrector = CorrectorKind::Gibbs;
    gibbs_cfg.gibbs.policy = ScorePolicy::Fresh;
    gibbs_cfg.gibbs.L = {2};
    gibbs_cfg.gibbs.threshold = 0.6;  // exercise the gate on both routes
    const auto gibbs_law = run_pushforward(gibbs_cfg, oracle);
    const MonteCarloResult gibbs_mc = run_monte_carlo(gibbs_cfg, oracle, n);
    CHECK(tv_distance(*gibbs_mc.empirical, gibbs_law.back().law) <= bound);

    SamplerConfig ctmc_cfg = base_config(spec, 3.0, 0.1, 0.3, 13);
    ctmc_cfg.corrector = CorrectorKind::Ctmc;
    ctmc_cfg.ctmc.eta = 0.05;
    ctmc_cfg.ctmc.steps = 2;
    const auto ctmc_law = run_pushforward(ctmc_cfg, oracle);
    const MonteCarloResult ctmc_mc = run_monte_carlo(ctmc_cfg, oracle, n);
    CHECK(tv_distance(*ctmc_mc.empirical, ctmc_law.back().law) <= bound);
}

TEST_CASE("run_monte_carlo: empirical histogram concentrates on the pushforward law") {
    const StateSpaceSpec spec(2, 2);
    Rng seed_rng(37);
    ExactScoreOracle oracle(testing::random_pmf(spec, seed_rng));
    SamplerConfig cfg = base_config(spec, 4.0, 0.1, 0.25, 99);

    const long n = 100000;
    const MonteCarloResult mc = run_monte_carlo(cfg, oracle, n);
    REQUIRE(mc.empirical.has_value());
    const auto records = run_pushforward(cfg, oracle);
    const double tv = tv_distance(*mc.empirical, records.back().law);
    const double bound = 3.0 * std::sqrt(static_cast<double>(spec.state_count()) /
                                         static_cast<double>(n));
    CHECK(tv <= bound);
}
