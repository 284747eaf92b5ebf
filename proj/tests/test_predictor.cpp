#include <doctest.h>

#include <array>
#include <cmath>

#include "gadd/predictor.hpp"
#include "test_oracles.hpp"

using namespace gadd;

TEST_CASE("euler_move_probs: hand values") {
    const std::array<double, 2> ones{1.0, 1.0};
    const auto p = euler_move_probs(ones, 0, 0.1, 2);
    CHECK(p[1] == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(p[0] == doctest::Approx(0.95).epsilon(1e-15));

    const auto tiny = euler_move_probs(ones, 0, 1e-12, 2);
    CHECK(tiny[0] == doctest::Approx(1.0).epsilon(1e-11));

    // Chains the exact-score example: row [1, 3/7], h = 0.1.
    const std::array<double, 2> row{1.0, 3.0 / 7.0};
    const auto q = euler_move_probs(row, 0, 0.1, 2);
    CHECK(q[1] == doctest::Approx(3.0 / 140.0).epsilon(1e-14));
}

TEST_CASE("euler_move_probs: overflow policies") {
    const std::array<double, 2> ones{1.0, 1.0};
    CHECK_THROWS_AS(euler_move_probs(ones, 0, 3.0, 2), StepTooLarge);

    bool clamped = false;
    const auto p = euler_move_probs(ones, 0, 3.0, 2, OverflowPolicy::Clamp, &clamped);
    CHECK(clamped);
    CHECK(p[0] == 0.0);
    CHECK(p[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("euler_step_sample: determinism and uniform-score switch rate") {
    const StateSpaceSpec spec(4, 3);
    ExactScoreOracle oracle(Pmf::uniform(spec));  // all-ones scores
    const EulerStepSpec step(1.0, 0.85);

    Rng rng_a(5), rng_b(5);
    const Sequence x{0, 1, 2, 0};
    CHECK(euler_step_sample(x, step, oracle, rng_a) == euler_step_sample(x, step, oracle, rng_b));

    // Each token switches w.p. (S-1) h / S = 0.1.
    Rng rng(71);
    long switches = 0;
    const int n = 50000;
    for (int rep = 0; rep < n; ++rep) {
        const Sequence y = euler_step_sample(x, step, oracle, rng);
        switches += hamming(x, y);
    }
    const double rate = static_cast<double>(switches) / (n * spec.d);
    CHECK(std::abs(rate - 0.1) <= 0.005);
}

namespace {

// Scores so small that every move probability underflows to zero.
struct TinyScoreOracle final : ScoreOracle {
    StateSpaceSpec spec{3, 3};
    const StateSpaceSpec& space() const override { return spec; }
    void score_row(double, const Sequence& x, int i, std::span<double> out) const override {
        for (double& v : out) v = 1e-300;
        out[static_cast<std::size_t>(x[i])] = 1.0;
        (void)i;
    }
};

}  // namespace

TEST_CASE("euler_step_sample: vanishing move mass returns the input unchanged") {
    TinyScoreOracle oracle;
    Rng rng(3);
    const Sequence x{0, 2, 1};
    for (int rep = 0; rep < 50; ++rep)
        CHECK(euler_step_sample(x, EulerStepSpec(0.5, 0.4), oracle, rng) == x);
}

TEST_CASE("euler_step_kernel: d=1 rows equal euler_move_probs, rows normalized") {
    const StateSpaceSpec spec(1, 3);
    Rng rng(73);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    const EulerStepSpec step(0.9, 0.8);
    const DenseKernel kernel = euler_step_kernel(step, oracle);
    CHECK(kernel.max_row_sum_error() <= 1e-12);

    Sequence x;
    for (StateIndex idx = 0; idx < 3; ++idx) {
        decode_into(idx, spec, x);
        const auto row = oracle.score_row(step.t_hi, x, 0);
        const auto probs = euler_move_probs(row, x[0], step.h(), spec.S);
        for (StateIndex y = 0; y < 3; ++y)
            CHECK(kernel.at(idx, y) == doctest::Approx(probs[y]).epsilon(1e-14));
    }
}

TEST_CASE("euler_step_kernel: h -> 0 approaches identity") {
    const StateSpaceSpec spec(2, 3);
    Rng rng(79);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    const double h = 1e-5;
    const DenseKernel kernel = euler_step_kernel(EulerStepSpec(0.5 + h, 0.5), oracle);
    for (StateIndex x = 0; x < kernel.size(); ++x)
        CHECK(std::abs(kernel.at(x, x) - 1.0) <= 20 * h);
}

TEST_CASE("euler step pushforward reduces tv toward q_{t_lo}") {
    const StateSpaceSpec spec(2, 3);
    Rng rng(83);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    const double t_hi = 0.6, h = 1e-3;
    const Pmf q_hi = oracle.marginal(t_hi);
    const Pmf q_lo = oracle.marginal(t_hi - h);

    const auto pushed = apply_euler_step(q_hi.mass(), EulerStepSpec(t_hi, t_hi - h), oracle);
    const Pmf pushed_pmf = Pmf::from_weights(spec, std::vector<double>(pushed.begin(), pushed.end()));
    CHECK(tv_distance(pushed_pmf, q_lo) < tv_distance(q_hi, q_lo));
}

TEST_CASE("euler step one-step error is O(h^2): halving h quarters the error") {
    const StateSpaceSpec spec(2, 3);
    Rng rng(89);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    const double t_hi = 0.8;
    auto one_step_err = [&](double h) {
        const Pmf q_hi = oracle.marginal(t_hi);
        const Pmf q_lo = oracle.marginal(t_hi - h);
        const auto pushed = apply_euler_step(q_hi.mass(), EulerStepSpec(t_hi, t_hi - h), oracle);
        return tv_distance(std::span<const double>(pushed), std::span<const double>(q_lo.mass()));
    };
    const double ratio = one_step_err(0.02) / one_step_err(0.01);
    CHECK(ratio >= 3.0);
    CHECK(ratio <= 5.0);
}

TEST_CASE("apply_euler_step matches the materialized kernel") {
    const StateSpaceSpec spec(3, 3);
    Rng rng(97);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    const EulerStepSpec step(1.2, 1.05);
    const Pmf p = testing::random_pmf(spec, rng);

    const Pmf via_kernel = euler_step_kernel(step, oracle).push(p);
    const auto direct = apply_euler_step(p.mass(), step, oracle);
    for (StateIndex i = 0; i < spec.state_count(); ++i)
        CHECK(direct[i] == doctest::Approx(via_kernel[i]).epsilon(1e-13));
}

TEST_CASE("euler sampling frequencies match kernel rows within 3 sigma") {
    const StateSpaceSpec spec(2, 2);
    Rng rng(101);
    ExactScoreOracle oracle(testing::random_pmf(spec, rng));
    const EulerStepSpec step(0.7, 0.5);
    const DenseKernel kernel = euler_step_kernel(step, oracle);

    const Sequence x{1, 0};
    const StateIndex xi = encode(x, spec);
    const int n = 100000;
    std::vector<long> counts(spec.state_count(), 0);
    Rng draws(103);
    for (int rep = 0; rep < n; ++rep)
        counts[encode(euler_step_sample(x, step, oracle, draws), spec)]++;
    for (StateIndex y = 0; y < spec.state_count(); ++y) {
        const double p = kernel.at(xi, y);
        const double sigma = std::sqrt(n * p * (1.0 - p));
        CHECK(std::abs(counts[y] - n * p) <= 3.0 * sigma + 1.0);
    }
}
