#include <doctest.h>

#include <cmath>

#include "gadd/evaluation.hpp"
#include "gadd/targets.hpp"
#include "test_oracles.hpp"

using namespace gadd;

TEST_CASE("uniform-band target: entries land in the band before normalization") {
    TargetSpec spec;
    spec.kind = TargetKind::UniformBand;
    spec.space = StateSpaceSpec(2, 3);
    spec.band_lo = 0.5;
    spec.band_hi = 2.0;
    Rng rng(3);
    const Pmf p = build_target(spec, rng);
    // Normalized band entries stay within [l, u] / total.
    double lo = 1e300, hi = 0.0;
    for (StateIndex i = 0; i < p.size(); ++i) {
        lo = std::min(lo, p[i]);
        hi = std::max(hi, p[i]);
    }
    CHECK(hi / lo <= 2.0 / 0.5 + 1e-9);

    spec.band_lo = 1.0;
    spec.band_hi = 1.0;
    Rng rng2(3);
    CHECK(tv_distance(build_target(spec, rng2), Pmf::uniform(spec.space)) <= 1e-14);

    spec.band_lo = -1.0;
    Rng rng3(3);
    CHECK_THROWS_AS(build_target(spec, rng3), InvalidConfig);
}

TEST_CASE("ar target: order 0 is a product distribution") {
    TargetSpec spec;
    spec.kind = TargetKind::Ar;
    spec.space = StateSpaceSpec(3, 3);
    spec.ar_order = 0;
    Rng rng(7);
    const Pmf p = build_target(spec, rng);

    // Product check: p(x) equals the product of its own single-site marginals.
    std::vector<std::vector<double>> marg(3, std::vector<double>(3, 0.0));
    Sequence x;
    for (StateIndex idx = 0; idx < p.size(); ++idx) {
        decode_into(idx, p.space(), x);
        for (int i = 0; i < 3; ++i)
            marg[static_cast<std::size_t>(i)][static_cast<std::size_t>(x[i])] += p[idx];
    }
    for (StateIndex idx = 0; idx < p.size(); ++idx) {
        decode_into(idx, p.space(), x);
        double prod = 1.0;
        for (int i = 0; i < 3; ++i)
            prod *= marg[static_cast<std::size_t>(i)][static_cast<std::size_t>(x[i])];
        CHECK(p[idx] == doctest::Approx(prod).epsilon(1e-10));
    }
}

TEST_CASE("ar target: order 2 differs from its product approximation") {
    TargetSpec spec;
    spec.kind = TargetKind::Ar;
    spec.space = StateSpaceSpec(4, 3);
    spec.ar_order = 2;
    Rng rng(11);
    const Pmf p = build_target(spec, rng);
    std::vector<std::vector<double>> marg(4, std::vector<double>(3, 0.0));
    Sequence x;
    for (StateIndex idx = 0; idx < p.size(); ++idx) {
        decode_into(idx, p.space(), x);
        for (int i = 0; i < 4; ++i)
            marg[static_cast<std::size_t>(i)][static_cast<std::size_t>(x[i])] += p[idx];
    }
    std::vector<double> product(p.size());
    for (StateIndex idx = 0; idx < p.size(); ++idx) {
        decode_into(idx, p.space(), x);
        double prod = 1.0;
        for (int i = 0; i < 4; ++i)
            prod *= marg[static_cast<std::size_t>(i)][static_cast<std::size_t>(x[i])];
        product[idx] = prod;
    }
    const Pmf approx = Pmf::from_weights(p.space(), std::move(product));
    CHECK(tv_distance(p, approx) > 0.01);  // genuine token correlations
}

TEST_CASE("mixture target: support size and point-mass degenerate case") {
    TargetSpec spec;
    spec.kind = TargetKind::MixtureOfSingletons;
    spec.space = StateSpaceSpec(3, 3);
    spec.support = 5;
    Rng rng(13);
    const Pmf p = build_target(spec, rng);
    int support = 0;
    for (StateIndex i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) ++support;
    CHECK(support == 5);

    spec.support = 1;
    Rng rng2(17);
    const Pmf point = build_target(spec, rng2);
    double max_mass = 0.0;
    for (StateIndex i = 0; i < point.size(); ++i) max_mass = std::max(max_mass, point[i]);
    CHECK(max_mass == doctest::Approx(1.0));

    spec.support = 100;  // > 27 states
    Rng rng3(19);
    CHECK_THROWS_AS(build_target(spec, rng3), InvalidConfig);
}

TEST_CASE("targets are reproducible from the seed") {
    for (TargetKind kind : {TargetKind::UniformBand, TargetKind::Ar,
                            TargetKind::MixtureOfSingletons}) {
        TargetSpec spec;
        spec.kind = kind;
        spec.space = StateSpaceSpec(3, 3);
        spec.support = 4;
        Rng a(12345), b(12345);
        const Pmf pa = build_target(spec, a);
        const Pmf pb = build_target(spec, b);
        for (StateIndex i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
    }
}

TEST_CASE("file target round-trips through the pmf format") {
    TargetSpec spec;
    spec.kind = TargetKind::Ar;
    spec.space = StateSpaceSpec(2, 4);
    spec.ar_order = 1;
    Rng rng(23);
    const Pmf p = build_target(spec, rng);
    const std::string path = "/tmp/gadd_test_target.pmf";
    write_pmf_file(path, p);

    TargetSpec file_spec;
    file_spec.kind = TargetKind::File;
    file_spec.space = spec.space;
    file_spec.path = path;
    Rng rng2(1);
    const Pmf back = build_target(file_spec, rng2);
    for (StateIndex i = 0; i < p.size(); ++i)
        CHECK(back[i] == doctest::Approx(p[i]).epsilon(1e-14));

    file_spec.space = StateSpaceSpec(3, 4);
    CHECK_THROWS_AS(build_target(file_spec, rng2), SpecMismatch);
}
