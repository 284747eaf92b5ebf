#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gadd/common.hpp"

namespace gadd {

using Token = std::int32_t;
using StateIndex = std::uint64_t;

inline constexpr std::uint64_t kDefaultEnumerableCap = std::uint64_t{1} << 20;
inline constexpr double kPmfNormTol = 1e-12;

// ---------------------------------------------------------------------------
// StateSpaceSpec: token space [S]^d plus the mixed-radix codec shared by every
// module. Token 0 is the least significant digit.
// ---------------------------------------------------------------------------

struct StateSpaceSpec {
    int d = 1;
    int S = 2;
    std::uint64_t enumerable_cap = kDefaultEnumerableCap;

    StateSpaceSpec() = default;
    StateSpaceSpec(int d_, int S_, std::uint64_t cap = kDefaultEnumerableCap)
        : d(d_), S(S_), enumerable_cap(cap) {
        if (d < 1) throw InvalidConfig("StateSpaceSpec: d must be >= 1");
        if (S < 2) throw InvalidConfig("StateSpaceSpec: S must be >= 2");
    }

    bool operator==(const StateSpaceSpec& o) const { return d == o.d && S == o.S; }
    bool operator!=(const StateSpaceSpec& o) const { return !(*this == o); }

    /// S^d, saturating at max u64 on overflow.
    std::uint64_t state_count_saturated() const {
        std::uint64_t n = 1;
        for (int i = 0; i < d; ++i) {
            const std::uint64_t next = n * static_cast<std::uint64_t>(S);
            if (next / static_cast<std::uint64_t>(S) != n)
                return std::numeric_limits<std::uint64_t>::max();
            n = next;
        }
        return n;
    }

    /// S^d; throws TooLarge when the space is not enumerable.
    std::uint64_t state_count() const {
        if (!enumerable())
            throw TooLarge("state space exceeds the enumerable cap");
        return state_count_saturated();
    }

    bool enumerable() const { return state_count_saturated() <= enumerable_cap; }
};

// ---------------------------------------------------------------------------
// Sequence: one point of [S]^d.
// ---------------------------------------------------------------------------

struct Sequence {
    std::vector<Token> tokens;

    Sequence() = default;
    explicit Sequence(std::vector<Token> t) : tokens(std::move(t)) {}
    Sequence(std::initializer_list<Token> t) : tokens(t) {}

    int size() const { return static_cast<int>(tokens.size()); }
    Token& operator[](int i) { return tokens[static_cast<std::size_t>(i)]; }
    Token operator[](int i) const { return tokens[static_cast<std::size_t>(i)]; }
    bool operator==(const Sequence& o) const { return tokens == o.tokens; }
    bool operator!=(const Sequence& o) const { return !(*this == o); }
};

inline void validate_sequence(const Sequence& x, const StateSpaceSpec& spec) {
    if (x.size() != spec.d)
        throw InvalidSequence("sequence length " + std::to_string(x.size()) +
                              " does not match d = " + std::to_string(spec.d));
    for (Token tok : x.tokens)
        if (tok < 0 || tok >= spec.S)
            throw InvalidSequence("token " + std::to_string(tok) + " out of [0, " +
                                  std::to_string(spec.S) + ")");
}

/// Mixed-radix encode: index = sum_i x[i] * S^i.
inline StateIndex encode(const Sequence& x, const StateSpaceSpec& spec) {
    validate_sequence(x, spec);
    StateIndex idx = 0;
    StateIndex stride = 1;
    for (int i = 0; i < spec.d; ++i) {
        idx += static_cast<StateIndex>(x[i]) * stride;
        stride *= static_cast<StateIndex>(spec.S);
    }
    return idx;
}

inline Sequence decode(StateIndex index, const StateSpaceSpec& spec) {
    if (index >= spec.state_count_saturated())
        throw InvalidIndex("state index " + std::to_string(index) + " out of range");
    Sequence x;
    x.tokens.resize(static_cast<std::size_t>(spec.d));
    for (int i = 0; i < spec.d; ++i) {
        x[i] = static_cast<Token>(index % static_cast<StateIndex>(spec.S));
        index /= static_cast<StateIndex>(spec.S);
    }
    return x;
}

/// In-place decode into a preallocated sequence (hot paths).
inline void decode_into(StateIndex index, const StateSpaceSpec& spec, Sequence& out) {
    out.tokens.resize(static_cast<std::size_t>(spec.d));
    for (int i = 0; i < spec.d; ++i) {
        out[i] = static_cast<Token>(index % static_cast<StateIndex>(spec.S));
        index /= static_cast<StateIndex>(spec.S);
    }
}

inline int hamming(const Sequence& x, const Sequence& y) {
    if (x.size() != y.size())
        throw SpecMismatch("hamming: sequence lengths differ");
    int count = 0;
    for (int i = 0; i < x.size(); ++i) count += (x[i] != y[i]) ? 1 : 0;
    return count;
}

/// The S-1 Hamming-1 neighbors of x along position i, paired with the
/// substituted token value.
inline std::vector<std::pair<Token, Sequence>> neighbors(const Sequence& x,
                                                         const StateSpaceSpec& spec,
                                                         int i) {
    validate_sequence(x, spec);
    if (i < 0 || i >= spec.d) throw InvalidIndex("neighbors: position out of range");
    std::vector<std::pair<Token, Sequence>> out;
    out.reserve(static_cast<std::size_t>(spec.S - 1));
    for (Token a = 0; a < spec.S; ++a) {
        if (a == x[i]) continue;
        Sequence y = x;
        y[i] = a;
        out.emplace_back(a, std::move(y));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pmf: dense exact probability mass function over [S]^d.
// ---------------------------------------------------------------------------

class Pmf {
public:
    Pmf(StateSpaceSpec spec, std::vector<double> mass) : spec_(spec), mass_(std::move(mass)) {
        if (mass_.size() != spec_.state_count())
            throw InvalidConfig("Pmf: mass vector size does not match S^d");
        double sum = 0.0;
        for (double m : mass_) {
            if (!(m >= 0.0)) throw InvalidConfig("Pmf: negative or NaN mass entry");
            sum += m;
        }
        if (std::abs(sum - 1.0) > kPmfNormTol)
            throw InvalidConfig("Pmf: mass sums to " + std::to_string(sum));
        // Pin the residual to zero so downstream sums start exact.
        for (double& m : mass_) m /= sum;
    }

    static Pmf uniform(const StateSpaceSpec& spec) {
        const std::uint64_t n = spec.state_count();
        return Pmf(spec, std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    static Pmf point(const StateSpaceSpec& spec, StateIndex index) {
        const std::uint64_t n = spec.state_count();
        if (index >= n) throw InvalidIndex("Pmf::point: index out of range");
        std::vector<double> m(n, 0.0);
        m[index] = 1.0;
        return Pmf(spec, std::move(m));
    }

    /// Normalizes a nonnegative weight vector.
    static Pmf from_weights(const StateSpaceSpec& spec, std::vector<double> w) {
        if (w.size() != spec.state_count())
            throw InvalidConfig("Pmf::from_weights: size mismatch");
        double sum = 0.0;
        for (double v : w) {
            if (!(v >= 0.0)) throw InvalidConfig("Pmf::from_weights: negative weight");
            sum += v;
        }
        if (sum <= 0.0) throw InvalidConfig("Pmf::from_weights: zero total weight");
        for (double& v : w) v /= sum;
        return Pmf(spec, std::move(w));
    }

    const StateSpaceSpec& space() const { return spec_; }
    const std::vector<double>& mass() const { return mass_; }
    double operator[](StateIndex i) const { return mass_[i]; }
    std::uint64_t size() const { return mass_.size(); }

private:
    StateSpaceSpec spec_;
    std::vector<double> mass_;
};

/// Total variation distance (1/2) * sum |p - q|.
inline double tv_distance(const Pmf& p, const Pmf& q) {
    if (p.space() != q.space()) throw SpecMismatch("tv_distance: spec mismatch");
    double acc = 0.0;
    for (StateIndex i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
}

/// TV on raw mass vectors; both assumed normalized over the same space.
inline double tv_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw SpecMismatch("tv_distance: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
}

// ---------------------------------------------------------------------------
// Pmf file format: header "d S", then S^d lines "index probability" in decode
// order. This is the CLI's user-provided target path.
// ---------------------------------------------------------------------------

inline void write_pmf(std::ostream& os, const Pmf& p) {
    os << p.space().d << ' ' << p.space().S << '\n';
    char buf[64];
    for (StateIndex i = 0; i < p.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%llu %.17g\n",
                      static_cast<unsigned long long>(i), p[i]);
        os << buf;
    }
}

inline void write_pmf_file(const std::string& path, const Pmf& p) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_pmf(os, p);
}

inline Pmf read_pmf(std::istream& is) {
    int d = 0, S = 0;
    if (!(is >> d >> S)) throw IoError("pmf file: bad header");
    StateSpaceSpec spec(d, S);
    const std::uint64_t n = spec.state_count();
    std::vector<double> mass(n, 0.0);
    for (std::uint64_t row = 0; row < n; ++row) {
        std::uint64_t idx = 0;
        double prob = 0.0;
        if (!(is >> idx >> prob)) throw IoError("pmf file: truncated at row " + std::to_string(row));
        if (idx >= n) throw InvalidIndex("pmf file: index out of range");
        mass[idx] = prob;
    }
    return Pmf(spec, std::move(mass));
}

inline Pmf read_pmf_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_pmf(is);
}

}  // namespace gadd
