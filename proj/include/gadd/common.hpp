#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace gadd {

// ---------------------------------------------------------------------------
// Error types. Every throwing operation names one of these so callers can
// distinguish configuration mistakes from numeric breakdowns.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define GADD_DEFINE_ERROR(Name)                  \
    struct Name : Error {                        \
        using Error::Error;                      \
    }

GADD_DEFINE_ERROR(InvalidConfig);
GADD_DEFINE_ERROR(InvalidSequence);
GADD_DEFINE_ERROR(InvalidIndex);
GADD_DEFINE_ERROR(InvalidTime);
GADD_DEFINE_ERROR(SpecMismatch);
GADD_DEFINE_ERROR(TooLarge);
GADD_DEFINE_ERROR(ZeroDensity);
GADD_DEFINE_ERROR(StepTooLarge);
GADD_DEFINE_ERROR(DegenerateScore);
GADD_DEFINE_ERROR(NotReversible);
GADD_DEFINE_ERROR(NoConvergence);
GADD_DEFINE_ERROR(InsufficientDecay);
GADD_DEFINE_ERROR(EmptyInput);
GADD_DEFINE_ERROR(UnsupportedExact);
GADD_DEFINE_ERROR(IoError);

#undef GADD_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Hashing / deterministic noise keys.
// ---------------------------------------------------------------------------

/// splitmix64 finalizer; full-period bijective mix on 64 bits.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    return mix64(h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2)));
}

inline std::uint64_t double_bits(double x) {
    std::uint64_t b;
    static_assert(sizeof(b) == sizeof(x));
    __builtin_memcpy(&b, &x, sizeof(b));
    return b;
}

/// Maps 64 random bits to a double in [0, 1).
constexpr double unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------
// Deterministic RNG: xoshiro256** seeded through splitmix64. Streams are
// independent generators keyed by (seed, stream); chains running in parallel
// each get their own stream.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::uint64_t sm = hash_combine(mix64(seed), stream);
        for (auto& word : state_) {
            sm += 0x9e3779b97f4a7c15ull;
            word = mix64(sm);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform01() { return unit_double(next_u64()); }

    /// Uniform integer in [0, n). Requires n >= 1.
    int uniform_int(int n) {
        return static_cast<int>(uniform01() * static_cast<double>(n)) % n;
    }

    /// Inverse-CDF draw from a probability vector using a single uniform.
    /// Ties and rounding resolve in token order; the last index absorbs
    /// residual mass.
    int categorical(std::span<const double> probs) {
        const double u = uniform01();
        double acc = 0.0;
        for (std::size_t a = 0; a + 1 < probs.size(); ++a) {
            acc += probs[a];
            if (u < acc) return static_cast<int>(a);
        }
        return static_cast<int>(probs.size()) - 1;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
};

}  // namespace gadd
