#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gadd/common.hpp"
#include "gadd/state_space.hpp"

namespace gadd {

/// Largest state count for which a dense S^d x S^d kernel may be
/// materialized (4096^2 doubles = 128 MiB). Pushforward helpers avoid
/// materialization entirely and are not subject to this cap.
inline constexpr std::uint64_t kDenseKernelCap = 4096;

// ---------------------------------------------------------------------------
// DenseKernel: an explicit row-stochastic transition matrix on [S]^d.
// ---------------------------------------------------------------------------

class DenseKernel {
public:
    explicit DenseKernel(StateSpaceSpec spec) : spec_(spec), n_(spec.state_count()) {
        if (n_ > kDenseKernelCap)
            throw TooLarge("DenseKernel: state count exceeds dense materialization cap");
        rows_.assign(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_), 0.0);
    }

    const StateSpaceSpec& space() const { return spec_; }
    std::uint64_t size() const { return n_; }

    std::span<double> row(StateIndex x) {
        return {rows_.data() + static_cast<std::size_t>(x) * n_, static_cast<std::size_t>(n_)};
    }
    std::span<const double> row(StateIndex x) const {
        return {rows_.data() + static_cast<std::size_t>(x) * n_, static_cast<std::size_t>(n_)};
    }
    double at(StateIndex x, StateIndex y) const {
        return rows_[static_cast<std::size_t>(x) * n_ + y];
    }
    double& at(StateIndex x, StateIndex y) {
        return rows_[static_cast<std::size_t>(x) * n_ + y];
    }

    /// p' = p K.
    Pmf push(const Pmf& p) const {
        if (p.space() != spec_) throw SpecMismatch("DenseKernel::push: spec mismatch");
        std::vector<double> out(static_cast<std::size_t>(n_), 0.0);
        for (StateIndex x = 0; x < n_; ++x) {
            const double px = p[x];
            if (px == 0.0) continue;
            const double* r = rows_.data() + static_cast<std::size_t>(x) * n_;
            for (StateIndex y = 0; y < n_; ++y) out[y] += px * r[y];
        }
        return Pmf::from_weights(spec_, std::move(out));
    }

    /// K' = this * other (apply this first, then other).
    DenseKernel compose(const DenseKernel& other) const {
        if (other.spec_ != spec_) throw SpecMismatch("DenseKernel::compose: spec mismatch");
        DenseKernel out(spec_);
        for (StateIndex x = 0; x < n_; ++x) {
            const double* a = rows_.data() + static_cast<std::size_t>(x) * n_;
            double* o = out.rows_.data() + static_cast<std::size_t>(x) * n_;
            for (StateIndex k = 0; k < n_; ++k) {
                const double v = a[k];
                if (v == 0.0) continue;
                const double* b = other.rows_.data() + static_cast<std::size_t>(k) * n_;
                for (StateIndex y = 0; y < n_; ++y) o[y] += v * b[y];
            }
        }
        return out;
    }

    double max_row_sum_error() const {
        double worst = 0.0;
        for (StateIndex x = 0; x < n_; ++x) {
            double sum = 0.0;
            for (double v : row(x)) sum += v;
            worst = std::max(worst, std::abs(sum - 1.0));
        }
        return worst;
    }

private:
    StateSpaceSpec spec_;
    std::uint64_t n_;
    std::vector<double> rows_;
};

namespace detail {

inline void accumulate_product_axis(const double* move, int axis, int S, double weight,
                                    std::uint64_t base, std::uint64_t stride, double* out) {
    if (axis == 0) {
        double* o = out + base;
        for (int a = 0; a < S; ++a) o[a] += weight * move[a];
        return;
    }
    const double* m = move + static_cast<std::size_t>(axis) * S;
    for (int a = 0; a < S; ++a) {
        const double w = weight * m[a];
        if (w == 0.0) continue;
        accumulate_product_axis(move, axis - 1, S, w,
                                base + static_cast<std::uint64_t>(a) * stride, stride / S, out);
    }
}

/// Accumulates weight * (outer product of d per-token distributions) into a
/// dense law. move holds d rows of length S (move[i*S + a]); destination
/// index for tokens (a_0 .. a_{d-1}) is sum_i a_i S^i.
inline void accumulate_product_kernel_row(std::span<const double> move, int d, int S,
                                          double weight, std::span<double> out) {
    std::uint64_t top_stride = 1;
    for (int i = 0; i < d - 1; ++i) top_stride *= static_cast<std::uint64_t>(S);
    accumulate_product_axis(move.data(), d - 1, S, weight, 0, top_stride, out.data());
}

}  // namespace detail

}  // namespace gadd
