#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "specklesim/grid.hpp"

namespace spk {

enum class FftDirection { forward, inverse };

namespace detail {

// Twiddle table and bit-reversal permutation for one power-of-two length.
// Built per transform; cheap next to the butterflies.
struct FftPlan {
    int n = 0;
    std::vector<cplx> twiddle;   // exp(-2*pi*i*k/n), k < n/2
    std::vector<int> bitrev;

    explicit FftPlan(int length) : n(length) {
        twiddle.resize(static_cast<size_t>(n) / 2);
        for (int k = 0; k < n / 2; ++k) {
            const double ang = -2.0 * std::numbers::pi * k / n;
            twiddle[k] = cplx{std::cos(ang), std::sin(ang)};
        }
        bitrev.resize(n);
        int bits = 0;
        while ((1 << bits) < n) ++bits;
        for (int i = 0; i < n; ++i) {
            int r = 0;
            for (int b = 0; b < bits; ++b)
                if (i & (1 << b)) r |= 1 << (bits - 1 - b);
            bitrev[i] = r;
        }
    }

    // In-place radix-2 DIT on a contiguous line. Inverse is unscaled here;
    // the 2-D wrapper applies the 1/(W*H) convention once.
    void run(cplx* x, bool inverse) const {
        for (int i = 0; i < n; ++i) {
            const int j = bitrev[i];
            if (j > i) std::swap(x[i], x[j]);
        }
        for (int len = 2; len <= n; len <<= 1) {
            const int half = len >> 1;
            const int step = n / len;
            for (int base = 0; base < n; base += len) {
                for (int k = 0; k < half; ++k) {
                    cplx w = twiddle[static_cast<size_t>(k) * step];
                    if (inverse) w = std::conj(w);
                    const cplx u = x[base + k];
                    const cplx v = x[base + k + half] * w;
                    x[base + k] = u + v;
                    x[base + k + half] = u - v;
                }
            }
        }
    }
};

inline void require_pow2_axis(int n, const char* axis) {
    if (!is_pow2(n))
        throw dimension_error(std::string("fft2: ") + axis + " = " + std::to_string(n) +
                              " is not a power of two (unsupported by the radix-2 backend)");
}

// Cache-blocked out-of-place transpose, src (w x h) -> dst (h x w).
inline void transpose_blocked(const cplx* src, cplx* dst, int w, int h) {
    constexpr int kBlock = 32;
    for (int y0 = 0; y0 < h; y0 += kBlock)
        for (int x0 = 0; x0 < w; x0 += kBlock) {
            const int y1 = std::min(h, y0 + kBlock);
            const int x1 = std::min(w, x0 + kBlock);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    dst[static_cast<size_t>(x) * h + y] = src[static_cast<size_t>(y) * w + x];
        }
}

// In-place 2-D transform: rows, transpose, rows, transpose back. The
// transposes keep every 1-D transform on contiguous memory.
inline void fft2_inplace(ComplexGrid& g, bool inverse) {
    require_pow2_axis(g.width, "width");
    require_pow2_axis(g.height, "height");

    const FftPlan row_plan(g.width);
    for (int y = 0; y < g.height; ++y)
        row_plan.run(g.data.data() + static_cast<size_t>(y) * g.width, inverse);

    std::vector<cplx> scratch(g.size());
    transpose_blocked(g.data.data(), scratch.data(), g.width, g.height);

    const FftPlan col_plan(g.height);
    for (int x = 0; x < g.width; ++x)
        col_plan.run(scratch.data() + static_cast<size_t>(x) * g.height, inverse);

    transpose_blocked(scratch.data(), g.data.data(), g.height, g.width);

    if (inverse) {
        const double scale = 1.0 / (static_cast<double>(g.width) * g.height);
        for (cplx& v : g.data) v *= scale;
    }
}

} // namespace detail

// 2-D FFT, forward unnormalized, inverse scaled by 1/(width*height), so
// inverse(forward(g)) == g. Grid dimensions must be powers of two.
inline ComplexGrid fft2(const ComplexGrid& g, FftDirection direction) {
    ComplexGrid out = g;
    detail::fft2_inplace(out, direction == FftDirection::inverse);
    return out;
}

} // namespace spk
