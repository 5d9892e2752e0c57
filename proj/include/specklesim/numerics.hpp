#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "specklesim/fft.hpp"
#include "specklesim/grid.hpp"

namespace spk {

// Circular cross-correlation via the Wiener-Khinchin route:
//   r(tau) = sum_x conj(a(x)) * b(x + tau)
// computed as inverse-FFT of conj(F(a)) .* F(b). For a == b the zero-lag
// value is sum |a|^2 and r(-tau) = conj(r(tau)) under circular indexing.
namespace detail {

inline ComplexGrid zero_pad_double(const ComplexGrid& g) {
    ComplexGrid out(2 * g.width, 2 * g.height, g.pitch);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) out.at(x, y) = g.at(x, y);
    return out;
}

} // namespace detail

// Circular cross-correlation by default. With zero_pad the operands are
// embedded in a doubled grid first, which turns wrap-around lags into true
// linear-correlation lags; the result is cropped back to the input size.
inline ComplexGrid cross_correlate(const ComplexGrid& a, const ComplexGrid& b,
                                   bool zero_pad = false) {
    if (!a.same_shape(b))
        throw shape_error("cross_correlate: operand shapes differ");
    if (a.pitch != b.pitch)
        throw shape_error("cross_correlate: operand pitches differ");

    if (zero_pad) {
        const ComplexGrid pa = detail::zero_pad_double(a);
        const ComplexGrid pb = detail::zero_pad_double(b);
        const ComplexGrid full = cross_correlate(pa, pb, false);
        ComplexGrid out(a.width, a.height, a.pitch);
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                // keep the centered lag window: wrap negative lags from the
                // padded grid back onto the output's circular layout
                const int sy = y < a.height / 2 ? y : 2 * a.height - (a.height - y);
                const int sx = x < a.width / 2 ? x : 2 * a.width - (a.width - x);
                out.at(x, y) = full.at(sx, sy);
            }
        return out;
    }

    ComplexGrid fa = fft2(a, FftDirection::forward);
    if (&a == &b) { // autocorrelation: conj(F) .* F is just |F|^2
        for (auto& v : fa.data) v = cplx{std::norm(v), 0.0};
    } else {
        ComplexGrid fb = fft2(b, FftDirection::forward);
        for (size_t i = 0; i < fa.size(); ++i)
            fa.data[i] = std::conj(fa.data[i]) * fb.data[i];
    }
    detail::fft2_inplace(fa, true);
    return fa;
}

namespace detail {

// Whole-sample reflection (… 2 1 0 | 0 1 2 … n-1 | n-1 n-2 …), which tiles
// the signal with period 2n and keeps a normalized kernel mean-preserving.
inline int reflect_index(int i, int n) {
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

inline std::vector<double> gaussian_kernel_1d(int ksize, double sigma) {
    std::vector<double> k(static_cast<size_t>(ksize));
    const int c = ksize / 2;
    double sum = 0.0;
    for (int i = 0; i < ksize; ++i) {
        const double d = i - c;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

} // namespace detail

// Gaussian blur with a sampled, sum-normalized kernel and reflective
// boundary. Separable, so the 2-D kernel is the outer product of the 1-D
// taps; a constant image maps to itself exactly.
inline RealGrid gaussian_blur(const RealGrid& g, int ksize, double sigma) {
    if (ksize < 1 || ksize % 2 == 0)
        throw parameter_error("gaussian_blur: ksize must be odd and >= 1");
    if (!(sigma > 0.0))
        throw parameter_error("gaussian_blur: sigma must be > 0");
    if (ksize == 1) return g;

    const std::vector<double> k = detail::gaussian_kernel_1d(ksize, sigma);
    const int r = ksize / 2;

    RealGrid tmp(g.width, g.height, g.pitch);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t)
                acc += k[static_cast<size_t>(t + r)] * g.at(detail::reflect_index(x + t, g.width), y);
            tmp.at(x, y) = acc;
        }

    RealGrid out(g.width, g.height, g.pitch);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t)
                acc += k[static_cast<size_t>(t + r)] * tmp.at(x, detail::reflect_index(y + t, g.height));
            out.at(x, y) = acc;
        }
    return out;
}

struct RadialBin {
    double radius = 0.0;               // bin-center lag radius, pixels
    std::optional<double> mean;        // empty when no pixel fell in the bin
    size_t count = 0;
};

// Radial reduction over circular lag radius, zero lag at index (0,0).
// Bin i covers [i*r_max/n_bins, (i+1)*r_max/n_bins); the single pixel at
// exactly r_max (grid corner for even dimensions) falls outside every bin.
inline std::vector<RadialBin> radial_profile(const RealGrid& g, int n_bins) {
    if (n_bins < 1)
        throw parameter_error("radial_profile: n_bins must be >= 1");
    if (g.size() == 0)
        throw parameter_error("radial_profile: empty grid");

    const double r_max = circular_lag_radius(g.width / 2, g.height / 2, g.width, g.height);
    std::vector<double> sums(static_cast<size_t>(n_bins), 0.0);
    std::vector<size_t> counts(static_cast<size_t>(n_bins), 0);

    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            const double rad = circular_lag_radius(x, y, g.width, g.height);
            const int bin = r_max > 0.0 ? static_cast<int>(rad / r_max * n_bins) : 0;
            if (bin < 0 || bin >= n_bins) continue;
            sums[bin] += g.at(x, y);
            counts[bin] += 1;
        }

    std::vector<RadialBin> out(static_cast<size_t>(n_bins));
    for (int i = 0; i < n_bins; ++i) {
        out[i].radius = (i + 0.5) * r_max / n_bins;
        out[i].count = counts[i];
        if (counts[i] > 0) out[i].mean = sums[i] / static_cast<double>(counts[i]);
    }
    return out;
}

} // namespace spk
