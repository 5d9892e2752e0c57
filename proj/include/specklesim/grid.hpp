#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "specklesim/errors.hpp"

namespace spk {

using cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline void check_grid_args(int width, int height, double pitch) {
    if (width <= 0 || height <= 0)
        throw parameter_error("grid dimensions must be positive");
    if (!(pitch > 0.0))
        throw parameter_error("grid pitch must be > 0");
}

} // namespace detail

// 2-D complex field sampled on a uniform raster, row-major. Pixel (x, y)
// lives at data[y * width + x]; the sample point is at physical position
// (x * pitch, y * pitch).
struct ComplexGrid {
    int width = 0;
    int height = 0;
    double pitch = 1.0; // meters per pixel
    std::vector<cplx> data;

    ComplexGrid() = default;

    ComplexGrid(int w, int h, double pitch_m, cplx fill = cplx{0.0, 0.0})
        : width(w), height(h), pitch(pitch_m) {
        detail::check_grid_args(w, h, pitch_m);
        data.assign(static_cast<size_t>(w) * h, fill);
    }

    size_t size() const { return data.size(); }

    cplx& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    const cplx& at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }

    bool same_shape(const ComplexGrid& o) const {
        return width == o.width && height == o.height;
    }
};

// 2-D real raster with the same layout conventions as ComplexGrid.
struct RealGrid {
    int width = 0;
    int height = 0;
    double pitch = 1.0;
    std::vector<double> data;

    RealGrid() = default;

    RealGrid(int w, int h, double pitch_m, double fill = 0.0)
        : width(w), height(h), pitch(pitch_m) {
        detail::check_grid_args(w, h, pitch_m);
        data.assign(static_cast<size_t>(w) * h, fill);
    }

    size_t size() const { return data.size(); }

    double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    const double& at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }

    bool same_shape(const RealGrid& o) const {
        return width == o.width && height == o.height;
    }

    double sum() const {
        double s = 0.0;
        for (double v : data) s += v;
        return s;
    }

    double mean() const { return data.empty() ? 0.0 : sum() / static_cast<double>(size()); }
};

// Circular lag distance of pixel (x, y) from the zero-lag corner (0, 0).
// Lags wrap: on a W-wide axis, lag x and lag W - x are the same distance.
inline double circular_lag_radius(int x, int y, int width, int height) {
    const int lx = std::min(x, width - x);
    const int ly = std::min(y, height - y);
    return std::hypot(static_cast<double>(lx), static_cast<double>(ly));
}

inline RealGrid real_part(const ComplexGrid& g) {
    RealGrid out(g.width, g.height, g.pitch);
    for (size_t i = 0; i < g.size(); ++i) out.data[i] = g.data[i].real();
    return out;
}

inline ComplexGrid to_complex(const RealGrid& g) {
    ComplexGrid out(g.width, g.height, g.pitch);
    for (size_t i = 0; i < g.size(); ++i) out.data[i] = cplx{g.data[i], 0.0};
    return out;
}

} // namespace spk
