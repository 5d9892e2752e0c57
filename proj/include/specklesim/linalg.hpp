#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "specklesim/errors.hpp"

namespace spk {

// Dense row-major matrix, just enough for the solver and estimator.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }
};

inline std::vector<double> matvec(const Matrix& m, const std::vector<double>& v) {
    if (v.size() != m.cols) throw shape_error("matvec: dimension mismatch");
    std::vector<double> out(m.rows, 0.0);
    for (size_t r = 0; r < m.rows; ++r) {
        double acc = 0.0;
        for (size_t c = 0; c < m.cols; ++c) acc += m.at(r, c) * v[c];
        out[r] = acc;
    }
    return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

// Solve S x = b for symmetric positive-definite S via Cholesky.
// Returns false when S is not (numerically) positive definite.
inline bool cholesky_solve(Matrix S, std::vector<double> b, std::vector<double>& x) {
    const size_t n = S.rows;
    if (S.cols != n || b.size() != n) throw shape_error("cholesky_solve: dimension mismatch");

    for (size_t j = 0; j < n; ++j) {
        double d = S.at(j, j);
        for (size_t k = 0; k < j; ++k) d -= S.at(j, k) * S.at(j, k);
        if (!(d > 0.0)) return false;
        const double l = std::sqrt(d);
        S.at(j, j) = l;
        for (size_t i = j + 1; i < n; ++i) {
            double v = S.at(i, j);
            for (size_t k = 0; k < j; ++k) v -= S.at(i, k) * S.at(j, k);
            S.at(i, j) = v / l;
        }
    }
    // forward then backward substitution in-place on b
    for (size_t i = 0; i < n; ++i) {
        double v = b[i];
        for (size_t k = 0; k < i; ++k) v -= S.at(i, k) * b[k];
        b[i] = v / S.at(i, i);
    }
    x.assign(n, 0.0);
    for (size_t ii = n; ii-- > 0;) {
        double v = b[ii];
        for (size_t k = ii + 1; k < n; ++k) v -= S.at(k, ii) * x[k];
        x[ii] = v / S.at(ii, ii);
    }
    return true;
}

} // namespace spk
