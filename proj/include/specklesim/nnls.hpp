#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "specklesim/linalg.hpp"
#include "specklesim/speckle.hpp"

namespace spk {

struct AbundanceEstimate {
    std::vector<double> abundance; // mg/mL per species, >= 0
    double residual_norm = 0.0;    // ||A c - y|| recomputed from the raw system
    int iterations = 0;
    bool converged = false;
};

struct NnlsOptions {
    double tolerance = 1e-10; // relative KKT tolerance, scaled by ||A|| ||y||
    int max_iterations = 10000;
};

// Non-negative least squares, min_{c >= 0} ||A c - y||, by the Lawson-Hanson
// active-set method on the normal equations with a projected-gradient
// fallback when the passive-set system loses positive definiteness. The
// returned estimate carries an honest KKT-certified convergence flag.
//
// columns: n vectors of length m (the basis responses); y: length m.
inline AbundanceEstimate nnls_solve(const std::vector<std::vector<double>>& columns,
                                    const std::vector<double>& y,
                                    const NnlsOptions& opt = {}) {
    const size_t n = columns.size();
    if (n == 0) throw parameter_error("nnls: at least one column required");
    const size_t m = y.size();
    for (const auto& col : columns)
        if (col.size() != m) throw shape_error("nnls: column length differs from y");

    // Gram matrix and projected right-hand side.
    Matrix gram(n, n);
    std::vector<double> aty(n, 0.0);
    double a_fro_sq = 0.0;
    for (size_t i = 0; i < n; ++i) {
        aty[i] = dot(columns[i], y);
        for (size_t j = i; j < n; ++j) {
            const double g = dot(columns[i], columns[j]);
            gram.at(i, j) = g;
            gram.at(j, i) = g;
        }
        a_fro_sq += gram.at(i, i);
    }
    const double kkt_scale = std::sqrt(a_fro_sq) * norm2(y);
    const double tol = opt.tolerance * std::max(kkt_scale, 1e-300);

    std::vector<double> c(n, 0.0);
    std::vector<bool> passive(n, false);
    int iterations = 0;
    bool converged = false;
    bool needs_fallback = false;

    auto gradient = [&](const std::vector<double>& x) {
        std::vector<double> g = matvec(gram, x);
        for (size_t i = 0; i < n; ++i) g[i] -= aty[i];
        return g;
    };

    auto solve_passive = [&](std::vector<double>& z) -> bool {
        std::vector<size_t> idx;
        for (size_t i = 0; i < n; ++i)
            if (passive[i]) idx.push_back(i);
        if (idx.empty()) {
            z.assign(n, 0.0);
            return true;
        }
        Matrix sub(idx.size(), idx.size());
        std::vector<double> rhs(idx.size());
        for (size_t a = 0; a < idx.size(); ++a) {
            rhs[a] = aty[idx[a]];
            for (size_t b = 0; b < idx.size(); ++b) sub.at(a, b) = gram.at(idx[a], idx[b]);
        }
        std::vector<double> sol;
        if (!cholesky_solve(sub, rhs, sol)) return false;
        z.assign(n, 0.0);
        for (size_t a = 0; a < idx.size(); ++a) z[idx[a]] = sol[a];
        return true;
    };

    while (iterations < opt.max_iterations) {
        ++iterations;
        const std::vector<double> g = gradient(c);
        size_t best = n;
        double most_negative = -tol;
        for (size_t i = 0; i < n; ++i)
            if (!passive[i] && g[i] < most_negative) {
                most_negative = g[i];
                best = i;
            }
        if (best == n) {
            converged = true;
            break;
        }
        passive[best] = true;

        for (;;) {
            std::vector<double> z;
            if (!solve_passive(z)) {
                needs_fallback = true;
                break;
            }
            bool feasible = true;
            for (size_t i = 0; i < n; ++i)
                if (passive[i] && z[i] <= 0.0) feasible = false;
            if (feasible) {
                c = z;
                break;
            }
            // step toward z until the first passive coordinate hits zero
            double alpha = 1.0;
            size_t hit = n;
            for (size_t i = 0; i < n; ++i)
                if (passive[i] && z[i] <= 0.0 && c[i] > z[i]) {
                    const double ratio = c[i] / (c[i] - z[i]);
                    if (ratio < alpha) {
                        alpha = ratio;
                        hit = i;
                    }
                }
            for (size_t i = 0; i < n; ++i)
                if (passive[i]) c[i] += alpha * (z[i] - c[i]);
            for (size_t i = 0; i < n; ++i)
                if (passive[i] && (i == hit || c[i] <= 0.0)) {
                    c[i] = 0.0;
                    passive[i] = false;
                }
        }
        if (needs_fallback) break;
    }

    // Projected gradient with a Lipschitz step; covers rank-deficient Gram
    // matrices the active-set path cannot factor.
    if (needs_fallback) {
        double lipschitz = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (size_t j = 0; j < n; ++j) row += std::abs(gram.at(i, j));
            lipschitz = std::max(lipschitz, row);
        }
        const double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
        for (; iterations < opt.max_iterations; ++iterations) {
            const std::vector<double> g = gradient(c);
            double kkt_violation = 0.0;
            for (size_t i = 0; i < n; ++i)
                kkt_violation = std::max(kkt_violation,
                                         c[i] > 0.0 ? std::abs(g[i]) : std::max(0.0, -g[i]));
            if (kkt_violation <= tol) {
                converged = true;
                break;
            }
            for (size_t i = 0; i < n; ++i) c[i] = std::max(0.0, c[i] - step * g[i]);
        }
    }

    AbundanceEstimate est;
    est.abundance = c;
    est.iterations = iterations;
    est.converged = converged;

    // Residual recomputed from the raw system, not the Gram shortcut.
    double rss = 0.0;
    for (size_t r = 0; r < m; ++r) {
        double v = -y[r];
        for (size_t i = 0; i < n; ++i) v += columns[i][r] * c[i];
        rss += v * v;
    }
    est.residual_norm = std::sqrt(rss);
    return est;
}

// KKT certificate for a returned estimate: near-zero gradient on the
// support, non-negative gradient off it, both at tol * ||A|| * ||y||.
inline bool nnls_kkt_certificate(const std::vector<std::vector<double>>& columns,
                                 const std::vector<double>& y,
                                 const std::vector<double>& c, double tol = 1e-8) {
    const size_t n = columns.size();
    const size_t m = y.size();
    double a_fro_sq = 0.0;
    for (const auto& col : columns) a_fro_sq += dot(col, col);
    const double scale = std::sqrt(a_fro_sq) * norm2(y);

    std::vector<double> resid(m);
    for (size_t r = 0; r < m; ++r) {
        double v = -y[r];
        for (size_t i = 0; i < n; ++i) v += columns[i][r] * c[i];
        resid[r] = v;
    }
    for (size_t i = 0; i < n; ++i) {
        const double g = dot(columns[i], resid);
        if (c[i] > 0.0 && std::abs(g) > tol * scale) return false;
        if (c[i] == 0.0 && g < -tol * scale) return false;
    }
    return true;
}

// Linear unmixing problem over basis kernels: the lag-mask restriction of
// Eq. 7 as a non-negative linear system in the abundances.
struct UnmixProblem {
    AutocorrMap measured;
    std::vector<BasisKernel> bases;
    std::vector<size_t> lag_mask; // flat indices into the lag maps

    void validate() const {
        if (bases.empty()) throw parameter_error("unmix: at least one basis required");
        if (lag_mask.empty()) throw parameter_error("unmix: lag mask must be non-empty");
        if (!measured.mean_subtracted)
            throw parameter_error("unmix: measured map must be mean-subtracted");
        for (const auto& b : bases) {
            if (!b.map.grid.same_shape(measured.grid))
                throw config_error("unmix: basis '" + b.species_name +
                                   "' dimensions differ from the measured map");
            if (!bases[0].config_digest.empty() && b.config_digest != bases[0].config_digest)
                throw config_error("unmix: basis '" + b.species_name +
                                   "' was built under a different optical configuration");
        }
    }
};

inline UnmixProblem make_unmix_problem(AutocorrMap measured, std::vector<BasisKernel> bases,
                                       double r_lo = 1.0, double r_hi = 5.0) {
    UnmixProblem p;
    p.lag_mask = lag_annulus_indices(measured.grid.width, measured.grid.height, r_lo, r_hi);
    p.measured = std::move(measured);
    p.bases = std::move(bases);
    return p;
}

inline AbundanceEstimate nnls_unmix(const UnmixProblem& problem, const NnlsOptions& opt = {}) {
    problem.validate();
    std::vector<std::vector<double>> columns;
    columns.reserve(problem.bases.size());
    for (const auto& basis : problem.bases) {
        std::vector<double> col(problem.lag_mask.size());
        for (size_t i = 0; i < col.size(); ++i)
            col[i] = basis.map.grid.data[problem.lag_mask[i]];
        columns.push_back(std::move(col));
    }
    std::vector<double> y(problem.lag_mask.size());
    for (size_t i = 0; i < y.size(); ++i)
        y[i] = problem.measured.grid.data[problem.lag_mask[i]];
    return nnls_solve(columns, y, opt);
}

} // namespace spk
