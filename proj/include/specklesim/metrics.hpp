#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "specklesim/numerics.hpp"
#include "specklesim/rng.hpp"

namespace spk {

inline void check_paired(const std::vector<double>& y, const std::vector<double>& yhat,
                         const char* op) {
    if (y.empty()) throw parameter_error(std::string(op) + ": empty input");
    if (y.size() != yhat.size()) throw parameter_error(std::string(op) + ": length mismatch");
}

// Mean absolute error, (1/n) sum |y - yhat|.
inline double mae(const std::vector<double>& y, const std::vector<double>& yhat) {
    check_paired(y, yhat, "mae");
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
    return s / static_cast<double>(y.size());
}

// Root mean square error, sqrt((1/n) sum (y - yhat)^2).
inline double rmse(const std::vector<double>& y, const std::vector<double>& yhat) {
    check_paired(y, yhat, "rmse");
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return std::sqrt(s / static_cast<double>(y.size()));
}

// Coefficient of determination, 1 - SSR/SST. Requires Var(y) > 0.
inline double r2(const std::vector<double>& y, const std::vector<double>& yhat) {
    check_paired(y, yhat, "r2");
    if (y.size() < 2) throw parameter_error("r2: need at least 2 samples");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ssr = 0.0, sst = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        ssr += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        sst += (y[i] - mean) * (y[i] - mean);
    }
    if (sst == 0.0) throw domain_error("r2: actual values are constant (zero variance)");
    return 1.0 - ssr / sst;
}

// Median with the midpoint tie rule for even lengths.
inline double median(std::vector<double> x) {
    if (x.empty()) throw parameter_error("median: empty input");
    std::sort(x.begin(), x.end());
    const size_t n = x.size();
    return n % 2 == 1 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

// Robust coefficient of variation in percent:
//   RCV = 100 * k * median(|x - median(x)|) / median(x),  k = 1.4826
// (k chosen for asymptotic normal consistency of the MAD).
inline double rcv(const std::vector<double>& x) {
    constexpr double k = 1.4826;
    const double med = median(x);
    if (med == 0.0) throw domain_error("rcv: zero median");
    std::vector<double> dev(x.size());
    for (size_t i = 0; i < x.size(); ++i) dev[i] = std::abs(x[i] - med);
    return 100.0 * k * median(dev) / med;
}

// Phenotyping fidelity: 100 * max(0, 1 - |c_est - c_true| / c_true).
// Symmetric in over/under-estimation of equal magnitude.
inline double fidelity(double c_est, double c_true) {
    if (!(c_true > 0.0)) throw parameter_error("fidelity: c_true must be > 0");
    return 100.0 * std::max(0.0, 1.0 - std::abs(c_est - c_true) / c_true);
}

// Noise level of an image: standard deviation of the high-pass residual
// (image minus its Gaussian blur). Defaults pinned here; the kernel factor
// for pure white noise is recorded in the calibration table below.
inline double noise_level(const RealGrid& img, int ksize = 7, double sigma = 1.5) {
    const RealGrid blurred = gaussian_blur(img, ksize, sigma);
    double mean = 0.0;
    for (size_t i = 0; i < img.size(); ++i) mean += img.data[i] - blurred.data[i];
    mean /= static_cast<double>(img.size());
    double var = 0.0;
    for (size_t i = 0; i < img.size(); ++i) {
        const double d = img.data[i] - blurred.data[i] - mean;
        var += d * d;
    }
    return std::sqrt(var / static_cast<double>(img.size()));
}

// For white Gaussian noise of amplitude sigma the high-pass residual has
// std factor sqrt(1 - 2*k00 + sum k^2) with k the 2-D blur kernel; derived
// analytically and confirmed by simulation for the default (ksize 7,
// sigma 1.5). Interior-pixel value; reflective borders shift it by < 0.2%.
inline constexpr double kNoiseLevelWhiteFactor = 0.9441193473324935;

// Beer-Lambert: A = eps * D * c.
inline double beer_lambert_absorbance(double eps, double path_cm, double conc) {
    if (eps < 0.0 || path_cm < 0.0 || conc < 0.0)
        throw parameter_error("beer_lambert: inputs must be >= 0");
    return eps * path_cm * conc;
}

// Inverse: c = A / (eps * D).
inline double beer_lambert_concentration(double absorbance, double eps, double path_cm) {
    if (!(eps > 0.0) || !(path_cm > 0.0))
        throw parameter_error("beer_lambert: eps and D must be > 0");
    return absorbance / (eps * path_cm);
}

struct UvvisPoint {
    double c_true = 0.0;
    std::optional<double> c_est; // empty when the reading saturated
    double absorbance = 0.0;
};

// Ensemble-averaging baseline: absorbance grows linearly until the
// instrument saturates; saturated points are flagged out-of-range rather
// than reported as numbers. relative_noise perturbs A multiplicatively and
// deterministically via the seed.
inline std::vector<UvvisPoint> uvvis_baseline(const std::vector<double>& ladder, double eps_eff,
                                              double path_cm, double saturation_a,
                                              double relative_noise = 0.0, uint64_t seed = 0) {
    if (ladder.empty()) throw parameter_error("uvvis_baseline: empty ladder");
    if (!(saturation_a > 0.0)) throw parameter_error("uvvis_baseline: saturation_A must be > 0");

    Rng rng(splitmix64(seed ^ 0x0522ull));
    std::vector<UvvisPoint> out;
    out.reserve(ladder.size());
    for (double c : ladder) {
        UvvisPoint p;
        p.c_true = c;
        const double ideal = beer_lambert_absorbance(eps_eff, path_cm, c) *
                             (1.0 + relative_noise * rng.normal());
        if (ideal >= saturation_a) {
            p.absorbance = saturation_a;
        } else {
            p.absorbance = ideal;
            p.c_est = beer_lambert_concentration(p.absorbance, eps_eff, path_cm);
        }
        out.push_back(p);
    }
    return out;
}

struct MetricReport {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> r2;           // needs n >= 2 and Var(y) > 0
    std::optional<double> rcv_percent;  // spread of measured/true ratios
    double fidelity_percent = 0.0;      // mean fidelity over pairs with y > 0
    size_t n = 0;
};

// Aggregate evaluation of a prediction series against its truths.
inline MetricReport make_metric_report(const std::vector<double>& y,
                                       const std::vector<double>& yhat) {
    check_paired(y, yhat, "metric report");
    MetricReport report;
    report.n = y.size();
    report.mae = mae(y, yhat);
    report.rmse = rmse(y, yhat);
    if (y.size() >= 2) {
        try {
            report.r2 = r2(y, yhat);
        } catch (const domain_error&) {
        }
    }
    std::vector<double> ratios;
    double fid_sum = 0.0;
    size_t fid_n = 0;
    for (size_t i = 0; i < y.size(); ++i)
        if (y[i] > 0.0) {
            ratios.push_back(yhat[i] / y[i]);
            fid_sum += fidelity(yhat[i], y[i]);
            ++fid_n;
        }
    if (fid_n > 0) report.fidelity_percent = fid_sum / static_cast<double>(fid_n);
    if (!ratios.empty()) {
        try {
            report.rcv_percent = rcv(ratios);
        } catch (const domain_error&) {
        }
    }
    return report;
}

} // namespace spk
