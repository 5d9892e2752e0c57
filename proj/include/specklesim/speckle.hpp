#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "specklesim/forward.hpp"
#include "specklesim/numerics.hpp"
#include "specklesim/scene.hpp"

namespace spk {

// Intensity autocorrelation surface in the lag domain, zero lag at (0,0).
struct AutocorrMap {
    RealGrid grid;
    int n_frames_averaged = 0;
    bool mean_subtracted = false;
};

// FNV-1a over the canonical serialization of every field that affects the
// physics, so a basis built under one optical configuration can never be
// applied under another silently.
inline std::string config_hash(const OpticalConfig& cfg) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.17g|%.17g|%d|%d|%.17g|%.17g|%.17g", cfg.wavelength,
                  cfg.pixel_pitch, cfg.grid_width, cfg.grid_height, cfg.propagation_distance,
                  cfg.medium_index, cfg.chamber_thickness);
    uint64_t h = 0xCBF29CE484222325ull;
    for (const char* p = buf; *p; ++p) {
        h ^= static_cast<unsigned char>(*p);
        h *= 0x100000001B3ull;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

// Per-species unit-abundance autocorrelation response, the column of the
// linear unmixing model. Valid only under the configuration it was built
// with; the hash is checked at solve time.
struct BasisKernel {
    std::string species_name;
    AutocorrMap map;           // at reference abundance c_ref
    double c_ref = 1.0;        // mg/mL
    int n_mc_frames = 0;
    uint64_t seed = 0;
    std::string config_digest;
};

struct SpeckleFeatures {
    double contrast = 0.0;                  // sigma_I / mean_I
    std::optional<double> correlation_length; // meters; empty = not reached
    std::vector<double> radial_profile;     // normalized, [0] == 1
    double mean_intensity = 0.0;
    bool degenerate = false;
};

// Autocorrelation of one intensity frame via the Wiener-Khinchin route.
// With subtract_mean the frame's own mean is removed first, isolating the
// fluctuation term; zero lag is then exactly sum (I - mean)^2.
inline AutocorrMap intensity_autocorr(const RealGrid& frame, bool subtract_mean) {
    ComplexGrid work = to_complex(frame);
    if (subtract_mean) {
        const double m = frame.mean();
        for (auto& v : work.data) v -= m;
    }
    const ComplexGrid corr = cross_correlate(work, work);

    AutocorrMap map;
    map.grid = real_part(corr);
    map.grid.pitch = frame.pitch;
    map.n_frames_averaged = 1;
    map.mean_subtracted = subtract_mean;
    return map;
}

namespace detail {

// Autocorrelations of two real frames for the price of one complex FFT
// round trip: pack z = a + i*b, split the spectra by Hermitian symmetry,
// store |F(a)|^2 + i|F(b)|^2, and invert once. Both outputs are real.
inline void autocorr_packed_pair(const RealGrid& a, const RealGrid& b, bool subtract_mean,
                                 RealGrid& out_a, RealGrid& out_b) {
    const int w = a.width, h = a.height;
    ComplexGrid z(w, h, a.pitch);
    const double mean_a = subtract_mean ? a.mean() : 0.0;
    const double mean_b = subtract_mean ? b.mean() : 0.0;
    for (size_t i = 0; i < z.size(); ++i)
        z.data[i] = cplx{a.data[i] - mean_a, b.data[i] - mean_b};

    fft2_inplace(z, false);

    for (int ky = 0; ky < h; ++ky) {
        const int ny = (h - ky) % h;
        for (int kx = 0; kx < w; ++kx) {
            const int nx = (w - kx) % w;
            const size_t i = static_cast<size_t>(ky) * w + kx;
            const size_t j = static_cast<size_t>(ny) * w + nx;
            if (j < i) continue; // pair already handled
            if (i == j) {
                const cplx v = z.data[i];
                z.data[i] = cplx{v.real() * v.real(), v.imag() * v.imag()};
            } else {
                const cplx za = z.data[i];
                const cplx zb = std::conj(z.data[j]);
                const double pa = 0.25 * std::norm(za + zb);
                const double pb = 0.25 * std::norm(za - zb);
                z.data[i] = cplx{pa, pb};
                z.data[j] = cplx{pa, pb}; // both power spectra are even in f
            }
        }
    }

    fft2_inplace(z, true);

    out_a = RealGrid(w, h, a.pitch);
    out_b = RealGrid(w, h, a.pitch);
    for (size_t i = 0; i < z.size(); ++i) {
        out_a.data[i] = z.data[i].real();
        out_b.data[i] = z.data[i].imag();
    }
}

} // namespace detail

// Arithmetic mean of per-frame autocorrelations (the ensemble of Eq. 7 is
// over realizations, not over one long exposure). Frames are processed in
// packed pairs to halve the transform count.
inline AutocorrMap ensemble_autocorr(const std::vector<RealGrid>& frames, bool subtract_mean) {
    if (frames.empty())
        throw parameter_error("ensemble_autocorr: at least one frame required");
    for (const auto& f : frames)
        if (!f.same_shape(frames[0]))
            throw shape_error("ensemble_autocorr: frame shapes differ");

    AutocorrMap acc;
    acc.grid = RealGrid(frames[0].width, frames[0].height, frames[0].pitch);
    acc.mean_subtracted = subtract_mean;

    size_t i = 0;
    RealGrid ra, rb;
    for (; i + 1 < frames.size(); i += 2) {
        detail::autocorr_packed_pair(frames[i], frames[i + 1], subtract_mean, ra, rb);
        for (size_t j = 0; j < acc.grid.size(); ++j)
            acc.grid.data[j] += ra.data[j] + rb.data[j];
    }
    if (i < frames.size()) {
        const AutocorrMap m = intensity_autocorr(frames[i], subtract_mean);
        for (size_t j = 0; j < acc.grid.size(); ++j) acc.grid.data[j] += m.grid.data[j];
    }
    const double inv = 1.0 / static_cast<double>(frames.size());
    for (auto& v : acc.grid.data) v *= inv;
    acc.n_frames_averaged = static_cast<int>(frames.size());
    return acc;
}

namespace detail {

// Shared frame normalization for basis construction and measurement:
// divide by the grand mean over the whole frame stack, so sensor counts and
// raw intensities land in the same relative-intensity units.
inline void normalize_by_grand_mean(std::vector<RealGrid>& frames) {
    double grand = 0.0;
    size_t n = 0;
    for (const auto& f : frames) {
        grand += f.sum();
        n += f.size();
    }
    if (n == 0) return;
    grand /= static_cast<double>(n);
    if (grand <= 0.0) return; // blank stack: leave as-is, autocorr is zero anyway
    const double inv = 1.0 / grand;
    for (auto& f : frames)
        for (auto& v : f.data) v *= inv;
}

} // namespace detail

// Simulate one frame of a scene through synthesis -> propagation ->
// intensity. The propagation kernel is passed in so frame loops build it
// once.
inline RealGrid simulate_intensity_frame(const Scene& scene, int frame_index,
                                         const PropagationKernel& kernel, SynthesisMode mode) {
    const auto realization = sample_realization(scene, frame_index);
    const TransmissionField field = synthesize_transmission(realization, scene, mode);
    return intensity(propagate(field, kernel));
}

// Monte-Carlo estimate of a species' unit-abundance response: single-species
// scenes at c_ref through the noise-free pipeline, grand-mean normalized,
// mean-subtracted, ensemble averaged, stored per unit abundance.
inline BasisKernel species_basis(const Species& species, const OpticalConfig& cfg,
                                 int n_mc_frames, uint64_t seed,
                                 SynthesisMode mode = SynthesisMode::additive_weak,
                                 double c_ref = 1.0) {
    if (n_mc_frames < 1)
        throw parameter_error("species_basis: n_mc_frames must be >= 1");
    if (!(c_ref > 0.0))
        throw parameter_error("species_basis: c_ref must be > 0");

    Scene scene;
    scene.config = cfg;
    Population pop;
    pop.species = species;
    pop.abundance = c_ref;
    pop.diameter_cv = 0.0; // the kernel is the nominal-diameter response
    scene.populations.push_back(pop);
    scene.master_seed = seed;
    scene.n_frames = n_mc_frames;

    const PropagationKernel kernel = make_kernel(cfg, cfg.propagation_distance);
    std::vector<RealGrid> frames;
    frames.reserve(static_cast<size_t>(n_mc_frames));
    for (int f = 0; f < n_mc_frames; ++f)
        frames.push_back(simulate_intensity_frame(scene, f, kernel, mode));
    detail::normalize_by_grand_mean(frames);

    BasisKernel basis;
    basis.map = ensemble_autocorr(frames, true);
    if (c_ref != 1.0)
        for (auto& v : basis.map.grid.data) v /= c_ref;
    basis.species_name = species.name;
    basis.c_ref = c_ref;
    basis.n_mc_frames = n_mc_frames;
    basis.seed = seed;
    basis.config_digest = config_hash(cfg);
    return basis;
}

// Frequency-domain check of the coherent factorization: the spectrum of the
// propagated field must equal |F(S)|^2 |H|^2 point-for-point. Returns the
// maximum relative residual over frequencies.
inline double verify_field_identity(const TransmissionField& field,
                                    const PropagationKernel& kernel) {
    const ComplexGrid propagated = propagate(field, kernel);
    const ComplexGrid fe = fft2(propagated, FftDirection::forward);
    const ComplexGrid fs = fft2(field.grid, FftDirection::forward);

    double max_rel = 0.0;
    double scale = 0.0;
    for (size_t i = 0; i < fe.size(); ++i) scale = std::max(scale, std::norm(fs.data[i]));
    for (size_t i = 0; i < fe.size(); ++i) {
        const double lhs = std::norm(fe.data[i]);
        const double rhs = std::norm(fs.data[i]) * std::norm(kernel.transfer.data[i]);
        max_rel = std::max(max_rel, std::abs(lhs - rhs) / scale);
    }
    return max_rel;
}

// Indices of lag pixels whose circular lag radius falls in [r_lo, r_hi].
// The annulus 1..5 px is the default informative-lag region: lag 0 is
// variance-dominated, far lags are Monte-Carlo noise.
inline std::vector<size_t> lag_annulus_indices(int width, int height, double r_lo, double r_hi) {
    std::vector<size_t> idx;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double r = circular_lag_radius(x, y, width, height);
            if (r >= r_lo && r <= r_hi)
                idx.push_back(static_cast<size_t>(y) * width + x);
        }
    return idx;
}

// L2 magnitude of a map over an index mask.
inline double masked_norm(const RealGrid& g, const std::vector<size_t>& mask) {
    double s = 0.0;
    for (size_t i : mask) s += g.data[i] * g.data[i];
    return std::sqrt(s);
}

// Feature descriptor feeding the estimator: speckle contrast, 1/e
// correlation length of the radial autocorrelation, the normalized radial
// profile, and the mean level.
inline SpeckleFeatures extract_features(const AutocorrMap& map, double frames_mean,
                                        double frames_std, int n_profile_bins = 32) {
    if (!map.mean_subtracted)
        throw parameter_error("extract_features: map must be mean-subtracted");

    SpeckleFeatures out;
    out.mean_intensity = frames_mean;
    out.contrast = frames_mean > 0.0 ? frames_std / frames_mean : 0.0;
    out.radial_profile.assign(static_cast<size_t>(n_profile_bins), 0.0);

    const double zero_lag = map.grid.at(0, 0);
    if (zero_lag <= 0.0) {
        out.degenerate = true;
        return out;
    }

    const auto bins = radial_profile(map.grid, n_profile_bins);
    const double norm = bins[0].mean.value_or(zero_lag);
    if (!(norm > 0.0)) {
        out.degenerate = true;
        return out;
    }
    for (int i = 0; i < n_profile_bins; ++i)
        out.radial_profile[static_cast<size_t>(i)] =
            bins[i].mean ? *bins[i].mean / norm : 0.0;

    // 1/e crossing of the radial profile, linearly interpolated between the
    // last two populated bins and reported in meters.
    const double target = 1.0 / std::numbers::e;
    double prev_val = out.radial_profile[0];
    double prev_rad = bins[0].radius;
    for (size_t i = 1; i < bins.size(); ++i) {
        if (!bins[i].mean) continue;
        const double cur = out.radial_profile[i];
        if (cur < target) {
            const double t = prev_val > cur ? (prev_val - target) / (prev_val - cur) : 1.0;
            out.correlation_length = (prev_rad + t * (bins[i].radius - prev_rad)) * map.grid.pitch;
            break;
        }
        prev_val = cur;
        prev_rad = bins[i].radius;
    }
    return out;
}

} // namespace spk
