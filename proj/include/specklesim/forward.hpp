#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "specklesim/fft.hpp"
#include "specklesim/grid.hpp"
#include "specklesim/rng.hpp"
#include "specklesim/scene.hpp"

namespace spk {

enum class SynthesisMode {
    multiplicative, // S = product of particle masks, passive (|S| <= 1)
    additive_weak,  // S = 1 + sum (mask_i - 1), single-scatter superposition
};

struct TransmissionField {
    ComplexGrid grid;
    SynthesisMode mode = SynthesisMode::multiplicative;
};

// Angular-spectrum transfer function sampled on the grid's frequency raster.
// Unimodular on the propagating support (f^2 <= 1/lambda_medium^2), zero on
// evanescent frequencies.
struct PropagationKernel {
    ComplexGrid transfer;
    double z = 0.0;
    double lambda_medium = 0.0;
};

struct SensorModel {
    double exposure_scale = 1000.0; // counts per unit intensity
    double read_noise_sigma = 2.0;  // counts
    bool shot_noise = true;
    int bit_depth = 12;
    uint64_t seed = 0;

    void validate() const {
        if (!(exposure_scale > 0.0)) throw parameter_error("sensor: exposure_scale must be > 0");
        if (read_noise_sigma < 0.0) throw parameter_error("sensor: read_noise_sigma must be >= 0");
        if (bit_depth < 1 || bit_depth > 16)
            throw parameter_error("sensor: bit_depth must be in [1, 16]");
    }

    static SensorModel noise_free() {
        SensorModel s;
        s.exposure_scale = 1.0;
        s.read_noise_sigma = 0.0;
        s.shot_noise = false;
        s.bit_depth = 16;
        return s;
    }
};

// Complex mask one particle imprints on the wavefront. The phase uses the
// index CONTRAST n_r - n0 (an index-matched particle must be invisible), the
// amplitude uses n_i, both through the spherical chord thickness
// omega(rho) = 2*sqrt(r^2 - rho^2).
inline cplx particle_mask_value(double chord_m, double wavelength, double n_r, double n_i,
                                double medium_index) {
    const double k0 = 2.0 * std::numbers::pi / wavelength;
    const double phase = k0 * (n_r - medium_index) * chord_m;
    const double amplitude = std::exp(-k0 * n_i * chord_m);
    return std::polar(amplitude, phase);
}

// Rasterize a particle realization into a transmission field. Particles are
// spheres evaluated at pixel centers (no anti-aliasing kernel); footprints
// wrap circularly so population statistics stay stationary on the torus.
inline TransmissionField synthesize_transmission(const std::vector<ParticleInstance>& realization,
                                                 const Scene& scene, SynthesisMode mode) {
    const OpticalConfig& cfg = scene.config;
    cfg.validate();

    const int w = cfg.grid_width;
    const int h = cfg.grid_height;
    TransmissionField field;
    field.mode = mode;
    field.grid = ComplexGrid(w, h, cfg.pixel_pitch, cplx{1.0, 0.0});

    const double extent = std::min(w, h) * cfg.pixel_pitch;
    std::vector<cplx>& data = field.grid.data;

    for (const ParticleInstance& p : realization) {
        if (p.diameter > extent)
            throw geometry_error("synthesize_transmission: particle diameter exceeds grid extent");
        const Species& sp = scene.populations[static_cast<size_t>(p.population_index)].species;

        const double r_m = 0.5 * p.diameter;
        const double r_px = r_m / cfg.pixel_pitch;
        const int x_lo = static_cast<int>(std::ceil(p.x - r_px));
        const int x_hi = static_cast<int>(std::floor(p.x + r_px));
        const int y_lo = static_cast<int>(std::ceil(p.y - r_px));
        const int y_hi = static_cast<int>(std::floor(p.y + r_px));

        for (int y = y_lo; y <= y_hi; ++y) {
            const double dy = (y - p.y) * cfg.pixel_pitch;
            const int yy = ((y % h) + h) % h;
            for (int x = x_lo; x <= x_hi; ++x) {
                const double dx = (x - p.x) * cfg.pixel_pitch;
                const double rho_sq = dx * dx + dy * dy;
                if (rho_sq > r_m * r_m) continue;
                const double chord = 2.0 * std::sqrt(r_m * r_m - rho_sq);
                const cplx mask =
                    particle_mask_value(chord, cfg.wavelength, sp.n_r, sp.n_i, cfg.medium_index);
                const int xx = ((x % w) + w) % w;
                cplx& cell = data[static_cast<size_t>(yy) * w + xx];
                if (mode == SynthesisMode::multiplicative)
                    cell *= mask;
                else
                    cell += mask - cplx{1.0, 0.0};
            }
        }
    }
    return field;
}

// Free-space angular-spectrum kernel for distance z in a medium of index n0:
//   H(f) = exp(j * 2*pi * z * sqrt(1/lambda_m^2 - |f|^2)),   lambda_m = lambda/n0
// with evanescent frequencies zeroed.
inline PropagationKernel make_kernel(const OpticalConfig& cfg, double z) {
    cfg.validate();
    if (z < 0.0) throw parameter_error("make_kernel: z must be >= 0");

    const int w = cfg.grid_width;
    const int h = cfg.grid_height;
    const double lambda_m = cfg.wavelength / cfg.medium_index;
    const double inv_lm_sq = 1.0 / (lambda_m * lambda_m);
    const double dfx = 1.0 / (w * cfg.pixel_pitch);
    const double dfy = 1.0 / (h * cfg.pixel_pitch);

    PropagationKernel k;
    k.z = z;
    k.lambda_medium = lambda_m;
    k.transfer = ComplexGrid(w, h, cfg.pixel_pitch);

    for (int iy = 0; iy < h; ++iy) {
        const double fy = (iy <= h / 2 ? iy : iy - h) * dfy;
        for (int ix = 0; ix < w; ++ix) {
            const double fx = (ix <= w / 2 ? ix : ix - w) * dfx;
            const double arg = inv_lm_sq - fx * fx - fy * fy;
            k.transfer.at(ix, iy) =
                arg >= 0.0 ? std::polar(1.0, 2.0 * std::numbers::pi * z * std::sqrt(arg))
                           : cplx{0.0, 0.0};
        }
    }
    return k;
}

// Frequency-domain product with the transfer function, then back to space.
inline ComplexGrid propagate(const TransmissionField& field, const PropagationKernel& kernel) {
    if (!field.grid.same_shape(kernel.transfer))
        throw shape_error("propagate: field and kernel shapes differ");

    ComplexGrid spectrum = fft2(field.grid, FftDirection::forward);
    for (size_t i = 0; i < spectrum.size(); ++i) spectrum.data[i] *= kernel.transfer.data[i];
    detail::fft2_inplace(spectrum, true);
    return spectrum;
}

// Beam-propagation cascade: modulate by each slice, then propagate by the
// inter-slice kernel; the final propagation carries the field to the sensor.
// One slice with k built for the full distance reduces to plain propagate.
inline ComplexGrid propagate_multislice(const std::vector<TransmissionField>& slices,
                                        const PropagationKernel& k_dz) {
    if (slices.empty())
        throw parameter_error("propagate_multislice: at least one slice required");
    for (const auto& s : slices)
        if (s.mode != SynthesisMode::multiplicative)
            throw parameter_error("propagate_multislice: slices must be multiplicative masks");

    ComplexGrid field(slices[0].grid.width, slices[0].grid.height, slices[0].grid.pitch,
                      cplx{1.0, 0.0});
    for (const auto& slice : slices) {
        if (!field.same_shape(slice.grid))
            throw shape_error("propagate_multislice: slice shapes differ");
        for (size_t i = 0; i < field.size(); ++i) field.data[i] *= slice.grid.data[i];
        TransmissionField staged{std::move(field), SynthesisMode::multiplicative};
        field = propagate(staged, k_dz);
    }
    return field;
}

inline RealGrid intensity(const ComplexGrid& field) {
    RealGrid out(field.width, field.height, field.pitch);
    for (size_t i = 0; i < field.size(); ++i) out.data[i] = std::norm(field.data[i]);
    return out;
}

// Sensor readout. exposure_scale converts unit intensity to expected counts
// (the photon budget); shot noise draws Poisson at that mean, read noise is
// additive Gaussian, and the result is clipped and quantized to the ADC
// range. Deterministic given (sensor.seed, frame_index).
inline RealGrid capture_frame(const RealGrid& intensity_grid, const SensorModel& sensor,
                              int frame_index) {
    sensor.validate();
    const double full_scale = static_cast<double>((1u << sensor.bit_depth) - 1u);
    Rng rng(derive_stream_seed(sensor.seed, static_cast<uint64_t>(frame_index), 0x5E4509ull));

    RealGrid out(intensity_grid.width, intensity_grid.height, intensity_grid.pitch);
    for (size_t i = 0; i < out.size(); ++i) {
        const double mean_counts = sensor.exposure_scale * intensity_grid.data[i];
        double counts =
            sensor.shot_noise ? static_cast<double>(rng.poisson(mean_counts)) : mean_counts;
        if (sensor.read_noise_sigma > 0.0) counts += rng.normal(0.0, sensor.read_noise_sigma);
        counts = std::clamp(counts, 0.0, full_scale);
        out.data[i] = std::round(counts);
    }
    return out;
}

} // namespace spk
