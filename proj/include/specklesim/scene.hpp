#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "specklesim/errors.hpp"
#include "specklesim/rng.hpp"

namespace spk {

// Illumination, sensor raster, and chamber geometry. Defaults follow the
// reference instrument (532 nm laser, 3.45 um pixels); desk-scale scenes
// override the raster to stay tractable.
struct OpticalConfig {
    double wavelength = 532e-9;       // vacuum, meters
    double pixel_pitch = 3.45e-6;     // meters
    int grid_width = 256;
    int grid_height = 256;
    double propagation_distance = 1e-3; // sample-to-sensor z, meters
    double medium_index = 1.33;         // n0, water
    double chamber_thickness = 1e-3;    // illuminated depth, meters

    void validate() const {
        if (!(wavelength > 0.0)) throw parameter_error("config: wavelength must be > 0");
        if (!(pixel_pitch > 0.0)) throw parameter_error("config: pixel_pitch must be > 0");
        if (grid_width <= 0 || grid_height <= 0)
            throw parameter_error("config: grid dimensions must be positive");
        if (propagation_distance < 0.0)
            throw parameter_error("config: propagation_distance must be >= 0");
        if (medium_index < 1.0) throw parameter_error("config: medium_index must be >= 1");
        if (!(chamber_thickness > 0.0))
            throw parameter_error("config: chamber_thickness must be > 0");
    }

    double fov_area() const {
        return (grid_width * pixel_pitch) * (grid_height * pixel_pitch);
    }

    // The full-resolution raster of the reference sensor.
    static OpticalConfig sensor_preset() {
        OpticalConfig c;
        c.grid_width = 2464;
        c.grid_height = 2056;
        return c;
    }
};

// Material optical identity: complex refractive index n_r + j*n_i plus the
// particle geometry needed to bridge mg/mL to particle counts.
struct Species {
    std::string name;
    double n_r = 1.0;          // real index (refractivity)
    double n_i = 0.0;          // imaginary index (absorptivity)
    double diameter = 0.0;     // meters
    double mass_density = 0.0; // kg/m^3

    void validate() const {
        if (name.empty()) throw parameter_error("species: name must be non-empty");
        if (!(n_r > 0.0)) throw parameter_error("species '" + name + "': n_r must be > 0");
        if (n_i < 0.0) throw parameter_error("species '" + name + "': n_i must be >= 0");
        if (!(diameter > 0.0)) throw parameter_error("species '" + name + "': diameter must be > 0");
        if (!(mass_density > 0.0))
            throw parameter_error("species '" + name + "': mass_density must be > 0");
    }

    double particle_mass() const {
        return mass_density * (std::numbers::pi / 6.0) * diameter * diameter * diameter;
    }
};

struct Population {
    Species species;
    double abundance = 0.0;    // mg/mL == kg/m^3
    double diameter_cv = 0.05; // fractional size dispersion

    void validate() const {
        species.validate();
        if (abundance < 0.0) throw parameter_error("population: abundance must be >= 0");
        if (diameter_cv < 0.0 || diameter_cv >= 1.0)
            throw parameter_error("population: diameter_cv must be in [0, 1)");
    }
};

// Reproducible simulation unit: optics + particle populations + seed.
// A scene with zero populations is an explicit blank.
struct Scene {
    OpticalConfig config;
    std::vector<Population> populations;
    uint64_t master_seed = 0;
    int n_frames = 1;

    void validate() const {
        config.validate();
        for (const auto& p : populations) p.validate();
        for (size_t i = 0; i < populations.size(); ++i)
            for (size_t j = i + 1; j < populations.size(); ++j)
                if (populations[i].species.name == populations[j].species.name)
                    throw parameter_error("scene: duplicate species name '" +
                                          populations[i].species.name + "'");
        if (n_frames < 1) throw parameter_error("scene: n_frames must be >= 1");
    }
};

// Expected particle count in the illuminated volume:
//   N = abundance * FOV_area * chamber_thickness / particle_mass
// with abundance in kg/m^3 (same number as mg/mL).
inline double expected_particle_count(const Population& p, const OpticalConfig& cfg) {
    p.validate();
    cfg.validate();
    return p.abundance * cfg.fov_area() * cfg.chamber_thickness / p.species.particle_mass();
}

// One particle instance of a sampled realization. Position is a subpixel
// coordinate in pixel units; (0,0) is the corner sample of the raster.
struct ParticleInstance {
    double x = 0.0;
    double y = 0.0;
    double diameter = 0.0;     // meters
    int population_index = 0;
};

// Draw one frame's particle realization. Per population the count is
// Poisson(N_expected), positions are uniform over the raster, diameters
// log-normal at the population's CV. The stream seed is a fixed mix of
// (master_seed, frame_index, population index), so identical arguments
// always reproduce the identical list.
inline std::vector<ParticleInstance> sample_realization(const Scene& scene, int frame_index) {
    scene.validate();
    if (frame_index < 0 || frame_index >= scene.n_frames)
        throw parameter_error("sample_realization: frame_index out of range");

    std::vector<ParticleInstance> out;
    for (size_t pi = 0; pi < scene.populations.size(); ++pi) {
        const Population& pop = scene.populations[pi];
        if (pop.abundance <= 0.0) continue;

        Rng rng(derive_stream_seed(scene.master_seed, static_cast<uint64_t>(frame_index), pi));
        const double expected = expected_particle_count(pop, scene.config);
        const uint64_t count = rng.poisson(expected);
        out.reserve(out.size() + count);
        for (uint64_t k = 0; k < count; ++k) {
            ParticleInstance inst;
            inst.x = rng.uniform() * scene.config.grid_width;
            inst.y = rng.uniform() * scene.config.grid_height;
            inst.diameter = pop.diameter_cv > 0.0
                                ? rng.lognormal_mean_cv(pop.species.diameter, pop.diameter_cv)
                                : pop.species.diameter;
            inst.population_index = static_cast<int>(pi);
            out.push_back(inst);
        }
    }
    return out;
}

} // namespace spk
