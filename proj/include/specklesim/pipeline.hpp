#pragma once

#include <chrono>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "specklesim/io.hpp"
#include "specklesim/metrics.hpp"
#include "specklesim/nnls.hpp"

namespace spk {

inline constexpr const char* kToolVersion = "1.0.0";

struct ExperimentFlags {
    SynthesisMode mode = SynthesisMode::additive_weak;
    bool sensor_enabled = false; // noise-free measurement unless switched on
    SensorModel sensor;          // used when sensor_enabled
    double lag_lo = 1.0;         // informative-lag annulus, pixels
    double lag_hi = 5.0;
    bool save_frames = false;
    bool save_summary = true;
    std::string experiment_id = "exp";
    int noise_ksize = 7;
    double noise_sigma = 1.5;
};

struct ExperimentResult {
    std::vector<ReportRow> rows;
    AutocorrMap measured;
    AbundanceEstimate estimate;
    std::vector<std::string> species_order; // row order of the estimate
    std::vector<RealGrid> frames;           // populated under flags.save_frames
    json manifest;
    std::string report_csv;
};

inline json flags_to_json(const ExperimentFlags& f) {
    json j{{"mode", f.mode == SynthesisMode::additive_weak ? "additive_weak" : "multiplicative"},
           {"sensor_enabled", f.sensor_enabled},
           {"lag_lo", f.lag_lo},
           {"lag_hi", f.lag_hi},
           {"experiment_id", f.experiment_id},
           {"noise_ksize", f.noise_ksize},
           {"noise_sigma", f.noise_sigma},
           {"save_frames", f.save_frames},
           {"save_summary", f.save_summary}};
    if (f.sensor_enabled)
        j["sensor"] = json{{"exposure_scale", f.sensor.exposure_scale},
                           {"read_noise_sigma", f.sensor.read_noise_sigma},
                           {"shot_noise", f.sensor.shot_noise},
                           {"bit_depth", f.sensor.bit_depth},
                           {"seed", f.sensor.seed}};
    return j;
}

inline ExperimentFlags flags_from_json(const json& j) {
    ExperimentFlags f;
    f.mode = j.at("mode").get<std::string>() == "multiplicative" ? SynthesisMode::multiplicative
                                                                 : SynthesisMode::additive_weak;
    f.sensor_enabled = j.at("sensor_enabled").get<bool>();
    f.lag_lo = j.at("lag_lo").get<double>();
    f.lag_hi = j.at("lag_hi").get<double>();
    f.experiment_id = j.at("experiment_id").get<std::string>();
    f.noise_ksize = j.at("noise_ksize").get<int>();
    f.noise_sigma = j.at("noise_sigma").get<double>();
    f.save_frames = j.at("save_frames").get<bool>();
    f.save_summary = j.at("save_summary").get<bool>();
    if (f.sensor_enabled) {
        const json& s = j.at("sensor");
        f.sensor.exposure_scale = s.at("exposure_scale").get<double>();
        f.sensor.read_noise_sigma = s.at("read_noise_sigma").get<double>();
        f.sensor.shot_noise = s.at("shot_noise").get<bool>();
        f.sensor.bit_depth = s.at("bit_depth").get<int>();
        f.sensor.seed = s.at("seed").get<uint64_t>();
    }
    return f;
}

// Simulate every frame of a scene: synthesis, propagation, intensity, and
// (optionally) the sensor.
inline std::vector<RealGrid> simulate_scene_frames(const Scene& scene,
                                                   const ExperimentFlags& flags) {
    scene.validate();
    const PropagationKernel kernel =
        make_kernel(scene.config, scene.config.propagation_distance);
    std::vector<RealGrid> frames;
    frames.reserve(static_cast<size_t>(scene.n_frames));
    for (int f = 0; f < scene.n_frames; ++f) {
        RealGrid frame = simulate_intensity_frame(scene, f, kernel, flags.mode);
        if (flags.sensor_enabled) frame = capture_frame(frame, flags.sensor, f);
        frames.push_back(std::move(frame));
    }
    return frames;
}

// The analysis stage alone: grand-mean normalization, mean-subtracted
// ensemble autocorrelation, NNLS unmixing over the basis set. This is the
// path the throughput target times.
inline AbundanceEstimate analyze_frames(std::vector<RealGrid> frames,
                                        const std::vector<BasisKernel>& bases,
                                        AutocorrMap* measured_out = nullptr, double lag_lo = 1.0,
                                        double lag_hi = 5.0) {
    detail::normalize_by_grand_mean(frames);
    AutocorrMap measured = ensemble_autocorr(frames, true);
    UnmixProblem problem = make_unmix_problem(std::move(measured), bases, lag_lo, lag_hi);
    AbundanceEstimate est = nnls_unmix(problem);
    if (measured_out) *measured_out = std::move(problem.measured);
    return est;
}

// Full measurement loop for one scene: simulate/capture, ensemble
// autocorrelation, unmix, metrics. Bases must exist for every populated
// species and carry the scene's config hash.
inline ExperimentResult run_experiment(const Scene& scene, std::vector<BasisKernel> bases,
                                       const ExperimentFlags& flags) {
    scene.validate();
    const std::string cfg_digest = config_hash(scene.config);
    for (const auto& pop : scene.populations) {
        bool found = false;
        for (const auto& b : bases)
            if (b.species_name == pop.species.name) {
                if (b.config_digest != cfg_digest)
                    throw config_error("basis for species '" + pop.species.name +
                                       "' was built under a different optical configuration");
                found = true;
            }
        if (!found)
            throw parameter_error("no basis provided for species '" + pop.species.name + "'");
    }
    for (const auto& b : bases)
        if (b.config_digest != cfg_digest)
            throw config_error("basis for species '" + b.species_name +
                               "' was built under a different optical configuration");

    const auto t0 = std::chrono::steady_clock::now();

    std::vector<RealGrid> frames = simulate_scene_frames(scene, flags);

    double grand_mean = 0.0;
    for (const auto& f : frames) grand_mean += f.mean();
    grand_mean /= static_cast<double>(frames.size());
    const double measured_noise = noise_level(frames[0], flags.noise_ksize, flags.noise_sigma);

    ExperimentResult result;
    if (flags.save_frames) result.frames = frames;
    result.estimate = analyze_frames(std::move(frames), bases, &result.measured, flags.lag_lo,
                                     flags.lag_hi);
    if (!result.estimate.converged)
        throw divergence_error("unmixing did not converge for experiment '" +
                               flags.experiment_id + "'");

    const auto t1 = std::chrono::steady_clock::now();
    const double wall = std::chrono::duration<double>(t1 - t0).count();

    const std::string digest = scene_hash(scene);
    for (size_t i = 0; i < bases.size(); ++i) {
        const std::string& name = bases[i].species_name;
        double c_true = 0.0;
        for (const auto& pop : scene.populations)
            if (pop.species.name == name) c_true = pop.abundance;
        const double c_est = result.estimate.abundance[i];

        ReportRow row;
        row.experiment_id = flags.experiment_id;
        row.scene_digest = digest;
        row.species = name;
        row.c_true = c_true;
        row.c_est = c_est;
        // a blank species is "perfect" when the solver returns ~0 for it
        row.fidelity_percent = c_true > 0.0 ? fidelity(c_est, c_true)
                                            : (c_est < 1e-9 ? 100.0 : 0.0);
        row.mae = std::abs(c_est - c_true);
        row.rmse = row.mae;
        row.noise_level = measured_noise;
        row.mean_exposure = grand_mean;
        row.frames = scene.n_frames;
        row.wall_time_s = wall;
        result.rows.push_back(row);
        result.species_order.push_back(name);
    }

    json basis_meta = json::array();
    for (const auto& b : bases)
        basis_meta.push_back(json{{"species", b.species_name},
                                  {"config_hash", b.config_digest},
                                  {"n_mc_frames", b.n_mc_frames},
                                  {"seed", b.seed}});
    result.manifest = json{{"tool", "specklesim"},
                           {"version", kToolVersion},
                           {"kind", "experiment"},
                           {"scene", scene_to_json(scene)},
                           {"scene_hash", digest},
                           {"config_hash", cfg_digest},
                           {"bases", basis_meta},
                           {"flags", flags_to_json(flags)},
                           {"wall_time_s", wall}};
    result.report_csv = report_to_csv(result.rows);
    return result;
}

// Re-execute an experiment exactly as recorded. The manifest pins the scene,
// the flags (including sensor seed), and the original wall time, so the
// regenerated report is byte-identical to the first run's.
inline ExperimentResult run_experiment_from_manifest(const json& manifest,
                                                     std::vector<BasisKernel> bases) {
    const Scene scene = scene_from_json(manifest.at("scene"));
    const ExperimentFlags flags = flags_from_json(manifest.at("flags"));
    ExperimentResult result = run_experiment(scene, std::move(bases), flags);
    const double recorded_wall = manifest.at("wall_time_s").get<double>();
    for (auto& row : result.rows) row.wall_time_s = recorded_wall;
    result.manifest["wall_time_s"] = recorded_wall;
    result.report_csv = report_to_csv(result.rows);
    return result;
}

// Write report, manifest, and grids under out_dir. Manifest first: the
// reproduction recipe hits disk before any result does.
inline void write_experiment_artifacts(const ExperimentResult& result,
                                       const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    detail::write_file_atomic(out_dir / "manifest.json", result.manifest.dump(2) + "\n");
    for (size_t i = 0; i < result.frames.size(); ++i)
        save_grid(result.frames[i], out_dir / ("frame_" + std::to_string(i) + ".fgrd"));
    save_grid(result.measured.grid, out_dir / "autocorr.fgrd");
    detail::write_file_atomic(out_dir / "report.csv", result.report_csv);
}

// ---------------------------------------------------------------------------
// Dataset generation for the estimator: one experiment per row, features
// from the measured autocorrelation, physics priors from the NNLS stage.
// ---------------------------------------------------------------------------

enum class TargetMode { dominant, mass_fraction };

struct DatasetSpec {
    OpticalConfig config;
    std::vector<Species> catalog;
    int basis_mc_frames = 64;
    uint64_t basis_seed = 1;
    TargetMode target_mode = TargetMode::dominant;
    ExperimentFlags flags;
    struct Entry {
        std::string id;
        std::vector<Population> populations;
        uint64_t master_seed = 0;
        int n_frames = 16;
    };
    std::vector<Entry> entries;
};

inline DatasetSpec dataset_spec_from_json(const json& j) {
    detail::reject_unknown_keys(j,
                                {"config", "species", "basis_mc_frames", "basis_seed",
                                 "target_mode", "experiments", "sensor", "mode"},
                                "dataset spec");
    DatasetSpec spec;
    spec.config = config_from_json(j.at("config"));
    for (const auto& js : j.at("species")) spec.catalog.push_back(species_from_json(js));
    if (j.contains("basis_mc_frames")) spec.basis_mc_frames = j.at("basis_mc_frames").get<int>();
    if (j.contains("basis_seed")) spec.basis_seed = j.at("basis_seed").get<uint64_t>();
    if (j.contains("target_mode"))
        spec.target_mode = j.at("target_mode").get<std::string>() == "mass_fraction"
                               ? TargetMode::mass_fraction
                               : TargetMode::dominant;
    if (j.contains("mode") && j.at("mode").get<std::string>() == "multiplicative")
        spec.flags.mode = SynthesisMode::multiplicative;
    if (j.contains("sensor")) {
        const json& s = j.at("sensor");
        spec.flags.sensor_enabled = true;
        spec.flags.sensor.exposure_scale = s.at("exposure_scale").get<double>();
        spec.flags.sensor.read_noise_sigma = s.at("read_noise_sigma").get<double>();
        spec.flags.sensor.shot_noise = s.at("shot_noise").get<bool>();
        spec.flags.sensor.bit_depth = s.at("bit_depth").get<int>();
        spec.flags.sensor.seed = s.at("seed").get<uint64_t>();
    }

    std::set<std::string> seen_ids;
    for (const auto& je : j.at("experiments")) {
        detail::reject_unknown_keys(je, {"id", "populations", "master_seed", "n_frames"},
                                    "dataset experiment");
        DatasetSpec::Entry e;
        e.id = detail::require<std::string>(je, "id", "dataset experiment");
        if (!seen_ids.insert(e.id).second)
            throw parameter_error("dataset spec: duplicate experiment id '" + e.id + "'");
        e.master_seed = detail::require<uint64_t>(je, "master_seed", "dataset experiment");
        e.n_frames = detail::require<int>(je, "n_frames", "dataset experiment");
        for (const auto& jp : je.at("populations")) {
            detail::reject_unknown_keys(jp, {"species", "abundance_mg_per_ml", "diameter_cv"},
                                        "dataset population");
            Population pop;
            const std::string name = detail::require<std::string>(jp, "species", "population");
            bool found = false;
            for (const auto& s : spec.catalog)
                if (s.name == name) {
                    pop.species = s;
                    found = true;
                }
            if (!found)
                throw parameter_error("dataset spec: unknown species '" + name + "'");
            pop.abundance = detail::require<double>(jp, "abundance_mg_per_ml", "population");
            pop.diameter_cv =
                jp.contains("diameter_cv") ? jp.at("diameter_cv").get<double>() : 0.0;
            e.populations.push_back(pop);
        }
        spec.entries.push_back(std::move(e));
    }
    return spec;
}

struct GeneratedDataset {
    std::vector<std::string> ids;
    TrainingSet set;
    std::vector<std::string> species_order;
    json manifest;
};

// Feature vector from one measured experiment: contrast, correlation length
// in pixels (0 when not reached), mean level, then the radial profile.
inline std::vector<double> feature_vector(const SpeckleFeatures& f, double pitch) {
    std::vector<double> x;
    x.reserve(3 + f.radial_profile.size());
    x.push_back(f.contrast);
    x.push_back(f.correlation_length ? *f.correlation_length / pitch : 0.0);
    x.push_back(f.mean_intensity);
    x.insert(x.end(), f.radial_profile.begin(), f.radial_profile.end());
    return x;
}

inline GeneratedDataset generate_dataset(const DatasetSpec& spec) {
    GeneratedDataset out;

    std::vector<BasisKernel> bases;
    for (const auto& sp : spec.catalog) {
        bases.push_back(species_basis(sp, spec.config, spec.basis_mc_frames,
                                      spec.basis_seed, spec.flags.mode));
        out.species_order.push_back(sp.name);
    }
    const auto mask = lag_annulus_indices(spec.config.grid_width, spec.config.grid_height,
                                          spec.flags.lag_lo, spec.flags.lag_hi);

    for (const auto& entry : spec.entries) {
        Scene scene;
        scene.config = spec.config;
        scene.populations = entry.populations;
        scene.master_seed = entry.master_seed;
        scene.n_frames = entry.n_frames;
        scene.validate();

        ExperimentFlags flags = spec.flags;
        flags.experiment_id = entry.id;
        std::vector<RealGrid> frames = simulate_scene_frames(scene, flags);

        double mean = 0.0, sq = 0.0;
        size_t count = 0;
        for (const auto& f : frames) {
            for (double v : f.data) {
                mean += v;
                sq += v * v;
            }
            count += f.size();
        }
        mean /= static_cast<double>(count);
        const double stdev = std::sqrt(std::max(0.0, sq / static_cast<double>(count) - mean * mean));

        AutocorrMap measured;
        const AbundanceEstimate est =
            analyze_frames(std::move(frames), bases, &measured, flags.lag_lo, flags.lag_hi);

        TrainingRow row;
        row.x = feature_vector(extract_features(measured, mean, stdev), spec.config.pixel_pitch);

        // physics prior: the NNLS abundances plus per-basis projection
        // coefficients of the measured map
        row.prior = est.abundance;
        for (const auto& b : bases) {
            double num = 0.0, den = 0.0;
            for (size_t i : mask) {
                num += measured.grid.data[i] * b.map.grid.data[i];
                den += b.map.grid.data[i] * b.map.grid.data[i];
            }
            row.prior.push_back(den > 0.0 ? num / den : 0.0);
        }

        // ground truth per catalog species
        row.truth.assign(spec.catalog.size(), 0.0);
        for (size_t s = 0; s < spec.catalog.size(); ++s)
            for (const auto& pop : entry.populations)
                if (pop.species.name == spec.catalog[s].name) row.truth[s] = pop.abundance;

        // target descriptor distribution
        row.target.assign(spec.catalog.size(), 0.0);
        double mass = 0.0;
        for (double t : row.truth) mass += t;
        if (mass <= 0.0) {
            row.target.assign(spec.catalog.size(), 1.0 / spec.catalog.size());
        } else if (spec.target_mode == TargetMode::dominant) {
            size_t top = 0;
            for (size_t s = 1; s < row.truth.size(); ++s)
                if (row.truth[s] > row.truth[top]) top = s;
            row.target[top] = 1.0;
        } else {
            for (size_t s = 0; s < row.truth.size(); ++s) row.target[s] = row.truth[s] / mass;
        }

        out.set.rows.push_back(std::move(row));
        out.ids.push_back(entry.id);
    }

    json species_names = json::array();
    for (const auto& n : out.species_order) species_names.push_back(n);
    json entry_meta = json::array();
    for (const auto& e : spec.entries)
        entry_meta.push_back(json{{"id", e.id},
                                  {"master_seed", e.master_seed},
                                  {"n_frames", e.n_frames}});
    out.manifest = json{{"tool", "specklesim"},
                        {"version", kToolVersion},
                        {"kind", "dataset"},
                        {"config_hash", config_hash(spec.config)},
                        {"species", species_names},
                        {"basis_mc_frames", spec.basis_mc_frames},
                        {"basis_seed", spec.basis_seed},
                        {"experiments", entry_meta}};
    return out;
}

// On-disk layout: X.csv, I.csv, t.csv, c_star.csv (id + full-precision
// values per row) plus manifest.json.
inline void write_dataset(const GeneratedDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    detail::write_file_atomic(dir / "manifest.json", ds.manifest.dump(2) + "\n");

    auto write_table = [&](const char* name, auto field_of) {
        std::string csv;
        for (size_t i = 0; i < ds.set.rows.size(); ++i) {
            csv += ds.ids[i];
            for (double v : field_of(ds.set.rows[i])) {
                csv += ',';
                csv += format_full(v);
            }
            csv += '\n';
        }
        detail::write_file_atomic(dir / name, csv);
    };
    write_table("X.csv", [](const TrainingRow& r) { return r.x; });
    write_table("I.csv", [](const TrainingRow& r) { return r.prior; });
    write_table("t.csv", [](const TrainingRow& r) { return r.target; });
    write_table("c_star.csv", [](const TrainingRow& r) { return r.truth; });
}

namespace detail {

inline std::vector<std::pair<std::string, std::vector<double>>>
read_id_csv(const std::filesystem::path& path) {
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    std::ifstream in(path);
    if (!in) throw io_error("cannot open: " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        size_t pos = line.find(',');
        if (pos == std::string::npos)
            throw format_error(path.string() + ": row without values");
        const std::string id = line.substr(0, pos);
        while (pos != std::string::npos) {
            const size_t next = line.find(',', pos + 1);
            const std::string tok = line.substr(pos + 1, next == std::string::npos
                                                             ? std::string::npos
                                                             : next - pos - 1);
            try {
                vals.push_back(std::stod(tok));
            } catch (...) {
                throw format_error(path.string() + ": bad number '" + tok + "'");
            }
            pos = next;
        }
        rows.emplace_back(id, std::move(vals));
    }
    return rows;
}

} // namespace detail

inline GeneratedDataset load_dataset(const std::filesystem::path& dir) {
    GeneratedDataset ds;
    const auto xs = detail::read_id_csv(dir / "X.csv");
    const auto is = detail::read_id_csv(dir / "I.csv");
    const auto ts = detail::read_id_csv(dir / "t.csv");
    const auto cs = detail::read_id_csv(dir / "c_star.csv");
    if (xs.size() != is.size() || xs.size() != ts.size() || xs.size() != cs.size())
        throw format_error("dataset: table row counts differ under " + dir.string());
    for (size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].first != is[i].first || xs[i].first != ts[i].first ||
            xs[i].first != cs[i].first)
            throw format_error("dataset: row ids disagree at row " + std::to_string(i));
        TrainingRow row;
        row.x = xs[i].second;
        row.prior = is[i].second;
        row.target = ts[i].second;
        row.truth = cs[i].second;
        ds.set.rows.push_back(std::move(row));
        ds.ids.push_back(xs[i].first);
    }
    ds.manifest = json::parse(detail::read_file(dir / "manifest.json"));
    for (const auto& n : ds.manifest.at("species")) ds.species_order.push_back(n.get<std::string>());
    return ds;
}

} // namespace spk
