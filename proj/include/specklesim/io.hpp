#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "specklesim/estimator.hpp"
#include "specklesim/forward.hpp"
#include "specklesim/grid.hpp"
#include "specklesim/speckle.hpp"

namespace spk {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// FGRD: the project's grid container.
//   offset 0   magic "FGRD"
//   offset 4   version u32 = 1
//   offset 8   width   u32
//   offset 12  height  u32
//   offset 16  dtype   u8   (0 = real float32, 1 = complex interleaved float32)
//   offset 17  pitch   f64  meters per pixel
//   offset 25  payload row-major float32 samples
// Everything little-endian; trailing bytes are a format error.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

inline void put_f64(std::string& out, double v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

inline uint32_t get_u32(const std::string& in, size_t off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    return v;
}

inline float get_f32(const std::string& in, size_t off) {
    float v;
    std::memcpy(&v, in.data() + off, 4);
    return v;
}

inline double get_f64(const std::string& in, size_t off) {
    double v;
    std::memcpy(&v, in.data() + off, 8);
    return v;
}

// Atomic write: temp file in the target directory, then rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw io_error("short write: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

} // namespace detail

inline constexpr uint32_t kFgrdVersion = 1;
inline constexpr size_t kFgrdHeaderSize = 25;

inline void save_grid(const RealGrid& g, const std::filesystem::path& path) {
    std::string bytes;
    bytes.reserve(kFgrdHeaderSize + g.size() * 4);
    bytes += "FGRD";
    detail::put_u32(bytes, kFgrdVersion);
    detail::put_u32(bytes, static_cast<uint32_t>(g.width));
    detail::put_u32(bytes, static_cast<uint32_t>(g.height));
    bytes.push_back(static_cast<char>(0));
    detail::put_f64(bytes, g.pitch);
    for (double v : g.data) detail::put_f32(bytes, static_cast<float>(v));
    detail::write_file_atomic(path, bytes);
}

inline void save_grid(const ComplexGrid& g, const std::filesystem::path& path) {
    std::string bytes;
    bytes.reserve(kFgrdHeaderSize + g.size() * 8);
    bytes += "FGRD";
    detail::put_u32(bytes, kFgrdVersion);
    detail::put_u32(bytes, static_cast<uint32_t>(g.width));
    detail::put_u32(bytes, static_cast<uint32_t>(g.height));
    bytes.push_back(static_cast<char>(1));
    detail::put_f64(bytes, g.pitch);
    for (const cplx& v : g.data) {
        detail::put_f32(bytes, static_cast<float>(v.real()));
        detail::put_f32(bytes, static_cast<float>(v.imag()));
    }
    detail::write_file_atomic(path, bytes);
}

using LoadedGrid = std::variant<RealGrid, ComplexGrid>;

inline LoadedGrid load_grid(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file(path);
    if (bytes.size() < kFgrdHeaderSize)
        throw format_error(path.string() + ": truncated header (file ends at byte " +
                           std::to_string(bytes.size()) + ", header needs 25)");
    if (bytes.compare(0, 4, "FGRD") != 0)
        throw format_error(path.string() + ": bad magic at byte 0");
    const uint32_t version = detail::get_u32(bytes, 4);
    if (version != kFgrdVersion)
        throw format_error(path.string() + ": unsupported version " + std::to_string(version) +
                           " at byte 4");
    const uint32_t width = detail::get_u32(bytes, 8);
    const uint32_t height = detail::get_u32(bytes, 12);
    const uint8_t dtype = static_cast<uint8_t>(bytes[16]);
    const double pitch = detail::get_f64(bytes, 17);
    if (width == 0 || height == 0 || !(pitch > 0.0))
        throw format_error(path.string() + ": invalid dimensions or pitch in header");
    if (dtype > 1)
        throw format_error(path.string() + ": unknown dtype " + std::to_string(dtype) +
                           " at byte 16");

    const size_t sample_bytes = dtype == 0 ? 4 : 8;
    const size_t expect = kFgrdHeaderSize + static_cast<size_t>(width) * height * sample_bytes;
    if (bytes.size() != expect)
        throw format_error(path.string() + ": payload length mismatch (expected " +
                           std::to_string(expect) + " bytes, file has " +
                           std::to_string(bytes.size()) + "; divergence at byte " +
                           std::to_string(std::min(bytes.size(), expect)) + ")");

    if (dtype == 0) {
        RealGrid g(static_cast<int>(width), static_cast<int>(height), pitch);
        for (size_t i = 0; i < g.size(); ++i)
            g.data[i] = detail::get_f32(bytes, kFgrdHeaderSize + i * 4);
        return g;
    }
    ComplexGrid g(static_cast<int>(width), static_cast<int>(height), pitch);
    for (size_t i = 0; i < g.size(); ++i)
        g.data[i] = cplx{detail::get_f32(bytes, kFgrdHeaderSize + i * 8),
                         detail::get_f32(bytes, kFgrdHeaderSize + i * 8 + 4)};
    return g;
}

inline RealGrid load_real_grid(const std::filesystem::path& path) {
    LoadedGrid g = load_grid(path);
    if (!std::holds_alternative<RealGrid>(g))
        throw format_error(path.string() + ": expected a real grid (dtype 0)");
    return std::get<RealGrid>(std::move(g));
}

// One-way PGM export for eyeballing; never load-bearing.
inline void export_pgm(const RealGrid& g, const std::filesystem::path& path) {
    double lo = g.data.empty() ? 0.0 : g.data[0], hi = lo;
    for (double v : g.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    std::string bytes = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) +
                        "\n255\n";
    for (double v : g.data)
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(255.0 * (v - lo) / span)));
    detail::write_file_atomic(path, bytes);
}

// ---------------------------------------------------------------------------
// Scene JSON, mirroring the in-memory model field-for-field with SI units in
// the key names. Unknown keys are rejected at every level.
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw format_error("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key))
        throw format_error("missing key '" + std::string(key) + "' in " + where);
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw format_error("bad type for '" + std::string(key) + "' in " + where);
    }
}

} // namespace detail

inline json config_to_json(const OpticalConfig& c) {
    return json{{"wavelength_m", c.wavelength},
                {"pixel_pitch_m", c.pixel_pitch},
                {"grid_width", c.grid_width},
                {"grid_height", c.grid_height},
                {"propagation_distance_m", c.propagation_distance},
                {"medium_index", c.medium_index},
                {"chamber_thickness_m", c.chamber_thickness}};
}

inline OpticalConfig config_from_json(const json& j) {
    detail::reject_unknown_keys(j,
                                {"wavelength_m", "pixel_pitch_m", "grid_width", "grid_height",
                                 "propagation_distance_m", "medium_index", "chamber_thickness_m"},
                                "config");
    OpticalConfig c;
    c.wavelength = detail::require<double>(j, "wavelength_m", "config");
    c.pixel_pitch = detail::require<double>(j, "pixel_pitch_m", "config");
    c.grid_width = detail::require<int>(j, "grid_width", "config");
    c.grid_height = detail::require<int>(j, "grid_height", "config");
    c.propagation_distance = detail::require<double>(j, "propagation_distance_m", "config");
    c.medium_index = detail::require<double>(j, "medium_index", "config");
    c.chamber_thickness = detail::require<double>(j, "chamber_thickness_m", "config");
    c.validate();
    return c;
}

inline json species_to_json(const Species& s) {
    return json{{"name", s.name},
                {"n_r", s.n_r},
                {"n_i", s.n_i},
                {"diameter_m", s.diameter},
                {"mass_density_kg_m3", s.mass_density}};
}

inline Species species_from_json(const json& j) {
    detail::reject_unknown_keys(j, {"name", "n_r", "n_i", "diameter_m", "mass_density_kg_m3"},
                                "species");
    Species s;
    s.name = detail::require<std::string>(j, "name", "species");
    s.n_r = detail::require<double>(j, "n_r", "species");
    s.n_i = detail::require<double>(j, "n_i", "species");
    s.diameter = detail::require<double>(j, "diameter_m", "species");
    s.mass_density = detail::require<double>(j, "mass_density_kg_m3", "species");
    s.validate();
    return s;
}

inline json scene_to_json(const Scene& sc) {
    json species = json::array();
    json pops = json::array();
    for (const auto& p : sc.populations) {
        species.push_back(species_to_json(p.species));
        pops.push_back(json{{"species", p.species.name},
                            {"abundance_mg_per_ml", p.abundance},
                            {"diameter_cv", p.diameter_cv}});
    }
    return json{{"config", config_to_json(sc.config)},
                {"species", species},
                {"populations", pops},
                {"master_seed", sc.master_seed},
                {"n_frames", sc.n_frames}};
}

inline Scene scene_from_json(const json& j) {
    detail::reject_unknown_keys(
        j, {"config", "species", "populations", "master_seed", "n_frames"}, "scene");
    Scene sc;
    if (!j.contains("config")) throw format_error("scene json: missing 'config'");
    sc.config = config_from_json(j.at("config"));

    std::vector<Species> catalog;
    if (j.contains("species"))
        for (const auto& js : j.at("species")) catalog.push_back(species_from_json(js));

    if (j.contains("populations"))
        for (const auto& jp : j.at("populations")) {
            detail::reject_unknown_keys(jp, {"species", "abundance_mg_per_ml", "diameter_cv"},
                                        "population");
            const std::string name = detail::require<std::string>(jp, "species", "population");
            Population pop;
            bool found = false;
            for (const auto& s : catalog)
                if (s.name == name) {
                    pop.species = s;
                    found = true;
                }
            if (!found)
                throw format_error("scene json: population references unknown species '" + name +
                                   "'");
            pop.abundance = detail::require<double>(jp, "abundance_mg_per_ml", "population");
            if (jp.contains("diameter_cv"))
                pop.diameter_cv = jp.at("diameter_cv").get<double>();
            sc.populations.push_back(pop);
        }

    sc.master_seed = detail::require<uint64_t>(j, "master_seed", "scene");
    sc.n_frames = detail::require<int>(j, "n_frames", "scene");
    sc.validate();
    return sc;
}

inline Scene load_scene(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(detail::read_file(path));
    } catch (const json::exception& e) {
        throw format_error(path.string() + ": " + e.what());
    }
    return scene_from_json(j);
}

// Digest of the full scene (config, populations, seed, frame count); names
// the simulation, not just the optics.
inline std::string scene_hash(const Scene& sc) {
    const std::string canon = scene_to_json(sc).dump();
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

// ---------------------------------------------------------------------------
// Basis kernel persistence: FGRD map + JSON sidecar.
// ---------------------------------------------------------------------------

inline void save_basis(const BasisKernel& basis, const std::filesystem::path& dir,
                       const Species& species, SynthesisMode mode) {
    std::filesystem::create_directories(dir);
    save_grid(basis.map.grid, dir / (basis.species_name + ".fgrd"));
    const json sidecar{{"species", species_to_json(species)},
                       {"c_ref_mg_per_ml", basis.c_ref},
                       {"n_mc_frames", basis.n_mc_frames},
                       {"seed", basis.seed},
                       {"config_hash", basis.config_digest},
                       {"mode", mode == SynthesisMode::additive_weak ? "additive_weak"
                                                                     : "multiplicative"}};
    detail::write_file_atomic(dir / (basis.species_name + ".json"), sidecar.dump(2) + "\n");
}

inline BasisKernel load_basis(const std::filesystem::path& dir, const std::string& species_name) {
    const std::filesystem::path grid_path = dir / (species_name + ".fgrd");
    const std::filesystem::path meta_path = dir / (species_name + ".json");
    if (!std::filesystem::exists(grid_path) || !std::filesystem::exists(meta_path))
        throw io_error("basis for species '" + species_name + "' not found under " +
                       dir.string());

    json meta;
    try {
        meta = json::parse(detail::read_file(meta_path));
    } catch (const json::exception& e) {
        throw format_error(meta_path.string() + ": " + e.what());
    }

    BasisKernel basis;
    basis.species_name = species_name;
    basis.map.grid = load_real_grid(grid_path);
    basis.map.mean_subtracted = true;
    basis.c_ref = detail::require<double>(meta, "c_ref_mg_per_ml", "basis sidecar");
    basis.n_mc_frames = detail::require<int>(meta, "n_mc_frames", "basis sidecar");
    basis.seed = detail::require<uint64_t>(meta, "seed", "basis sidecar");
    basis.config_digest = detail::require<std::string>(meta, "config_hash", "basis sidecar");
    basis.map.n_frames_averaged = basis.n_mc_frames;
    return basis;
}

inline Species basis_species(const std::filesystem::path& dir, const std::string& species_name) {
    const json meta = json::parse(detail::read_file(dir / (species_name + ".json")));
    return species_from_json(meta.at("species"));
}

// ---------------------------------------------------------------------------
// Estimator parameters: JSON with shape headers and row-major weights at
// full decimal precision (nlohmann serializes shortest-round-trip doubles).
// ---------------------------------------------------------------------------

namespace detail {

inline json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline Matrix matrix_from_json(const json& j, const char* name) {
    Matrix m(require<size_t>(j, "rows", name), require<size_t>(j, "cols", name));
    const auto data = require<std::vector<double>>(j, "data", name);
    if (data.size() != m.rows * m.cols)
        throw format_error(std::string("params json: '") + name + "' data length mismatch");
    m.data = data;
    return m;
}

} // namespace detail

inline void save_params(const EstimatorParams& p, const std::filesystem::path& path) {
    const json j{{"theta_w", detail::matrix_to_json(p.theta_w)},
                 {"theta_b", p.theta_b},
                 {"phi_w", detail::matrix_to_json(p.phi_w)},
                 {"phi_b", p.phi_b},
                 {"psi_w", detail::matrix_to_json(p.psi_w)},
                 {"psi_b", p.psi_b}};
    detail::write_file_atomic(path, j.dump(2) + "\n");
}

inline EstimatorParams load_params(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(detail::read_file(path));
    } catch (const json::exception& e) {
        throw format_error(path.string() + ": " + e.what());
    }
    EstimatorParams p;
    p.theta_w = detail::matrix_from_json(j.at("theta_w"), "theta_w");
    p.theta_b = detail::require<std::vector<double>>(j, "theta_b", "params");
    p.phi_w = detail::matrix_from_json(j.at("phi_w"), "phi_w");
    p.phi_b = detail::require<std::vector<double>>(j, "phi_b", "params");
    p.psi_w = detail::matrix_from_json(j.at("psi_w"), "psi_w");
    p.psi_b = detail::require<std::vector<double>>(j, "psi_b", "params");
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Report CSV. Header fixed and versioned; numbers at full precision.
// ---------------------------------------------------------------------------

struct ReportRow {
    std::string experiment_id;
    std::string scene_digest;
    std::string species;
    double c_true = 0.0;
    double c_est = 0.0;
    double fidelity_percent = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> r2;          // per-ladder; empty for single scenes
    std::optional<double> rcv_percent; // across repeats; empty otherwise
    double noise_level = 0.0;
    double mean_exposure = 0.0;
    int frames = 0;
    double wall_time_s = 0.0;
};

inline constexpr const char* kReportHeader =
    "experiment_id,scene_hash,species,c_true_mg_per_ml,c_est_mg_per_ml,fidelity_percent,mae,"
    "rmse,r2,rcv_percent,noise_level,mean_exposure,frames,wall_time_s";

inline std::string format_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string report_to_csv(const std::vector<ReportRow>& rows) {
    std::string out = "# specklesim-report v1\n";
    out += kReportHeader;
    out += '\n';
    for (const auto& r : rows) {
        out += r.experiment_id + ',' + r.scene_digest + ',' + r.species + ',';
        out += format_full(r.c_true) + ',' + format_full(r.c_est) + ',';
        out += format_full(r.fidelity_percent) + ',' + format_full(r.mae) + ',';
        out += format_full(r.rmse) + ',';
        out += (r.r2 ? format_full(*r.r2) : std::string()) + ',';
        out += (r.rcv_percent ? format_full(*r.rcv_percent) : std::string()) + ',';
        out += format_full(r.noise_level) + ',' + format_full(r.mean_exposure) + ',';
        out += std::to_string(r.frames) + ',' + format_full(r.wall_time_s) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Minimal structural JSON-schema validator covering the subset the shipped
// schemas use: type, properties, required, items, enum.
// ---------------------------------------------------------------------------

inline bool json_matches_type(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "number") return v.is_number();
    if (type == "integer") return v.is_number_integer() || v.is_number_unsigned();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    return false;
}

inline void validate_json_schema(const json& value, const json& schema,
                                 const std::string& where = "$") {
    if (schema.contains("type")) {
        const auto& t = schema.at("type");
        bool ok = false;
        if (t.is_array()) {
            for (const auto& alt : t) ok = ok || json_matches_type(value, alt.get<std::string>());
        } else {
            ok = json_matches_type(value, t.get<std::string>());
        }
        if (!ok)
            throw format_error("schema violation at " + where + ": wrong type, expected " +
                               t.dump());
    }
    if (schema.contains("enum")) {
        bool ok = false;
        for (const auto& alt : schema.at("enum")) ok = ok || alt == value;
        if (!ok) throw format_error("schema violation at " + where + ": value not in enum");
    }
    if (value.is_object()) {
        if (schema.contains("required"))
            for (const auto& key : schema.at("required"))
                if (!value.contains(key.get<std::string>()))
                    throw format_error("schema violation at " + where + ": missing required '" +
                                       key.get<std::string>() + "'");
        if (schema.contains("properties"))
            for (const auto& [key, sub] : schema.at("properties").items())
                if (value.contains(key))
                    validate_json_schema(value.at(key), sub, where + "." + key);
    }
    if (value.is_array() && schema.contains("items")) {
        size_t i = 0;
        for (const auto& item : value)
            validate_json_schema(item, schema.at("items"), where + "[" + std::to_string(i++) + "]");
    }
}

} // namespace spk
