#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "specklesim/pipeline.hpp"

using namespace spk;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("specklesim_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

OpticalConfig desk_config() {
    OpticalConfig cfg;
    cfg.grid_width = 64;
    cfg.grid_height = 64;
    cfg.pixel_pitch = 0.2e-6;
    cfg.propagation_distance = 20e-6;
    cfg.chamber_thickness = 10e-6;
    return cfg;
}

Species ps500() {
    Species s;
    s.name = "ps500";
    s.n_r = 1.59;
    s.n_i = 0.0;
    s.diameter = 500e-9;
    s.mass_density = 1050.0;
    return s;
}

Scene desk_scene(double abundance, uint64_t seed = 42, int frames = 32) {
    Scene sc;
    sc.config = desk_config();
    if (abundance > 0.0) {
        Population pop;
        pop.species = ps500();
        pop.abundance = abundance;
        pop.diameter_cv = 0.0;
        sc.populations.push_back(pop);
    }
    sc.master_seed = seed;
    sc.n_frames = frames;
    return sc;
}

} // namespace

TEST_CASE("real grid FGRD round-trip within float32 quantization") {
    TempDir tmp;
    Rng rng(1);
    RealGrid g(8, 4, 3.45e-6);
    for (double& v : g.data) v = rng.normal(0.0, 7.0);
    save_grid(g, tmp.path / "g.fgrd");
    const RealGrid back = load_real_grid(tmp.path / "g.fgrd");
    CHECK(back.width == 8);
    CHECK(back.height == 4);
    CHECK(back.pitch == 3.45e-6);
    for (size_t i = 0; i < g.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(g.data[i]).epsilon(1e-6));
}

TEST_CASE("complex grid FGRD round-trip and header layout") {
    TempDir tmp;
    Rng rng(2);
    ComplexGrid g(4, 4, 1e-6);
    for (auto& v : g.data) v = cplx{rng.normal(), rng.normal()};
    save_grid(g, tmp.path / "c.fgrd");

    // dtype byte 1 sits at offset 16; pitch f64 at 17; payload at 25
    std::ifstream in(tmp.path / "c.fgrd", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == 25 + 4 * 4 * 8);
    CHECK(bytes.compare(0, 4, "FGRD") == 0);
    CHECK(static_cast<int>(bytes[16]) == 1);

    const LoadedGrid loaded = load_grid(tmp.path / "c.fgrd");
    REQUIRE(std::holds_alternative<ComplexGrid>(loaded));
    const ComplexGrid& back = std::get<ComplexGrid>(loaded);
    for (size_t i = 0; i < g.size(); ++i) {
        CHECK(back.data[i].real() == doctest::Approx(g.data[i].real()).epsilon(1e-6));
        CHECK(back.data[i].imag() == doctest::Approx(g.data[i].imag()).epsilon(1e-6));
    }
}

TEST_CASE("truncated and corrupted FGRD files raise format errors with offsets") {
    TempDir tmp;
    RealGrid g(4, 4, 1.0, 1.5);
    save_grid(g, tmp.path / "g.fgrd");
    std::string bytes;
    {
        std::ifstream in(tmp.path / "g.fgrd", std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }

    auto write_bytes = [&](const std::string& b, const fs::path& p) {
        std::ofstream out(p, std::ios::binary);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };

    write_bytes(bytes.substr(0, bytes.size() - 3), tmp.path / "short.fgrd");
    CHECK_THROWS_AS(load_grid(tmp.path / "short.fgrd"), format_error);

    write_bytes(bytes + "xx", tmp.path / "long.fgrd");
    CHECK_THROWS_AS(load_grid(tmp.path / "long.fgrd"), format_error);

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    write_bytes(bad_magic, tmp.path / "magic.fgrd");
    CHECK_THROWS_WITH_AS(load_grid(tmp.path / "magic.fgrd"), doctest::Contains("byte 0"),
                         format_error);

    std::string bad_version = bytes;
    bad_version[4] = 9;
    write_bytes(bad_version, tmp.path / "ver.fgrd");
    CHECK_THROWS_AS(load_grid(tmp.path / "ver.fgrd"), format_error);
}

TEST_CASE("scene JSON round-trips and rejects unknown keys") {
    const Scene sc = desk_scene(1.25, 7, 16);
    const json j = scene_to_json(sc);
    const Scene back = scene_from_json(j);
    CHECK(back.config.pixel_pitch == sc.config.pixel_pitch);
    CHECK(back.populations.size() == 1);
    CHECK(back.populations[0].abundance == 1.25);
    CHECK(back.master_seed == 7);
    CHECK(scene_hash(back) == scene_hash(sc));

    json with_extra = j;
    with_extra["surprise"] = 1;
    CHECK_THROWS_AS(scene_from_json(with_extra), format_error);

    json bad_nested = j;
    bad_nested["config"]["typo_key"] = 2.0;
    CHECK_THROWS_AS(scene_from_json(bad_nested), format_error);

    json bad_value = j;
    bad_value["n_frames"] = 0; // scene invariants re-checked on load
    CHECK_THROWS_AS(scene_from_json(bad_value), parameter_error);
}

TEST_CASE("basis kernels persist with their sidecar metadata") {
    TempDir tmp;
    const BasisKernel basis = species_basis(ps500(), desk_config(), 8, 5);
    save_basis(basis, tmp.path, ps500(), SynthesisMode::additive_weak);
    const BasisKernel back = load_basis(tmp.path, "ps500");
    CHECK(back.config_digest == basis.config_digest);
    CHECK(back.n_mc_frames == 8);
    CHECK(back.seed == 5);
    CHECK(back.map.mean_subtracted);
    for (size_t i = 0; i < basis.map.grid.size(); ++i)
        CHECK(back.map.grid.data[i] ==
              doctest::Approx(basis.map.grid.data[i]).epsilon(1e-5));
    const Species sp = basis_species(tmp.path, "ps500");
    CHECK(sp.diameter == 500e-9);
    CHECK_THROWS_AS(load_basis(tmp.path, "missing"), io_error);
}

TEST_CASE("estimator params round-trip exactly through JSON") {
    TempDir tmp;
    Rng rng(3);
    EstimatorParams p;
    p.theta_w = Matrix(3, 5);
    for (auto& v : p.theta_w.data) v = rng.normal();
    p.theta_b = {rng.normal(), rng.normal(), rng.normal()};
    p.phi_w = Matrix(2, 3);
    for (auto& v : p.phi_w.data) v = rng.normal();
    p.phi_b = {rng.normal(), rng.normal()};
    p.psi_w = Matrix(2, 3);
    for (auto& v : p.psi_w.data) v = rng.normal();
    p.psi_b = {rng.normal(), rng.normal()};

    save_params(p, tmp.path / "params.json");
    const EstimatorParams back = load_params(tmp.path / "params.json");
    CHECK(back.theta_w.data == p.theta_w.data); // shortest-round-trip doubles
    CHECK(back.psi_b == p.psi_b);
    CHECK(theta_digest(back) == theta_digest(p));
}

TEST_CASE("run_experiment on a blank scene estimates zero everywhere") {
    const Scene blank = desk_scene(0.0, 1, 8);
    std::vector<BasisKernel> bases{species_basis(ps500(), desk_config(), 16, 9)};
    ExperimentFlags flags;
    flags.experiment_id = "blank";
    const ExperimentResult r = run_experiment(blank, bases, flags);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].c_est < 1e-9);
    CHECK(r.rows[0].fidelity_percent == 100.0);
}

TEST_CASE("run_experiment recovers a single species at twice the reference") {
    const Scene sc = desk_scene(2.0, 77, 64);
    std::vector<BasisKernel> bases{species_basis(ps500(), desk_config(), 64, 9)};
    ExperimentFlags flags;
    flags.experiment_id = "x2";
    const ExperimentResult r = run_experiment(sc, bases, flags);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].fidelity_percent >= 95.0);
}

TEST_CASE("run_experiment refuses missing bases and config mismatches") {
    const Scene sc = desk_scene(1.0, 2, 4);
    ExperimentFlags flags;
    CHECK_THROWS_WITH_AS(run_experiment(sc, {}, flags), doctest::Contains("ps500"),
                         parameter_error);

    OpticalConfig other = desk_config();
    other.propagation_distance = 30e-6;
    std::vector<BasisKernel> stale{species_basis(ps500(), other, 4, 9)};
    CHECK_THROWS_AS(run_experiment(sc, stale, flags), config_error);
}

TEST_CASE("rerunning from the manifest reproduces the report byte-for-byte") {
    const Scene sc = desk_scene(1.0, 11, 16);
    std::vector<BasisKernel> bases{species_basis(ps500(), desk_config(), 16, 9)};
    ExperimentFlags flags;
    flags.experiment_id = "repro";
    flags.sensor_enabled = true;
    flags.sensor.seed = 1234;
    const ExperimentResult first = run_experiment(sc, bases, flags);
    const ExperimentResult again = run_experiment_from_manifest(first.manifest, bases);
    CHECK(again.report_csv == first.report_csv);
    CHECK(first.report_csv.find("# specklesim-report v1\n") == 0);
}

TEST_CASE("dataset generation is deterministic and keeps ids distinct") {
    json spec_json{
        {"config", config_to_json(desk_config())},
        {"species", json::array({species_to_json(ps500())})},
        {"basis_mc_frames", 8},
        {"basis_seed", 3},
        {"experiments", json::array()},
    };
    for (int i = 0; i < 4; ++i)
        spec_json["experiments"].push_back(
            json{{"id", "row" + std::to_string(i)},
                 {"populations", json::array({json{{"species", "ps500"},
                                                   {"abundance_mg_per_ml", 0.5 + 0.5 * i}}})},
                 {"master_seed", 100 + i},
                 {"n_frames", 4}});

    const DatasetSpec spec = dataset_spec_from_json(spec_json);
    const GeneratedDataset a = generate_dataset(spec);
    const GeneratedDataset b = generate_dataset(spec);
    REQUIRE(a.set.rows.size() == 4);
    CHECK(a.ids == b.ids);
    for (size_t i = 0; i < a.set.rows.size(); ++i) {
        CHECK(a.set.rows[i].x == b.set.rows[i].x);
        CHECK(a.set.rows[i].prior == b.set.rows[i].prior);
        CHECK(a.set.rows[i].truth[0] == 0.5 + 0.5 * i);
    }

    // duplicate id refused
    spec_json["experiments"][1]["id"] = "row0";
    CHECK_THROWS_AS(dataset_spec_from_json(spec_json), parameter_error);
}

TEST_CASE("empty dataset spec yields an empty set with a valid manifest") {
    json spec_json{{"config", config_to_json(desk_config())},
                   {"species", json::array({species_to_json(ps500())})},
                   {"experiments", json::array()}};
    const GeneratedDataset ds = generate_dataset(dataset_spec_from_json(spec_json));
    CHECK(ds.set.rows.empty());
    CHECK(ds.manifest.at("kind") == "dataset");
}

TEST_CASE("dataset tables round-trip through the on-disk layout") {
    TempDir tmp;
    json spec_json{{"config", config_to_json(desk_config())},
                   {"species", json::array({species_to_json(ps500())})},
                   {"basis_mc_frames", 4},
                   {"experiments",
                    json::array({json{{"id", "only"},
                                      {"populations",
                                       json::array({json{{"species", "ps500"},
                                                         {"abundance_mg_per_ml", 1.0}}})},
                                      {"master_seed", 5},
                                      {"n_frames", 4}}})}};
    const GeneratedDataset ds = generate_dataset(dataset_spec_from_json(spec_json));
    write_dataset(ds, tmp.path);
    const GeneratedDataset back = load_dataset(tmp.path);
    REQUIRE(back.set.rows.size() == 1);
    CHECK(back.ids == ds.ids);
    CHECK(back.set.rows[0].x == ds.set.rows[0].x);
    CHECK(back.set.rows[0].prior == ds.set.rows[0].prior);
    CHECK(back.set.rows[0].target == ds.set.rows[0].target);
    CHECK(back.set.rows[0].truth == ds.set.rows[0].truth);
}

TEST_CASE("two-stage estimator learns abundances from generated features") {
    DatasetSpec spec;
    spec.config = desk_config();
    spec.config.grid_width = spec.config.grid_height = 128;
    Species big = ps500();
    Species small = ps500();
    small.name = "ps200";
    small.diameter = 200e-9;
    spec.catalog = {big, small};
    spec.basis_mc_frames = 64;
    spec.basis_seed = 5;
    int idx = 0;
    for (double ca : {0.5, 1.0, 1.5, 2.0, 3.0})
        for (double cb : {0.5, 1.0, 1.5, 2.0, 3.0}) {
            DatasetSpec::Entry e;
            e.id = "m" + std::to_string(idx);
            Population pa;
            pa.species = big;
            pa.abundance = ca;
            pa.diameter_cv = 0.0;
            Population pb;
            pb.species = small;
            pb.abundance = cb;
            pb.diameter_cv = 0.0;
            e.populations = {pa, pb};
            e.master_seed = 900 + idx;
            e.n_frames = 24;
            spec.entries.push_back(e);
            ++idx;
        }
    const GeneratedDataset ds = generate_dataset(spec);

    TrainConfig c1;
    c1.learning_rate = 0.2;
    c1.epochs = 400;
    c1.seed = 3;
    const TrainResult s1 = train_stage1(ds.set, c1, 16);

    TrainConfig c2;
    c2.stage = TrainStage::two;
    c2.learning_rate = 0.25;
    c2.epochs = 3000;
    c2.seed = 4;
    const TrainResult s2 = train_stage2(ds.set, s1.params, c2);
    CHECK(theta_digest(s2.params) == theta_digest(s1.params));

    for (size_t sp = 0; sp < 2; ++sp) {
        std::vector<double> y, yhat;
        for (const auto& row : ds.set.rows) {
            y.push_back(row.truth[sp]);
            yhat.push_back(estimate(row.x, row.prior, s2.params.theta_w, s2.params.theta_b,
                                    s2.params.psi_w, s2.params.psi_b)[sp]);
        }
        CHECK(r2(y, yhat) >= 0.9);
    }
}

TEST_CASE("the schema validator enforces types, required keys, and enums") {
    const json schema{{"type", "object"},
                      {"required", json::array({"name", "value"})},
                      {"properties",
                       json{{"name", json{{"type", "string"}}},
                            {"value", json{{"type", "number"}}},
                            {"kind", json{{"type", "string"},
                                          {"enum", json::array({"a", "b"})}}}}}};
    validate_json_schema(json{{"name", "x"}, {"value", 1.5}}, schema);
    validate_json_schema(json{{"name", "x"}, {"value", 1.5}, {"kind", "a"}}, schema);
    CHECK_THROWS_AS(validate_json_schema(json{{"name", "x"}}, schema), format_error);
    CHECK_THROWS_AS(validate_json_schema(json{{"name", 3}, {"value", 1.5}}, schema),
                    format_error);
    CHECK_THROWS_AS(
        validate_json_schema(json{{"name", "x"}, {"value", 1.5}, {"kind", "z"}}, schema),
        format_error);
}

TEST_CASE("pgm export writes a well-formed header") {
    TempDir tmp;
    RealGrid g(4, 2, 1.0);
    for (size_t i = 0; i < g.size(); ++i) g.data[i] = static_cast<double>(i);
    export_pgm(g, tmp.path / "g.pgm");
    std::ifstream in(tmp.path / "g.pgm", std::ios::binary);
    std::string head(9, '\0');
    in.read(head.data(), 9);
    CHECK(head == "P5\n4 2\n25");
}
