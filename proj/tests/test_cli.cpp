#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "specklesim/io.hpp"

// Drives the installed binary end-to-end: command surface, exit codes, and
// schema conformance of every --json payload.

using namespace spk;
namespace fs = std::filesystem;

namespace {

const fs::path kCli = SPECKLESIM_CLI_PATH;
const fs::path kSchemas = SPECKLESIM_SCHEMA_DIR;

struct Sandbox {
    fs::path dir;
    Sandbox() {
        dir = fs::temp_directory_path() / ("specklesim_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        write_scene();
    }
    ~Sandbox() { fs::remove_all(dir); }

    void write_scene() {
        const json scene{
            {"config",
             {{"wavelength_m", 532e-9},
              {"pixel_pitch_m", 0.2e-6},
              {"grid_width", 64},
              {"grid_height", 64},
              {"propagation_distance_m", 20e-6},
              {"medium_index", 1.33},
              {"chamber_thickness_m", 10e-6}}},
            {"species",
             json::array({{{"name", "ps500"},
                           {"n_r", 1.59},
                           {"n_i", 0.0},
                           {"diameter_m", 500e-9},
                           {"mass_density_kg_m3", 1050.0}}})},
            {"populations", json::array({{{"species", "ps500"},
                                          {"abundance_mg_per_ml", 1.0},
                                          {"diameter_cv", 0.0}}})},
            {"master_seed", 42},
            {"n_frames", 16}};
        std::ofstream out(dir / "scene.json");
        out << scene.dump(2);
    }
};

struct RunResult {
    int exit_code = 0;
    std::string stdout_text;
};

RunResult run(const Sandbox& sb, const std::string& args) {
    const fs::path out_file = sb.dir / "stdout.txt";
    const std::string cmd = "cd " + sb.dir.string() + " && " + kCli.string() + " " + args +
                            " > " + out_file.string() + " 2> /dev/null";
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WEXITSTATUS(raw);
    std::ifstream in(out_file);
    r.stdout_text.assign((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    return r;
}

json check_schema(const std::string& payload, const std::string& schema_name) {
    const json value = json::parse(payload);
    const json schema = json::parse(detail::read_file(kSchemas / schema_name));
    validate_json_schema(value, schema);
    return value;
}

Sandbox& sandbox() {
    static Sandbox sb;
    return sb;
}

} // namespace

TEST_CASE("simulate writes frames and schema-valid json") {
    auto& sb = sandbox();
    const RunResult r = run(sb, "--json simulate --scene scene.json --out frames --frames 4");
    REQUIRE(r.exit_code == 0);
    const json payload = check_schema(r.stdout_text, "simulate.schema.json");
    CHECK(payload.at("frames") == 4);
    CHECK(fs::exists(sb.dir / "frames" / "frame_3.fgrd"));
    check_schema(detail::read_file(sb.dir / "frames" / "manifest.json"),
                 "manifest.schema.json");
}

TEST_CASE("basis builds kernels with schema-valid json and sidecars") {
    auto& sb = sandbox();
    const RunResult r =
        run(sb, "--json basis --scene scene.json --mc-frames 16 --seed 5 --out bases");
    REQUIRE(r.exit_code == 0);
    check_schema(r.stdout_text, "basis.schema.json");
    check_schema(detail::read_file(sb.dir / "bases" / "ps500.json"),
                 "basis-sidecar.schema.json");
}

TEST_CASE("identity-check passes on the scene and reports the residual") {
    auto& sb = sandbox();
    const RunResult r = run(sb, "--json identity-check --scene scene.json");
    REQUIRE(r.exit_code == 0);
    const json payload = check_schema(r.stdout_text, "identity-check.schema.json");
    CHECK(payload.at("pass") == true);
    CHECK(payload.at("residual").get<double>() <= 1e-10);
}

TEST_CASE("unmix end-to-end from scene and from captured frames") {
    auto& sb = sandbox();
    const RunResult direct =
        run(sb, "--json unmix --scene scene.json --bases bases --out exp");
    REQUIRE(direct.exit_code == 0);
    const json payload = check_schema(direct.stdout_text, "unmix.schema.json");
    CHECK(payload.at("converged") == true);
    CHECK(fs::exists(sb.dir / "exp" / "report.csv"));
    check_schema(detail::read_file(sb.dir / "exp" / "manifest.json"),
                 "manifest.schema.json");

    const RunResult from_frames = run(sb, "--json unmix --frames-dir frames --bases bases");
    REQUIRE(from_frames.exit_code == 0);
    check_schema(from_frames.stdout_text, "unmix.schema.json");

    const RunResult from_map = run(sb, "--json unmix --autocorr exp/autocorr.fgrd --bases bases");
    REQUIRE(from_map.exit_code == 0);
    check_schema(from_map.stdout_text, "unmix.schema.json");
}

TEST_CASE("sensor-captured frames survive the capture/reload/unmix round trip") {
    auto& sb = sandbox();
    const RunResult sim = run(sb,
                              "--json simulate --scene scene.json --out counts --sensor "
                              "--sensor-seed 9 --exposure 800");
    REQUIRE(sim.exit_code == 0);

    const RunResult direct = run(sb,
                                 "--json unmix --scene scene.json --bases bases --sensor "
                                 "--sensor-seed 9 --exposure 800 --save-frames --out sensor_exp");
    REQUIRE(direct.exit_code == 0);
    CHECK(fs::exists(sb.dir / "sensor_exp" / "frame_0.fgrd"));

    const RunResult reloaded = run(sb, "--json unmix --frames-dir counts --bases bases");
    REQUIRE(reloaded.exit_code == 0);
    const json a = json::parse(direct.stdout_text);
    const json b = json::parse(reloaded.stdout_text);
    // same sensor stream, so the two routes see identical counts
    for (size_t i = 0; i < a.at("estimates").size(); ++i)
        CHECK(a.at("estimates")[i].get<double>() ==
              doctest::Approx(b.at("estimates")[i].get<double>()).epsilon(1e-6));
}

TEST_CASE("manifest rerun reproduces the report byte-for-byte") {
    auto& sb = sandbox();
    REQUIRE(fs::exists(sb.dir / "exp" / "manifest.json"));
    const RunResult rerun =
        run(sb, "--json unmix --manifest exp/manifest.json --bases bases --out exp2");
    REQUIRE(rerun.exit_code == 0);
    CHECK(detail::read_file(sb.dir / "exp" / "report.csv") ==
          detail::read_file(sb.dir / "exp2" / "report.csv"));
}

TEST_CASE("unmix with a config-mismatched basis exits 2 naming the species") {
    auto& sb = sandbox();
    // rebuild the basis under a different z, then try to use it
    const RunResult rebuilt = run(
        sb, "--json basis --scene scene.json --mc-frames 4 --seed 5 --out stale_bases "
            "--grid 32x32");
    REQUIRE(rebuilt.exit_code == 0);
    const RunResult r = run(sb, "unmix --scene scene.json --bases stale_bases");
    CHECK(r.exit_code == 2);
}

TEST_CASE("dataset, train stages, and estimate round-trip with valid schemas") {
    auto& sb = sandbox();
    json spec{{"config", json::parse(detail::read_file(sb.dir / "scene.json")).at("config")},
              {"species", json::parse(detail::read_file(sb.dir / "scene.json")).at("species")},
              {"basis_mc_frames", 8},
              {"basis_seed", 3},
              {"experiments", json::array()}};
    for (int i = 0; i < 6; ++i)
        spec["experiments"].push_back(
            json{{"id", "row" + std::to_string(i)},
                 {"populations", json::array({json{{"species", "ps500"},
                                                   {"abundance_mg_per_ml", 0.5 + 0.3 * i}}})},
                 {"master_seed", 50 + i},
                 {"n_frames", 4}});
    {
        std::ofstream out(sb.dir / "dataset_spec.json");
        out << spec.dump(2);
    }

    const RunResult ds = run(sb, "--json dataset --spec dataset_spec.json --out ds");
    REQUIRE(ds.exit_code == 0);
    check_schema(ds.stdout_text, "dataset.schema.json");

    const RunResult s1 =
        run(sb, "--json train --dataset ds --stage I --lr 0.2 --epochs 50 --seed 3 --out t1");
    REQUIRE(s1.exit_code == 0);
    check_schema(s1.stdout_text, "train.schema.json");
    check_schema(detail::read_file(sb.dir / "t1" / "params.json"), "params.schema.json");

    const RunResult s2 = run(sb,
                             "--json train --dataset ds --stage II --params-in t1/params.json "
                             "--lr 0.2 --epochs 200 --seed 4 --out t2");
    REQUIRE(s2.exit_code == 0);
    const json j1 = json::parse(s1.stdout_text);
    const json j2 = json::parse(s2.stdout_text);
    CHECK(j1.at("theta_digest") == j2.at("theta_digest")); // stage II froze the encoder

    const RunResult est = run(sb, "--json estimate --features ds --params t2/params.json");
    REQUIRE(est.exit_code == 0);
    check_schema(est.stdout_text, "estimate.schema.json");
}

TEST_CASE("evaluate reproduces the hand-computed metric payload") {
    auto& sb = sandbox();
    const RunResult r = run(sb, "--json evaluate --truth 1,2,3 --pred 2,2,2");
    REQUIRE(r.exit_code == 0);
    const json payload = check_schema(r.stdout_text, "evaluate.schema.json");
    CHECK(payload.at("mae").get<double>() == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(payload.at("rmse").get<double>() ==
          doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    CHECK(payload.at("r2").get<double>() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("noise and uvvis emit schema-valid payloads") {
    auto& sb = sandbox();
    const RunResult n = run(sb, "--json noise --image exp/autocorr.fgrd");
    REQUIRE(n.exit_code == 0);
    check_schema(n.stdout_text, "noise.schema.json");

    const RunResult u = run(
        sb, "--json uvvis --ladder 0.01,0.1,1,10 --eps 2 --path-cm 1 --saturation 5 --out uv");
    REQUIRE(u.exit_code == 0);
    const json payload = check_schema(u.stdout_text, "uvvis.schema.json");
    int flagged = 0;
    for (const auto& p : payload.at("points"))
        if (!p.at("in_range").get<bool>()) ++flagged;
    CHECK(flagged == 1); // saturation at 2*1*c >= 5, i.e. only c = 10
    CHECK(fs::exists(sb.dir / "uv" / "uvvis.csv"));
}

TEST_CASE("exit codes: validation 2, numeric 3, io/format 4") {
    auto& sb = sandbox();
    CHECK(run(sb, "unmix --bases bases").exit_code == 2);             // no input selected
    CHECK(run(sb, "noise --image missing.fgrd").exit_code == 4);      // io error
    CHECK(run(sb, "train --dataset ds --stage Z").exit_code == 2);    // bad stage
    CHECK(run(sb, "evaluate --truth 1,2 --pred 1").exit_code == 2);   // length mismatch

    // corrupt scene json -> format error -> 4
    {
        std::ofstream bad(sb.dir / "bad.json");
        bad << "{ not json";
    }
    CHECK(run(sb, "identity-check --scene bad.json").exit_code == 4);

    // scene violating invariants -> validation -> 2
    {
        json scene = json::parse(detail::read_file(sb.dir / "scene.json"));
        scene["n_frames"] = 0;
        std::ofstream bad(sb.dir / "zero_frames.json");
        bad << scene.dump();
    }
    CHECK(run(sb, "identity-check --scene zero_frames.json").exit_code == 2);
}

TEST_CASE("stdout stays empty without --json") {
    auto& sb = sandbox();
    const RunResult r = run(sb, "evaluate --truth 1,2,3 --pred 2,2,2 --quiet");
    CHECK(r.exit_code == 0);
    CHECK(r.stdout_text.empty());
}
