// Command-line surface of the simulator + inversion toolkit.
//
// Subcommands: simulate, basis, unmix, train, estimate, evaluate, noise,
// uvvis, dataset, identity-check. stdout carries data only under --json;
// stderr carries diagnostics. Exit codes: 0 success, 2 validation error,
// 3 numeric failure, 4 I/O or format error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "specklesim/specklesim.hpp"

namespace fs = std::filesystem;
using spk::json;

namespace {

struct GlobalOpts {
    bool json_out = false;
    bool quiet = false;
    std::string out_dir;
    int frames_override = 0;
    uint64_t seed_override = 0;
    bool seed_set = false;
    std::string grid_override;
};

void info(const GlobalOpts& g, const std::string& msg) {
    if (!g.quiet) std::cerr << msg << "\n";
}

void emit(const GlobalOpts& g, const json& payload) {
    if (g.json_out) std::cout << payload.dump(2) << "\n";
}

void apply_overrides(spk::Scene& scene, const GlobalOpts& g) {
    if (g.frames_override > 0) scene.n_frames = g.frames_override;
    if (g.seed_set) scene.master_seed = g.seed_override;
    if (!g.grid_override.empty()) {
        const size_t x = g.grid_override.find('x');
        if (x == std::string::npos)
            throw spk::parameter_error("--grid expects WxH, e.g. 256x256");
        scene.config.grid_width = std::stoi(g.grid_override.substr(0, x));
        scene.config.grid_height = std::stoi(g.grid_override.substr(x + 1));
        scene.config.validate();
    }
}

struct SensorOpts {
    bool enabled = false;
    double exposure = 1000.0;
    double read_noise = 2.0;
    int bit_depth = 12;
    bool shot_off = false;
    uint64_t seed = 0;

    void attach(CLI::App* cmd) {
        cmd->add_flag("--sensor", enabled, "enable the sensor model (noise-free otherwise)");
        cmd->add_option("--exposure", exposure, "sensor counts per unit intensity");
        cmd->add_option("--read-noise", read_noise, "sensor read noise, counts");
        cmd->add_option("--bit-depth", bit_depth, "sensor ADC bits");
        cmd->add_flag("--no-shot-noise", shot_off, "disable shot noise");
        cmd->add_option("--sensor-seed", seed, "sensor noise seed");
    }

    void fill(spk::ExperimentFlags& flags) const {
        flags.sensor_enabled = enabled;
        if (enabled) {
            flags.sensor.exposure_scale = exposure;
            flags.sensor.read_noise_sigma = read_noise;
            flags.sensor.bit_depth = bit_depth;
            flags.sensor.shot_noise = !shot_off;
            flags.sensor.seed = seed;
        }
    }
};

spk::SynthesisMode parse_mode(const std::string& mode) {
    if (mode == "additive_weak") return spk::SynthesisMode::additive_weak;
    if (mode == "multiplicative") return spk::SynthesisMode::multiplicative;
    throw spk::parameter_error("unknown --mode '" + mode + "'");
}

std::vector<double> parse_series(const std::string& arg) {
    // either a file with one number per line or an inline comma list
    std::vector<double> vals;
    if (fs::exists(arg)) {
        std::ifstream in(arg);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            vals.push_back(std::stod(line));
        }
        return vals;
    }
    size_t pos = 0;
    while (pos <= arg.size()) {
        const size_t next = arg.find(',', pos);
        const std::string tok =
            arg.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (!tok.empty()) vals.push_back(std::stod(tok));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    if (vals.empty()) throw spk::parameter_error("empty numeric series: '" + arg + "'");
    return vals;
}

std::vector<spk::BasisKernel> load_bases_for(const fs::path& dir,
                                             const std::vector<std::string>& names) {
    std::vector<spk::BasisKernel> bases;
    for (const auto& n : names) bases.push_back(spk::load_basis(dir, n));
    return bases;
}

std::vector<std::string> discover_basis_names(const fs::path& dir) {
    std::vector<std::string> names;
    if (!fs::is_directory(dir)) throw spk::io_error("bases directory not found: " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".fgrd") names.push_back(entry.path().stem().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw spk::io_error("no basis kernels under " + dir.string());
    return names;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const GlobalOpts& g, const std::string& scene_path, const std::string& mode,
                 const SensorOpts& sensor, bool pgm) {
    spk::Scene scene = spk::load_scene(scene_path);
    apply_overrides(scene, g);

    spk::ExperimentFlags flags;
    flags.mode = parse_mode(mode);
    sensor.fill(flags);

    const fs::path out = g.out_dir.empty() ? fs::path("frames") : fs::path(g.out_dir);
    fs::create_directories(out);

    const json manifest{{"tool", "specklesim"},
                        {"version", spk::kToolVersion},
                        {"kind", "frames"},
                        {"scene", spk::scene_to_json(scene)},
                        {"scene_hash", spk::scene_hash(scene)},
                        {"config_hash", spk::config_hash(scene.config)},
                        {"flags", spk::flags_to_json(flags)}};
    spk::detail::write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");

    const auto frames = spk::simulate_scene_frames(scene, flags);
    for (size_t i = 0; i < frames.size(); ++i) {
        save_grid(frames[i], out / ("frame_" + std::to_string(i) + ".fgrd"));
        if (pgm) export_pgm(frames[i], out / ("frame_" + std::to_string(i) + ".pgm"));
    }

    info(g, "wrote " + std::to_string(frames.size()) + " frames to " + out.string());
    emit(g, json{{"frames", frames.size()},
                 {"out", out.string()},
                 {"scene_hash", spk::scene_hash(scene)},
                 {"config_hash", spk::config_hash(scene.config)}});
    return 0;
}

int cmd_basis(const GlobalOpts& g, const std::string& scene_path,
              std::vector<std::string> species_names, int mc_frames, const std::string& mode) {
    spk::Scene scene = spk::load_scene(scene_path);
    apply_overrides(scene, g);
    if (g.frames_override > 0) mc_frames = g.frames_override;

    std::vector<spk::Species> catalog;
    for (const auto& pop : scene.populations) catalog.push_back(pop.species);
    if (species_names.empty())
        for (const auto& s : catalog) species_names.push_back(s.name);

    const fs::path out = g.out_dir.empty() ? fs::path("bases") : fs::path(g.out_dir);
    const uint64_t seed = g.seed_set ? g.seed_override : scene.master_seed;

    json produced = json::array();
    for (const auto& name : species_names) {
        const spk::Species* found = nullptr;
        for (const auto& s : catalog)
            if (s.name == name) found = &s;
        if (!found)
            throw spk::parameter_error("species '" + name + "' not defined in the scene file");
        const spk::BasisKernel basis =
            spk::species_basis(*found, scene.config, mc_frames, seed, parse_mode(mode));
        spk::save_basis(basis, out, *found, parse_mode(mode));
        produced.push_back(json{{"species", name}, {"config_hash", basis.config_digest}});
        info(g, "basis '" + name + "' (" + std::to_string(mc_frames) + " MC frames) -> " +
                    out.string());
    }
    emit(g, json{{"bases", produced}, {"out", out.string()}, {"mc_frames", mc_frames}});
    return 0;
}

int cmd_unmix(const GlobalOpts& g, const std::string& scene_path, const std::string& frames_dir,
              const std::string& autocorr_path, const std::string& manifest_path,
              const std::string& bases_dir, const std::string& mode, const SensorOpts& sensor,
              const std::string& experiment_id, bool save_frames) {
    const fs::path bdir(bases_dir);
    const auto names = discover_basis_names(bdir);
    std::vector<spk::BasisKernel> bases = load_bases_for(bdir, names);

    json payload;
    const fs::path out = g.out_dir.empty() ? fs::path("experiment") : fs::path(g.out_dir);

    if (!manifest_path.empty()) {
        const json manifest = json::parse(spk::detail::read_file(manifest_path));
        const spk::ExperimentResult result = spk::run_experiment_from_manifest(manifest, bases);
        spk::write_experiment_artifacts(result, out);
        payload = json{{"report", (out / "report.csv").string()},
                       {"estimates", result.estimate.abundance},
                       {"species", result.species_order},
                       {"converged", result.estimate.converged},
                       {"residual_norm", result.estimate.residual_norm}};
    } else if (!scene_path.empty()) {
        spk::Scene scene = spk::load_scene(scene_path);
        apply_overrides(scene, g);
        spk::ExperimentFlags flags;
        flags.mode = parse_mode(mode);
        flags.experiment_id = experiment_id;
        flags.save_frames = save_frames;
        sensor.fill(flags);

        const spk::ExperimentResult result = spk::run_experiment(scene, bases, flags);
        spk::write_experiment_artifacts(result, out);
        payload = json{{"report", (out / "report.csv").string()},
                       {"estimates", result.estimate.abundance},
                       {"species", result.species_order},
                       {"converged", result.estimate.converged},
                       {"residual_norm", result.estimate.residual_norm}};
    } else {
        // pre-captured inputs: frames directory or a saved autocorr map
        spk::AbundanceEstimate est;
        if (!frames_dir.empty()) {
            std::vector<spk::RealGrid> frames;
            std::vector<fs::path> paths;
            for (const auto& entry : fs::directory_iterator(frames_dir))
                if (entry.path().extension() == ".fgrd") paths.push_back(entry.path());
            std::sort(paths.begin(), paths.end());
            if (paths.empty())
                throw spk::io_error("no .fgrd frames under " + frames_dir);
            for (const auto& p : paths) frames.push_back(spk::load_real_grid(p));
            est = spk::analyze_frames(std::move(frames), bases);
        } else if (!autocorr_path.empty()) {
            spk::AutocorrMap measured;
            measured.grid = spk::load_real_grid(autocorr_path);
            measured.mean_subtracted = true;
            measured.n_frames_averaged = 1;
            est = spk::nnls_unmix(spk::make_unmix_problem(std::move(measured), bases));
        } else {
            throw spk::parameter_error(
                "unmix needs one of --scene, --frames-dir, --autocorr, or --manifest");
        }
        if (!est.converged) throw spk::divergence_error("unmixing did not converge");
        payload = json{{"estimates", est.abundance},
                       {"species", names},
                       {"converged", est.converged},
                       {"residual_norm", est.residual_norm},
                       {"iterations", est.iterations}};
    }

    for (size_t i = 0; i < payload.at("species").size(); ++i)
        info(g, payload.at("species")[i].get<std::string>() + ": " +
                    spk::format_full(payload.at("estimates")[i].get<double>()) + " mg/mL");
    emit(g, payload);
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& dataset_dir, const std::string& stage,
              const std::string& params_in, double lr, int epochs, int batch, int hidden,
              bool squared_qt) {
    const spk::GeneratedDataset ds = spk::load_dataset(dataset_dir);

    spk::TrainConfig cfg;
    cfg.learning_rate = lr;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.seed = g.seed_set ? g.seed_override : 1;
    cfg.squared_qt_loss = squared_qt;

    const fs::path out = g.out_dir.empty() ? fs::path("train") : fs::path(g.out_dir);
    fs::create_directories(out);

    spk::TrainResult result;
    if (stage == "I") {
        cfg.stage = spk::TrainStage::one;
        result = spk::train_stage1(ds.set, cfg, static_cast<size_t>(hidden));
    } else if (stage == "II") {
        cfg.stage = spk::TrainStage::two;
        if (params_in.empty())
            throw spk::parameter_error("stage II requires --params-in from stage I");
        const spk::EstimatorParams frozen = spk::load_params(params_in);
        result = spk::train_stage2(ds.set, frozen, cfg);
    } else {
        throw spk::parameter_error("--stage must be I or II");
    }

    spk::save_params(result.params, out / "params.json");
    std::string trace = "epoch,loss\n";
    for (const auto& t : result.trace)
        trace += std::to_string(t.epoch) + "," + spk::format_full(t.loss) + "\n";
    spk::detail::write_file_atomic(out / "loss_trace.csv", trace);

    char digest[17];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(spk::theta_digest(result.params)));

    info(g, "stage " + stage + " final loss " + spk::format_full(result.final_loss));
    emit(g, json{{"stage", stage},
                 {"final_loss", result.final_loss},
                 {"epochs", epochs},
                 {"params", (out / "params.json").string()},
                 {"theta_digest", std::string(digest)}});
    return 0;
}

int cmd_estimate(const GlobalOpts& g, const std::string& dataset_dir,
                 const std::string& params_path) {
    const spk::GeneratedDataset ds = spk::load_dataset(dataset_dir);
    const spk::EstimatorParams params = spk::load_params(params_path);

    json rows = json::array();
    std::string csv = "id";
    for (const auto& s : ds.species_order) csv += ",c_est_" + s;
    csv += "\n";
    for (size_t i = 0; i < ds.set.rows.size(); ++i) {
        const auto c = spk::estimate(ds.set.rows[i].x, ds.set.rows[i].prior, params.theta_w,
                                     params.theta_b, params.psi_w, params.psi_b);
        rows.push_back(json{{"id", ds.ids[i]}, {"c_est", c}});
        csv += ds.ids[i];
        for (double v : c) csv += "," + spk::format_full(v);
        csv += "\n";
    }
    if (!g.out_dir.empty()) {
        fs::create_directories(g.out_dir);
        spk::detail::write_file_atomic(fs::path(g.out_dir) / "estimates.csv", csv);
    }
    emit(g, json{{"rows", rows}, {"species", ds.species_order}});
    if (!g.json_out) info(g, csv);
    return 0;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& truth_arg, const std::string& pred_arg) {
    const std::vector<double> y = parse_series(truth_arg);
    const std::vector<double> yhat = parse_series(pred_arg);
    const spk::MetricReport report = spk::make_metric_report(y, yhat);
    json payload{{"n", report.n},
                 {"mae", report.mae},
                 {"rmse", report.rmse},
                 {"fidelity_percent", report.fidelity_percent}};
    if (y.size() >= 2) payload["r2"] = report.r2 ? json(*report.r2) : json();
    if (report.rcv_percent) payload["rcv_percent"] = *report.rcv_percent;
    info(g, "mae=" + spk::format_full(report.mae) + " rmse=" + spk::format_full(report.rmse) +
                (report.r2 ? " r2=" + spk::format_full(*report.r2) : ""));
    emit(g, payload);
    return 0;
}

int cmd_noise(const GlobalOpts& g, const std::string& image_path, int ksize, double sigma) {
    const spk::RealGrid img = spk::load_real_grid(image_path);
    const double level = spk::noise_level(img, ksize, sigma);
    info(g, "noise level " + spk::format_full(level));
    emit(g, json{{"noise_level", level}, {"ksize", ksize}, {"sigma", sigma}});
    return 0;
}

int cmd_uvvis(const GlobalOpts& g, const std::string& ladder_arg, double eps, double path_cm,
              double saturation, double rel_noise) {
    const std::vector<double> ladder = parse_series(ladder_arg);
    const auto pts = spk::uvvis_baseline(ladder, eps, path_cm, saturation, rel_noise,
                                         g.seed_set ? g.seed_override : 0);
    json rows = json::array();
    std::string csv = "c_true_mg_per_ml,absorbance,c_est_mg_per_ml,in_range\n";
    for (const auto& p : pts) {
        rows.push_back(json{{"c_true", p.c_true},
                            {"absorbance", p.absorbance},
                            {"c_est", p.c_est ? json(*p.c_est) : json()},
                            {"in_range", p.c_est.has_value()}});
        csv += spk::format_full(p.c_true) + "," + spk::format_full(p.absorbance) + "," +
               (p.c_est ? spk::format_full(*p.c_est) : "") + "," +
               (p.c_est ? "1" : "0") + "\n";
    }
    if (!g.out_dir.empty()) {
        fs::create_directories(g.out_dir);
        spk::detail::write_file_atomic(fs::path(g.out_dir) / "uvvis.csv", csv);
    }
    size_t flagged = 0;
    for (const auto& p : pts)
        if (!p.c_est) ++flagged;
    info(g, std::to_string(pts.size()) + " ladder points, " + std::to_string(flagged) +
                " beyond the saturation range");
    emit(g, json{{"points", rows}, {"saturation_a", saturation}});
    return 0;
}

int cmd_dataset(const GlobalOpts& g, const std::string& spec_path) {
    const json spec_json = json::parse(spk::detail::read_file(spec_path));
    const spk::DatasetSpec spec = spk::dataset_spec_from_json(spec_json);
    const spk::GeneratedDataset ds = spk::generate_dataset(spec);
    const fs::path out = g.out_dir.empty() ? fs::path("dataset") : fs::path(g.out_dir);
    spk::write_dataset(ds, out);
    info(g, "dataset with " + std::to_string(ds.set.rows.size()) + " rows -> " + out.string());
    emit(g, json{{"rows", ds.set.rows.size()},
                 {"species", ds.species_order},
                 {"out", out.string()}});
    return 0;
}

int cmd_identity_check(const GlobalOpts& g, const std::string& scene_path, double z_override,
                       int frame) {
    spk::Scene scene = spk::load_scene(scene_path);
    apply_overrides(scene, g);
    const double z = z_override >= 0.0 ? z_override : scene.config.propagation_distance;

    const auto realization = spk::sample_realization(scene, frame);
    const spk::TransmissionField field =
        spk::synthesize_transmission(realization, scene, spk::SynthesisMode::additive_weak);
    const spk::PropagationKernel kernel = spk::make_kernel(scene.config, z);
    const double residual = spk::verify_field_identity(field, kernel);

    info(g, "field identity residual " + spk::format_full(residual) + " at z = " +
                spk::format_full(z));
    emit(g, json{{"residual", residual}, {"z_m", z}, {"pass", residual <= 1e-10}});
    return residual <= 1e-10 ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"forward speckle holography simulator and abundance inversion toolkit"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags remain valid after the subcommand name

    GlobalOpts g;
    app.add_flag("--json", g.json_out, "machine-readable output on stdout");
    app.add_flag("--quiet", g.quiet, "suppress diagnostics on stderr");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--frames", g.frames_override, "override frame count");
    auto* seed_opt = app.add_option("--seed", g.seed_override, "override master seed");
    app.add_option("--grid", g.grid_override, "override grid as WxH");

    // simulate
    auto* sim = app.add_subcommand("simulate", "scene -> intensity/count frames");
    std::string sim_scene, sim_mode = "additive_weak";
    bool sim_pgm = false;
    SensorOpts sim_sensor;
    sim->add_option("--scene", sim_scene, "scene JSON")->required();
    sim->add_option("--mode", sim_mode, "additive_weak | multiplicative");
    sim->add_flag("--pgm", sim_pgm, "also export PGM previews");
    sim_sensor.attach(sim);

    // basis
    auto* bas = app.add_subcommand("basis", "species + config -> basis kernel");
    std::string bas_scene, bas_mode = "additive_weak";
    std::vector<std::string> bas_species;
    int bas_frames = 64;
    bas->add_option("--scene", bas_scene, "scene JSON carrying config + species")->required();
    bas->add_option("--species", bas_species, "species names (default: all in scene)");
    bas->add_option("--mc-frames", bas_frames, "Monte-Carlo frames per basis");
    bas->add_option("--mode", bas_mode, "additive_weak | multiplicative");

    // unmix
    auto* unx = app.add_subcommand("unmix", "frames or autocorr + bases -> abundances");
    std::string unx_scene, unx_frames_dir, unx_autocorr, unx_manifest, unx_bases,
        unx_mode = "additive_weak", unx_id = "exp";
    bool unx_save_frames = false;
    SensorOpts unx_sensor;
    unx->add_option("--scene", unx_scene, "scene JSON (simulate + unmix end-to-end)");
    unx->add_option("--frames-dir", unx_frames_dir, "directory of captured FGRD frames");
    unx->add_option("--autocorr", unx_autocorr, "saved mean-subtracted autocorr FGRD");
    unx->add_option("--manifest", unx_manifest, "rerun a recorded experiment manifest");
    unx->add_option("--bases", unx_bases, "directory of basis kernels")->required();
    unx->add_option("--mode", unx_mode, "additive_weak | multiplicative");
    unx->add_option("--id", unx_id, "experiment id for the report");
    unx->add_flag("--save-frames", unx_save_frames, "persist per-frame grids");
    unx_sensor.attach(unx);

    // train
    auto* trn = app.add_subcommand("train", "dataset + stage -> estimator params");
    std::string trn_dataset, trn_stage, trn_params_in;
    double trn_lr = 0.05;
    int trn_epochs = 500, trn_batch = 0, trn_hidden = 16;
    bool trn_squared = false;
    trn->add_option("--dataset", trn_dataset, "dataset directory")->required();
    trn->add_option("--stage", trn_stage, "I or II")->required();
    trn->add_option("--params-in", trn_params_in, "stage-I params (required for stage II)");
    trn->add_option("--lr", trn_lr, "learning rate");
    trn->add_option("--epochs", trn_epochs, "training epochs");
    trn->add_option("--batch", trn_batch, "mini-batch size (0 = full batch)");
    trn->add_option("--hidden", trn_hidden, "encoder hidden width");
    trn->add_flag("--squared-qt", trn_squared, "use the squared quantification loss");

    // estimate
    auto* est = app.add_subcommand("estimate", "features + params -> abundances");
    std::string est_dataset, est_params;
    est->add_option("--features", est_dataset, "dataset directory with X.csv/I.csv")->required();
    est->add_option("--params", est_params, "trained estimator params JSON")->required();

    // evaluate
    auto* evl = app.add_subcommand("evaluate", "predictions + truth -> metric report");
    std::string evl_truth, evl_pred;
    evl->add_option("--truth", evl_truth, "true values: file or comma list")->required();
    evl->add_option("--pred", evl_pred, "predicted values: file or comma list")->required();

    // noise
    auto* noi = app.add_subcommand("noise", "image -> noise level");
    std::string noi_image;
    int noi_ksize = 7;
    double noi_sigma = 1.5;
    noi->add_option("--image", noi_image, "FGRD image")->required();
    noi->add_option("--ksize", noi_ksize, "Gaussian kernel size (odd)");
    noi->add_option("--sigma", noi_sigma, "Gaussian sigma, pixels");

    // uvvis
    auto* uvv = app.add_subcommand("uvvis", "abundance ladder -> ensemble baseline");
    std::string uvv_ladder;
    double uvv_eps = 1.0, uvv_path = 1.0, uvv_sat = 1.0, uvv_noise = 0.0;
    uvv->add_option("--ladder", uvv_ladder, "abundances mg/mL: file or comma list")->required();
    uvv->add_option("--eps", uvv_eps, "effective extinction coefficient")->required();
    uvv->add_option("--path-cm", uvv_path, "cuvette path length, cm")->required();
    uvv->add_option("--saturation", uvv_sat, "absorbance saturation ceiling")->required();
    uvv->add_option("--noise", uvv_noise, "relative absorbance noise");

    // dataset
    auto* dat = app.add_subcommand("dataset", "dataset spec -> training set");
    std::string dat_spec;
    dat->add_option("--spec", dat_spec, "dataset spec JSON")->required();

    // identity-check
    auto* idc = app.add_subcommand("identity-check", "scene -> field identity residual");
    std::string idc_scene;
    double idc_z = -1.0;
    int idc_frame = 0;
    idc->add_option("--scene", idc_scene, "scene JSON")->required();
    idc->add_option("--z", idc_z, "override propagation distance, meters");
    idc->add_option("--frame", idc_frame, "frame index to synthesize");

    try {
        app.parse(argc, argv);
        g.seed_set = seed_opt->count() > 0;

        if (sim->parsed()) return cmd_simulate(g, sim_scene, sim_mode, sim_sensor, sim_pgm);
        if (bas->parsed()) return cmd_basis(g, bas_scene, bas_species, bas_frames, bas_mode);
        if (unx->parsed())
            return cmd_unmix(g, unx_scene, unx_frames_dir, unx_autocorr, unx_manifest, unx_bases,
                             unx_mode, unx_sensor, unx_id, unx_save_frames);
        if (trn->parsed())
            return cmd_train(g, trn_dataset, trn_stage, trn_params_in, trn_lr, trn_epochs,
                             trn_batch, trn_hidden, trn_squared);
        if (est->parsed()) return cmd_estimate(g, est_dataset, est_params);
        if (evl->parsed()) return cmd_evaluate(g, evl_truth, evl_pred);
        if (noi->parsed()) return cmd_noise(g, noi_image, noi_ksize, noi_sigma);
        if (uvv->parsed()) return cmd_uvvis(g, uvv_ladder, uvv_eps, uvv_path, uvv_sat, uvv_noise);
        if (dat->parsed()) return cmd_dataset(g, dat_spec);
        if (idc->parsed()) return cmd_identity_check(g, idc_scene, idc_z, idc_frame);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const spk::divergence_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const spk::format_error& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 4;
    } catch (const spk::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const spk::parameter_error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const spk::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
