#include "odenet/cli.hpp"

#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "odenet/config.hpp"
#include "odenet/error.hpp"
#include "odenet/pipeline.hpp"

namespace odenet {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// State shared by all subcommands: the resolved config plus per-command paths.
struct Invocation {
    PipelineConfig config;
    std::string config_path;
    std::size_t threads = 1;
    std::string output;
    std::string dem, image, truth, bundle, dataset;
    std::string mode = "full";
    std::size_t levels = 1;
    bool register_b = false;
    std::string heatmaps;
};

// Pre-scan for --config so its values become the defaults flags override.
std::optional<std::string> find_config_flag(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
    }
    return std::nullopt;
}

// Output directory for run.json: the directory itself for directory outputs,
// the parent directory for file outputs.
fs::path outdir_of(const std::string& output, bool is_dir) {
    if (is_dir) return output;
    const fs::path p = fs::path(output).parent_path();
    return p.empty() ? fs::path(".") : p;
}

void ensure_parent(const std::string& file) {
    const fs::path parent = fs::path(file).parent_path();
    if (parent.empty()) return;
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create directory " + parent.string());
}

void write_run_json(const std::string& command, const Invocation& inv, const fs::path& dir, const Json& io) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create directory " + dir.string());
    Json j;
    j["command"] = command;
    j["threads"] = inv.threads;
    j["io"] = io;
    j["config"] = Json::parse(serialize_config(inv.config));
    std::ofstream f(dir / "run.json", std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + (dir / "run.json").string());
    f << j.dump(2) << '\n';
}

EnhanceMode parse_mode(const std::string& s) {
    if (s == "full") return EnhanceMode::Full;
    if (s == "interp") return EnhanceMode::InterpOnly;
    return EnhanceMode::Bicubic;
}

int run_command(const std::string& name, Invocation& inv, std::ostream& out, std::ostream& err) {
    // Re-validate the merged config so flag values get the same range checks
    // and key-path messages as config files.
    inv.config.threads = inv.threads;
    inv.config = parse_config_text(serialize_config(inv.config));
    PipelineConfig& c = inv.config;

    if (name == "gen-terrain") {
        ensure_parent(inv.output);
        save_height_grid(synth::generate_terrain(c.terrain), inv.output);
        write_run_json(name, inv, outdir_of(inv.output, false), {{"output", inv.output}});
    } else if (name == "render") {
        ensure_parent(inv.output);
        const HeightGrid dem = load_height_grid(inv.dem);
        save_image(synth::render_lambertian(dem, c.render), inv.output);
        write_run_json(name, inv, outdir_of(inv.output, false), {{"dem", inv.dem}, {"output", inv.output}});
    } else if (name == "make-dataset") {
        const PairSet set = build_dataset(load_height_grid(inv.dem), load_image(inv.image), c.dataset);
        save_pair_set(set, inv.output);
        write_run_json(name, inv, outdir_of(inv.output, true),
                       {{"dem", inv.dem}, {"image", inv.image}, {"output", inv.output}});
        out << set.pairs.size() << " pairs, sigma_global " << set.sigma_global << '\n';
    } else if (name == "train") {
        const PairSet set = load_pair_set(inv.dataset);
        const TrainedNet interp = train_interp_net(set, c.architecture, c.train_interp, c.threads);
        const TrainedNet enhance = train_enhance_net(set, interp.net, c.architecture, c.train_enhance, c.threads);
        save_bundle({interp.net, enhance.net, set.sigma_global, set.image_sigma, c.architecture.image_only,
                     training_echo(c)},
                    inv.output);
        write_run_json(name, inv, outdir_of(inv.output, true), {{"dataset", inv.dataset}, {"output", inv.output}});
        out << "final loss interp " << interp.loss_history.back() << ", enhance " << enhance.loss_history.back()
            << '\n';
    } else if (name == "enhance") {
        ensure_parent(inv.output);
        const ModelBundle bundle = load_bundle(inv.bundle);
        WindowPlan plan = c.window;
        plan.threads = c.threads;
        plan.mode = parse_mode(inv.mode);
        const HeightGrid result =
            enhance_recursive(load_height_grid(inv.dem), load_image(inv.image), bundle, inv.levels, plan);
        save_height_grid(result, inv.output);
        write_run_json(name, inv, outdir_of(inv.output, false),
                       {{"bundle", inv.bundle},
                        {"dem", inv.dem},
                        {"image", inv.image},
                        {"levels", inv.levels},
                        {"mode", inv.mode},
                        {"output", inv.output}});
    } else if (name == "validate") {
        ensure_parent(inv.output);
        const HeightGrid truth = load_height_grid(inv.truth);
        const HeightGrid dem = load_height_grid(inv.dem);
        const auto rep = specval::slope_compare(truth, dem, inv.register_b);
        specval::ReportRow row;
        row.name = fs::path(inv.dem).stem().string();
        if (dem.width() == dem.height() && dem.width() % 2 == 0) {
            const auto s = specval::score_grid(dem, c.validation).score;
            row.c0 = s.c0;
            row.c2 = s.c2;
            row.score = s.score;
        }
        row.rmse = rep.rmse;
        row.max_err = rep.max_error;
        row.dx = rep.dx;
        row.dy = rep.dy;
        specval::write_report_csv({row}, inv.output);
        write_run_json(name, inv, outdir_of(inv.output, false),
                       {{"truth", inv.truth}, {"dem", inv.dem}, {"register", inv.register_b}, {"output", inv.output}});
    } else if (name == "score") {
        ensure_parent(inv.output);
        if (inv.dem.empty() == inv.image.empty()) throw CLI::ValidationError("score needs exactly one of --dem or --image");
        const HeightGrid grid = inv.dem.empty() ? load_image(inv.image).as_height_grid(1.0) : load_height_grid(inv.dem);
        const auto detail = specval::score_grid(grid, c.validation);
        specval::ReportRow row;
        row.name = fs::path(inv.dem.empty() ? inv.image : inv.dem).stem().string();
        row.c0 = detail.score.c0;
        row.c2 = detail.score.c2;
        row.score = detail.score.score;
        specval::write_report_csv({row}, inv.output);
        if (!inv.heatmaps.empty()) {
            fs::create_directories(inv.heatmaps);
            specval::save_heatmap(detail.spectrum.values, detail.spectrum.n, detail.spectrum.n,
                                  fs::path(inv.heatmaps) / (row.name + "_spectrum.pgm"));
            specval::save_heatmap(detail.polar.values, detail.polar.n_r, detail.polar.n_theta,
                                  fs::path(inv.heatmaps) / (row.name + "_polar.pgm"));
        }
        write_run_json(name, inv, outdir_of(inv.output, false),
                       {{"input", inv.dem.empty() ? inv.image : inv.dem}, {"output", inv.output}});
        out << row.name << " score " << row.score << '\n';
    } else if (name == "pipeline") {
        if (!inv.output.empty()) c.output_dir = inv.output;
        write_run_json(name, inv, c.output_dir, {{"output", c.output_dir}});
        const PipelineMetrics m = run_pipeline(c, [&err](std::string_view line) { err << line << std::endl; });
        bool all = true;
        for (const AcceptanceRow& r : acceptance_rows(m)) {
            out << (r.pass ? "PASS " : "FAIL ") << r.id << ' ' << r.metric << " = " << r.value << " (threshold "
                << r.threshold << ")\n";
            all = all && r.pass;
        }
        out << (all ? "all pipeline criteria passed" : "some pipeline criteria failed") << '\n';
    }
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Invocation inv;
    try {
        if (auto path = find_config_flag(args)) {
            inv.config = parse_config(*path);
            inv.config_path = *path;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::Config ? kExitUsage : kExitData;
    }
    inv.threads = inv.config.threads;
    PipelineConfig& c = inv.config;

    CLI::App app{"odenet: image-guided DEM enhancement and anisotropy validation", "odenet"};
    app.require_subcommand(1, 1);
    app.set_help_all_flag("--help-all");

    auto common = [&](CLI::App* sub, bool output_required) {
        sub->add_option("--config", inv.config_path, "JSON config; flags override its values");
        sub->add_option("--threads", inv.threads, "worker threads; 1 is the bit-deterministic mode")
            ->check(CLI::Range(1, 256));
        auto* o = sub->add_option("-o,--output", inv.output, "output path");
        if (output_required) o->required();
    };

    auto* gen = app.add_subcommand("gen-terrain", "synthesize a power-law DEM (PFM)");
    common(gen, true);
    gen->add_option("--n", c.terrain.n, "grid size (power of two)");
    gen->add_option("--beta", c.terrain.beta, "spectral exponent");
    gen->add_option("--rms", c.terrain.rms, "elevation standard deviation, meters");
    gen->add_option("--spacing", c.terrain.spacing, "meters per pixel");
    gen->add_option("--seed", c.terrain.seed, "phase seed");

    auto* render = app.add_subcommand("render", "Lambertian rendering of a DEM (16-bit PGM)");
    common(render, true);
    render->add_option("--dem", inv.dem, "input DEM (PFM)")->required();
    render->add_option("--azimuth", c.render.sun.azimuth_deg, "sun azimuth, degrees clockwise from +x");
    render->add_option("--elevation", c.render.sun.elevation_deg, "sun elevation, degrees");
    render->add_option("--albedo", c.render.albedo, "surface albedo");
    render->add_option("--noise", c.render.noise_sigma, "Gaussian noise sigma");
    render->add_option("--seed", c.render.seed, "noise seed");

    auto* dataset = app.add_subcommand("make-dataset", "extract 16->32 training pairs into a directory");
    common(dataset, true);
    dataset->add_option("--dem", inv.dem, "high-resolution DEM (PFM)")->required();
    dataset->add_option("--image", inv.image, "co-registered image (PGM)")->required();
    dataset->add_option("--levels", c.dataset.levels, "pyramid levels");
    dataset->add_option("--tiles", c.dataset.tiles_per_level, "tiles per level");
    dataset->add_option("--seed", c.dataset.seed, "crop seed");

    auto* train = app.add_subcommand("train", "train both networks and write a model bundle directory");
    common(train, true);
    train->add_option("--dataset", inv.dataset, "directory written by make-dataset")->required();
    train->add_option("--epochs-interp", c.train_interp.epochs, "interpolator epochs");
    train->add_option("--epochs-enhance", c.train_enhance.epochs, "corrector epochs");
    train->add_option("--image-only", c.architecture.image_only, "feed the corrector only the image");

    auto* enhance = app.add_subcommand("enhance", "2^levels x enhancement of a DEM guided by an image");
    common(enhance, true);
    enhance->add_option("--bundle", inv.bundle, "model bundle directory")->required();
    enhance->add_option("--dem", inv.dem, "low-resolution DEM (PFM)")->required();
    enhance->add_option("--image", inv.image, "image at the output resolution (PGM)")->required();
    enhance->add_option("--levels", inv.levels, "number of 2x steps")->check(CLI::Range(1, 6));
    enhance->add_option("--stride", c.window.stride, "sliding-window stride");
    enhance->add_option("--mode", inv.mode, "full, interp or bicubic")
        ->check(CLI::IsMember({"full", "interp", "bicubic"}));

    auto* validate = app.add_subcommand("validate", "slope error and anisotropy score against a truth DEM");
    common(validate, true);
    validate->add_option("--truth", inv.truth, "reference DEM (PFM)")->required();
    validate->add_option("--dem", inv.dem, "DEM under test (PFM)")->required();
    validate->add_flag("--register", inv.register_b, "phase-correlation registration before comparing");

    auto* score = app.add_subcommand("score", "directional depletion score of a DEM or image");
    common(score, true);
    score->add_option("--dem", inv.dem, "input DEM (PFM)");
    score->add_option("--image", inv.image, "input image (PGM)");
    score->add_option("--heatmaps", inv.heatmaps, "directory for spectrum and polar heatmaps");

    auto* pipeline = app.add_subcommand("pipeline", "end-to-end run writing acceptance.csv");
    common(pipeline, false);

    if (!args.empty() && !args.front().starts_with("-")) {
        bool known = false;
        for (CLI::App* sub : app.get_subcommands({})) known = known || sub->get_name() == args.front();
        if (!known) {
            err << "error: unknown subcommand '" << args.front() << "'\n\n" << app.help();
            return kExitUsage;
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        for (CLI::App* sub : app.get_subcommands()) out << sub->help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        CLI::App* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << target->help();
        return kExitUsage;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        return run_command(name, inv, out, err);
    } catch (const CLI::Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::Config ? kExitUsage : kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

} // namespace odenet
