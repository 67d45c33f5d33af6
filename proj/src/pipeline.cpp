#include "odenet/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "odenet/error.hpp"

namespace odenet {
namespace {

class StageTimer {
public:
    explicit StageTimer(const Logger& log) : log_(log), start_(Clock::now()) {}
    void operator()(const std::string& what) const {
        if (!log_) return;
        const double s = std::chrono::duration<double>(Clock::now() - start_).count();
        char buf[32];
        std::snprintf(buf, sizeof buf, "[%7.1fs] ", s);
        log_(buf + what);
    }

private:
    using Clock = std::chrono::steady_clock;
    const Logger& log_;
    Clock::time_point start_;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

HeightGrid roll(const HeightGrid& g, std::ptrdiff_t dx, std::ptrdiff_t dy) {
    const auto w = static_cast<std::ptrdiff_t>(g.width()), h = static_cast<std::ptrdiff_t>(g.height());
    HeightGrid out(g.width(), g.height(), g.spacing());
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x)
            out(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) =
                g(static_cast<std::size_t>(((x - dx) % w + w) % w), static_cast<std::size_t>(((y - dy) % h + h) % h));
    return out;
}

double rms_difference(const HeightGrid& a, const HeightGrid& b) {
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.values()[i] - b.values()[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(a.size()));
}

void write_loss_csv(const TrainedNet& interp, const TrainedNet& enhance, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + path.string());
    f << "network,epoch,loss\n";
    char buf[128];
    for (std::size_t e = 0; e < interp.loss_history.size(); ++e) {
        std::snprintf(buf, sizeof buf, "interp,%zu,%.10g\n", e + 1, interp.loss_history[e]);
        f << buf;
    }
    for (std::size_t e = 0; e < enhance.loss_history.size(); ++e) {
        std::snprintf(buf, sizeof buf, "enhance,%zu,%.10g\n", e + 1, enhance.loss_history[e]);
        f << buf;
    }
}

specval::ReportRow report_row(const std::string& name, const specval::DepletionScore& s) {
    specval::ReportRow r;
    r.name = name;
    r.c0 = s.c0;
    r.c2 = s.c2;
    r.score = s.score;
    return r;
}

} // namespace

void registration_errors(const HeightGrid& periodic, double& integer_error, double& subpixel_error) {
    {
        const HeightGrid b = roll(periodic, 7, -3);
        const specval::Shift s = specval::estimate_shift(periodic, b);
        integer_error = std::max(std::abs(s.dx - 7.0), std::abs(s.dy + 3.0));
    }
    {
        // Shift, then drop a margin so edge clamping does not enter the estimate.
        const std::size_t m = 8;
        const HeightGrid b = shift_bilinear(periodic, 0.5, 0.25);
        const std::size_t w = periodic.width() - 2 * m, h = periodic.height() - 2 * m;
        const specval::Shift s = specval::estimate_shift(crop(periodic, m, m, w, h), crop(b, m, m, w, h));
        subpixel_error = std::max(std::abs(s.dx - 0.5), std::abs(s.dy - 0.25));
    }
}

std::vector<AcceptanceRow> acceptance_rows(const PipelineMetrics& m) {
    std::vector<AcceptanceRow> rows;
    auto add = [&](std::string id, std::string metric, double value, double threshold, bool pass) {
        rows.push_back({std::move(id), std::move(metric), value, threshold, pass});
    };
    add("AC-1", "abs(score(1+0.5cos2t) - 0.25)", std::abs(m.profile_score - 0.25), 1e-9,
        std::abs(m.profile_score - 0.25) <= 1e-9);
    add("AC-2", "score(dem)", m.score_dem, 0.01, m.score_dem < 0.01);
    add("AC-2", "score(image)/score(dem)", m.score_image / m.score_dem, 3.0, m.score_image > 3.0 * m.score_dem);
    auto ratio = [](double a, double b) { return b > 0.0 ? a / b : INFINITY; };
    add("AC-4", "slope_rmse odenet/interp 2x", ratio(m.slope_2x.odenet, m.slope_2x.interp), 0.9,
        m.slope_2x.odenet <= 0.9 * m.slope_2x.interp);
    add("AC-4", "slope_rmse odenet/bicubic 2x", ratio(m.slope_2x.odenet, m.slope_2x.bicubic), 0.9,
        m.slope_2x.odenet <= 0.9 * m.slope_2x.bicubic);
    add("AC-4", "slope_rmse odenet/interp 4x", ratio(m.slope_4x.odenet, m.slope_4x.interp), 0.9,
        m.slope_4x.odenet <= 0.9 * m.slope_4x.interp);
    add("AC-4", "slope_rmse odenet/bicubic 4x", ratio(m.slope_4x.odenet, m.slope_4x.bicubic), 0.9,
        m.slope_4x.odenet <= 0.9 * m.slope_4x.bicubic);
    add("AC-4", "tile_l1 odenet/interp", ratio(m.tiles.odenet_l1, m.tiles.interp_l1), 0.95,
        m.tiles.odenet_l1 <= 0.95 * m.tiles.interp_l1);
    add("AC-4", "tile_l1 interp/bicubic", ratio(m.tiles.interp_l1, m.tiles.bicubic_l1), 0.95,
        m.tiles.interp_l1 <= 0.95 * m.tiles.bicubic_l1);
    add("AC-5", "recovery_fraction 4x", m.recovery, 0.25, m.recovery >= 0.25);
    add("AC-6", "integer shift error px", m.shift_integer_error, 1e-6, m.shift_integer_error <= 1e-6);
    add("AC-6", "subpixel shift error px", m.shift_subpixel_error, 0.25, m.shift_subpixel_error <= 0.25);
    add("AC-8", "seam rms / sigma_global", m.seam_rms / m.sigma_global, 0.05, m.seam_rms < 0.05 * m.sigma_global);
    return rows;
}

void write_acceptance_csv(const std::vector<AcceptanceRow>& rows, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + path.string());
    f << "criterion,metric,value,threshold,pass\n";
    char buf[64];
    for (const AcceptanceRow& r : rows) {
        f << r.id << ',' << r.metric << ',';
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,", r.value, r.threshold);
        f << buf << (r.pass ? "PASS" : "FAIL") << '\n';
    }
}

PipelineMetrics run_pipeline(const PipelineConfig& config, const Logger& log) {
    validate_for_pipeline(config);
    const StageTimer stage(log);
    const std::filesystem::path out = config.output_dir;
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + out.string());
    const std::size_t threads = config.threads;
    PipelineMetrics m;
    std::vector<specval::ReportRow> report;

    // Training scene.
    const HeightGrid truth = synth::generate_terrain(config.terrain);
    const ImageGrid image = synth::render_lambertian(truth, config.render);
    save_height_grid(truth, out / "truth.pfm");
    save_image(image, out / "image.pgm");
    stage("generated and rendered " + std::to_string(config.terrain.n) + "^2 training scene");

    const auto dem_score = specval::score_grid(truth, config.validation);
    const auto img_score = specval::score_grid(image.as_height_grid(truth.spacing()), config.validation);
    m.score_dem = dem_score.score.score;
    m.score_image = img_score.score.score;
    report.push_back(report_row("truth", dem_score.score));
    report.push_back(report_row("image", img_score.score));
    specval::save_heatmap(img_score.spectrum.values, img_score.spectrum.n, img_score.spectrum.n,
                          out / "spectrum_image.pgm");
    specval::save_heatmap(dem_score.spectrum.values, dem_score.spectrum.n, dem_score.spectrum.n,
                          out / "spectrum_truth.pgm");
    specval::save_heatmap(img_score.polar.values, img_score.polar.n_r, img_score.polar.n_theta,
                          out / "polar_image.pgm");
    stage("scored training scene: dem " + fmt(m.score_dem) + ", image " + fmt(m.score_image));

    const PairSet set = build_dataset(truth, image, config.dataset);
    m.sigma_global = set.sigma_global;
    stage("built " + std::to_string(set.pairs.size()) + " training pairs, sigma_global " + fmt(set.sigma_global) +
          " m");

    const TrainedNet interp = train_interp_net(set, config.architecture, config.train_interp, threads);
    stage("trained interpolator, final loss " + fmt(interp.loss_history.back()));
    const TrainedNet enhance = train_enhance_net(set, interp.net, config.architecture, config.train_enhance, threads);
    stage("trained corrector, final loss " + fmt(enhance.loss_history.back()));

    ModelBundle bundle{interp.net, enhance.net, set.sigma_global, set.image_sigma,
                       config.architecture.image_only, training_echo(config)};
    save_bundle(bundle, out / "bundle");
    write_loss_csv(interp, enhance, out / "loss.csv");

    // Held-out scene with the same physics and a different seed.
    synth::TerrainSpec hold_spec = config.terrain;
    hold_spec.seed = config.evaluation.holdout_seed;
    synth::RenderOptions hold_render = config.render;
    hold_render.seed = config.evaluation.holdout_seed;
    const HeightGrid hold = synth::generate_terrain(hold_spec);
    const ImageGrid hold_image = synth::render_lambertian(hold, hold_render);
    save_height_grid(hold, out / "holdout_truth.pfm");
    save_image(hold_image, out / "holdout_image.pgm");

    DatasetOptions hold_opts = config.dataset;
    hold_opts.tiles_per_level = config.evaluation.holdout_tiles;
    hold_opts.seed = config.evaluation.holdout_seed;
    hold_opts.sigma_global = set.sigma_global;
    hold_opts.image_sigma = set.image_sigma;
    m.tiles = evaluate_tiles(build_dataset(hold, hold_image, hold_opts), bundle, threads);
    stage("held-out tile L1: odenet " + fmt(m.tiles.odenet_l1) + ", interp " + fmt(m.tiles.interp_l1) +
          ", bicubic " + fmt(m.tiles.bicubic_l1));

    WindowPlan plan = config.window;
    plan.threads = threads;
    auto run_factor = [&](std::size_t levels, SlopeTriple& slope) {
        const std::size_t factor = std::size_t{1} << levels;
        const HeightGrid low = downsample_mean(hold, factor);
        save_height_grid(low, out / ("holdout_low_" + std::to_string(factor) + "x.pfm"));
        WindowPlan p = plan;
        p.mode = EnhanceMode::Full;
        HeightGrid od = enhance_recursive(low, hold_image, bundle, levels, p);
        p.mode = EnhanceMode::InterpOnly;
        const HeightGrid ip = enhance_recursive(low, hold_image, bundle, levels, p);
        const HeightGrid bc = upsample_bicubic(low, factor);
        const std::string tag = std::to_string(factor) + "x";
        save_height_grid(od, out / ("enhanced_" + tag + ".pfm"));
        save_height_grid(ip, out / ("interp_" + tag + ".pfm"));

        const std::pair<const char*, const HeightGrid*> products[] = {
            {"odenet_", &od}, {"interp_", &ip}, {"bicubic_", &bc}};
        double* slots[] = {&slope.odenet, &slope.interp, &slope.bicubic};
        for (std::size_t k = 0; k < 3; ++k) {
            const auto& [prefix, grid] = products[k];
            const auto rep = specval::slope_compare(hold, *grid, false);
            const auto shift = specval::estimate_shift(hold, *grid);
            *slots[k] = rep.rmse;
            auto row = report_row(prefix + tag, specval::score_grid(*grid, config.validation).score);
            row.rmse = rep.rmse;
            row.max_err = rep.max_error;
            row.dx = shift.dx;
            row.dy = shift.dy;
            report.push_back(row);
        }
        stage(tag + " slope RMSE: odenet " + fmt(slope.odenet) + ", interp " + fmt(slope.interp) + ", bicubic " +
              fmt(slope.bicubic));
        return od;
    };
    run_factor(1, m.slope_2x);
    const HeightGrid od4 = run_factor(config.enhance_levels, m.slope_4x);

    const auto hold_score = specval::score_grid(hold, config.validation);
    const auto hold_img_score = specval::score_grid(hold_image.as_height_grid(hold.spacing()), config.validation);
    const auto od4_score = specval::score_grid(od4, config.validation);
    m.score_holdout_truth = hold_score.score.score;
    m.score_holdout_image = hold_img_score.score.score;
    m.score_odenet_4x = od4_score.score.score;
    report.push_back(report_row("holdout_truth", hold_score.score));
    report.push_back(report_row("holdout_image", hold_img_score.score));
    specval::save_heatmap(od4_score.polar.values, od4_score.polar.n_r, od4_score.polar.n_theta,
                          out / "polar_odenet.pgm");
    const auto rf = specval::recovery_fraction(m.score_holdout_image, m.score_odenet_4x, m.score_holdout_truth);
    m.recovery = rf.fraction;
    m.recovery_out_of_band = rf.out_of_band;
    stage("recovery fraction " + fmt(rf.fraction) + (rf.out_of_band ? " (raw value out of band)" : ""));

    // Seam robustness on a crop of the 2x problem.
    {
        const std::size_t c = config.evaluation.seam_crop;
        const HeightGrid low = crop(downsample_mean(hold, 2), 0, 0, c, c);
        const ImageGrid img = crop(hold_image, 0, 0, 2 * c, 2 * c);
        WindowPlan a = plan, b = plan;
        b.stride = config.evaluation.seam_stride;
        m.seam_rms = rms_difference(enhance_grid(low, img, bundle, a), enhance_grid(low, img, bundle, b));
        stage("seam RMS between strides " + std::to_string(a.stride) + " and " + std::to_string(b.stride) + ": " +
              fmt(m.seam_rms) + " m");
    }

    {
        specval::AngularProfile p;
        p.values.resize(360);
        for (std::size_t t = 0; t < 360; ++t)
            p.values[t] = 1.0 + 0.5 * std::cos(2.0 * 2.0 * std::numbers::pi * static_cast<double>(t) / 360.0);
        m.profile_score = specval::depletion_score(p).score;
    }
    registration_errors(hold, m.shift_integer_error, m.shift_subpixel_error);

    specval::write_report_csv(report, out / "report.csv");
    write_acceptance_csv(acceptance_rows(m), out / "acceptance.csv");
    stage("wrote " + (out / "acceptance.csv").string());
    return m;
}

} // namespace odenet
