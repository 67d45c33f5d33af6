#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "odenet/cli.hpp"
#include "odenet/enhancer.hpp"
#include "odenet/error.hpp"
#include "odenet/raster.hpp"
#include "odenet/specval.hpp"
#include "odenet/synth.hpp"

namespace py = pybind11;
using namespace odenet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(std::span<const double> values, std::size_t width, std::size_t height) {
    Array a({height, width});
    std::copy(values.begin(), values.end(), a.mutable_data());
    return a;
}

std::vector<double> from_array(const Array& a, std::size_t& width, std::size_t& height) {
    if (a.ndim() != 2) throw py::value_error("expected a 2D array");
    height = static_cast<std::size_t>(a.shape(0));
    width = static_cast<std::size_t>(a.shape(1));
    return std::vector<double>(a.data(), a.data() + a.size());
}

HeightGrid to_height(const Array& a, double spacing) {
    std::size_t w, h;
    auto v = from_array(a, w, h);
    return HeightGrid(w, h, spacing, std::move(v));
}

ImageGrid to_image(const Array& a) {
    std::size_t w, h;
    auto v = from_array(a, w, h);
    return ImageGrid(w, h, std::move(v));
}

py::dict score_dict(const specval::DepletionScore& s) {
    py::dict d;
    d["score"] = s.score;
    d["c0"] = s.c0;
    d["c1"] = s.c1;
    d["c2"] = s.c2;
    return d;
}

EnhanceMode parse_mode(const std::string& mode) {
    if (mode == "full") return EnhanceMode::Full;
    if (mode == "interp") return EnhanceMode::InterpOnly;
    if (mode == "bicubic") return EnhanceMode::Bicubic;
    throw py::value_error("mode must be full, interp or bicubic");
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Image-guided DEM enhancement: terrain synthesis, enhancement and spectral validation";

    py::register_exception<Error>(m, "OdenetError", PyExc_RuntimeError);

    m.def(
        "generate_terrain",
        [](std::size_t n, double beta, double rms, double spacing, std::uint64_t seed) {
            const HeightGrid g = synth::generate_terrain({n, beta, rms, spacing, seed});
            return to_array(g.values(), g.width(), g.height());
        },
        py::arg("n") = 1024, py::arg("beta") = 1.8, py::arg("rms") = 150.0, py::arg("spacing") = 100.0,
        py::arg("seed") = 11, "Power-law terrain in meters, shape (n, n).");

    m.def(
        "render",
        [](const Array& dem, double spacing, double azimuth, double elevation, double albedo, double noise,
           std::uint64_t seed) {
            synth::RenderOptions opt;
            opt.sun = {azimuth, elevation};
            opt.albedo = albedo;
            opt.noise_sigma = noise;
            opt.seed = seed;
            const ImageGrid img = synth::render_lambertian(to_height(dem, spacing), opt);
            return to_array(img.values(), img.width(), img.height());
        },
        py::arg("dem"), py::arg("spacing") = 100.0, py::arg("azimuth") = 135.0, py::arg("elevation") = 30.0,
        py::arg("albedo") = 0.7, py::arg("noise") = 0.005, py::arg("seed") = 11,
        "Lambertian rendering of a DEM; radiance in [0, 1].");

    m.def(
        "depletion_score",
        [](const std::vector<double>& profile) { return score_dict(specval::depletion_score({profile})); },
        py::arg("profile"), "c2/c0 of an angular profile.");

    m.def(
        "score_grid",
        [](const Array& grid, std::size_t n_theta, double r_min_frac, double sigma_px, bool raw) {
            specval::ScoreOptions opt;
            opt.n_theta = n_theta;
            opt.r_min_frac = r_min_frac;
            opt.sigma_px = sigma_px;
            opt.magnitude = raw ? specval::Magnitude::Raw : specval::Magnitude::Log;
            return score_dict(specval::score_grid(to_height(grid, 1.0), opt).score);
        },
        py::arg("grid"), py::arg("n_theta") = 360, py::arg("r_min_frac") = 0.1, py::arg("sigma_px") = 0.0,
        py::arg("raw") = false, "Directional depletion score of a square even grid.");

    m.def(
        "recovery_fraction",
        [](double image, double enhanced, double reference) {
            return specval::recovery_fraction(image, enhanced, reference).fraction;
        },
        py::arg("score_image"), py::arg("score_enhanced"), py::arg("score_reference"));

    m.def(
        "estimate_shift",
        [](const Array& a, const Array& b) {
            const specval::Shift s = specval::estimate_shift(to_height(a, 1.0), to_height(b, 1.0));
            return py::make_tuple(s.dx, s.dy);
        },
        py::arg("a"), py::arg("b"), "Shift d such that b(x) ~ a(x - d), in pixels (dx, dy).");

    m.def(
        "slope_rmse",
        [](const Array& a, const Array& b, double spacing, bool register_b) {
            return specval::slope_compare(to_height(a, spacing), to_height(b, spacing), register_b).rmse;
        },
        py::arg("a"), py::arg("b"), py::arg("spacing") = 1.0, py::arg("register") = false);

    m.def(
        "load_dem",
        [](const std::filesystem::path& path) {
            const HeightGrid g = load_height_grid(path);
            return py::make_tuple(to_array(g.values(), g.width(), g.height()), g.spacing());
        },
        py::arg("path"), "Returns (heights, spacing).");

    m.def(
        "save_dem", [](const std::filesystem::path& path, const Array& a, double spacing) {
            save_height_grid(to_height(a, spacing), path);
        },
        py::arg("path"), py::arg("heights"), py::arg("spacing") = 1.0);

    m.def(
        "enhance",
        [](const std::filesystem::path& bundle_dir, const Array& dem, const Array& image, double spacing,
           std::size_t levels, std::size_t stride, const std::string& mode) {
            const ModelBundle bundle = load_bundle(bundle_dir);
            WindowPlan plan;
            plan.stride = stride;
            plan.mode = parse_mode(mode);
            const HeightGrid g = enhance_recursive(to_height(dem, spacing), to_image(image), bundle, levels, plan);
            return py::make_tuple(to_array(g.values(), g.width(), g.height()), g.spacing());
        },
        py::arg("bundle"), py::arg("dem"), py::arg("image"), py::arg("spacing") = 1.0, py::arg("levels") = 1,
        py::arg("stride") = 16, py::arg("mode") = "full", "Returns (heights, spacing) at 2^levels resolution.");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a subcommand; returns (exit_code, stdout, stderr).");
}
