#include "odenet/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "odenet/error.hpp"
#include "odenet/fft.hpp"
#include "odenet/rng.hpp"

namespace odenet::synth {

void TerrainSpec::validate() const {
    if (n < 64 || !std::has_single_bit(n))
        throw Error(ErrorKind::BadDimensions, "terrain size must be a power of two >= 64, got " +
                                                  std::to_string(n));
    if (!(beta > 0.5 && beta <= 4.0)) throw Error(ErrorKind::OutOfRange, "beta must lie in (0.5, 4]");
    if (!(rms > 0.0)) throw Error(ErrorKind::OutOfRange, "rms must be positive");
    if (!(spacing > 0.0)) throw Error(ErrorKind::OutOfRange, "spacing must be positive");
}

void SunGeometry::validate() const {
    if (!(azimuth_deg >= 0.0 && azimuth_deg < 360.0))
        throw Error(ErrorKind::OutOfRange, "sun azimuth must lie in [0, 360)");
    if (!(elevation_deg > 0.0 && elevation_deg <= 90.0))
        throw Error(ErrorKind::OutOfRange, "sun elevation must lie in (0, 90]");
}

void SunGeometry::unit_vector(double& sx, double& sy, double& sz) const {
    const double az = azimuth_deg * std::numbers::pi / 180.0;
    const double el = elevation_deg * std::numbers::pi / 180.0;
    sx = std::cos(el) * std::cos(az);
    sy = std::cos(el) * std::sin(az);
    sz = std::sin(el);
}

HeightGrid generate_terrain(const TerrainSpec& spec) {
    spec.validate();
    const std::size_t n = spec.n;
    const auto wrap = [n](std::size_t i) { return (n - i) % n; };
    const auto signed_freq = [n](std::size_t i) {
        return i <= n / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
    };

    std::vector<fft::Complex> spectrum(n * n, fft::Complex(0.0, 0.0));
    Rng rng(spec.seed);
    // Visit bins in raster order; the first of each conjugate pair draws the
    // phase and writes both entries. Self-conjugate bins get a real value.
    for (std::size_t ky = 0; ky < n; ++ky) {
        for (std::size_t kx = 0; kx < n; ++kx) {
            const std::size_t cy = wrap(ky), cx = wrap(kx);
            const std::size_t idx = ky * n + kx, cidx = cy * n + cx;
            if (cidx < idx) continue;
            if (kx == 0 && ky == 0) continue;
            const double fx = signed_freq(kx), fy = signed_freq(ky);
            const double amp = std::pow(std::hypot(fx, fy), -spec.beta);
            const double phase = 2.0 * std::numbers::pi * rng.uniform();
            if (cidx == idx) {
                spectrum[idx] = fft::Complex(amp * std::cos(phase), 0.0);
            } else {
                spectrum[idx] = std::polar(amp, phase);
                spectrum[cidx] = std::conj(spectrum[idx]);
            }
        }
    }

    const auto field = fft::transform_2d(spectrum, n, n, fft::Direction::Inverse);
    std::vector<double> values(n * n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) mean += (values[i] = field[i].real());
    mean /= static_cast<double>(n * n);
    double var = 0.0;
    for (double& v : values) {
        v -= mean;
        var += v * v;
    }
    const double scale = spec.rms / std::sqrt(var / static_cast<double>(n * n));
    for (double& v : values) v *= scale;
    return HeightGrid(n, n, spec.spacing, std::move(values));
}

ImageGrid render_lambertian(const HeightGrid& dem, const RenderOptions& options) {
    options.sun.validate();
    if (!(options.albedo > 0.0 && options.albedo <= 1.0))
        throw Error(ErrorKind::OutOfRange, "albedo must lie in (0, 1]");
    if (!(options.noise_sigma >= 0.0)) throw Error(ErrorKind::OutOfRange, "noise sigma must be >= 0");

    double sx, sy, sz;
    options.sun.unit_vector(sx, sy, sz);
    const VectorField g = gradient(dem);
    std::vector<double> out(dem.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double nx = -g.dx[i], ny = -g.dy[i];
        const double cos_i = (nx * sx + ny * sy + sz) / std::sqrt(nx * nx + ny * ny + 1.0);
        double v = options.albedo * std::max(0.0, cos_i);
        if (options.noise_sigma > 0.0) v += options.noise_sigma * hashed_normal(options.seed, i);
        out[i] = std::clamp(v, 0.0, 1.0);
    }
    return ImageGrid(dem.width(), dem.height(), std::move(out));
}

} // namespace odenet::synth
