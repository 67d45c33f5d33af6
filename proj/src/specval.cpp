#include "odenet/specval.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>

#include "odenet/error.hpp"
#include "odenet/fft.hpp"

namespace odenet::specval {
namespace {

double edge_mask(std::size_t i, std::size_t n, double sigma) {
    const double d = static_cast<double>(std::min(i, n - 1 - i));
    return 1.0 - std::exp(-(d + 0.5) * (d + 0.5) / (2.0 * sigma * sigma));
}

void require_even_square(const HeightGrid& grid) {
    if (grid.width() != grid.height())
        throw Error(ErrorKind::BadDimensions, "spectrum needs a square grid, got " + std::to_string(grid.width()) +
                                                  "x" + std::to_string(grid.height()));
    if (grid.width() % 2 != 0) throw Error(ErrorKind::BadDimensions, "spectrum needs an even grid size");
}

SpectrumGrid centered(const HeightGrid& grid, bool log_scale) {
    require_even_square(grid);
    const std::size_t n = grid.width();
    const auto f = fft::forward_real_2d(grid.values(), n, n);
    SpectrumGrid s{n, std::vector<double>(n * n)};
    const std::size_t h = n / 2;
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double mag = std::abs(f[((y + h) % n) * n + (x + h) % n]);
            s.values[y * n + x] = log_scale ? std::log1p(mag) : mag;
        }
    return s;
}

// Bilinear sample; taps outside the grid read as zero.
double sample_zero_padded(const SpectrumGrid& s, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const double tx = x - fx, ty = y - fy;
    const auto x0 = static_cast<std::ptrdiff_t>(fx), y0 = static_cast<std::ptrdiff_t>(fy);
    const auto n = static_cast<std::ptrdiff_t>(s.n);
    auto at = [&](std::ptrdiff_t xi, std::ptrdiff_t yi) {
        if (xi < 0 || yi < 0 || xi >= n || yi >= n) return 0.0;
        return s.values[static_cast<std::size_t>(yi * n + xi)];
    };
    return (1.0 - ty) * ((1.0 - tx) * at(x0, y0) + tx * at(x0 + 1, y0)) +
           ty * ((1.0 - tx) * at(x0, y0 + 1) + tx * at(x0 + 1, y0 + 1));
}

std::size_t bin_of(double slope) {
    const double deg = std::atan(slope) * 180.0 / std::numbers::pi;
    const auto b = static_cast<std::size_t>(std::floor(deg / kHistogramMaxDeg * static_cast<double>(kHistogramBins)));
    return std::min(b, kHistogramBins - 1);
}

} // namespace

HeightGrid gaussian_edge_blend(const HeightGrid& grid, double sigma_px) {
    const double limit = static_cast<double>(std::min(grid.width(), grid.height())) / 4.0;
    if (!(sigma_px > 0.0) || sigma_px > limit)
        throw Error(ErrorKind::OutOfRange, "blend sigma must lie in (0, min(w, h) / 4]");
    const double mean = grid.mean();
    std::vector<double> mx(grid.width()), my(grid.height());
    for (std::size_t x = 0; x < grid.width(); ++x) mx[x] = edge_mask(x, grid.width(), sigma_px);
    for (std::size_t y = 0; y < grid.height(); ++y) my[y] = edge_mask(y, grid.height(), sigma_px);
    HeightGrid out(grid.width(), grid.height(), grid.spacing());
    for (std::size_t y = 0; y < grid.height(); ++y)
        for (std::size_t x = 0; x < grid.width(); ++x)
            out(x, y) = mean + mx[x] * my[y] * (grid(x, y) - mean);
    return out;
}

SpectrumGrid magnitude_spectrum(const HeightGrid& grid) { return centered(grid, false); }

SpectrumGrid log_power_spectrum(const HeightGrid& grid) { return centered(grid, true); }

PolarSpectrum polar_transform(const SpectrumGrid& spec, std::size_t n_theta, std::size_t n_r) {
    if (n_theta < 8) throw Error(ErrorKind::OutOfRange, "n_theta must be >= 8");
    if (n_r == 0 || n_r > spec.n / 2) throw Error(ErrorKind::OutOfRange, "n_r must lie in [1, n/2]");
    PolarSpectrum p{n_theta, n_r, std::vector<double>(n_theta * n_r)};
    const double c = static_cast<double>(spec.n / 2);
    for (std::size_t t = 0; t < n_theta; ++t) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(n_theta);
        const double ct = std::cos(theta), st = std::sin(theta);
        for (std::size_t r = 0; r < n_r; ++r) {
            const double rr = static_cast<double>(r);
            p.values[t * n_r + r] = sample_zero_padded(spec, c + rr * ct, c + rr * st);
        }
    }
    return p;
}

AngularProfile angular_profile(const PolarSpectrum& polar, double r_min_frac) {
    if (!(r_min_frac >= 0.0 && r_min_frac < 1.0)) throw Error(ErrorKind::OutOfRange, "r_min_frac must lie in [0, 1)");
    const auto r0 = static_cast<std::size_t>(std::ceil(r_min_frac * static_cast<double>(polar.n_r)));
    AngularProfile prof{std::vector<double>(polar.n_theta, 0.0)};
    for (std::size_t t = 0; t < polar.n_theta; ++t)
        for (std::size_t r = r0; r < polar.n_r; ++r) prof.values[t] += polar(t, r);
    return prof;
}

DepletionScore depletion_score(const AngularProfile& profile) {
    const std::size_t n = profile.values.size();
    if (n < 8) throw Error(ErrorKind::OutOfRange, "profile needs at least 8 angles");
    std::array<double, 3> c{};
    for (int k = 0; k < 3; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(t) /
                               static_cast<double>(n);
            acc += profile.values[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        c[static_cast<std::size_t>(k)] = std::abs(acc) / static_cast<double>(n);
    }
    if (!(c[0] > 0.0)) throw Error(ErrorKind::Degenerate, "undefined score: angular profile has zero DC term");
    return {c[2] / c[0], c[0], c[1], c[2]};
}

ScoreDetail score_grid(const HeightGrid& grid, const ScoreOptions& options) {
    require_even_square(grid);
    const std::size_t n = grid.width();
    const double sigma = options.sigma_px > 0.0 ? options.sigma_px : static_cast<double>(n) / 16.0;
    const std::size_t n_r = options.n_r > 0 ? options.n_r : n / 2;
    ScoreDetail d;
    const HeightGrid blended = gaussian_edge_blend(grid, sigma);
    d.spectrum = options.magnitude == Magnitude::Log ? log_power_spectrum(blended) : magnitude_spectrum(blended);
    d.polar = polar_transform(d.spectrum, options.n_theta, n_r);
    d.profile = angular_profile(d.polar, options.r_min_frac);
    d.score = depletion_score(d.profile);
    return d;
}

RecoveryFraction recovery_fraction(double score_image, double score_enhanced, double score_reference_dem) {
    const double denom = score_image - score_reference_dem;
    if (!(denom > 1e-12))
        throw Error(ErrorKind::Degenerate, "recovery fraction needs image score above the reference DEM score");
    RecoveryFraction r;
    r.raw = (score_image - score_enhanced) / denom;
    r.out_of_band = r.raw < 0.0 || r.raw > 1.5;
    r.fraction = std::clamp(r.raw, 0.0, 1.5);
    return r;
}

Shift estimate_shift(const HeightGrid& a, const HeightGrid& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw Error(ErrorKind::ShapeMismatch, "estimate_shift needs equal dimensions");
    const std::size_t w = a.width(), h = a.height();
    const double ma = a.mean(), mb = b.mean();
    std::vector<fft::Complex> fa(w * h), fb(w * h);
    for (std::size_t i = 0; i < w * h; ++i) {
        fa[i] = a.values()[i] - ma;
        fb[i] = b.values()[i] - mb;
    }
    fa = fft::transform_2d(fa, h, w, fft::Direction::Forward);
    fb = fft::transform_2d(fb, h, w, fft::Direction::Forward);

    std::vector<fft::Complex> cross(w * h);
    double peak_mag = 0.0;
    for (std::size_t i = 0; i < w * h; ++i) {
        cross[i] = fb[i] * std::conj(fa[i]);
        peak_mag = std::max(peak_mag, std::abs(cross[i]));
    }
    if (!(peak_mag > 0.0)) throw Error(ErrorKind::Degenerate, "flat input: zero spectrum, shift undefined");
    const double floor_mag = peak_mag * 1e-12;
    for (auto& c : cross) {
        const double m = std::abs(c);
        c = m > floor_mag ? c / m : fft::Complex(0.0, 0.0);
    }
    const auto corr = fft::transform_2d(cross, h, w, fft::Direction::Inverse);

    std::size_t best = 0;
    for (std::size_t i = 1; i < w * h; ++i)
        if (corr[i].real() > corr[best].real()) best = i;
    const auto px = static_cast<std::ptrdiff_t>(best % w), py = static_cast<std::ptrdiff_t>(best / w);

    // 3x3 centroid of the non-negative correlation surface around the peak.
    double sum = 0.0, sx = 0.0, sy = 0.0;
    for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
            const auto xi = static_cast<std::size_t>((px + dx + static_cast<std::ptrdiff_t>(w)) % static_cast<std::ptrdiff_t>(w));
            const auto yi = static_cast<std::size_t>((py + dy + static_cast<std::ptrdiff_t>(h)) % static_cast<std::ptrdiff_t>(h));
            const double v = std::max(0.0, corr[yi * w + xi].real());
            sum += v;
            sx += v * static_cast<double>(dx);
            sy += v * static_cast<double>(dy);
        }
    auto wrap = [](std::ptrdiff_t p, std::size_t n) {
        return p > static_cast<std::ptrdiff_t>(n / 2) ? static_cast<double>(p) - static_cast<double>(n)
                                                      : static_cast<double>(p);
    };
    return {wrap(px, w) + sx / sum, wrap(py, h) + sy / sum};
}

SlopeReport slope_compare(const HeightGrid& a, const HeightGrid& b, bool register_b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw Error(ErrorKind::ShapeMismatch, "slope_compare needs equal dimensions");
    if (std::abs(a.spacing() - b.spacing()) > 1e-9 * a.spacing())
        throw Error(ErrorKind::ShapeMismatch, "slope_compare needs equal spacing");
    SlopeReport rep;
    HeightGrid bb = b;
    if (register_b) {
        const Shift s = estimate_shift(a, b);
        rep.dx = -s.dx;
        rep.dy = -s.dy;
        bb = shift_bilinear(b, rep.dx, rep.dy);
    }
    const VectorField ga = gradient(a), gb = gradient(bb);
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ex = ga.dx[i] - gb.dx[i], ey = ga.dy[i] - gb.dy[i];
        const double e = std::hypot(ex, ey);
        ss += e * e;
        rep.max_error = std::max(rep.max_error, e);
        ++rep.hist_a[bin_of(std::hypot(ga.dx[i], ga.dy[i]))];
        ++rep.hist_b[bin_of(std::hypot(gb.dx[i], gb.dy[i]))];
        ++rep.hist_error[bin_of(e)];
    }
    rep.rmse = std::sqrt(ss / static_cast<double>(a.size()));
    return rep;
}

void save_heatmap(std::span<const double> values, std::size_t width, std::size_t height,
                  const std::filesystem::path& path) {
    if (values.size() != width * height) throw Error(ErrorKind::ShapeMismatch, "heatmap size mismatch");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    std::vector<double> v(values.size(), 0.0);
    if (range > 0.0)
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = (values[i] - *lo) / range;
    save_image(ImageGrid(width, height, std::move(v)), path);
}

void write_report_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + path.string());
    f << "name,c0,c2,score,rmse,max_err,dx,dy\n";
    char buf[512];
    for (const ReportRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.name.c_str(), r.c0, r.c2,
                      r.score, r.rmse, r.max_err, r.dx, r.dy);
        f << buf;
    }
}

} // namespace odenet::specval
