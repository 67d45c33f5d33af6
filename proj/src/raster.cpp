#include "odenet/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "odenet/error.hpp"

namespace odenet {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::BadMagic: return "bad magic";
    case ErrorKind::UnsupportedChannels: return "unsupported channel count";
    case ErrorKind::BadDimensions: return "bad dimensions";
    case ErrorKind::BadHeader: return "bad header";
    case ErrorKind::BadMaxval: return "bad maxval";
    case ErrorKind::Truncated: return "truncated payload";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::StaleCache: return "stale cache";
    case ErrorKind::VersionMismatch: return "version mismatch";
    case ErrorKind::DescriptorMismatch: return "descriptor mismatch";
    case ErrorKind::InconsistentPayload: return "inconsistent payload";
    case ErrorKind::OutOfRange: return "out of range";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Config: return "config";
    }
    return "unknown";
}

namespace {

void check_dims(std::size_t w, std::size_t h, std::size_t n) {
    if (w == 0 || h == 0)
        throw Error(ErrorKind::BadDimensions, "grid dimensions must be positive");
    if (n != w * h)
        throw Error(ErrorKind::ShapeMismatch,
                    "value count " + std::to_string(n) + " does not match " + std::to_string(w) +
                        "x" + std::to_string(h));
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

template <class Grid>
Grid crop_impl(const Grid& g, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h,
               auto make) {
    if (w == 0 || h == 0 || x0 + w > g.width() || y0 + h > g.height())
        throw Error(ErrorKind::OutOfRange, "crop window outside grid");
    std::vector<double> out(w * h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out[y * w + x] = g(x0 + x, y0 + y);
    return make(std::move(out));
}

std::vector<double> block_mean(std::span<const double> in, std::size_t w, std::size_t h,
                               std::size_t factor) {
    if (factor < 2)
        throw Error(ErrorKind::OutOfRange, "downsample factor must be >= 2");
    if (w % factor != 0 || h % factor != 0)
        throw Error(ErrorKind::BadDimensions, "downsample factor " + std::to_string(factor) +
                                                  " does not divide " + std::to_string(w) + "x" +
                                                  std::to_string(h));
    const std::size_t ow = w / factor, oh = h / factor;
    const double inv = 1.0 / static_cast<double>(factor * factor);
    std::vector<double> out(ow * oh, 0.0);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double s = 0.0;
            for (std::size_t dy = 0; dy < factor; ++dy)
                for (std::size_t dx = 0; dx < factor; ++dx)
                    s += in[(oy * factor + dy) * w + ox * factor + dx];
            out[oy * ow + ox] = s * inv;
        }
    }
    return out;
}

// Catmull-Rom weights for fractional offset t in [0, 1) over taps -1, 0, 1, 2.
std::array<double, 4> catmull_rom(double t) {
    const double t2 = t * t, t3 = t2 * t;
    return {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)};
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    if (i < 0) return 0;
    if (static_cast<std::size_t>(i) >= n) return n - 1;
    return static_cast<std::size_t>(i);
}

} // namespace

HeightGrid::HeightGrid(std::size_t width, std::size_t height, double spacing, double fill)
    : HeightGrid(width, height, spacing, std::vector<double>(width * height, fill)) {}

HeightGrid::HeightGrid(std::size_t width, std::size_t height, double spacing,
                       std::vector<double> values)
    : width_(width), height_(height), spacing_(spacing), values_(std::move(values)) {
    check_dims(width, height, values_.size());
    if (!(spacing > 0.0) || !std::isfinite(spacing))
        throw Error(ErrorKind::OutOfRange, "spacing must be positive and finite");
}

double HeightGrid::mean() const noexcept { return mean_of(values_); }

double HeightGrid::stddev() const noexcept {
    const double m = mean();
    double s = 0.0;
    for (double v : values_) s += (v - m) * (v - m);
    return values_.empty() ? 0.0 : std::sqrt(s / static_cast<double>(values_.size()));
}

void HeightGrid::check_finite() const {
    for (double v : values_)
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "height grid contains NaN or Inf");
}

ImageGrid::ImageGrid(std::size_t width, std::size_t height, double fill)
    : ImageGrid(width, height, std::vector<double>(width * height, fill)) {}

ImageGrid::ImageGrid(std::size_t width, std::size_t height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
    check_dims(width, height, values_.size());
    for (double v : values_)
        if (!(v >= 0.0 && v <= 1.0))
            throw Error(ErrorKind::OutOfRange, "image values must lie in [0, 1]");
}

HeightGrid ImageGrid::as_height_grid(double spacing) const {
    return HeightGrid(width_, height_, spacing, values_);
}

ImageGrid ImageGrid::from_height_grid(const HeightGrid& grid) {
    std::vector<double> v(grid.values().begin(), grid.values().end());
    for (double& x : v) x = std::clamp(x, 0.0, 1.0);
    return ImageGrid(grid.width(), grid.height(), std::move(v));
}

HeightGrid downsample_mean(const HeightGrid& grid, std::size_t factor) {
    auto out = block_mean(grid.values(), grid.width(), grid.height(), factor);
    return HeightGrid(grid.width() / factor, grid.height() / factor,
                      grid.spacing() * static_cast<double>(factor), std::move(out));
}

ImageGrid downsample_mean(const ImageGrid& image, std::size_t factor) {
    auto out = block_mean(image.values(), image.width(), image.height(), factor);
    for (double& v : out) v = std::clamp(v, 0.0, 1.0);
    return ImageGrid(image.width() / factor, image.height() / factor, std::move(out));
}

HeightGrid upsample_bicubic(const HeightGrid& grid, std::size_t factor) {
    if (factor < 2) throw Error(ErrorKind::OutOfRange, "upsample factor must be >= 2");
    const std::size_t w = grid.width(), h = grid.height();
    const std::size_t ow = w * factor, oh = h * factor;
    const double f = static_cast<double>(factor);

    struct Taps {
        std::array<std::size_t, 4> idx;
        std::array<double, 4> wt;
    };
    auto taps_for = [f](std::size_t j, std::size_t n) {
        const double pos = (static_cast<double>(j) + 0.5) / f - 0.5;
        const double base = std::floor(pos);
        const auto b = static_cast<std::ptrdiff_t>(base);
        Taps t;
        t.wt = catmull_rom(pos - base);
        for (std::ptrdiff_t k = 0; k < 4; ++k) t.idx[k] = clamp_index(b - 1 + k, n);
        return t;
    };
    std::vector<Taps> xt(ow), yt(oh);
    for (std::size_t x = 0; x < ow; ++x) xt[x] = taps_for(x, w);
    for (std::size_t y = 0; y < oh; ++y) yt[y] = taps_for(y, h);

    // Separable: rows first into a (ow x h) buffer, then columns.
    std::vector<double> rows(ow * h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += xt[x].wt[k] * grid(xt[x].idx[k], y);
            rows[y * ow + x] = s;
        }
    std::vector<double> out(ow * oh);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += yt[y].wt[k] * rows[yt[y].idx[k] * ow + x];
            out[y * ow + x] = s;
        }
    return HeightGrid(ow, oh, grid.spacing() / f, std::move(out));
}

VectorField gradient(const HeightGrid& grid) {
    const std::size_t w = grid.width(), h = grid.height();
    if (w < 3 || h < 3) throw Error(ErrorKind::BadDimensions, "gradient needs at least 3x3");
    VectorField f{w, h, std::vector<double>(w * h), std::vector<double>(w * h)};
    const double inv = 1.0 / grid.spacing();
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double gx, gy;
            if (x == 0) gx = grid(1, y) - grid(0, y);
            else if (x == w - 1) gx = grid(w - 1, y) - grid(w - 2, y);
            else gx = 0.5 * (grid(x + 1, y) - grid(x - 1, y));
            if (y == 0) gy = grid(x, 1) - grid(x, 0);
            else if (y == h - 1) gy = grid(x, h - 1) - grid(x, h - 2);
            else gy = 0.5 * (grid(x, y + 1) - grid(x, y - 1));
            f.dx[y * w + x] = gx * inv;
            f.dy[y * w + x] = gy * inv;
        }
    }
    return f;
}

HeightGrid shift_bilinear(const HeightGrid& grid, double dx_px, double dy_px) {
    const std::size_t w = grid.width(), h = grid.height();
    const double limit = static_cast<double>(std::min(w, h)) / 4.0;
    if (!(std::abs(dx_px) < limit && std::abs(dy_px) < limit))
        throw Error(ErrorKind::OutOfRange, "shift must be smaller than a quarter of the grid");
    HeightGrid out(w, h, grid.spacing());
    for (std::size_t y = 0; y < h; ++y) {
        const double sy = static_cast<double>(y) - dy_px;
        const double fy = std::floor(sy);
        const double ty = sy - fy;
        const auto y0 = static_cast<std::ptrdiff_t>(fy);
        const std::size_t ya = clamp_index(y0, h), yb = clamp_index(y0 + 1, h);
        for (std::size_t x = 0; x < w; ++x) {
            const double sx = static_cast<double>(x) - dx_px;
            const double fx = std::floor(sx);
            const double tx = sx - fx;
            const auto x0 = static_cast<std::ptrdiff_t>(fx);
            const std::size_t xa = clamp_index(x0, w), xb = clamp_index(x0 + 1, w);
            const double top = (1.0 - tx) * grid(xa, ya) + tx * grid(xb, ya);
            const double bot = (1.0 - tx) * grid(xa, yb) + tx * grid(xb, yb);
            out(x, y) = (1.0 - ty) * top + ty * bot;
        }
    }
    return out;
}

HeightGrid crop(const HeightGrid& grid, std::size_t x0, std::size_t y0, std::size_t w,
                std::size_t h) {
    return crop_impl(grid, x0, y0, w, h, [&](std::vector<double> v) {
        return HeightGrid(w, h, grid.spacing(), std::move(v));
    });
}

ImageGrid crop(const ImageGrid& image, std::size_t x0, std::size_t y0, std::size_t w,
               std::size_t h) {
    return crop_impl(image, x0, y0, w, h,
                     [&](std::vector<double> v) { return ImageGrid(w, h, std::move(v)); });
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) noexcept {
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<std::ptrdiff_t>(n)) m = period - 1 - m;
    return static_cast<std::size_t>(m);
}

} // namespace odenet
