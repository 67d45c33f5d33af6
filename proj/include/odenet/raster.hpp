#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace odenet {

/// Elevation raster in meters. Row-major, x to the right, y downward.
class HeightGrid {
public:
    HeightGrid() = default;
    HeightGrid(std::size_t width, std::size_t height, double spacing, double fill = 0.0);
    HeightGrid(std::size_t width, std::size_t height, double spacing, std::vector<double> values);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }
    double spacing() const noexcept { return spacing_; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    double& operator()(std::size_t x, std::size_t y) noexcept { return values_[y * width_ + x]; }
    double operator()(std::size_t x, std::size_t y) const noexcept { return values_[y * width_ + x]; }

    double mean() const noexcept;
    double stddev() const noexcept;

    /// Throws Error(NonFinite) if any value is NaN or infinite.
    void check_finite() const;

    friend bool operator==(const HeightGrid&, const HeightGrid&) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    double spacing_ = 1.0;
    std::vector<double> values_;
};

/// Normalized radiance raster; values live in [0, 1].
class ImageGrid {
public:
    ImageGrid() = default;
    ImageGrid(std::size_t width, std::size_t height, double fill = 0.0);
    ImageGrid(std::size_t width, std::size_t height, std::vector<double> values);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    double& operator()(std::size_t x, std::size_t y) noexcept { return values_[y * width_ + x]; }
    double operator()(std::size_t x, std::size_t y) const noexcept { return values_[y * width_ + x]; }

    /// Reinterprets the radiance values as a unit-spacing grid (for spectra, resampling).
    HeightGrid as_height_grid(double spacing = 1.0) const;
    /// Clamps to [0, 1].
    static ImageGrid from_height_grid(const HeightGrid& grid);

    friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<double> values_;
};

/// Per-pixel slope components (rise over run).
struct VectorField {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> dx;
    std::vector<double> dy;
};

// File I/O. Formats are documented in docs/formats.md.
HeightGrid load_height_grid(const std::filesystem::path& path);
void save_height_grid(const HeightGrid& grid, const std::filesystem::path& path);
ImageGrid load_image(const std::filesystem::path& path);
void save_image(const ImageGrid& image, const std::filesystem::path& path);

// Resampling.
HeightGrid downsample_mean(const HeightGrid& grid, std::size_t factor);
ImageGrid downsample_mean(const ImageGrid& image, std::size_t factor);

/// Catmull-Rom bicubic with clamped source indices. Output pixel centers map to
/// input coordinates (j + 0.5) / factor - 0.5, which keeps block means aligned
/// with downsample_mean.
HeightGrid upsample_bicubic(const HeightGrid& grid, std::size_t factor);

/// Central differences inside, one-sided at the borders, divided by spacing.
VectorField gradient(const HeightGrid& grid);

/// out(x, y) = in(x - dx, y - dy) sampled bilinearly with edge clamping.
HeightGrid shift_bilinear(const HeightGrid& grid, double dx_px, double dy_px);

/// Crop [x0, x0 + w) x [y0, y0 + h). Bounds are checked.
HeightGrid crop(const HeightGrid& grid, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);
ImageGrid crop(const ImageGrid& image, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);

/// Half-sample symmetric reflection into [0, n): -1 maps to 0, n maps to n - 1.
/// Reflecting a grid and its 2x mean-downsample this way keeps them co-registered.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) noexcept;

} // namespace odenet
