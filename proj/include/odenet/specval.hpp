#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "odenet/raster.hpp"

namespace odenet::specval {

/// Centered spectrum ln(1 + |F|) (or raw |F|) of an n x n grid, DC at (n/2, n/2).
struct SpectrumGrid {
    std::size_t n = 0;
    std::vector<double> values;

    double operator()(std::size_t x, std::size_t y) const noexcept { return values[y * n + x]; }
};

/// values[t * n_r + r]: sample at radius r along angle 2 pi t / n_theta.
struct PolarSpectrum {
    std::size_t n_theta = 0;
    std::size_t n_r = 0;
    std::vector<double> values;

    double operator()(std::size_t t, std::size_t r) const noexcept { return values[t * n_r + r]; }
};

struct AngularProfile {
    std::vector<double> values; ///< one entry per angle
};

struct DepletionScore {
    double score = 0.0; ///< c2 / c0
    double c0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
};

inline constexpr std::size_t kHistogramBins = 64;
inline constexpr double kHistogramMaxDeg = 45.0;

struct SlopeReport {
    double rmse = 0.0;    ///< RMS of |grad a - grad b| (rise/run)
    double max_error = 0.0;
    double dx = 0.0;      ///< registration offset applied to b, pixels
    double dy = 0.0;
    /// Slope-angle histograms, 64 bins over [0, 45] degrees; steeper slopes land in the last bin.
    std::array<std::size_t, kHistogramBins> hist_a{};
    std::array<std::size_t, kHistogramBins> hist_b{};
    std::array<std::size_t, kHistogramBins> hist_error{};
};

enum class Magnitude { Log, Raw };

/// out = mean + m(x) m(y) (grid - mean), m(d) = 1 - exp(-(d + 0.5)^2 / (2 sigma^2)),
/// d = distance to the nearest edge along that axis.
HeightGrid gaussian_edge_blend(const HeightGrid& grid, double sigma_px);

/// Raw 2D DFT magnitudes, centered. Used for Parseval checks and raw-mode scoring.
SpectrumGrid magnitude_spectrum(const HeightGrid& grid);
/// ln(1 + |F|), centered. Requires an even square grid.
SpectrumGrid log_power_spectrum(const HeightGrid& grid);

PolarSpectrum polar_transform(const SpectrumGrid& spec, std::size_t n_theta, std::size_t n_r);

/// profile[t] = sum over r from ceil(r_min_frac * n_r) to n_r - 1.
AngularProfile angular_profile(const PolarSpectrum& polar, double r_min_frac = 0.1);

/// c_k = |(1/N) sum_t profile[t] e^{-2 pi i k t / N}|, score = c2 / c0.
DepletionScore depletion_score(const AngularProfile& profile);

struct ScoreOptions {
    std::size_t n_theta = 360;
    std::size_t n_r = 0;          ///< 0 selects n / 2
    double r_min_frac = 0.1;
    double sigma_px = 0.0;        ///< 0 selects n / 16
    Magnitude magnitude = Magnitude::Log;
};

struct ScoreDetail {
    DepletionScore score;
    SpectrumGrid spectrum;
    PolarSpectrum polar;
    AngularProfile profile;
};

/// Edge blend, spectrum, polar transform, marginalization and score for a square even grid.
ScoreDetail score_grid(const HeightGrid& grid, const ScoreOptions& options = {});

struct RecoveryFraction {
    double fraction = 0.0;
    bool out_of_band = false; ///< true when the raw value fell outside [0, 1.5]
    double raw = 0.0;
};

/// (image - enhanced) / (image - reference), clamped to [0, 1.5].
RecoveryFraction recovery_fraction(double score_image, double score_enhanced, double score_reference_dem);

struct Shift {
    double dx = 0.0;
    double dy = 0.0;
};

/// Phase-correlation estimate of d such that b(x) ~ a(x - d); i.e. b is a
/// displaced by d. shift_bilinear(b, -d.dx, -d.dy) aligns b onto a.
Shift estimate_shift(const HeightGrid& a, const HeightGrid& b);

SlopeReport slope_compare(const HeightGrid& a, const HeightGrid& b, bool register_b);

/// Per-image min/max normalization to 16-bit PGM, for visual inspection.
void save_heatmap(std::span<const double> values, std::size_t width, std::size_t height,
                  const std::filesystem::path& path);

struct ReportRow {
    std::string name;
    double c0 = 0.0, c2 = 0.0, score = 0.0;
    double rmse = 0.0, max_err = 0.0, dx = 0.0, dy = 0.0;
};

/// CSV with header name,c0,c2,score,rmse,max_err,dx,dy.
void write_report_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path);

} // namespace odenet::specval
