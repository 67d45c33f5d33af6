#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "odenet/config.hpp"

namespace odenet {

/// Slope-error RMSE of one upsampling method against the held-out truth.
struct SlopeTriple {
    double odenet = 0.0;
    double interp = 0.0;
    double bicubic = 0.0;
};

struct PipelineMetrics {
    double sigma_global = 0.0;
    // Anisotropy on the training fixture.
    double score_dem = 0.0;
    double score_image = 0.0;
    // Held-out scene.
    double score_holdout_truth = 0.0;
    double score_holdout_image = 0.0;
    double score_odenet_4x = 0.0;
    double recovery = 0.0;
    bool recovery_out_of_band = false;
    TileMetrics tiles;
    SlopeTriple slope_2x;
    SlopeTriple slope_4x;
    double seam_rms = 0.0; ///< RMS difference, meters, between strides
    double profile_score = 0.0; ///< score of 1 + 0.5 cos(2 theta)
    double shift_integer_error = 0.0;
    double shift_subpixel_error = 0.0;
};

struct AcceptanceRow {
    std::string id;
    std::string metric;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

/// Pass/fail rows for every criterion the pipeline measures.
std::vector<AcceptanceRow> acceptance_rows(const PipelineMetrics& m);
void write_acceptance_csv(const std::vector<AcceptanceRow>& rows, const std::filesystem::path& path);

/// Registration check on a periodic synthetic grid: returns the worst per-axis
/// error for an integer shift and for a (0.5, 0.25) px shift.
void registration_errors(const HeightGrid& periodic, double& integer_error, double& subpixel_error);

using Logger = std::function<void(std::string_view)>;

/// gen -> render -> dataset -> train -> enhance -> validate. Writes into
/// config.output_dir: truth.pfm, image.pgm, bundle/, holdout_*.pfm,
/// enhanced_2x.pfm, enhanced_4x.pfm, loss.csv, report.csv, acceptance.csv,
/// and spectrum heatmaps. Deterministic when config.threads == 1.
PipelineMetrics run_pipeline(const PipelineConfig& config, const Logger& log = {});

} // namespace odenet
