#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "odenet/enhancer.hpp"
#include "odenet/specval.hpp"
#include "odenet/synth.hpp"

namespace odenet {

/// Held-out evaluation used by the pipeline's acceptance metrics.
struct EvaluationOptions {
    std::uint64_t holdout_seed = 12;     ///< terrain and noise seed of the held-out scene
    std::size_t holdout_tiles = 200;     ///< tiles per level in the held-out tile set
    std::size_t seam_crop = 256;         ///< low-res crop size for the stride comparison
    std::size_t seam_stride = 8;         ///< compared against window.stride
};

struct PipelineConfig {
    synth::TerrainSpec terrain;
    synth::RenderOptions render;         ///< sun geometry lives in render.sun
    DatasetOptions dataset;
    Architecture architecture;
    NetTrainConfig train_interp;
    NetTrainConfig train_enhance;
    WindowPlan window;                   ///< tile, stride; threads and mode are set at run time
    specval::ScoreOptions validation;
    EvaluationOptions evaluation;
    std::size_t enhance_levels = 2;
    std::size_t threads = 1;
    std::string output_dir = "out";
};

/// Strict JSON parse: absent keys take defaults, unknown keys and out-of-range
/// values raise ErrorKind::Config with the dotted key path in the message.
PipelineConfig parse_config_text(std::string_view text);
PipelineConfig parse_config(const std::filesystem::path& path);

/// Full resolved config as pretty JSON; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const PipelineConfig& config);

/// Cross-section constraints the end-to-end pipeline needs (grid sizes versus
/// levels and crops). Raises ErrorKind::Config.
void validate_for_pipeline(const PipelineConfig& config);

/// The dataset, architecture and training sections as compact JSON, echoed into bundle.json.
std::string training_echo(const PipelineConfig& config);

bool operator==(const PipelineConfig& a, const PipelineConfig& b);

} // namespace odenet
