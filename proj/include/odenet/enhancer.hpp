#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "odenet/nn.hpp"
#include "odenet/raster.hpp"

namespace odenet {

inline constexpr std::size_t kLowTile = 16;
inline constexpr std::size_t kTile = 32;
inline constexpr double kSigmaFloor = 1e-6;

/// One 16 -> 32 training example. Heights are stored normalized:
/// (meters - tile_mean) / sigma_global, where tile_mean is the low tile's mean.
/// The image tile is raw radiance.
struct TrainingPair {
    std::vector<double> low;    ///< 16 x 16
    std::vector<double> target; ///< 32 x 32
    std::vector<double> image;  ///< 32 x 32
    double tile_mean = 0.0;
    std::size_t level = 0;
    std::size_t x = 0; ///< target tile origin in the level grid
    std::size_t y = 0;
};

struct PairSet {
    std::vector<TrainingPair> pairs;
    double sigma_global = 1.0;  ///< meters per normalized unit
    double image_sigma = 1.0;   ///< std of mean-removed image tiles
    std::uint64_t coordinate_hash = 0;
};

struct DatasetOptions {
    std::size_t levels = 3;
    std::size_t tiles_per_level = 2000;
    std::uint64_t seed = 11;
    /// Use these normalization constants instead of measuring them (held-out sets).
    std::optional<double> sigma_global;
    std::optional<double> image_sigma;
};

/// Training pairs from a pyramid of the high-resolution DEM and co-registered image.
PairSet build_dataset(const HeightGrid& high_dem, const ImageGrid& image, const DatasetOptions& options);

/// Directory layout: dataset.json (constants, per-tile level/x/y/mean) plus
/// low.pfm, target.pfm and image.pfm, each a vertical strip of tiles in pair
/// order. Tile values pass through 32-bit floats on disk.
void save_pair_set(const PairSet& set, const std::filesystem::path& dir);
PairSet load_pair_set(const std::filesystem::path& dir);

struct Architecture {
    std::size_t interp_width = 32;
    std::vector<std::size_t> enhance_widths{32, 64, 32};
    /// Feed the corrector only the image, not the interpolator output.
    bool image_only = false;
};

nn::Network make_interp_net(const Architecture& arch);
nn::Network make_enhance_net(const Architecture& arch);

struct NetTrainConfig {
    std::size_t epochs = 4;
    std::size_t batch = 16;
    double lr = 1e-3;
    double lr_decay = 0.7;
    std::uint64_t seed = 11;
};

struct ModelBundle {
    nn::Network interp_net;
    nn::Network enhance_net;
    double sigma_global = 1.0;
    double image_sigma = 1.0;
    bool image_only = false;
    std::string training_echo = "{}"; ///< JSON text echoed into bundle.json
};

struct TrainedNet {
    nn::Network net;
    std::vector<double> loss_history;
};

/// Residual-over-bicubic upsampler trained with L1 on normalized target tiles.
TrainedNet train_interp_net(const PairSet& set, const Architecture& arch, const NetTrainConfig& config,
                            std::size_t threads = 1);

/// Corrector trained on residuals target - interp(low); requires a trained interpolator.
TrainedNet train_enhance_net(const PairSet& set, const nn::Network& interp_net, const Architecture& arch,
                             const NetTrainConfig& config, std::size_t threads = 1);

/// Network input tensors for a set of pairs, under a bundle's normalization.
nn::Tensor interp_inputs(const PairSet& set);
nn::Tensor bicubic_base(const PairSet& set);
nn::Tensor image_channel(const PairSet& set, double image_sigma);
nn::Tensor enhance_inputs(const nn::Tensor& images, const nn::Tensor& interp_out, bool image_only);

enum class EnhanceMode {
    Full,       ///< interpolator + corrector
    InterpOnly, ///< interpolator alone
    Bicubic,    ///< tile-wise bicubic baseline
};

/// Normalized 32 x 32 predictions (before mean re-anchoring) for every pair.
nn::Tensor predict_pairs(const PairSet& set, const ModelBundle& bundle, EnhanceMode mode,
                         std::size_t threads = 1);

struct TileMetrics {
    double bicubic_l1 = 0.0;
    double interp_l1 = 0.0;
    double odenet_l1 = 0.0;
};

/// Mean L1 (normalized units) of mean-anchored tile predictions against targets.
TileMetrics evaluate_tiles(const PairSet& set, const ModelBundle& bundle, std::size_t threads = 1);

/// 16 x 16 DEM tile + 32 x 32 image tile -> 32 x 32 DEM tile in meters whose
/// mean equals the low tile's mean.
HeightGrid enhance_tile(const HeightGrid& low16, const ImageGrid& image32, const ModelBundle& bundle,
                        EnhanceMode mode = EnhanceMode::Full);

/// Sliding-window layout over the output grid.
struct WindowPlan {
    std::size_t tile = kTile;
    std::size_t stride = 16;
    std::size_t threads = 1;
    EnhanceMode mode = EnhanceMode::Full;

    void validate() const;
    /// Hann-type center weight sin^2(pi (i + 0.5) / tile) for 1D index i.
    double weight(std::size_t i) const;
    /// Tile origins (output pixels) covering [0, extent) with full overlap.
    std::vector<std::ptrdiff_t> origins(std::size_t extent) const;
};

/// Accumulated blending weight at every output pixel of a width x height grid.
HeightGrid blend_weight_sum(std::size_t width, std::size_t height, const WindowPlan& plan);

/// 2x enhancement by Hann-weighted overlap-add of tile results over a
/// reflection-padded lattice. The image must be exactly twice the DEM size.
HeightGrid enhance_grid(const HeightGrid& dem, const ImageGrid& image, const ModelBundle& bundle,
                        const WindowPlan& plan);

/// Applies enhance_grid n_levels times, feeding each level a mean-downsample of
/// full_image at exactly twice the current DEM resolution.
HeightGrid enhance_recursive(const HeightGrid& dem, const ImageGrid& full_image, const ModelBundle& bundle,
                             std::size_t n_levels, const WindowPlan& plan);

/// Bundle directory: interp.oden, enhance.oden, bundle.json.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

} // namespace odenet
