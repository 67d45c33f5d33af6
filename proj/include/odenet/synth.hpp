#pragma once

#include <cstddef>
#include <cstdint>

#include "odenet/raster.hpp"

namespace odenet::synth {

struct TerrainSpec {
    std::size_t n = 1024;   ///< grid size, power of two, >= 64
    double beta = 1.8;      ///< amplitude spectrum ~ |k|^-beta, in (0.5, 4]
    double rms = 150.0;     ///< target elevation standard deviation, meters
    double spacing = 100.0; ///< meters per pixel
    std::uint64_t seed = 11;

    void validate() const;
};

/// Sun direction. Azimuth is measured clockwise from +x with y pointing down
/// the raster, so azimuth 90 points toward +y.
struct SunGeometry {
    double azimuth_deg = 135.0;
    double elevation_deg = 30.0;

    void validate() const;
    /// Unit vector (x, y, up) toward the sun.
    void unit_vector(double& sx, double& sy, double& sz) const;
};

struct RenderOptions {
    SunGeometry sun;
    double albedo = 0.7;
    double noise_sigma = 0.005;
    std::uint64_t seed = 11;
};

/// Power-law spectral synthesis with random phases under Hermitian symmetry.
/// Zero mean, standard deviation equal to spec.rms; deterministic in the seed.
HeightGrid generate_terrain(const TerrainSpec& spec);

/// Lambertian shading albedo * max(0, n . s) plus hashed Gaussian noise, clamped to [0, 1].
ImageGrid render_lambertian(const HeightGrid& dem, const RenderOptions& options);

} // namespace odenet::synth
