#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"

#include "odenet/enhancer.hpp"
#include "odenet/error.hpp"
#include "odenet/rng.hpp"

namespace odenet {
namespace {

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

PairSet build_dataset(const HeightGrid& high_dem, const ImageGrid& image, const DatasetOptions& options) {
    if (image.width() != high_dem.width() || image.height() != high_dem.height())
        throw Error(ErrorKind::ShapeMismatch, "image resolution must equal DEM resolution");
    if (options.levels < 1) throw Error(ErrorKind::OutOfRange, "levels must be >= 1");
    if (options.tiles_per_level < 1) throw Error(ErrorKind::OutOfRange, "tiles_per_level must be >= 1");

    PairSet set;
    set.coordinate_hash = 0xcbf29ce484222325ULL;
    set.pairs.reserve(options.levels * options.tiles_per_level);
    Rng rng(options.seed);

    for (std::size_t level = 0; level < options.levels; ++level) {
        const std::size_t factor = std::size_t{1} << level;
        if (high_dem.width() % factor != 0 || high_dem.height() % factor != 0 ||
            high_dem.width() / factor < kTile || high_dem.height() / factor < kTile)
            throw Error(ErrorKind::BadDimensions, "pyramid level " + std::to_string(level) +
                                                      " exhausts the DEM resolution for 32x32 tiles");
        const HeightGrid dem = factor == 1 ? high_dem : downsample_mean(high_dem, factor);
        const ImageGrid img = factor == 1 ? image : downsample_mean(image, factor);
        // Even origins keep each target's 2x block structure aligned with the level grid.
        const std::size_t span_x = (dem.width() - kTile) / 2 + 1;
        const std::size_t span_y = (dem.height() - kTile) / 2 + 1;

        for (std::size_t t = 0; t < options.tiles_per_level; ++t) {
            const std::size_t x = 2 * rng.below(span_x);
            const std::size_t y = 2 * rng.below(span_y);
            set.coordinate_hash = fnv1a(fnv1a(fnv1a(set.coordinate_hash, level), x), y);

            const HeightGrid target = crop(dem, x, y, kTile, kTile);
            const HeightGrid low = downsample_mean(target, 2);
            const ImageGrid tile_img = crop(img, x, y, kTile, kTile);
            TrainingPair p;
            p.low.assign(low.values().begin(), low.values().end());
            p.target.assign(target.values().begin(), target.values().end());
            p.image.assign(tile_img.values().begin(), tile_img.values().end());
            p.tile_mean = low.mean();
            p.level = level;
            p.x = x;
            p.y = y;
            set.pairs.push_back(std::move(p));
        }
    }

    // Normalization constants over all emitted tiles.
    double height_ss = 0.0, image_ss = 0.0;
    std::size_t count = 0;
    for (const TrainingPair& p : set.pairs) {
        double img_mean = 0.0;
        for (double v : p.image) img_mean += v;
        img_mean /= static_cast<double>(p.image.size());
        for (std::size_t i = 0; i < p.target.size(); ++i) {
            height_ss += (p.target[i] - p.tile_mean) * (p.target[i] - p.tile_mean);
            image_ss += (p.image[i] - img_mean) * (p.image[i] - img_mean);
        }
        count += p.target.size();
    }
    set.sigma_global = options.sigma_global.value_or(
        std::max(kSigmaFloor, std::sqrt(height_ss / static_cast<double>(count))));
    set.image_sigma = options.image_sigma.value_or(
        std::max(kSigmaFloor, std::sqrt(image_ss / static_cast<double>(count))));
    if (!(set.sigma_global > 0.0) || !(set.image_sigma > 0.0))
        throw Error(ErrorKind::OutOfRange, "normalization constants must be positive");

    const double inv = 1.0 / set.sigma_global;
    for (TrainingPair& p : set.pairs) {
        for (double& v : p.low) v = (v - p.tile_mean) * inv;
        for (double& v : p.target) v = (v - p.tile_mean) * inv;
    }
    return set;
}

namespace {

constexpr int kPairSetVersion = 1;

HeightGrid strip(const PairSet& set, std::size_t side, std::vector<double> TrainingPair::*field) {
    std::vector<double> v;
    v.reserve(set.pairs.size() * side * side);
    for (const TrainingPair& p : set.pairs) v.insert(v.end(), (p.*field).begin(), (p.*field).end());
    return HeightGrid(side, side * set.pairs.size(), 1.0, std::move(v));
}

void unstrip(const HeightGrid& g, std::size_t side, PairSet& set, std::vector<double> TrainingPair::*field) {
    if (g.width() != side || g.height() != side * set.pairs.size())
        throw Error(ErrorKind::InconsistentPayload, "tile strip dimensions do not match dataset.json");
    const auto v = g.values();
    for (std::size_t i = 0; i < set.pairs.size(); ++i)
        (set.pairs[i].*field).assign(v.begin() + static_cast<std::ptrdiff_t>(i * side * side),
                                     v.begin() + static_cast<std::ptrdiff_t>((i + 1) * side * side));
}

} // namespace

void save_pair_set(const PairSet& set, const std::filesystem::path& dir) {
    if (set.pairs.empty()) throw Error(ErrorKind::OutOfRange, "cannot save an empty dataset");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create dataset directory " + dir.string());
    nlohmann::ordered_json j;
    j["format_version"] = kPairSetVersion;
    j["sigma_global"] = set.sigma_global;
    j["image_sigma"] = set.image_sigma;
    j["coordinate_hash"] = set.coordinate_hash;
    j["count"] = set.pairs.size();
    auto tiles = nlohmann::ordered_json::array();
    for (const TrainingPair& p : set.pairs) tiles.push_back({p.level, p.x, p.y, p.tile_mean});
    j["tiles"] = std::move(tiles);
    std::ofstream f(dir / "dataset.json", std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + (dir / "dataset.json").string());
    f << j.dump() << '\n';
    save_height_grid(strip(set, kLowTile, &TrainingPair::low), dir / "low.pfm");
    save_height_grid(strip(set, kTile, &TrainingPair::target), dir / "target.pfm");
    save_height_grid(strip(set, kTile, &TrainingPair::image), dir / "image.pfm");
}

PairSet load_pair_set(const std::filesystem::path& dir) {
    std::ifstream f(dir / "dataset.json");
    if (!f) throw Error(ErrorKind::Io, "cannot open " + (dir / "dataset.json").string());
    PairSet set;
    try {
        const auto j = nlohmann::ordered_json::parse(f);
        if (j.at("format_version").get<int>() != kPairSetVersion)
            throw Error(ErrorKind::VersionMismatch, "unsupported dataset format version");
        set.sigma_global = j.at("sigma_global").get<double>();
        set.image_sigma = j.at("image_sigma").get<double>();
        set.coordinate_hash = j.at("coordinate_hash").get<std::uint64_t>();
        const auto& tiles = j.at("tiles");
        if (tiles.size() != j.at("count").get<std::size_t>() || tiles.empty())
            throw Error(ErrorKind::InconsistentPayload, "dataset.json tile count mismatch");
        for (const auto& t : tiles) {
            TrainingPair p;
            p.level = t.at(0).get<std::size_t>();
            p.x = t.at(1).get<std::size_t>();
            p.y = t.at(2).get<std::size_t>();
            p.tile_mean = t.at(3).get<double>();
            set.pairs.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::BadHeader, std::string("invalid dataset.json: ") + e.what());
    }
    if (!(set.sigma_global > 0.0) || !(set.image_sigma > 0.0))
        throw Error(ErrorKind::OutOfRange, "dataset normalization constants must be positive");
    unstrip(load_height_grid(dir / "low.pfm"), kLowTile, set, &TrainingPair::low);
    unstrip(load_height_grid(dir / "target.pfm"), kTile, set, &TrainingPair::target);
    unstrip(load_height_grid(dir / "image.pfm"), kTile, set, &TrainingPair::image);
    return set;
}

} // namespace odenet
