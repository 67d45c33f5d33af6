#include "odenet/enhancer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "odenet/error.hpp"

namespace odenet {
namespace {

constexpr std::size_t kLowArea = kLowTile * kLowTile;
constexpr std::size_t kArea = kTile * kTile;

std::string describe(const std::string& role, const nn::Network& net) {
    std::string d = role;
    for (const nn::Layer& l : net.layers()) {
        switch (l.spec.kind) {
        case nn::LayerKind::Conv3x3Same:
            d += " conv3x3(" + std::to_string(l.spec.in_channels) + "," + std::to_string(l.spec.out_channels) +
                 (l.spec.bias ? ")" : ",nobias)");
            break;
        case nn::LayerKind::LeakyRelu: d += " lrelu0.1"; break;
        case nn::LayerKind::UpsampleNearest2x: d += " up2"; break;
        case nn::LayerKind::ConcatSkip: d += " concat"; break;
        }
    }
    return d;
}

nn::Network with_descriptor(const std::string& role, std::vector<nn::LayerSpec> specs) {
    const nn::Network probe("", specs);
    return nn::Network(describe(role, probe), std::move(specs));
}

/// (N, 1, 32, 32) bicubic upsamples of (N, 1, 16, 16) tiles.
nn::Tensor bicubic_tiles(const nn::Tensor& low) {
    const std::size_t n = low.shape().n;
    nn::Tensor out({n, 1, kTile, kTile});
    for (std::size_t i = 0; i < n; ++i) {
        auto s = low.sample(i);
        const HeightGrid up =
            upsample_bicubic(HeightGrid(kLowTile, kLowTile, 1.0, std::vector<double>(s.begin(), s.end())), 2);
        std::copy(up.values().begin(), up.values().end(), out.sample(i).begin());
    }
    return out;
}

void add_into(nn::Tensor& a, const nn::Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

/// Normalized model output for normalized low tiles and normalized image tiles.
nn::Tensor run_model(const nn::Tensor& low, const nn::Tensor& images, const ModelBundle& bundle,
                     EnhanceMode mode, std::size_t threads) {
    nn::Tensor out = bicubic_tiles(low);
    if (mode == EnhanceMode::Bicubic) return out;
    add_into(out, nn::predict(bundle.interp_net, low, threads));
    if (mode == EnhanceMode::InterpOnly) return out;
    add_into(out, nn::predict(bundle.enhance_net, enhance_inputs(images, out, bundle.image_only), threads));
    return out;
}

void subtract_tile_means(nn::Tensor& t) {
    for (std::size_t i = 0; i < t.shape().n; ++i) {
        auto s = t.sample(i);
        double m = 0.0;
        for (double v : s) m += v;
        m /= static_cast<double>(s.size());
        for (double& v : s) v -= m;
    }
}

void normalize_image_tile(std::span<double> tile, double image_sigma) {
    double m = 0.0;
    for (double v : tile) m += v;
    m /= static_cast<double>(tile.size());
    for (double& v : tile) v = (v - m) / image_sigma;
}

} // namespace

nn::Network make_interp_net(const Architecture& arch) {
    // Bias-free, so the residual is positively homogeneous: a flat tile maps to
    // a zero residual and scaling the input scales the output.
    const std::size_t w = arch.interp_width;
    return with_descriptor("InterpNet/1 residual-over-bicubic 16->32:",
                           {nn::LayerSpec::upsample(1), nn::LayerSpec::conv(1, w, false), nn::LayerSpec::leaky(w),
                            nn::LayerSpec::conv(w, w, false), nn::LayerSpec::leaky(w),
                            nn::LayerSpec::conv(w, 1, false)});
}

nn::Network make_enhance_net(const Architecture& arch) {
    if (arch.enhance_widths.empty()) throw Error(ErrorKind::OutOfRange, "enhance_widths must not be empty");
    // Bias-free as well: zero image contrast with a flat interpolant gives a
    // zero correction.
    std::vector<nn::LayerSpec> specs;
    std::size_t ch = arch.image_only ? 1 : 2;
    for (std::size_t w : arch.enhance_widths) {
        specs.push_back(nn::LayerSpec::conv(ch, w, false));
        specs.push_back(nn::LayerSpec::leaky(w));
        ch = w;
    }
    specs.push_back(nn::LayerSpec::conv(ch, 1, false));
    return with_descriptor(arch.image_only ? "EnhanceNet/1 image 32->residual:"
                                           : "EnhanceNet/1 image+interp 32->residual:",
                           std::move(specs));
}

nn::Tensor interp_inputs(const PairSet& set) {
    nn::Tensor t({set.pairs.size(), 1, kLowTile, kLowTile});
    for (std::size_t i = 0; i < set.pairs.size(); ++i)
        std::copy(set.pairs[i].low.begin(), set.pairs[i].low.end(), t.sample(i).begin());
    return t;
}

nn::Tensor bicubic_base(const PairSet& set) { return bicubic_tiles(interp_inputs(set)); }

nn::Tensor image_channel(const PairSet& set, double image_sigma) {
    nn::Tensor t({set.pairs.size(), 1, kTile, kTile});
    for (std::size_t i = 0; i < set.pairs.size(); ++i) {
        auto s = t.sample(i);
        std::copy(set.pairs[i].image.begin(), set.pairs[i].image.end(), s.begin());
        normalize_image_tile(s, image_sigma);
    }
    return t;
}

nn::Tensor enhance_inputs(const nn::Tensor& images, const nn::Tensor& interp_out, bool image_only) {
    if (image_only) return images;
    const nn::Shape& s = images.shape();
    if (interp_out.shape() != s) throw Error(ErrorKind::ShapeMismatch, "image and interp tensors differ in shape");
    nn::Tensor t({s.n, 2, s.h, s.w});
    for (std::size_t i = 0; i < s.n; ++i) {
        auto dst = t.sample(i);
        auto a = images.sample(i);
        auto b = interp_out.sample(i);
        std::copy(a.begin(), a.end(), dst.begin());
        std::copy(b.begin(), b.end(), dst.begin() + static_cast<std::ptrdiff_t>(a.size()));
    }
    return t;
}

static nn::Tensor targets_of(const PairSet& set) {
    nn::Tensor t({set.pairs.size(), 1, kTile, kTile});
    for (std::size_t i = 0; i < set.pairs.size(); ++i)
        std::copy(set.pairs[i].target.begin(), set.pairs[i].target.end(), t.sample(i).begin());
    return t;
}

TrainedNet train_interp_net(const PairSet& set, const Architecture& arch, const NetTrainConfig& config,
                            std::size_t threads) {
    if (set.pairs.empty()) throw Error(ErrorKind::OutOfRange, "no training pairs");
    TrainedNet out{make_interp_net(arch), {}};
    out.net.init_he_uniform(config.seed);
    const nn::Dataset data{interp_inputs(set), targets_of(set), bicubic_base(set)};
    nn::TrainConfig tc;
    tc.epochs = config.epochs;
    tc.batch = config.batch;
    tc.lr = config.lr;
    tc.lr_decay = config.lr_decay;
    tc.seed = config.seed;
    tc.threads = threads;
    out.loss_history = nn::train(out.net, data, tc).loss_history;
    return out;
}

TrainedNet train_enhance_net(const PairSet& set, const nn::Network& interp_net, const Architecture& arch,
                             const NetTrainConfig& config, std::size_t threads) {
    if (set.pairs.empty()) throw Error(ErrorKind::OutOfRange, "no training pairs");
    if (interp_net.descriptor() != make_interp_net(arch).descriptor())
        throw Error(ErrorKind::DescriptorMismatch, "corrector training needs the matching interpolator");
    const nn::Tensor low = interp_inputs(set);
    nn::Tensor interp_out = bicubic_tiles(low);
    add_into(interp_out, nn::predict(interp_net, low, threads));
    nn::Tensor residual = targets_of(set);
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= interp_out[i];

    TrainedNet out{make_enhance_net(arch), {}};
    out.net.init_he_uniform(config.seed + 1);
    const nn::Dataset data{enhance_inputs(image_channel(set, set.image_sigma), interp_out, arch.image_only),
                           std::move(residual), {}};
    nn::TrainConfig tc;
    tc.epochs = config.epochs;
    tc.batch = config.batch;
    tc.lr = config.lr;
    tc.lr_decay = config.lr_decay;
    tc.seed = config.seed + 1000;
    tc.threads = threads;
    out.loss_history = nn::train(out.net, data, tc).loss_history;
    return out;
}

nn::Tensor predict_pairs(const PairSet& set, const ModelBundle& bundle, EnhanceMode mode, std::size_t threads) {
    return run_model(interp_inputs(set), image_channel(set, bundle.image_sigma), bundle, mode, threads);
}

TileMetrics evaluate_tiles(const PairSet& set, const ModelBundle& bundle, std::size_t threads) {
    const nn::Tensor targets = targets_of(set);
    auto l1 = [&](EnhanceMode mode) {
        nn::Tensor pred = predict_pairs(set, bundle, mode, threads);
        subtract_tile_means(pred);
        return nn::l1_loss(pred, targets).value;
    };
    return {l1(EnhanceMode::Bicubic), l1(EnhanceMode::InterpOnly), l1(EnhanceMode::Full)};
}

HeightGrid enhance_tile(const HeightGrid& low16, const ImageGrid& image32, const ModelBundle& bundle,
                        EnhanceMode mode) {
    if (low16.width() != kLowTile || low16.height() != kLowTile || image32.width() != kTile ||
        image32.height() != kTile)
        throw Error(ErrorKind::ShapeMismatch, "enhance_tile needs a 16x16 DEM tile and a 32x32 image tile");
    const double mean = low16.mean();
    nn::Tensor low({1, 1, kLowTile, kLowTile});
    for (std::size_t i = 0; i < kLowArea; ++i) low[i] = (low16.values()[i] - mean) / bundle.sigma_global;
    nn::Tensor img({1, 1, kTile, kTile}, std::vector<double>(image32.values().begin(), image32.values().end()));
    normalize_image_tile(img.data(), bundle.image_sigma);
    nn::Tensor out = run_model(low, img, bundle, mode, 1);
    subtract_tile_means(out);
    std::vector<double> v(kArea);
    for (std::size_t i = 0; i < kArea; ++i) v[i] = mean + bundle.sigma_global * out[i];
    return HeightGrid(kTile, kTile, low16.spacing() / 2.0, std::move(v));
}

void WindowPlan::validate() const {
    if (tile != kTile) throw Error(ErrorKind::OutOfRange, "window tile must be 32");
    if (stride == 0 || stride > tile || stride % 2 != 0)
        throw Error(ErrorKind::OutOfRange, "window stride must be even and in (0, tile]");
}

double WindowPlan::weight(std::size_t i) const {
    const double s = std::sin(std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(tile));
    return s * s;
}

std::vector<std::ptrdiff_t> WindowPlan::origins(std::size_t extent) const {
    std::vector<std::ptrdiff_t> out;
    const auto pad = static_cast<std::ptrdiff_t>(tile - stride);
    for (std::ptrdiff_t o = -pad; o < static_cast<std::ptrdiff_t>(extent); o += static_cast<std::ptrdiff_t>(stride))
        out.push_back(o);
    return out;
}

HeightGrid blend_weight_sum(std::size_t width, std::size_t height, const WindowPlan& plan) {
    plan.validate();
    HeightGrid sum(width, height, 1.0);
    for (std::ptrdiff_t oy : plan.origins(height))
        for (std::ptrdiff_t ox : plan.origins(width))
            for (std::size_t j = 0; j < plan.tile; ++j) {
                const std::ptrdiff_t y = oy + static_cast<std::ptrdiff_t>(j);
                if (y < 0 || y >= static_cast<std::ptrdiff_t>(height)) continue;
                for (std::size_t i = 0; i < plan.tile; ++i) {
                    const std::ptrdiff_t x = ox + static_cast<std::ptrdiff_t>(i);
                    if (x < 0 || x >= static_cast<std::ptrdiff_t>(width)) continue;
                    sum(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) += plan.weight(i) * plan.weight(j);
                }
            }
    return sum;
}

HeightGrid enhance_grid(const HeightGrid& dem, const ImageGrid& image, const ModelBundle& bundle,
                        const WindowPlan& plan) {
    plan.validate();
    if (dem.width() < kLowTile || dem.height() < kLowTile)
        throw Error(ErrorKind::BadDimensions, "DEM must be at least 16x16");
    if (image.width() != 2 * dem.width() || image.height() != 2 * dem.height())
        throw Error(ErrorKind::ShapeMismatch, "image must be exactly twice the DEM size");

    const std::size_t ow = image.width(), oh = image.height();
    const auto xs = plan.origins(ow), ys = plan.origins(oh);
    struct Origin {
        std::ptrdiff_t x, y;
    };
    std::vector<Origin> tiles;
    for (std::ptrdiff_t oy : ys)
        for (std::ptrdiff_t ox : xs) tiles.push_back({ox, oy});

    HeightGrid acc(ow, oh, dem.spacing() / 2.0);
    const HeightGrid wsum = blend_weight_sum(ow, oh, plan);
    std::vector<double> w1(plan.tile);
    for (std::size_t i = 0; i < plan.tile; ++i) w1[i] = plan.weight(i);

    constexpr std::size_t kBatch = 256;
    for (std::size_t first = 0; first < tiles.size(); first += kBatch) {
        const std::size_t n = std::min(kBatch, tiles.size() - first);
        nn::Tensor low({n, 1, kLowTile, kLowTile});
        nn::Tensor img({n, 1, kTile, kTile});
        std::vector<double> means(n);
        for (std::size_t t = 0; t < n; ++t) {
            const Origin o = tiles[first + t];
            auto ls = low.sample(t);
            double m = 0.0;
            for (std::size_t j = 0; j < kLowTile; ++j)
                for (std::size_t i = 0; i < kLowTile; ++i) {
                    const double v = dem(reflect_index(o.x / 2 + static_cast<std::ptrdiff_t>(i), dem.width()),
                                         reflect_index(o.y / 2 + static_cast<std::ptrdiff_t>(j), dem.height()));
                    ls[j * kLowTile + i] = v;
                    m += v;
                }
            m /= static_cast<double>(kLowArea);
            means[t] = m;
            for (double& v : ls) v = (v - m) / bundle.sigma_global;
            auto is = img.sample(t);
            for (std::size_t j = 0; j < kTile; ++j)
                for (std::size_t i = 0; i < kTile; ++i)
                    is[j * kTile + i] = image(reflect_index(o.x + static_cast<std::ptrdiff_t>(i), ow),
                                              reflect_index(o.y + static_cast<std::ptrdiff_t>(j), oh));
            normalize_image_tile(is, bundle.image_sigma);
        }
        nn::Tensor pred = run_model(low, img, bundle, plan.mode, plan.threads);
        subtract_tile_means(pred);
        // Accumulate in tile order so the result does not depend on thread count.
        for (std::size_t t = 0; t < n; ++t) {
            const Origin o = tiles[first + t];
            auto ps = pred.sample(t);
            for (std::size_t j = 0; j < kTile; ++j) {
                const std::ptrdiff_t y = o.y + static_cast<std::ptrdiff_t>(j);
                if (y < 0 || y >= static_cast<std::ptrdiff_t>(oh)) continue;
                for (std::size_t i = 0; i < kTile; ++i) {
                    const std::ptrdiff_t x = o.x + static_cast<std::ptrdiff_t>(i);
                    if (x < 0 || x >= static_cast<std::ptrdiff_t>(ow)) continue;
                    const double v = means[t] + bundle.sigma_global * ps[j * kTile + i];
                    acc(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) += w1[i] * w1[j] * v;
                }
            }
        }
    }
    for (std::size_t k = 0; k < acc.size(); ++k) acc.values()[k] /= wsum.values()[k];
    // Re-anchor the mosaic to the observation's global mean.
    const double shift = dem.mean() - acc.mean();
    for (double& v : acc.values()) v += shift;
    return acc;
}

HeightGrid enhance_recursive(const HeightGrid& dem, const ImageGrid& full_image, const ModelBundle& bundle,
                             std::size_t n_levels, const WindowPlan& plan) {
    if (n_levels < 1) throw Error(ErrorKind::OutOfRange, "n_levels must be >= 1");
    const std::size_t need = std::size_t{1} << n_levels;
    if (full_image.width() % dem.width() != 0 || full_image.height() % dem.height() != 0 ||
        full_image.width() / dem.width() != full_image.height() / dem.height())
        throw Error(ErrorKind::ShapeMismatch, "image must be an integer multiple of the DEM size");
    const std::size_t ratio = full_image.width() / dem.width();
    if (ratio < need || ratio % need != 0)
        throw Error(ErrorKind::OutOfRange, "insufficient image resolution: need " + std::to_string(need) +
                                               "x the DEM, have " + std::to_string(ratio) + "x");
    HeightGrid current = dem;
    for (std::size_t k = 0; k < n_levels; ++k) {
        const std::size_t factor = full_image.width() / (2 * current.width());
        const ImageGrid guide = factor == 1 ? full_image : downsample_mean(full_image, factor);
        current = enhance_grid(current, guide, bundle, plan);
    }
    return current;
}

} // namespace odenet
