#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odenet/tensor.hpp"

namespace odenet::nn {

inline constexpr double kLeakySlope = 0.1;

enum class LayerKind : std::uint32_t {
    Conv3x3Same = 0,       ///< 3x3 kernel, stride 1, zero padding 1
    LeakyRelu = 1,         ///< slope kLeakySlope for negative inputs
    UpsampleNearest2x = 2,
    ConcatSkip = 3,        ///< appends the network input along the channel axis
};

struct LayerSpec {
    LayerKind kind = LayerKind::LeakyRelu;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    bool bias = false; ///< convolutions only

    static LayerSpec conv(std::size_t in, std::size_t out, bool with_bias = true) {
        return {LayerKind::Conv3x3Same, in, out, with_bias};
    }
    static LayerSpec leaky(std::size_t ch) { return {LayerKind::LeakyRelu, ch, ch}; }
    static LayerSpec upsample(std::size_t ch) { return {LayerKind::UpsampleNearest2x, ch, ch}; }
    static LayerSpec concat(std::size_t ch, std::size_t skip) {
        return {LayerKind::ConcatSkip, ch, ch + skip};
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
    LayerSpec spec;
    Tensor weight; ///< (out, in, 3, 3) for convolutions, empty otherwise
    Tensor bias;   ///< (1, out, 1, 1) for convolutions with bias, empty otherwise

    bool has_parameters() const noexcept { return spec.kind == LayerKind::Conv3x3Same; }
    friend bool operator==(const Layer&, const Layer&) = default;
};

/// Ordered stack of layers. Parameters are allocated (zeroed) on construction.
class Network {
public:
    Network() = default;
    Network(std::string descriptor, std::vector<LayerSpec> specs);

    const std::string& descriptor() const noexcept { return descriptor_; }
    std::span<const Layer> layers() const noexcept { return layers_; }
    std::size_t input_channels() const noexcept { return input_channels_; }
    std::size_t output_channels() const noexcept;
    std::size_t parameter_count() const noexcept;

    /// He-uniform weights from the seeded generator, zero biases.
    void init_he_uniform(std::uint64_t seed);

    /// Parameters in declaration order (weight, then bias if present, per conv layer).
    /// Mutable access invalidates any forward cache taken earlier.
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;

    std::uint64_t revision() const noexcept { return revision_; }

    /// Shape the network produces for a given input shape; throws on mismatch.
    Shape output_shape(const Shape& input) const;

    friend bool operator==(const Network& a, const Network& b) {
        return a.descriptor_ == b.descriptor_ && a.layers_ == b.layers_;
    }

private:
    // Only for deserialization.
    Network(std::string descriptor, std::vector<Layer> layers, std::size_t input_channels);
    friend Network load_model(const std::filesystem::path&, std::optional<std::string_view>);

    std::string descriptor_;
    std::vector<Layer> layers_;
    std::size_t input_channels_ = 0;
    std::uint64_t revision_ = 0;
};

/// Activations retained by forward for use by backward.
struct ForwardCache {
    const Network* net = nullptr;
    std::uint64_t revision = 0;
    std::vector<Tensor> activations; ///< activations[i] feeds layer i; back() is the output
};

struct Gradients {
    std::vector<Tensor> params; ///< same order as Network::parameters()
    Tensor input;               ///< empty unless requested
};

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor forward(const Network& net, const Tensor& input, ForwardCache* cache = nullptr);

/// Exact reverse-mode gradients for every parameter and, optionally, the input.
Gradients backward(const Network& net, const ForwardCache& cache, const Tensor& output_grad,
                   bool want_input_grad = true);

struct LossResult {
    double value = 0.0;
    Tensor grad;
};

/// Mean absolute error; gradient sign(pred - target) / count with sign(0) = 0.
LossResult l1_loss(const Tensor& pred, const Tensor& target);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamState {
public:
    AdamState(const Network& net, AdamConfig config);

    AdamConfig& config() noexcept { return config_; }
    const AdamConfig& config() const noexcept { return config_; }
    std::uint64_t step() const noexcept { return step_; }

    /// Bias-corrected Adam update. Throws Error(NonFinite) on a non-finite gradient.
    void apply(std::span<Tensor* const> params, std::span<const Tensor> grads);

private:
    AdamConfig config_;
    std::uint64_t step_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

/// Supervised set: the network output plus `base` (when non-empty) is compared
/// with `targets` under L1.
struct Dataset {
    Tensor inputs;
    Tensor targets;
    Tensor base;

    std::size_t size() const noexcept { return inputs.shape().n; }
    void validate(const Network& net) const;
};

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch = 16;
    double lr = 1e-3;
    double lr_decay = 1.0; ///< multiplicative learning-rate factor applied after each epoch
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::function<void(std::size_t epoch, double loss)> on_epoch;
};

struct TrainResult {
    std::vector<double> loss_history; ///< mean training L1 per epoch
};

/// Mini-batch Adam on L1. Shuffling is a Fisher-Yates pass driven by seed + epoch.
/// Per-sample gradients are summed in sample order, so the trajectory does not
/// depend on the thread count.
TrainResult train(Network& net, const Dataset& data, const TrainConfig& config);

/// Forward over all samples, split into contiguous chunks across threads.
Tensor predict(const Network& net, const Tensor& inputs, std::size_t threads = 1);

/// Mean L1 of predict(net, inputs) + base against targets.
double evaluate_l1(const Network& net, const Dataset& data, std::size_t threads = 1);

void save_model(const Network& net, const std::filesystem::path& path);
/// Throws DescriptorMismatch when `expected_descriptor` is given and differs.
Network load_model(const std::filesystem::path& path,
                   std::optional<std::string_view> expected_descriptor = std::nullopt);

} // namespace odenet::nn
