#include "odenet/nn.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <string>

#include "odenet/error.hpp"
#include "odenet/rng.hpp"

namespace odenet::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[noreturn]] void shape_error(const std::string& what, const Shape& got) {
    throw Error(ErrorKind::ShapeMismatch, what + " (got " + got.str() + ")");
}

// Convolution runs on zero-padded planes of (h + 2) x (w + 2): for each of the
// nine taps, out[:, p] += W_tap * in[:, p + offset] over a contiguous column range.
struct Padded {
    std::size_t h, w, pw, plane, first, len;
    Padded(std::size_t h_, std::size_t w_)
        : h(h_), w(w_), pw(w_ + 2), plane((h_ + 2) * (w_ + 2)), first(w_ + 3), len(plane - 2 * (w_ + 3)) {}
    std::ptrdiff_t offset(std::size_t k) const {
        return (static_cast<std::ptrdiff_t>(k / 3) - 1) * static_cast<std::ptrdiff_t>(pw) +
               static_cast<std::ptrdiff_t>(k % 3) - 1;
    }
    Eigen::Index col(std::size_t k) const { return static_cast<Eigen::Index>(first) + offset(k); }
};

void pad_into(std::span<const double> in, std::size_t c, const Padded& g, RowMatrix& out) {
    out.setZero(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(g.plane));
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < g.h; ++y) {
            const double* src = in.data() + (ci * g.h + y) * g.w;
            double* dst = out.data() + ci * g.plane + (y + 1) * g.pw + 1;
            std::copy(src, src + g.w, dst);
        }
}

void unpad_into(const RowMatrix& in, std::size_t c, const Padded& g, std::span<double> out, bool add) {
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < g.h; ++y) {
            const double* src = in.data() + ci * g.plane + (y + 1) * g.pw + 1;
            double* dst = out.data() + (ci * g.h + y) * g.w;
            for (std::size_t x = 0; x < g.w; ++x) dst[x] = add ? dst[x] + src[x] : src[x];
        }
}

// taps[k](co, ci) = weight[co, ci, k / 3, k % 3]
std::array<RowMatrix, 9> kernel_taps(const Tensor& weight) {
    const Shape& ws = weight.shape();
    std::array<RowMatrix, 9> taps;
    for (std::size_t k = 0; k < 9; ++k) {
        taps[k].resize(static_cast<Eigen::Index>(ws.n), static_cast<Eigen::Index>(ws.c));
        for (std::size_t co = 0; co < ws.n; ++co)
            for (std::size_t ci = 0; ci < ws.c; ++ci)
                taps[k](static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(ci)) =
                    weight[(co * ws.c + ci) * 9 + k];
    }
    return taps;
}

void check_conv_shapes(const Shape& in, const Tensor& weight, const Tensor& bias) {
    const Shape& ws = weight.shape();
    if (ws.h != 3 || ws.w != 3) shape_error("conv kernel must be 3x3", ws);
    if (ws.c != in.c) shape_error("conv input channels do not match weights", in);
    if (!bias.empty() && bias.size() != ws.n) shape_error("conv bias length does not match output channels", bias.shape());
}

void conv_backward(const Tensor& input, const Tensor& weight, const Tensor& out_grad, Tensor& dweight,
                   Tensor& dbias, Tensor* dinput) {
    const Shape& s = input.shape();
    const std::size_t cout = weight.shape().n;
    const Padded g(s.h, s.w);
    const auto taps = kernel_taps(weight);
    std::array<RowMatrix, 9> dtaps;
    for (auto& d : dtaps) d.setZero(static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(s.c));
    const auto len = static_cast<Eigen::Index>(g.len), first = static_cast<Eigen::Index>(g.first);
    RowMatrix xin, gout, din;
    for (std::size_t n = 0; n < s.n; ++n) {
        pad_into(input.sample(n), s.c, g, xin);
        pad_into(out_grad.sample(n), cout, g, gout);
        const auto gmid = gout.middleCols(first, len);
        for (std::size_t k = 0; k < 9; ++k) dtaps[k].noalias() += gmid * xin.middleCols(g.col(k), len).transpose();
        if (!dbias.empty())
            for (std::size_t co = 0; co < cout; ++co) dbias[co] += gout.row(static_cast<Eigen::Index>(co)).sum();
        if (dinput != nullptr) {
            din.setZero(static_cast<Eigen::Index>(s.c), static_cast<Eigen::Index>(g.plane));
            for (std::size_t k = 0; k < 9; ++k)
                din.middleCols(g.col(k), len).noalias() += taps[k].transpose() * gmid;
            unpad_into(din, s.c, g, dinput->sample(n), false);
        }
    }
    for (std::size_t k = 0; k < 9; ++k)
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ci = 0; ci < s.c; ++ci)
                dweight[(co * s.c + ci) * 9 + k] +=
                    dtaps[k](static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(ci));
}

} // namespace

std::string Shape::str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
           std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.count(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.count())
        throw Error(ErrorKind::ShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                                  " does not match shape " + shape_.str());
}

void Tensor::fill(double v) noexcept {
    for (double& x : data_) x = v;
}

bool Tensor::all_finite() const noexcept {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

Tensor Tensor::slice(std::size_t first, std::size_t count) const {
    if (first + count > shape_.n) throw Error(ErrorKind::OutOfRange, "tensor slice out of range");
    const std::size_t ss = shape_.sample_size();
    std::vector<double> d(data_.begin() + static_cast<std::ptrdiff_t>(first * ss),
                          data_.begin() + static_cast<std::ptrdiff_t>((first + count) * ss));
    return Tensor({count, shape_.c, shape_.h, shape_.w}, std::move(d));
}

Tensor Tensor::gather(std::span<const std::size_t> indices) const {
    Tensor out({indices.size(), shape_.c, shape_.h, shape_.w});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= shape_.n) throw Error(ErrorKind::OutOfRange, "gather index out of range");
        auto src = sample(indices[i]);
        std::copy(src.begin(), src.end(), out.sample(i).begin());
    }
    return out;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    const Shape& s = input.shape();
    check_conv_shapes(s, weight, bias);
    const std::size_t cout = weight.shape().n;
    Tensor out({s.n, cout, s.h, s.w});
    const Padded g(s.h, s.w);
    const auto taps = kernel_taps(weight);
    const auto len = static_cast<Eigen::Index>(g.len), first = static_cast<Eigen::Index>(g.first);
    RowMatrix xin, acc;
    for (std::size_t n = 0; n < s.n; ++n) {
        pad_into(input.sample(n), s.c, g, xin);
        acc.resize(static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(g.plane));
        for (std::size_t co = 0; co < cout; ++co)
            acc.row(static_cast<Eigen::Index>(co)).setConstant(bias.empty() ? 0.0 : bias[co]);
        for (std::size_t k = 0; k < 9; ++k)
            acc.middleCols(first, len).noalias() += taps[k] * xin.middleCols(g.col(k), len);
        unpad_into(acc, cout, g, out.sample(n), false);
    }
    return out;
}

Network::Network(std::string descriptor, std::vector<LayerSpec> specs)
    : descriptor_(std::move(descriptor)) {
    if (!specs.empty()) input_channels_ = specs.front().in_channels;
    std::size_t ch = input_channels_;
    for (const LayerSpec& spec : specs) {
        if (spec.in_channels != ch)
            throw Error(ErrorKind::ShapeMismatch, "layer expects " + std::to_string(spec.in_channels) +
                                                      " channels but receives " + std::to_string(ch));
        Layer layer{spec, {}, {}};
        switch (spec.kind) {
        case LayerKind::Conv3x3Same:
            if (spec.in_channels == 0 || spec.out_channels == 0)
                throw Error(ErrorKind::ShapeMismatch, "conv channels must be positive");
            layer.weight = Tensor({spec.out_channels, spec.in_channels, 3, 3});
            if (spec.bias) layer.bias = Tensor({1, spec.out_channels, 1, 1});
            break;
        case LayerKind::LeakyRelu:
        case LayerKind::UpsampleNearest2x:
            if (spec.bias) throw Error(ErrorKind::ShapeMismatch, "only convolutions carry a bias");
            if (spec.out_channels != spec.in_channels)
                throw Error(ErrorKind::ShapeMismatch, "elementwise layer cannot change channel count");
            break;
        case LayerKind::ConcatSkip:
            if (spec.bias) throw Error(ErrorKind::ShapeMismatch, "only convolutions carry a bias");
            if (spec.out_channels != spec.in_channels + input_channels_)
                throw Error(ErrorKind::ShapeMismatch,
                            "concat_skip output must equal input plus network-input channels");
            break;
        }
        ch = spec.out_channels;
        layers_.push_back(std::move(layer));
    }
}

Network::Network(std::string descriptor, std::vector<Layer> layers, std::size_t input_channels)
    : descriptor_(std::move(descriptor)), layers_(std::move(layers)), input_channels_(input_channels) {}

std::size_t Network::output_channels() const noexcept {
    return layers_.empty() ? input_channels_ : layers_.back().spec.out_channels;
}

std::size_t Network::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

void Network::init_he_uniform(std::uint64_t seed) {
    Rng rng(seed);
    for (Layer& l : layers_) {
        if (!l.has_parameters()) continue;
        const double limit = std::sqrt(6.0 / static_cast<double>(l.spec.in_channels * 9));
        for (double& w : l.weight.data()) w = rng.uniform(-limit, limit);
        l.bias.fill(0.0);
    }
    ++revision_;
}

std::vector<Tensor*> Network::parameters() {
    ++revision_;
    std::vector<Tensor*> out;
    for (Layer& l : layers_)
        if (l.has_parameters()) {
            out.push_back(&l.weight);
            if (!l.bias.empty()) out.push_back(&l.bias);
        }
    return out;
}

std::vector<const Tensor*> Network::parameters() const {
    std::vector<const Tensor*> out;
    for (const Layer& l : layers_)
        if (l.has_parameters()) {
            out.push_back(&l.weight);
            if (!l.bias.empty()) out.push_back(&l.bias);
        }
    return out;
}

Shape Network::output_shape(const Shape& input) const {
    if (input.c != input_channels_ && !layers_.empty())
        shape_error("network expects " + std::to_string(input_channels_) + " input channels", input);
    Shape s = input;
    for (const Layer& l : layers_) {
        if (l.spec.kind == LayerKind::UpsampleNearest2x) {
            s.h *= 2;
            s.w *= 2;
        } else if (l.spec.kind == LayerKind::ConcatSkip && (s.h != input.h || s.w != input.w)) {
            shape_error("concat_skip needs matching spatial size", s);
        }
        s.c = l.spec.out_channels;
    }
    return s;
}

Tensor forward(const Network& net, const Tensor& input, ForwardCache* cache) {
    net.output_shape(input.shape());
    if (cache != nullptr) {
        cache->net = &net;
        cache->revision = net.revision();
        cache->activations.clear();
        cache->activations.push_back(input);
    }
    Tensor x = input;
    for (const Layer& layer : net.layers()) {
        const Shape& s = x.shape();
        Tensor y;
        switch (layer.spec.kind) {
        case LayerKind::Conv3x3Same:
            y = conv2d_forward(x, layer.weight, layer.bias);
            break;
        case LayerKind::LeakyRelu:
            y = x;
            for (double& v : y.data())
                if (v <= 0.0) v *= kLeakySlope;
            break;
        case LayerKind::UpsampleNearest2x:
            y = Tensor({s.n, s.c, s.h * 2, s.w * 2});
            for (std::size_t n = 0; n < s.n; ++n)
                for (std::size_t c = 0; c < s.c; ++c)
                    for (std::size_t yy = 0; yy < s.h * 2; ++yy)
                        for (std::size_t xx = 0; xx < s.w * 2; ++xx)
                            y.at(n, c, yy, xx) = x.at(n, c, yy / 2, xx / 2);
            break;
        case LayerKind::ConcatSkip: {
            const std::size_t skip = input.shape().c;
            y = Tensor({s.n, s.c + skip, s.h, s.w});
            for (std::size_t n = 0; n < s.n; ++n) {
                auto dst = y.sample(n);
                auto a = x.sample(n);
                auto b = input.sample(n);
                std::copy(a.begin(), a.end(), dst.begin());
                std::copy(b.begin(), b.end(), dst.begin() + static_cast<std::ptrdiff_t>(a.size()));
            }
            break;
        }
        }
        x = std::move(y);
        if (cache != nullptr) cache->activations.push_back(x);
    }
    return x;
}

Gradients backward(const Network& net, const ForwardCache& cache, const Tensor& output_grad,
                   bool want_input_grad) {
    const auto layers = net.layers();
    if (cache.net != &net || cache.revision != net.revision() ||
        cache.activations.size() != layers.size() + 1)
        throw Error(ErrorKind::StaleCache, "forward cache does not belong to this network state");
    if (output_grad.shape() != cache.activations.back().shape())
        throw Error(ErrorKind::ShapeMismatch, "output gradient shape " + output_grad.shape().str() +
                                                  " does not match forward output " +
                                                  cache.activations.back().shape().str());

    const Tensor& net_input = cache.activations.front();
    Gradients grads;
    for (const Layer& l : layers)
        if (l.has_parameters()) {
            grads.params.emplace_back(l.weight.shape());
            if (!l.bias.empty()) grads.params.emplace_back(l.bias.shape());
        }
    // Gradient w.r.t. the network input collected through concat_skip layers.
    Tensor skip_grad(net_input.shape());
    bool skip_used = false;

    Tensor g = output_grad;
    std::size_t p = grads.params.size();
    for (std::size_t i = layers.size(); i-- > 0;) {
        const Layer& layer = layers[i];
        const Tensor& x = cache.activations[i];
        const Shape& s = x.shape();
        const bool need_dx = i > 0 || want_input_grad;
        Tensor dx;
        switch (layer.spec.kind) {
        case LayerKind::Conv3x3Same: {
            Tensor no_bias;
            const bool has_bias = !layer.bias.empty();
            p -= has_bias ? 2 : 1;
            if (need_dx) dx = Tensor(s);
            conv_backward(x, layer.weight, g, grads.params[p], has_bias ? grads.params[p + 1] : no_bias,
                          need_dx ? &dx : nullptr);
            break;
        }
        case LayerKind::LeakyRelu:
            dx = std::move(g);
            for (std::size_t j = 0; j < dx.size(); ++j)
                if (x[j] <= 0.0) dx[j] *= kLeakySlope;
            break;
        case LayerKind::UpsampleNearest2x:
            dx = Tensor(s);
            for (std::size_t n = 0; n < s.n; ++n)
                for (std::size_t c = 0; c < s.c; ++c)
                    for (std::size_t yy = 0; yy < s.h * 2; ++yy)
                        for (std::size_t xx = 0; xx < s.w * 2; ++xx)
                            dx.at(n, c, yy / 2, xx / 2) += g.at(n, c, yy, xx);
            break;
        case LayerKind::ConcatSkip: {
            dx = Tensor(s);
            skip_used = true;
            for (std::size_t n = 0; n < s.n; ++n) {
                auto src = g.sample(n);
                auto a = dx.sample(n);
                auto b = skip_grad.sample(n);
                for (std::size_t j = 0; j < a.size(); ++j) a[j] = src[j];
                for (std::size_t j = 0; j < b.size(); ++j) b[j] += src[a.size() + j];
            }
            break;
        }
        }
        g = std::move(dx);
    }
    if (want_input_grad) {
        grads.input = layers.empty() ? output_grad : std::move(g);
        if (skip_used)
            for (std::size_t j = 0; j < grads.input.size(); ++j) grads.input[j] += skip_grad[j];
    }
    return grads;
}

LossResult l1_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw Error(ErrorKind::ShapeMismatch,
                    "l1 loss shapes differ: " + pred.shape().str() + " vs " + target.shape().str());
    LossResult r{0.0, Tensor(pred.shape())};
    const double inv = pred.size() == 0 ? 0.0 : 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        r.value += std::abs(d);
        r.grad[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }
    r.value *= inv;
    return r;
}

AdamState::AdamState(const Network& net, AdamConfig config) : config_(config) {
    for (const Tensor* p : net.parameters()) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
    }
}

void AdamState::apply(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw Error(ErrorKind::ShapeMismatch, "adam parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape() != m_[i].shape() || grads[i].shape() != m_[i].shape())
            throw Error(ErrorKind::ShapeMismatch, "adam moment shape mismatch at parameter " + std::to_string(i));
        if (!grads[i].all_finite())
            throw Error(ErrorKind::NonFinite, "non-finite gradient for parameter tensor " + std::to_string(i) +
                                                  " at step " + std::to_string(step_ + 1));
    }
    ++step_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->data();
        auto g = grads[i].data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const double mhat = m[j] / c1, vhat = v[j] / c2;
            p[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

} // namespace odenet::nn
