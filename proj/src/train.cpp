#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>

#include "odenet/error.hpp"
#include "odenet/nn.hpp"
#include "odenet/rng.hpp"

namespace odenet::nn {
namespace {

struct SampleResult {
    double abs_sum = 0.0;
    std::vector<Tensor> grads;
};

// Forward + L1 + backward for one sample. The loss gradient is scaled by the
// whole batch's element count so per-sample gradients sum to the batch gradient.
SampleResult run_sample(const Network& net, const Tensor& inputs, const Tensor& targets, const Tensor& base,
                      double inv_count) {
    SampleResult r;
    ForwardCache cache;
    Tensor pred = forward(net, inputs, &cache);
    Tensor grad(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] + (base.empty() ? 0.0 : base[i]) - targets[i];
        r.abs_sum += std::abs(d);
        grad[i] = d > 0.0 ? inv_count : (d < 0.0 ? -inv_count : 0.0);
    }
    r.grads = backward(net, cache, grad, false).params;
    return r;
}

std::vector<std::pair<std::size_t, std::size_t>> split(std::size_t count, std::size_t parts) {
    parts = std::max<std::size_t>(1, std::min(parts, count));
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t k = 0; k < parts; ++k) {
        const std::size_t a = count * k / parts, b = count * (k + 1) / parts;
        if (b > a) out.emplace_back(a, b - a);
    }
    return out;
}

template <class Fn>
void parallel_chunks(std::size_t chunks, Fn&& fn) {
    if (chunks <= 1) {
        for (std::size_t k = 0; k < chunks; ++k) fn(k);
        return;
    }
    std::vector<std::jthread> workers;
    for (std::size_t k = 1; k < chunks; ++k) workers.emplace_back([&fn, k] { fn(k); });
    fn(0);
}

} // namespace

void Dataset::validate(const Network& net) const {
    if (inputs.shape().n == 0) throw Error(ErrorKind::OutOfRange, "training dataset is empty");
    const Shape out = net.output_shape(inputs.shape());
    if (targets.shape() != out)
        throw Error(ErrorKind::ShapeMismatch,
                    "targets " + targets.shape().str() + " do not match network output " + out.str());
    if (!base.empty() && base.shape() != out)
        throw Error(ErrorKind::ShapeMismatch, "base " + base.shape().str() + " does not match output " + out.str());
}

TrainResult train(Network& net, const Dataset& data, const TrainConfig& config) {
    data.validate(net);
    if (config.epochs == 0 || config.batch == 0 || !(config.lr > 0.0))
        throw Error(ErrorKind::OutOfRange, "epochs, batch and lr must be positive");

    const std::size_t n = data.size();
    AdamState adam(net, AdamConfig{config.lr});
    TrainResult result;
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(config.seed + epoch);
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        double epoch_abs = 0.0;
        std::size_t epoch_count = 0;
        for (std::size_t start = 0; start < n; start += config.batch) {
            const std::size_t bsize = std::min(config.batch, n - start);
            const std::span<const std::size_t> idx(order.data() + start, bsize);
            const Tensor x = data.inputs.gather(idx);
            const Tensor t = data.targets.gather(idx);
            const Tensor b = data.base.empty() ? Tensor() : data.base.gather(idx);
            const double inv_count = 1.0 / static_cast<double>(t.size());

            // One gradient per sample, reduced in sample order, so the update does
            // not depend on how samples were spread over threads.
            std::vector<SampleResult> partial(bsize);
            const auto chunks = split(bsize, config.threads);
            parallel_chunks(chunks.size(), [&](std::size_t k) {
                const auto [first, count] = chunks[k];
                for (std::size_t i = first; i < first + count; ++i)
                    partial[i] = run_sample(net, x.slice(i, 1), t.slice(i, 1),
                                            b.empty() ? Tensor() : b.slice(i, 1), inv_count);
            });

            std::vector<Tensor> grads = std::move(partial.front().grads);
            double abs_sum = partial.front().abs_sum;
            for (std::size_t k = 1; k < partial.size(); ++k) {
                abs_sum += partial[k].abs_sum;
                for (std::size_t p = 0; p < grads.size(); ++p) {
                    auto dst = grads[p].data();
                    auto src = partial[k].grads[p].data();
                    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                }
            }
            if (!std::isfinite(abs_sum))
                throw Error(ErrorKind::Divergence, "training loss became non-finite in epoch " +
                                                       std::to_string(epoch + 1));
            const auto params = net.parameters();
            adam.apply(params, grads);
            epoch_abs += abs_sum;
            epoch_count += t.size();
        }
        const double loss = epoch_abs / static_cast<double>(epoch_count);
        if (!std::isfinite(loss))
            throw Error(ErrorKind::Divergence, "training loss became non-finite in epoch " + std::to_string(epoch + 1));
        result.loss_history.push_back(loss);
        if (config.on_epoch) config.on_epoch(epoch, loss);
        adam.config().lr *= config.lr_decay;
    }
    return result;
}

Tensor predict(const Network& net, const Tensor& inputs, std::size_t threads) {
    const Shape out_shape = net.output_shape(inputs.shape());
    Tensor out(out_shape);
    const auto chunks = split(inputs.shape().n, threads);
    parallel_chunks(chunks.size(), [&](std::size_t k) {
        const auto [first, count] = chunks[k];
        // Bounded sub-batches keep activation memory small.
        constexpr std::size_t kStep = 4;
        for (std::size_t s = first; s < first + count; s += kStep) {
            const std::size_t m = std::min(kStep, first + count - s);
            const Tensor y = forward(net, inputs.slice(s, m));
            std::copy(y.data().begin(), y.data().end(),
                      out.data().begin() + static_cast<std::ptrdiff_t>(s * out_shape.sample_size()));
        }
    });
    return out;
}

double evaluate_l1(const Network& net, const Dataset& data, std::size_t threads) {
    data.validate(net);
    Tensor pred = predict(net, data.inputs, threads);
    if (!data.base.empty())
        for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += data.base[i];
    return l1_loss(pred, data.targets).value;
}

} // namespace odenet::nn
