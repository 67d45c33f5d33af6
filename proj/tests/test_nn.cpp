#include <cmath>
#include <cstring>

#include "doctest.h"
#include "helpers.hpp"

#include "odenet/enhancer.hpp"
#include "odenet/error.hpp"
#include "odenet/nn.hpp"

using namespace odenet;
using namespace odenet::nn;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    return Tensor(s, testing::random_values(s.count(), seed, lo, hi));
}

// Independent direct-sum 3x3 "same" convolution.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
    const Shape& s = x.shape();
    const std::size_t co_n = w.shape().n;
    Tensor y({s.n, co_n, s.h, s.w});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t co = 0; co < co_n; ++co)
            for (std::size_t i = 0; i < s.h; ++i)
                for (std::size_t j = 0; j < s.w; ++j) {
                    double acc = b.empty() ? 0.0 : b[co];
                    for (std::size_t ci = 0; ci < s.c; ++ci)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const long yy = static_cast<long>(i) + ky - 1, xx = static_cast<long>(j) + kx - 1;
                                if (yy < 0 || xx < 0 || yy >= static_cast<long>(s.h) || xx >= static_cast<long>(s.w))
                                    continue;
                                acc += w.at(co, ci, static_cast<std::size_t>(ky), static_cast<std::size_t>(kx)) *
                                       x.at(n, ci, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                            }
                    y.at(n, co, i, j) = acc;
                }
    return y;
}

// Moves every value at least `gap` away from zero so leaky-ReLU kinks stay
// outside the finite-difference stencil.
void push_from_zero(Tensor& t, double gap) {
    for (double& v : t.data())
        if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
}

double relative_error(double analytic, double numeric) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    return scale < 1e-9 ? std::abs(analytic - numeric) : std::abs(analytic - numeric) / scale;
}

// Scalar objective L = sum_i r_i * out_i with fixed random r.
struct Probe {
    Tensor r;
    double operator()(const Network& net, const Tensor& x) const {
        const Tensor y = forward(net, x);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
        return s;
    }
};

struct GradCheck {
    double worst_param = 0.0;
    double worst_input = 0.0;
};

GradCheck check_gradients(Network& net, Tensor x, std::size_t max_params = SIZE_MAX, std::uint64_t seed = 1) {
    const double h = 1e-6;
    Probe probe{random_tensor(net.output_shape(x.shape()), seed + 100)};
    ForwardCache cache;
    forward(net, x, &cache);
    const Gradients g = backward(net, cache, probe.r, true);
    GradCheck out;

    std::vector<Tensor*> params = net.parameters();
    std::size_t total = 0;
    for (Tensor* p : params) total += p->size();
    const std::size_t step = std::max<std::size_t>(1, total / std::min(total, max_params));
    std::size_t flat = 0;
    for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t i = 0; i < params[k]->size(); ++i, ++flat) {
            if (flat % step != 0) continue;
            double& v = (*params[k])[i];
            const double keep = v;
            v = keep + h;
            const double up = probe(net, x);
            v = keep - h;
            const double down = probe(net, x);
            v = keep;
            out.worst_param = std::max(out.worst_param, relative_error(g.params[k][i], (up - down) / (2 * h)));
        }
    for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 64)) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = probe(net, x);
        x[i] = keep - h;
        const double down = probe(net, x);
        x[i] = keep;
        out.worst_input = std::max(out.worst_input, relative_error(g.input[i], (up - down) / (2 * h)));
    }
    return out;
}

} // namespace

TEST_CASE("conv all-ones example") {
    const Tensor x({1, 1, 3, 3}, 1.0), w({1, 1, 3, 3}, 1.0), b({1, 1, 1, 1}, 0.0);
    const Tensor y = conv2d_forward(x, w, b);
    CHECK(y.at(0, 0, 1, 1) == 9.0);
    CHECK(y.at(0, 0, 0, 1) == 6.0);
    CHECK(y.at(0, 0, 1, 0) == 6.0);
    CHECK(y.at(0, 0, 0, 0) == 4.0);
    CHECK(y.at(0, 0, 2, 2) == 4.0);
}

TEST_CASE("conv delta kernel is the identity") {
    const Tensor x = random_tensor({2, 3, 5, 4}, 1);
    Tensor w({3, 3, 3, 3}), b({1, 3, 1, 1});
    for (std::size_t c = 0; c < 3; ++c) w.at(c, c, 1, 1) = 1.0;
    CHECK(conv2d_forward(x, w, b) == x);
}

TEST_CASE("conv agrees with a direct-sum oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CAPTURE(seed);
        const Tensor x = random_tensor({2, 3, 7 + seed, 5 + 2 * seed}, seed);
        const Tensor w = random_tensor({4, 3, 3, 3}, seed + 10);
        const Tensor b = random_tensor({1, 4, 1, 1}, seed + 20);
        const Tensor fast = conv2d_forward(x, w, b), slow = conv_oracle(x, w, b);
        double worst = 0.0;
        for (std::size_t i = 0; i < fast.size(); ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
        CHECK(worst <= 1e-12);
        const Tensor nb = conv2d_forward(x, w, Tensor()), nslow = conv_oracle(x, w, Tensor());
        for (std::size_t i = 0; i < nb.size(); ++i) CHECK(std::abs(nb[i] - nslow[i]) <= 1e-12);
    }
}

TEST_CASE("conv is linear in its input without bias") {
    const Tensor x = random_tensor({1, 2, 6, 5}, 30), y = random_tensor({1, 2, 6, 5}, 31);
    const Tensor w = random_tensor({3, 2, 3, 3}, 32);
    const double a = 1.7, b = -0.6;
    Tensor mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    const Tensor fx = conv2d_forward(x, w, Tensor()), fy = conv2d_forward(y, w, Tensor());
    const Tensor fm = conv2d_forward(mix, w, Tensor());
    for (std::size_t i = 0; i < fm.size(); ++i) CHECK(std::abs(fm[i] - (a * fx[i] + b * fy[i])) <= 1e-12);
}

TEST_CASE("forward examples") {
    const Tensor x = random_tensor({1, 2, 3, 3}, 4);
    CHECK(forward(Network("empty", {}), x) == x);

    const Network leaky("l", {LayerSpec::leaky(1)});
    const Tensor y = forward(leaky, Tensor({1, 1, 1, 2}, std::vector<double>{-1.0, 2.0}));
    CHECK(y[0] == doctest::Approx(-0.1).epsilon(1e-15));
    CHECK(y[1] == 2.0);

    const Network up("u", {LayerSpec::upsample(1)});
    const Tensor u = forward(up, Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
    REQUIRE(u.shape() == Shape{1, 1, 4, 4});
    const double expect[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    for (std::size_t i = 0; i < 16; ++i) CHECK(u[i] == expect[i]);

    const Network cat("c", {LayerSpec::conv(2, 3), LayerSpec::concat(3, 2)});
    const Tensor z = forward(cat, x);
    REQUIRE(z.shape() == Shape{1, 5, 3, 3});
    for (std::size_t i = 0; i < 18; ++i) CHECK(z[27 + i] == x[i]);
}

TEST_CASE("channel chaining is validated") {
    CHECK_THROWS_AS(Network("bad", {LayerSpec::conv(1, 4), LayerSpec::conv(3, 1)}), Error);
    CHECK_THROWS_AS(forward(Network("n", {LayerSpec::conv(2, 1)}), Tensor({1, 3, 4, 4})), Error);
}

TEST_CASE("zero output gradient gives zero gradients") {
    Network net("n", {LayerSpec::conv(2, 4), LayerSpec::leaky(4), LayerSpec::conv(4, 1)});
    net.init_he_uniform(3);
    const Tensor x = random_tensor({2, 2, 6, 6}, 5);
    ForwardCache cache;
    const Tensor y = forward(net, x, &cache);
    const Gradients g = backward(net, cache, Tensor(y.shape()), true);
    for (const Tensor& t : g.params)
        for (double v : t.data()) CHECK(v == 0.0);
    for (double v : g.input.data()) CHECK(v == 0.0);
}

TEST_CASE("layer gradients match central finite differences") {
    SUBCASE("conv") {
        Network net("c", {LayerSpec::conv(3, 2)});
        net.init_he_uniform(1);
        for (Tensor* p : net.parameters())
            for (double& v : p->data()) v += 0.1;
        const auto r = check_gradients(net, random_tensor({2, 3, 5, 6}, 2));
        CHECK(r.worst_param <= 1e-6);
        CHECK(r.worst_input <= 1e-6);
    }
    SUBCASE("conv without bias") {
        Network net("c", {LayerSpec::conv(2, 3, false)});
        net.init_he_uniform(2);
        CHECK(net.parameters().size() == 1);
        const auto r = check_gradients(net, random_tensor({1, 2, 4, 4}, 3));
        CHECK(r.worst_param <= 1e-6);
        CHECK(r.worst_input <= 1e-6);
    }
    SUBCASE("leaky relu") {
        Network net("l", {LayerSpec::leaky(2)});
        Tensor x = random_tensor({2, 2, 4, 4}, 3);
        push_from_zero(x, 1e-3);
        CHECK(check_gradients(net, x).worst_input <= 1e-6);
    }
    SUBCASE("upsample") {
        Network net("u", {LayerSpec::upsample(2)});
        CHECK(check_gradients(net, random_tensor({1, 2, 3, 4}, 4)).worst_input <= 1e-6);
    }
    SUBCASE("concat skip") {
        Network net("k", {LayerSpec::conv(2, 2), LayerSpec::concat(2, 2), LayerSpec::conv(4, 1)});
        net.init_he_uniform(5);
        const auto r = check_gradients(net, random_tensor({2, 2, 4, 5}, 6));
        CHECK(r.worst_param <= 1e-6);
        CHECK(r.worst_input <= 1e-6);
    }
}

TEST_CASE("default corrector network gradient check on 50 parameters") {
    Network net = make_enhance_net(Architecture{});
    net.init_he_uniform(11);
    Tensor x = random_tensor({2, 2, 32, 32}, 12);
    const auto r = check_gradients(net, x, 50);
    CHECK(r.worst_param <= 1e-5);
}

TEST_CASE("l1 loss") {
    const Tensor a = random_tensor({2, 1, 3, 3}, 7);
    const LossResult same = l1_loss(a, a);
    CHECK(same.value == 0.0);
    for (double g : same.grad.data()) CHECK(g == 0.0);

    Tensor b = a;
    for (double& v : b.data()) v -= 0.375;
    CHECK(l1_loss(a, b).value == doctest::Approx(0.375).epsilon(1e-15));

    const Tensor t = random_tensor(a.shape(), 8);
    const LossResult r = l1_loss(a, t);
    const double h = 1e-7;
    for (std::size_t i = 0; i < a.size(); ++i) {
        Tensor p = a, m = a;
        p[i] += h;
        m[i] -= h;
        const double fd = (l1_loss(p, t).value - l1_loss(m, t).value) / (2 * h);
        CHECK(std::abs(fd - r.grad[i]) <= 1e-7);
    }
    CHECK_THROWS_AS(l1_loss(a, Tensor({1, 1, 3, 3})), Error);
}

TEST_CASE("adam") {
    Network net("n", {LayerSpec::conv(1, 2)});
    net.init_he_uniform(1);
    const Network before = net;
    AdamState adam(net, AdamConfig{0.01});
    std::vector<Tensor> grads;
    for (const Tensor* p : std::as_const(net).parameters()) grads.emplace_back(p->shape(), 0.0);

    adam.apply(net.parameters(), grads);
    CHECK(net == before);

    for (Tensor& g : grads)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = (i % 2 == 0 ? 1.0 : -1.0) * (0.5 + static_cast<double>(i));
    Network fresh = before;
    AdamState first(fresh, AdamConfig{0.01});
    first.apply(fresh.parameters(), grads);
    const auto p0 = std::as_const(before).parameters();
    const auto p1 = std::as_const(fresh).parameters();
    for (std::size_t k = 0; k < p0.size(); ++k)
        for (std::size_t i = 0; i < p0[k]->size(); ++i) {
            const double expected = -0.01 * (grads[k][i] > 0 ? 1.0 : -1.0);
            CHECK(std::abs(((*p1[k])[i] - (*p0[k])[i]) - expected) <= 0.01 * 1e-6);
        }

    Network a = before, b = before;
    AdamState sa(a, AdamConfig{}), sb(b, AdamConfig{});
    for (int step = 0; step < 100; ++step) {
        for (Tensor& g : grads)
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::sin(0.1 * step + static_cast<double>(i));
        sa.apply(a.parameters(), grads);
        sb.apply(b.parameters(), grads);
    }
    CHECK(a == b);

    grads[0][0] = NAN;
    CHECK_THROWS_AS(sa.apply(a.parameters(), grads), Error);
}

TEST_CASE("stale forward cache is rejected") {
    Network net("n", {LayerSpec::conv(1, 1)});
    net.init_he_uniform(1);
    ForwardCache cache;
    const Tensor y = forward(net, Tensor({1, 1, 4, 4}, 1.0), &cache);
    net.parameters();
    try {
        backward(net, cache, y);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::StaleCache);
    }
}

TEST_CASE("training: identity with a delta kernel is already optimal") {
    Network net("id", {LayerSpec::conv(1, 1)});
    net.parameters()[0]->at(0, 0, 1, 1) = 1.0;
    const Tensor x = random_tensor({32, 1, 6, 6}, 3);
    const Dataset data{x, x, {}};
    TrainConfig cfg;
    cfg.epochs = 1;
    const TrainResult r = train(net, data, cfg);
    CHECK(r.loss_history.front() < 1e-6);
    CHECK(evaluate_l1(net, data) < 1e-6);
}

TEST_CASE("training: blur inversion toy problem") {
    // Targets are smooth random 8x8 images (box-filtered noise); inputs are a
    // further mild [1 2 1]/4 separable blur of the targets.
    const std::size_t n = 200;
    Network box("box", {LayerSpec::conv(1, 1)});
    for (double& v : box.parameters()[0]->data()) v = 1.0 / 9.0;
    Network mild("mild", {LayerSpec::conv(1, 1)});
    const double k[3] = {0.25, 0.5, 0.25};
    for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) mild.parameters()[0]->at(0, 0, y, x) = k[y] * k[x];
    const Tensor t = forward(box, random_tensor({n, 1, 8, 8}, 7, -3.0, 3.0));
    const Tensor x = forward(mild, t);

    auto fresh = [] {
        Network net("inv", {LayerSpec::conv(1, 8), LayerSpec::leaky(8), LayerSpec::conv(8, 1)});
        net.init_he_uniform(7);
        return net;
    };
    Network net = fresh();
    const Dataset data{x, t, {}};
    const double initial = evaluate_l1(net, data);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.lr = 3e-3;
    cfg.seed = 7;
    const TrainResult r = train(net, data, cfg);
    CHECK(r.loss_history.size() == 30);
    MESSAGE("blur inversion: initial " << initial << ", final " << evaluate_l1(net, data));
    CHECK(evaluate_l1(net, data) < 0.3 * initial);

    SUBCASE("same seed, same history, any thread count") {
        Network a = fresh(), b = fresh();
        cfg.epochs = 3;
        TrainConfig single = cfg;
        cfg.threads = 3;
        single.threads = 1;
        CHECK(train(a, data, cfg).loss_history == train(b, data, single).loss_history);
        CHECK(a == b);
    }
}

TEST_CASE("training rejects bad configs and diverging runs") {
    Network net("n", {LayerSpec::conv(1, 1)});
    net.init_he_uniform(1);
    const Tensor x = random_tensor({4, 1, 4, 4}, 1);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(net, Dataset{x, x, {}}, cfg), Error);
    CHECK_THROWS_AS(train(net, Dataset{Tensor({0, 1, 4, 4}), Tensor({0, 1, 4, 4}), {}}, TrainConfig{}), Error);
}

TEST_CASE("model file roundtrip and format") {
    const auto dir = testing::temp_dir("model");
    Network net("toy/1", {LayerSpec::conv(2, 3), LayerSpec::leaky(3), LayerSpec::conv(3, 1, false)});
    net.init_he_uniform(9);
    save_model(net, dir / "m.oden");
    const Network back = load_model(dir / "m.oden", std::string_view("toy/1"));
    CHECK(back == net);

    // Decode the header with an independent little-endian reader.
    const std::string bytes = testing::slurp(dir / "m.oden");
    auto u32 = [&](std::size_t off) {
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(i)]);
        return v;
    };
    CHECK(bytes.substr(0, 4) == "ODEN");
    CHECK(u32(4) == 1);
    CHECK(u32(8) == 5);
    CHECK(bytes.substr(12, 5) == "toy/1");
    CHECK(u32(17) == 3);
    const std::uint32_t row0[8] = {0, 2, 3, 3, 2, 3, 3, 3};
    for (int i = 0; i < 8; ++i) CHECK(u32(21 + 4 * static_cast<std::size_t>(i)) == row0[i]);
    CHECK(u32(21 + 32 * 2 + 28) == 0); // bias length of the bias-free conv
    const std::size_t params = 3 * 2 * 9 + 3 + 1 * 3 * 9;
    CHECK(bytes.size() == 21 + 3 * 32 + params * 8);
    double first;
    std::memcpy(&first, bytes.data() + 21 + 96, 8);
    CHECK(first == net.layers()[0].weight[0]);

    auto kind_of = [&](const std::string& content, std::optional<std::string_view> expect = std::nullopt) {
        testing::spit(dir / "x.oden", content);
        try {
            load_model(dir / "x.oden", expect);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::Io;
    };
    CHECK(kind_of(bytes.substr(0, bytes.size() - 3)) == ErrorKind::Truncated);
    CHECK(kind_of(bytes + "zz") == ErrorKind::InconsistentPayload);
    CHECK(kind_of("NOPE" + bytes.substr(4)) == ErrorKind::BadMagic);
    std::string v2 = bytes;
    v2[4] = 2;
    CHECK(kind_of(v2) == ErrorKind::VersionMismatch);
    CHECK(kind_of(bytes, std::string_view("InterpNet/1")) == ErrorKind::DescriptorMismatch);

    try {
        testing::spit(dir / "t.oden", bytes.substr(0, bytes.size() - 8));
        load_model(dir / "t.oden");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("truncated payload") != std::string::npos);
    }
}
