#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "paintdet/errors.hpp"
#include "paintdet/nn.hpp"
#include "reference/reference.hpp"
#include "test_util.hpp"

using namespace paintdet;
using testutil::fd_check;
using testutil::random_tensor;

TEST_CASE("conv2d: all-ones 3x3, pad 1 sums the window") {
    Tensor in({1, 1, 3, 3}, 1.0f);
    Tensor w({1, 1, 3, 3}, 1.0f);
    Tensor b({1});
    const Tensor out = conv2d(in, w, b, 1, 1);
    CHECK(out.shape == std::vector<int>{1, 1, 3, 3});
    CHECK(out.at4(0, 0, 1, 1) == doctest::Approx(9.0f));
    CHECK(out.at4(0, 0, 0, 0) == doctest::Approx(4.0f));
}

TEST_CASE("conv2d: identity kernel reproduces the input") {
    Rng rng(1);
    const Tensor in = random_tensor({1, 1, 5, 5}, rng);
    Tensor w({1, 1, 3, 3});
    w.at4(0, 0, 1, 1) = 1.0f;
    Tensor b({1});
    const Tensor out = conv2d(in, w, b, 1, 1);
    for (size_t i = 0; i < in.numel(); ++i) CHECK(out[i] == doctest::Approx(in[i]));
}

TEST_CASE("conv2d matches the serial reference on random cases") {
    Rng rng(7);
    for (int trial = 0; trial < 60; ++trial) {
        const int C = rng.uniform_int(1, 4), O = rng.uniform_int(1, 4);
        const int H = rng.uniform_int(3, 8), W = rng.uniform_int(3, 8);
        const int K = rng.uniform_int(0, 1) ? 3 : 1;
        const int stride = rng.uniform_int(1, 2);
        const int pad = K == 3 ? rng.uniform_int(0, 1) : 0;
        const Tensor in = random_tensor({1, C, H, W}, rng);
        const Tensor w = random_tensor({O, C, K, K}, rng);
        const Tensor b = random_tensor({O}, rng);
        const Tensor fast = conv2d(in, w, b, stride, pad);
        const Tensor ref = reference::conv2d_serial(in, w, b, stride, pad);
        REQUIRE(fast.shape == ref.shape);
        for (size_t i = 0; i < fast.numel(); ++i)
            CHECK(fast[i] == doctest::Approx(ref[i]).epsilon(1e-6));
    }
}

TEST_CASE("conv2d rejects mismatched channels with a diagnostic") {
    Tensor in({1, 2, 4, 4});
    Tensor w({1, 3, 3, 3});
    Tensor b({1});
    CHECK_THROWS_WITH_AS(conv2d(in, w, b, 1, 1), doctest::Contains("input channels 2"),
                         ConfigError);
}

TEST_CASE("grad of sum(w * x) is exactly x") {
    Rng rng(3);
    Linear lin("lin", 6, 1);
    lin.w.value.fill_gaussian(rng);
    const Tensor x = random_tensor({6}, rng);
    lin.forward(x);
    Tensor dy({1}, 1.0f);
    lin.backward(dy);
    for (int i = 0; i < 6; ++i) CHECK(lin.w.grad[size_t(i)] == doctest::Approx(x[size_t(i)]));
}

TEST_CASE("untouched params keep zero grads") {
    Rng rng(4);
    Linear used("used", 4, 1), unused("unused", 4, 1);
    used.init_gaussian(rng, 1.0f);
    unused.init_gaussian(rng, 1.0f);
    used.forward(random_tensor({4}, rng));
    Tensor dy({1}, 1.0f);
    used.backward(dy);
    for (size_t i = 0; i < unused.w.grad.numel(); ++i) CHECK(unused.w.grad[i] == 0.0f);
}

TEST_CASE("conv2d + MSE gradients match central finite differences") {
    Rng rng(11);
    Conv2d conv("c", 1, 1, 3, 1, 1);
    conv.init_gaussian(rng, 0.5f);
    const Tensor x = random_tensor({1, 1, 4, 4}, rng);
    const Tensor target = random_tensor({1, 1, 4, 4}, rng);

    auto loss_fn = [&]() {
        const Tensor y = conv2d(x, conv.w.value, conv.b.value, 1, 1);
        double s = 0.0;
        for (size_t i = 0; i < y.numel(); ++i) {
            const double d = double(y[i]) - double(target[i]);
            s += d * d;
        }
        return s / double(y.numel());
    };

    const Tensor y = conv.forward(x);
    Tensor dy(y.shape);
    for (size_t i = 0; i < y.numel(); ++i) dy[i] = 2.0f * (y[i] - target[i]) / float(y.numel());
    conv.backward(dy);

    CHECK(fd_check(conv.w.value, conv.w.grad, loss_fn).max_rel_err < 1e-3);
    CHECK(fd_check(conv.b.value, conv.b.grad, loss_fn).max_rel_err < 1e-3);
}

TEST_CASE("group norm and SiLU gradients match finite differences") {
    Rng rng(13);
    GroupNorm gn("gn", 4, 2);
    SiLU act;
    Conv2d head("h", 4, 1, 1, 1, 0);
    head.init_gaussian(rng, 0.8f);
    Tensor x = random_tensor({1, 4, 3, 3}, rng);

    auto loss_fn = [&]() {
        GroupNorm g2 = gn;  // fresh caches
        SiLU a2;
        Tensor h = a2.forward(g2.forward(x));
        const Tensor y = conv2d(h, head.w.value, head.b.value, 1, 0);
        double s = 0.0;
        for (size_t i = 0; i < y.numel(); ++i) s += double(y[i]) * double(y[i]);
        return s / double(y.numel());
    };

    Tensor h = act.forward(gn.forward(x));
    const Tensor y = head.forward(h);
    Tensor dy(y.shape);
    for (size_t i = 0; i < y.numel(); ++i) dy[i] = 2.0f * y[i] / float(y.numel());
    gn.backward(act.backward(head.backward(dy)));

    CHECK(fd_check(gn.gamma.value, gn.gamma.grad, loss_fn).max_rel_err < 1e-3);
    CHECK(fd_check(gn.beta.value, gn.beta.grad, loss_fn).max_rel_err < 1e-3);
}

TEST_CASE("adam first step follows the closed form") {
    Param p("p", {3});
    p.value.fill(1.0f);
    p.grad[0] = 0.5f;
    p.grad[1] = -2.0f;
    p.grad[2] = 0.0f;
    AdamConfig cfg;
    cfg.lr = 1e-2f;
    adam_step(p, cfg);
    for (int i = 0; i < 3; ++i) {
        const float g = i == 0 ? 0.5f : (i == 1 ? -2.0f : 0.0f);
        const float expect = 1.0f - cfg.lr * g / (std::fabs(g) + cfg.eps);
        CHECK(p.value[size_t(i)] == doctest::Approx(expect).epsilon(1e-6));
    }
    CHECK(p.step_count == 1);
}

TEST_CASE("adam with zero grad leaves the value, bumps the count") {
    Param p("p", {2});
    p.value.fill(0.25f);
    AdamConfig cfg;
    adam_step(p, cfg);
    CHECK(p.value[0] == 0.25f);
    CHECK(p.step_count == 1);
}

TEST_CASE("adam: three steps of unit grad move by ~3*lr") {
    Param p("p", {1});
    AdamConfig cfg;  // lr = 3e-5 default
    for (int s = 0; s < 3; ++s) {
        p.grad.fill(1.0f);
        adam_step(p, cfg);
    }
    CHECK(std::fabs(double(p.value[0]) + 3.0 * 3e-5) < 1e-9);
}

TEST_CASE("adam is deterministic") {
    auto run = []() {
        Param p("p", {4});
        Rng rng(55);
        p.value.fill_gaussian(rng);
        p.grad.fill_gaussian(rng);
        AdamConfig cfg;
        adam_step(p, cfg);
        return p.value.data;
    };
    CHECK(run() == run());
}

TEST_CASE("adam rejects non-finite grads") {
    Param p("p", {1});
    p.grad[0] = std::nanf("");
    AdamConfig cfg;
    CHECK_THROWS_AS(adam_step(p, cfg), NumericError);
}

TEST_CASE("sinusoidal embedding basics") {
    const Tensor z = sinusoidal_embedding(0.0f, 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(z[size_t(i)] == doctest::Approx(0.0f));
        CHECK(z[size_t(4 + i)] == doctest::Approx(1.0f));
    }

    const float t = 2.5f;
    const Tensor e = sinusoidal_embedding(t, 4);
    CHECK(e[0] == doctest::Approx(std::sin(t)));
    CHECK(e[1] == doctest::Approx(std::sin(t / 100.0f)));
    CHECK(e[2] == doctest::Approx(std::cos(t)));
    CHECK(e[3] == doctest::Approx(std::cos(t / 100.0f)));

    const Tensor a = sinusoidal_embedding(1.0f, 16);
    const Tensor b = sinusoidal_embedding(2.0f, 16);
    double l2 = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) l2 += double(a[i] - b[i]) * double(a[i] - b[i]);
    CHECK(l2 > 0.0);

    CHECK_THROWS_AS(sinusoidal_embedding(1.0f, 5), ConfigError);
}
