#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "drn/ops.hpp"
#include "drn/optim.hpp"

using drn::Shape;
using drn::Tensor;

namespace {

// Runs one backward pass of sum(g * w) so that w.grad == g.
void set_grad(Tensor& w, const std::vector<float>& g) {
    w.zero_grad();
    Tensor coeff(w.shape(), std::vector<float>(g));
    Tensor y = drn::mul_channelwise(w, coeff.reshaped(Shape{1, w.numel(), 1, 1}));
    std::vector<float> ones(static_cast<std::size_t>(w.numel()), 1.0f);
    drn::backward(y, ones);
}

Tensor param(std::vector<float> v) {
    const auto n = static_cast<std::int64_t>(v.size());
    Tensor t(Shape{1, n, 1, 1}, std::move(v));
    t.set_requires_grad(true);
    return t;
}

}  // namespace

TEST(Adam, ZeroGradientIsNoOp) {
    Tensor w = param({0.5f, -1.0f, 2.0f});
    drn::Adam opt({{"w", w}});
    set_grad(w, {0.0f, 0.0f, 0.0f});
    opt.step(1e-2);
    EXPECT_EQ(w[0], 0.5f);
    EXPECT_EQ(w[1], -1.0f);
    EXPECT_EQ(w[2], 2.0f);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradient) {
    Tensor w = param({0.0f, 0.0f, 0.0f});
    drn::Adam opt({{"w", w}});
    set_grad(w, {3.0f, -0.01f, 100.0f});
    opt.step(1e-3);
    // bias-corrected first step is lr * g / (|g| + eps)
    EXPECT_NEAR(w[0], -1e-3, 1e-8);
    EXPECT_NEAR(w[1], 1e-3, 1e-8);
    EXPECT_NEAR(w[2], -1e-3, 1e-8);
}

TEST(Adam, MatchesDoublePrecisionRecurrence) {
    Tensor w = param({1.0f});
    drn::Adam opt({{"w", w}});
    double m = 0, v = 0, x = 1.0;
    const double b1 = 0.9, b2 = 0.99, eps = 1e-8, lr = 1e-2;
    const float grads[] = {0.3f, -0.7f, 0.2f, 1.5f};
    for (int t = 1; t <= 4; ++t) {
        const double g = grads[t - 1];
        set_grad(w, {grads[t - 1]});
        opt.step(lr);
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
        EXPECT_NEAR(w[0], x, 1e-6) << "step " << t;
    }
}

TEST(Adam, DeterministicAcrossRuns) {
    auto run = [] {
        Tensor w = param({0.1f, 0.2f});
        drn::Adam opt({{"w", w}});
        for (int i = 0; i < 5; ++i) {
            set_grad(w, {std::sin(float(i)), std::cos(float(i))});
            opt.step(1e-3);
        }
        return std::vector<float>(w.data().begin(), w.data().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    Tensor w = param({1.0f});
    drn::Adam opt({{"primal.head.weight", w}});
    set_grad(w, {std::numeric_limits<float>::quiet_NaN()});
    try {
        opt.step(1e-3);
        FAIL() << "expected TrainingError";
    } catch (const drn::TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("primal.head.weight"), std::string::npos);
    }
    EXPECT_EQ(w[0], 1.0f);
}

TEST(Cosine, EndpointsAndMidpoint) {
    const drn::CosineSchedule s{1e-4, 1e-7, 1000};
    EXPECT_DOUBLE_EQ(drn::cosine_lr(s, 0), 1e-4);
    EXPECT_NEAR(drn::cosine_lr(s, 1000), 1e-7, 1e-20);
    EXPECT_NEAR(drn::cosine_lr(s, 500), 5.005e-5, 1e-18);
    EXPECT_THROW((void)drn::cosine_lr(s, 1001), std::invalid_argument);
    EXPECT_THROW((void)drn::cosine_lr(s, -1), std::invalid_argument);
}

TEST(Cosine, MonotoneNonIncreasing) {
    const drn::CosineSchedule s{1e-4, 1e-7, 97};
    for (std::int64_t t = 1; t <= 97; ++t) EXPECT_LE(s(t), s(t - 1));
}
