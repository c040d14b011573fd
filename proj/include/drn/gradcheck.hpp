#pragma once
// Central finite-difference audit of every differentiable op.
//
// Each instance draws random inputs (at most 64 elements per operand) and a
// random cotangent R, then compares the analytic gradient of sum(R * f(x))
// with (J(x + h) - J(x - h)) / 2h per element, h = 1e-3. The error of one
// operand is ||analytic - numeric|| / max(||analytic||, ||numeric||).

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "drn/ops.hpp"
#include "drn/rng.hpp"

namespace drn {

struct GradcheckResult {
    std::string op;
    int instances = 0;
    int failures = 0;
    double max_rel_error = 0.0;

    [[nodiscard]] bool passed() const { return failures == 0 && instances > 0; }
};

struct GradcheckOptions {
    int instances = 20;
    double step = 1e-3;
    double tolerance = 1e-2;
    std::uint64_t seed = 7;
};

namespace detail {

/// One op under test: builds random operands and evaluates the op on them.
struct GradcheckCase {
    std::string name;
    std::function<std::vector<Tensor>(Rng&)> make_inputs;
    std::function<Tensor(const std::vector<Tensor>&)> apply;
};

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0, double avoid = 0.0) {
    Tensor t(s);
    for (float& v : t.mutable_data()) {
        double x = rng.uniform(lo, hi);
        while (avoid > 0.0 && std::fabs(x) < avoid) x = rng.uniform(lo, hi);
        v = static_cast<float>(x);
    }
    return t;
}

inline double objective(const Tensor& out, const std::vector<double>& cot) {
    double j = 0.0;
    const auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) j += cot[i] * d[i];
    return j;
}

inline double check_instance(const GradcheckCase& c, Rng& rng, double h) {
    std::vector<Tensor> inputs = c.make_inputs(rng);
    for (auto& t : inputs) t.set_requires_grad(true);
    Tensor out = c.apply(inputs);
    std::vector<double> cot(static_cast<std::size_t>(out.numel()));
    for (double& v : cot) v = rng.uniform(-1.0, 1.0);
    std::vector<float> seed(cot.begin(), cot.end());
    for (std::size_t i = 0; i < cot.size(); ++i) cot[i] = seed[i];
    backward(out, seed);

    double worst = 0.0;
    NoGradGuard guard;
    for (auto& t : inputs) {
        std::vector<float> analytic(t.grad().begin(), t.grad().end());
        if (analytic.empty()) analytic.assign(static_cast<std::size_t>(t.numel()), 0.0f);
        std::vector<double> numeric(analytic.size());
        auto data = t.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const float orig = data[i];
            data[i] = static_cast<float>(orig + h);
            const double up = objective(c.apply(inputs), cot);
            data[i] = static_cast<float>(orig - h);
            const double down = objective(c.apply(inputs), cot);
            data[i] = orig;
            numeric[i] = (up - down) / (2.0 * h);
        }
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
            na += static_cast<double>(analytic[i]) * analytic[i];
            nn += numeric[i] * numeric[i];
        }
        const double denom = std::sqrt(std::max(na, nn));
        const double rel = denom < 1e-9 ? std::sqrt(diff) : std::sqrt(diff) / denom;
        worst = std::max(worst, rel);
    }
    return worst;
}

inline std::vector<GradcheckCase> gradcheck_cases() {
    std::vector<GradcheckCase> cases;
    constexpr double kMargin = 1e-2;  // distance kept from non-smooth points

    cases.push_back({"conv2d",
                     [](Rng& rng) {
                         return std::vector<Tensor>{random_tensor({1, 2, 4, 4}, rng), random_tensor({2, 2, 3, 3}, rng),
                                                    random_tensor({1, 2, 1, 1}, rng)};
                     },
                     [](const std::vector<Tensor>& x) { return conv2d(x[0], x[1], x[2], 1, 1); }});
    cases.push_back({"conv2d_stride2",
                     [](Rng& rng) {
                         return std::vector<Tensor>{random_tensor({2, 2, 4, 4}, rng), random_tensor({3, 2, 3, 3}, rng),
                                                    random_tensor({1, 3, 1, 1}, rng)};
                     },
                     [](const std::vector<Tensor>& x) { return conv2d(x[0], x[1], x[2], 2, 1); }});
    cases.push_back({"conv2d_1x1",
                     [](Rng& rng) {
                         return std::vector<Tensor>{random_tensor({1, 4, 3, 3}, rng), random_tensor({3, 4, 1, 1}, rng),
                                                    random_tensor({1, 3, 1, 1}, rng)};
                     },
                     [](const std::vector<Tensor>& x) { return conv2d(x[0], x[1], x[2], 1, 0); }});
    cases.push_back({"pixel_shuffle", [](Rng& rng) { return std::vector<Tensor>{random_tensor({1, 8, 2, 2}, rng)}; },
                     [](const std::vector<Tensor>& x) { return pixel_shuffle(x[0], 2); }});
    cases.push_back({"leaky_relu",
                     [](Rng& rng) { return std::vector<Tensor>{random_tensor({1, 2, 4, 4}, rng, -1, 1, kMargin)}; },
                     [](const std::vector<Tensor>& x) { return leaky_relu(x[0], 0.2f); }});
    cases.push_back({"relu",
                     [](Rng& rng) { return std::vector<Tensor>{random_tensor({1, 2, 4, 4}, rng, -1, 1, kMargin)}; },
                     [](const std::vector<Tensor>& x) { return relu(x[0]); }});
    cases.push_back({"sigmoid", [](Rng& rng) { return std::vector<Tensor>{random_tensor({1, 2, 4, 4}, rng, -3, 3)}; },
                     [](const std::vector<Tensor>& x) { return sigmoid(x[0]); }});
    cases.push_back({"global_avg_pool", [](Rng& rng) { return std::vector<Tensor>{random_tensor({2, 3, 3, 3}, rng)}; },
                     [](const std::vector<Tensor>& x) { return global_avg_pool(x[0]); }});
    cases.push_back({"add",
                     [](Rng& rng) {
                         return std::vector<Tensor>{random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 2, 3, 3}, rng)};
                     },
                     [](const std::vector<Tensor>& x) { return add(x[0], x[1]); }});
    cases.push_back({"mul_channelwise",
                     [](Rng& rng) {
                         return std::vector<Tensor>{random_tensor({2, 3, 3, 3}, rng), random_tensor({2, 3, 1, 1}, rng)};
                     },
                     [](const std::vector<Tensor>& x) { return mul_channelwise(x[0], x[1]); }});
    cases.push_back({"concat_channels",
                     [](Rng& rng) {
                         return std::vector<Tensor>{random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 1, 3, 3}, rng)};
                     },
                     [](const std::vector<Tensor>& x) { return concat_channels(x[0], x[1]); }});
    cases.push_back({"scale", [](Rng& rng) { return std::vector<Tensor>{random_tensor({1, 2, 3, 3}, rng)}; },
                     [](const std::vector<Tensor>& x) { return scale(x[0], -1.7f); }});
    cases.push_back({"l1_loss",
                     [](Rng& rng) {
                         Tensor target = random_tensor({1, 2, 4, 4}, rng);
                         Tensor offset = random_tensor({1, 2, 4, 4}, rng, -1, 1, kMargin);
                         Tensor pred(target.shape());
                         auto p = pred.mutable_data();
                         for (std::size_t i = 0; i < p.size(); ++i) p[i] = target[i] + offset[i];
                         return std::vector<Tensor>{pred, target};
                     },
                     [](const std::vector<Tensor>& x) { return l1_loss(x[0], x[1]); }});
    return cases;
}

}  // namespace detail

inline std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& opt = {}) {
    std::vector<GradcheckResult> results;
    for (const auto& c : detail::gradcheck_cases()) {
        GradcheckResult r{c.name};
        Rng rng(opt.seed, "gradcheck." + c.name);
        for (int i = 0; i < opt.instances; ++i) {
            const double err = detail::check_instance(c, rng, opt.step);
            ++r.instances;
            r.max_rel_error = std::max(r.max_rel_error, err);
            if (!(err < opt.tolerance)) ++r.failures;
        }
        results.push_back(r);
    }
    return results;
}

}  // namespace drn
