#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "drn/tensor.hpp"

namespace drn {

struct NamedParameter {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

/// Cosine annealing from lr_start at t = 0 to lr_end at t = total_steps.
struct CosineSchedule {
    double lr_start = 1e-4;
    double lr_end = 1e-7;
    std::int64_t total_steps = 1;

    [[nodiscard]] double operator()(std::int64_t t) const {
        if (t < 0 || t > total_steps)
            throw std::invalid_argument("cosine_lr: step " + std::to_string(t) + " outside [0, " +
                                        std::to_string(total_steps) + "]");
        if (total_steps == 0) return lr_start;
        const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total_steps);
        return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(phase));
    }
};

inline double cosine_lr(const CosineSchedule& schedule, std::int64_t t) { return schedule(t); }

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<std::vector<float>> first_moment;
    std::vector<std::vector<float>> second_moment;
};

/// Bias-corrected Adam over a fixed parameter list. Parameters without a
/// gradient buffer are treated as having zero gradient.
class Adam {
public:
    explicit Adam(ParameterList params, double beta1 = 0.9, double beta2 = 0.99, double eps = 1e-8)
        : params_(std::move(params)) {
        state_.beta1 = beta1;
        state_.beta2 = beta2;
        state_.eps = eps;
        for (const auto& p : params_) {
            state_.first_moment.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
            state_.second_moment.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    /// Throws TrainingError naming the first parameter with a non-finite gradient.
    void step(double lr) {
        for (const auto& p : params_) {
            if (!p.tensor.has_grad()) continue;
            for (float g : p.tensor.grad())
                if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter '" + p.name + "'");
        }
        ++state_.step;
        const double bc1 = 1.0 - std::pow(state_.beta1, static_cast<double>(state_.step));
        const double bc2 = 1.0 - std::pow(state_.beta2, static_cast<double>(state_.step));
        const float b1 = static_cast<float>(state_.beta1);
        const float b2 = static_cast<float>(state_.beta2);
        const float step_size = static_cast<float>(lr / bc1);
        const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
        const float eps = static_cast<float>(state_.eps);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k].tensor;
            if (!p.has_grad()) continue;
            const auto g = p.grad();
            auto w = p.mutable_data();
            auto& m = state_.first_moment[k];
            auto& v = state_.second_moment[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = b1 * m[i] + (1.0f - b1) * g[i];
                v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
                const float denom = std::sqrt(v[i]) * inv_sqrt_bc2 + eps;
                w[i] -= step_size * m[i] / denom;
            }
        }
    }

    [[nodiscard]] const AdamState& state() const { return state_; }
    [[nodiscard]] const ParameterList& parameters() const { return params_; }

private:
    ParameterList params_;
    AdamState state_;
};

}  // namespace drn
