#pragma once
// Dual regression network: a U-shaped primal SR network with one output per
// scale and a chain of small dual networks mapping each output one octave down.
//
// Layout for L = log2(scale) levels and base width F:
//   head      3 -> F at full (pre-upscaled) resolution
//   down k    stride-2 conv (2^(k-1)F -> 2^(k-1)F), LeakyReLU, conv -> 2^k F
//   up k      B RCABs, conv + pixel shuffle (x2), 1x1 conv to the skip width,
//             then concatenation with the matching down-path feature map
//   tail k    3x3 conv to RGB at 2^k times the LR size
//   dual k    stride-2 conv, LeakyReLU, conv (3 -> 3), scale 2^k -> 2^(k-1)

#include <bit>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "drn/degradation.hpp"
#include "drn/ops.hpp"
#include "drn/optim.hpp"
#include "drn/rng.hpp"

namespace drn {

struct DrnConfig {
    std::int64_t scale = 4;
    std::int64_t blocks = 30;
    std::int64_t channels = 16;
    std::int64_t reduction = 16;
    float slope = 0.2f;

    [[nodiscard]] std::int64_t levels() const { return std::countr_zero(static_cast<std::uint64_t>(scale)); }

    void validate() const {
        if (scale < 2 || (scale & (scale - 1)) != 0)
            throw std::invalid_argument("scale must be a power of two >= 2, got " + std::to_string(scale));
        if (blocks < 0) throw std::invalid_argument("blocks must be >= 0");
        if (channels < 1) throw std::invalid_argument("channels must be >= 1");
        if (reduction < 1) throw std::invalid_argument("reduction must be >= 1");
    }

    /// drn-s / drn-l use the published per-scale settings; drn-t is a
    /// desk-scale model (B = 2, F = 8).
    static DrnConfig preset(const std::string& name, std::int64_t scale) {
        DrnConfig c;
        c.scale = scale;
        if (name == "drn-s") {
            if (scale == 8) {
                c.blocks = 30;
                c.channels = 8;
            } else {
                c.blocks = 30;
                c.channels = 16;
            }
        } else if (name == "drn-l") {
            if (scale == 8) {
                c.blocks = 36;
                c.channels = 10;
            } else {
                c.blocks = 40;
                c.channels = 20;
            }
        } else if (name == "drn-t") {
            c.blocks = 2;
            c.channels = 8;
        } else {
            throw std::invalid_argument("unknown preset '" + name + "' (expected drn-s|drn-l|drn-t)");
        }
        c.validate();
        return c;
    }
};

/// Attention bottleneck width, floored at one channel.
inline std::int64_t attention_width(std::int64_t channels, std::int64_t reduction) {
    return std::max<std::int64_t>(channels / reduction, 1);
}

struct Conv2d {
    Tensor weight;
    Tensor bias;
    std::int64_t stride = 1;
    std::int64_t padding = 0;

    Conv2d() = default;
    Conv2d(std::int64_t in_c, std::int64_t out_c, std::int64_t k, std::int64_t stride_, std::int64_t padding_)
        : weight(Shape{out_c, in_c, k, k}), bias(Shape{1, out_c, 1, 1}), stride(stride_), padding(padding_) {
        weight.set_requires_grad(true);
        bias.set_requires_grad(true);
    }

    [[nodiscard]] Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }

    [[nodiscard]] std::int64_t in_channels() const { return weight.shape().c; }
    [[nodiscard]] std::int64_t out_channels() const { return weight.shape().n; }
    [[nodiscard]] std::int64_t kernel() const { return weight.shape().h; }

    void collect(const std::string& prefix, ParameterList& out) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }

    /// Multiply-accumulates for one sample producing an out_h x out_w map.
    [[nodiscard]] std::int64_t madds(std::int64_t out_h, std::int64_t out_w) const {
        return out_h * out_w * out_channels() * in_channels() * kernel() * kernel();
    }
};

inline Conv2d conv3x3(std::int64_t in_c, std::int64_t out_c, std::int64_t stride = 1) {
    return Conv2d(in_c, out_c, 3, stride, 1);
}
inline Conv2d conv1x1(std::int64_t in_c, std::int64_t out_c) { return Conv2d(in_c, out_c, 1, 1, 0); }

/// Residual channel attention block.
struct Rcab {
    Conv2d conv1;
    Conv2d conv2;
    Conv2d squeeze;
    Conv2d excite;

    Rcab() = default;
    Rcab(std::int64_t channels, std::int64_t reduction)
        : conv1(conv3x3(channels, channels)),
          conv2(conv3x3(channels, channels)),
          squeeze(conv1x1(channels, attention_width(channels, reduction))),
          excite(conv1x1(attention_width(channels, reduction), channels)) {}

    [[nodiscard]] Tensor attention(const Tensor& trunk) const {
        return sigmoid(excite(relu(squeeze(global_avg_pool(trunk)))));
    }

    [[nodiscard]] Tensor operator()(const Tensor& x) const {
        Tensor trunk = conv2(relu(conv1(x)));
        return add(x, mul_channelwise(trunk, attention(trunk)));
    }

    void collect(const std::string& prefix, ParameterList& out) const {
        conv1.collect(prefix + ".conv1", out);
        conv2.collect(prefix + ".conv2", out);
        squeeze.collect(prefix + ".attention.squeeze", out);
        excite.collect(prefix + ".attention.excite", out);
    }

    [[nodiscard]] std::int64_t madds(std::int64_t h, std::int64_t w) const {
        return conv1.madds(h, w) + conv2.madds(h, w) + squeeze.madds(1, 1) + excite.madds(1, 1);
    }
};

struct DownModule {
    Conv2d strided;
    Conv2d conv;
};

struct UpModule {
    std::vector<Rcab> blocks;
    Conv2d upsampler;  // C -> 4C ahead of a x2 pixel shuffle
    Conv2d reduce;
};

struct PrimalNetwork {
    std::int64_t levels = 0;
    float slope = 0.2f;
    Conv2d head;
    std::vector<DownModule> down;
    std::vector<UpModule> up;
    std::vector<Conv2d> tails;

    [[nodiscard]] ParameterList parameters() const {
        ParameterList out;
        head.collect("primal.head", out);
        for (std::size_t k = 0; k < down.size(); ++k) {
            const std::string p = "primal.down" + std::to_string(k + 1);
            down[k].strided.collect(p + ".strided", out);
            down[k].conv.collect(p + ".conv", out);
        }
        for (std::size_t k = 0; k < up.size(); ++k) {
            const std::string p = "primal.up" + std::to_string(k + 1);
            for (std::size_t b = 0; b < up[k].blocks.size(); ++b)
                up[k].blocks[b].collect(p + ".rcab" + std::to_string(b + 1), out);
            up[k].upsampler.collect(p + ".upsampler", out);
            up[k].reduce.collect(p + ".reduce", out);
        }
        for (std::size_t k = 0; k < tails.size(); ++k) tails[k].collect("primal.tail" + std::to_string(k), out);
        return out;
    }
};

struct DualNetwork {
    float slope = 0.2f;
    Conv2d strided;
    Conv2d conv;

    [[nodiscard]] Tensor operator()(const Tensor& x) const { return conv(leaky_relu(strided(x), slope)); }
};

struct DrnModel {
    DrnConfig config;
    PrimalNetwork primal;
    std::vector<DualNetwork> duals;  // duals[k - 1] maps scale 2^k to 2^(k-1)

    [[nodiscard]] ParameterList primal_parameters() const { return primal.parameters(); }

    [[nodiscard]] ParameterList dual_parameters() const {
        ParameterList out;
        for (std::size_t k = 0; k < duals.size(); ++k) {
            const std::string p = "dual" + std::to_string(k + 1);
            duals[k].strided.collect(p + ".strided", out);
            duals[k].conv.collect(p + ".conv", out);
        }
        return out;
    }

    [[nodiscard]] ParameterList parameters() const {
        ParameterList out = primal_parameters();
        for (auto& p : dual_parameters()) out.push_back(std::move(p));
        return out;
    }
};

/// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)) and zero
/// biases. Each parameter draws from its own named stream of the seed.
inline void initialize(const ParameterList& params, std::uint64_t seed) {
    for (const auto& p : params) {
        Tensor t = p.tensor;
        auto data = t.mutable_data();
        const Shape s = t.shape();
        const bool is_bias = p.name.size() >= 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0;
        if (is_bias) {
            std::fill(data.begin(), data.end(), 0.0f);
            continue;
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.c * s.h * s.w));
        Rng rng(seed, p.name);
        for (float& v : data) v = static_cast<float>(rng.uniform(-bound, bound));
    }
}

inline DrnModel build(const DrnConfig& config, std::uint64_t seed) {
    config.validate();
    const std::int64_t L = config.levels();
    const std::int64_t F = config.channels;
    DrnModel m;
    m.config = config;
    PrimalNetwork& p = m.primal;
    p.levels = L;
    p.slope = config.slope;
    p.head = conv3x3(3, F);
    for (std::int64_t k = 1; k <= L; ++k) {
        const std::int64_t c_in = F << (k - 1);
        p.down.push_back(DownModule{conv3x3(c_in, c_in, 2), conv3x3(c_in, c_in * 2)});
    }
    for (std::int64_t k = 1; k <= L; ++k) {
        const std::int64_t c = (k == 1) ? (F << L) : (F << (L - k + 2));
        const std::int64_t skip = F << (L - k);
        UpModule up;
        for (std::int64_t b = 0; b < config.blocks; ++b) up.blocks.emplace_back(c, config.reduction);
        up.upsampler = conv3x3(c, 4 * c);
        up.reduce = conv1x1(c, skip);
        p.up.push_back(std::move(up));
    }
    p.tails.push_back(conv3x3(F << L, 3));
    for (std::int64_t k = 1; k <= L; ++k) p.tails.push_back(conv3x3(F << (L - k + 1), 3));
    for (std::int64_t k = 1; k <= L; ++k) m.duals.push_back(DualNetwork{config.slope, conv3x3(3, 3, 2), conv3x3(3, 3)});
    initialize(m.parameters(), seed);
    return m;
}

/// Runs the primal network on an LR batch; the input is bicubic pre-upscaled
/// internally. Returns L + 1 images, entry k at 2^k times the LR size.
inline std::vector<Tensor> forward_primal(const PrimalNetwork& net, const Tensor& lr) {
    const Shape s = lr.shape();
    if (s.n < 1 || s.h < 1 || s.w < 1) throw std::invalid_argument("forward_primal: empty input " + to_string(s));
    if (s.c != 3) throw std::invalid_argument("forward_primal: expected 3 channels, got " + std::to_string(s.c));
    const std::int64_t factor = std::int64_t{1} << net.levels;
    const Tensor upscaled = bicubic_resize(lr.detach(), s.h * factor, s.w * factor);

    Tensor x = net.head(upscaled);
    std::vector<Tensor> skips{x};
    for (std::size_t k = 0; k < net.down.size(); ++k) {
        x = net.down[k].conv(leaky_relu(net.down[k].strided(x), net.slope));
        if (k + 1 < net.down.size()) skips.push_back(x);
    }
    std::vector<Tensor> outputs{net.tails[0](x)};
    for (std::size_t k = 0; k < net.up.size(); ++k) {
        const UpModule& up = net.up[k];
        for (const Rcab& block : up.blocks) x = block(x);
        x = up.reduce(pixel_shuffle(up.upsampler(x), 2));
        x = concat_channels(x, skips[skips.size() - 1 - k]);
        outputs.push_back(net.tails[k + 1](x));
    }
    return outputs;
}

/// Maps every primal output above the base scale one octave down; entry k - 1
/// is dual k applied to sr_outputs[k].
inline std::vector<Tensor> forward_dual(const std::vector<DualNetwork>& duals, const std::vector<Tensor>& sr_outputs) {
    if (sr_outputs.size() != duals.size() + 1)
        throw std::invalid_argument("forward_dual: expected " + std::to_string(duals.size() + 1) +
                                    " primal outputs, got " + std::to_string(sr_outputs.size()));
    std::vector<Tensor> recon;
    for (std::size_t k = 0; k < duals.size(); ++k) recon.push_back(duals[k](sr_outputs[k + 1]));
    return recon;
}

inline std::int64_t count_params(const ParameterList& params) {
    std::int64_t total = 0;
    for (const auto& p : params) total += p.tensor.numel();
    return total;
}

inline std::int64_t count_params(const DrnModel& model) { return count_params(model.parameters()); }

/// Multiply-accumulates of every convolution (primal and dual) for one LR
/// input of lr_h x lr_w.
inline std::int64_t count_madds(const DrnModel& model, std::int64_t lr_h, std::int64_t lr_w) {
    const PrimalNetwork& p = model.primal;
    const std::int64_t L = p.levels;
    std::int64_t h = lr_h << L;
    std::int64_t w = lr_w << L;
    std::int64_t total = p.head.madds(h, w);
    for (const auto& d : p.down) {
        h = (h + 1) / 2;
        w = (w + 1) / 2;
        total += d.strided.madds(h, w) + d.conv.madds(h, w);
    }
    total += p.tails[0].madds(h, w);
    for (std::size_t k = 0; k < p.up.size(); ++k) {
        for (const auto& b : p.up[k].blocks) total += b.madds(h, w);
        total += p.up[k].upsampler.madds(h, w);
        h *= 2;
        w *= 2;
        total += p.up[k].reduce.madds(h, w) + p.tails[k + 1].madds(h, w);
    }
    for (std::size_t k = 0; k < model.duals.size(); ++k) {
        const std::int64_t oh = lr_h << k;
        const std::int64_t ow = lr_w << k;
        total += model.duals[k].strided.madds(oh, ow) + model.duals[k].conv.madds(oh, ow);
    }
    return total;
}

}  // namespace drn
