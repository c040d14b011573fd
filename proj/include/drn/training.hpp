#pragma once
// Dual regression objective, paired training, and adaptation on unpaired LR
// data.

#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drn/degradation.hpp"
#include "drn/evaluation.hpp"
#include "drn/model.hpp"
#include "drn/optim.hpp"
#include "drn/rng.hpp"

namespace drn {

struct LossConfig {
    enum class DualScales { All, Final };

    double lambda = 0.1;
    DualScales dual_scales = DualScales::All;

    void validate() const {
        if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0, got " + std::to_string(lambda));
    }
};

struct LossTerms {
    Tensor total;
    Tensor primal;
    Tensor dual;

    [[nodiscard]] double total_value() const { return total.item(); }
    [[nodiscard]] double primal_value() const { return primal.item(); }
    [[nodiscard]] double dual_value() const { return dual.item(); }
};

namespace detail {

inline Tensor sum_terms(const std::vector<Tensor>& terms) {
    Tensor acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

inline std::vector<std::size_t> dual_indices(std::size_t count, LossConfig::DualScales mode) {
    std::vector<std::size_t> idx;
    if (count == 0) return idx;
    if (mode == LossConfig::DualScales::Final) {
        idx.push_back(count - 1);
    } else {
        for (std::size_t k = 0; k < count; ++k) idx.push_back(k);
    }
    return idx;
}

}  // namespace detail

/// primal = sum_k L1(sr[k], targets[k]) over all scales;
/// dual   = sum_k L1(recon[k-1], targets[k-1]) over the configured scales;
/// total  = primal + lambda * dual.
/// targets[0] is the LR input and targets.back() the HR image.
inline LossTerms dual_regression_loss(const std::vector<Tensor>& sr_outputs, const std::vector<Tensor>& dual_recons,
                                      const std::vector<Tensor>& targets, const LossConfig& cfg) {
    cfg.validate();
    if (sr_outputs.empty() || sr_outputs.size() != targets.size())
        throw std::invalid_argument("dual_regression_loss: " + std::to_string(sr_outputs.size()) + " outputs vs " +
                                    std::to_string(targets.size()) + " targets");
    if (dual_recons.size() + 1 != sr_outputs.size())
        throw std::invalid_argument("dual_regression_loss: " + std::to_string(dual_recons.size()) +
                                    " dual reconstructions for " + std::to_string(sr_outputs.size()) + " outputs");
    std::vector<Tensor> primal_terms;
    for (std::size_t k = 0; k < sr_outputs.size(); ++k) primal_terms.push_back(l1_loss(sr_outputs[k], targets[k]));
    Tensor primal = detail::sum_terms(primal_terms);

    Tensor dual(Shape{1, 1, 1, 1}, 0.0f);
    const auto idx = detail::dual_indices(dual_recons.size(), cfg.dual_scales);
    if (!idx.empty()) {
        std::vector<Tensor> dual_terms;
        for (std::size_t k : idx) dual_terms.push_back(l1_loss(dual_recons[k], targets[k]));
        dual = detail::sum_terms(dual_terms);
    }
    Tensor total = add(primal, scale(dual, static_cast<float>(cfg.lambda)));
    return LossTerms{total, primal, dual};
}

/// Dual reconstructions of an unpaired batch, all targeting the LR input:
/// entry k - 1 is D_1(...D_k(sr[k])).
inline std::vector<Tensor> unpaired_dual_chain(const std::vector<DualNetwork>& duals, const std::vector<Tensor>& sr) {
    if (sr.size() != duals.size() + 1)
        throw std::invalid_argument("unpaired_dual_chain: output/dual count mismatch");
    std::vector<Tensor> recon;
    for (std::size_t k = 1; k < sr.size(); ++k) {
        Tensor x = sr[k];
        for (std::size_t j = k; j >= 1; --j) x = duals[j - 1](x);
        recon.push_back(x);
    }
    return recon;
}

/// Objective on a mixed batch of n paired and m unpaired samples, normalized
/// by m + n. The primal term is masked out for unpaired samples; their dual
/// reconstructions all target the LR input.
inline LossTerms adaptation_loss(const std::vector<Tensor>* paired_sr, const std::vector<Tensor>* paired_recon,
                                 const std::vector<Tensor>* paired_targets, const std::vector<Tensor>* unpaired_recon,
                                 const Tensor* unpaired_lr, std::int64_t m, std::int64_t n, const LossConfig& cfg) {
    cfg.validate();
    if (m < 0 || n < 0 || m + n < 1) throw std::invalid_argument("adaptation_loss: need m + n >= 1");
    const float wp = static_cast<float>(static_cast<double>(n) / static_cast<double>(m + n));
    const float wu = static_cast<float>(static_cast<double>(m) / static_cast<double>(m + n));
    Tensor primal(Shape{1, 1, 1, 1}, 0.0f);
    std::vector<Tensor> dual_parts;
    if (n > 0) {
        LossTerms p = dual_regression_loss(*paired_sr, *paired_recon, *paired_targets, cfg);
        primal = scale(p.primal, wp);
        dual_parts.push_back(scale(p.dual, wp));
    }
    if (m > 0) {
        std::vector<Tensor> terms;
        for (std::size_t k : detail::dual_indices(unpaired_recon->size(), cfg.dual_scales))
            terms.push_back(l1_loss((*unpaired_recon)[k], *unpaired_lr));
        if (!terms.empty()) dual_parts.push_back(scale(detail::sum_terms(terms), wu));
    }
    Tensor dual = dual_parts.empty() ? Tensor(Shape{1, 1, 1, 1}, 0.0f) : detail::sum_terms(dual_parts);
    Tensor total = add(primal, scale(dual, static_cast<float>(cfg.lambda)));
    return LossTerms{total, primal, dual};
}

inline double data_ratio(std::int64_t m, std::int64_t n) {
    if (m < 0 || n < 0 || m + n < 1) throw std::invalid_argument("data ratio needs m, n >= 0 and m + n >= 1");
    return static_cast<double>(m) / static_cast<double>(m + n);
}

/// An image pair expanded into per-scale targets: levels[0] is the LR image,
/// levels.back() the HR image, intermediate levels the HR bicubic-downscaled
/// to 2^k times the LR size.
struct TrainingSample {
    std::string name;
    std::vector<Tensor> levels;
};

inline TrainingSample make_training_sample(const ImagePair& pair, std::int64_t scale) {
    const Shape lr = pair.lr.shape();
    const Shape hr = pair.hr.shape();
    if (hr.h != lr.h * scale || hr.w != lr.w * scale)
        throw std::invalid_argument("pair '" + pair.name + "': HR " + to_string(hr) + " is not " +
                                    std::to_string(scale) + "x LR " + to_string(lr));
    TrainingSample s{pair.name, {pair.lr}};
    for (std::int64_t f = 2; f < scale; f *= 2) s.levels.push_back(bicubic_resize(pair.hr, lr.h * f, lr.w * f));
    s.levels.push_back(pair.hr);
    return s;
}

inline std::vector<TrainingSample> make_training_samples(const std::vector<ImagePair>& pairs, std::int64_t scale) {
    std::vector<TrainingSample> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(make_training_sample(p, scale));
    return out;
}

/// Geometric augmentation shared by every level of a patch.
struct Augmentation {
    bool hflip = false;
    int rot90 = 0;  // counter-clockwise quarter turns
};

/// Applies hflip then rot90 to a square (1, c, p, p) tensor.
inline Tensor apply_augmentation(const Tensor& t, const Augmentation& aug) {
    const Shape s = t.shape();
    if (s.h != s.w) throw std::invalid_argument("augmentation needs square patches, got " + to_string(s));
    if (!aug.hflip && aug.rot90 == 0) return t;
    const std::int64_t p = s.h;
    Tensor out(s);
    auto dst = out.mutable_data();
    const auto src = t.data();
    for (std::int64_t n = 0; n < s.n * s.c; ++n)
        for (std::int64_t y = 0; y < p; ++y)
            for (std::int64_t x = 0; x < p; ++x) {
                // destination (y, x) pulls from the source through the inverse map
                std::int64_t sy = y, sx = x;
                for (int r = 0; r < aug.rot90; ++r) {
                    const std::int64_t ty = sx;
                    const std::int64_t tx = p - 1 - sy;
                    sy = ty;
                    sx = tx;
                }
                if (aug.hflip) sx = p - 1 - sx;
                dst[(n * p + y) * p + x] = src[(n * p + sy) * p + sx];
            }
    return out;
}

inline Tensor crop(const Tensor& t, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w) {
    const Shape s = t.shape();
    if (y0 < 0 || x0 < 0 || y0 + h > s.h || x0 + w > s.w)
        throw std::invalid_argument("crop window outside image " + to_string(s));
    Tensor out(Shape{s.n, s.c, h, w});
    auto dst = out.mutable_data();
    const auto src = t.data();
    for (std::int64_t p = 0; p < s.n * s.c; ++p)
        for (std::int64_t y = 0; y < h; ++y)
            std::copy_n(src.data() + (p * s.h + y0 + y) * s.w + x0, w, dst.data() + (p * h + y) * w);
    return out;
}

/// Aligned crop of every level: LR window (y, x, patch) maps to
/// (y * 2^k, x * 2^k, patch * 2^k) at level k. Returns nullopt when the LR
/// image is smaller than the patch.
inline std::optional<std::vector<Tensor>> sample_patch(const TrainingSample& sample, std::int64_t patch, Rng& rng,
                                                       bool augment) {
    const Shape lr = sample.levels.front().shape();
    if (lr.h < patch || lr.w < patch) return std::nullopt;
    const auto y = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(lr.h - patch + 1)));
    const auto x = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(lr.w - patch + 1)));
    Augmentation aug;
    if (augment) {
        aug.hflip = rng.below(2) == 1;
        aug.rot90 = static_cast<int>(rng.below(4));
    }
    std::vector<Tensor> out;
    for (std::size_t k = 0; k < sample.levels.size(); ++k) {
        const std::int64_t f = std::int64_t{1} << k;
        out.push_back(apply_augmentation(crop(sample.levels[k], y * f, x * f, patch * f, patch * f), aug));
    }
    return out;
}

/// Draws a random sample and patch, retrying on undersized images.
inline std::vector<Tensor> draw_patch(const std::vector<TrainingSample>& samples, std::int64_t patch, Rng& rng,
                                      bool augment) {
    if (samples.empty()) throw std::invalid_argument("draw_patch: empty dataset");
    for (int attempt = 0; attempt < 100; ++attempt) {
        const auto& s = samples[rng.below(samples.size())];
        if (auto p = sample_patch(s, patch, rng, augment)) return std::move(*p);
    }
    throw std::runtime_error("could not sample a " + std::to_string(patch) + "x" + std::to_string(patch) +
                             " patch after 100 attempts; images too small");
}

/// Stacks n patches into per-level batches.
inline std::vector<Tensor> draw_batch(const std::vector<TrainingSample>& samples, std::int64_t batch,
                                      std::int64_t patch, Rng& rng, bool augment) {
    std::vector<std::vector<Tensor>> per_level;
    for (std::int64_t b = 0; b < batch; ++b) {
        auto levels = draw_patch(samples, patch, rng, augment);
        if (per_level.empty()) per_level.resize(levels.size());
        for (std::size_t k = 0; k < levels.size(); ++k) per_level[k].push_back(std::move(levels[k]));
    }
    std::vector<Tensor> out;
    for (auto& items : per_level) out.push_back(stack_batch(items));
    return out;
}

struct LogRecord {
    std::int64_t iter = 0;
    double primal = 0.0;
    double dual = 0.0;
    double total = 0.0;
    double lr = 0.0;
    std::optional<double> psnr;

    [[nodiscard]] std::string format() const {
        char buf[256];
        int len = std::snprintf(buf, sizeof buf, "iter=%lld primal=%.8g dual=%.8g total=%.8g lr=%.8g",
                                static_cast<long long>(iter), primal, dual, total, lr);
        if (psnr) std::snprintf(buf + len, sizeof buf - static_cast<std::size_t>(len), " psnr=%.6f", *psnr);
        return buf;
    }
};

struct TrainConfig {
    std::int64_t iterations = 2000;
    std::int64_t batch = 8;
    std::int64_t patch = 24;
    double lr_start = 1e-4;
    double lr_end = 1e-7;
    std::uint64_t seed = 0;
    bool augment = true;
    std::int64_t val_every = 100;
    std::int64_t checkpoint_every = 0;  // 0 = no intermediate checkpoints

    void validate() const {
        if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
        if (batch < 1) throw std::invalid_argument("batch must be >= 1");
        if (patch < 1) throw std::invalid_argument("patch must be >= 1");
    }
};

struct AdaptConfig {
    std::int64_t unpaired_batch = 5;  // m
    std::int64_t paired_batch = 11;   // n
    std::int64_t iterations = 1000;
    std::int64_t patch = 24;
    double lr = 1e-4;
    std::uint64_t seed = 0;
    bool augment = true;
    std::int64_t val_every = 100;
    std::int64_t checkpoint_every = 0;

    [[nodiscard]] double rho() const { return data_ratio(unpaired_batch, paired_batch); }

    void validate() const {
        if (unpaired_batch < 0 || paired_batch < 0)
            throw std::invalid_argument("batch counts m and n must be >= 0");
        if (unpaired_batch + paired_batch < 1)
            throw std::invalid_argument("at least one of m (unpaired) and n (paired) batch sizes must be positive");
        if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
        if (patch < 1) throw std::invalid_argument("patch must be >= 1");
    }
};

struct TrainHooks {
    std::ostream* log = nullptr;
    std::function<void(std::int64_t iter)> on_checkpoint;
    std::function<void(const LogRecord& rec)> on_step;
};

struct TrainResult {
    std::vector<LogRecord> records;
    std::optional<double> final_psnr;
};

/// Final-scale Y-PSNR of the model over a set of pairs (shave = scale).
inline double validation_psnr(const DrnModel& model, const std::vector<ImagePair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("validation_psnr: no pairs");
    NoGradGuard guard;
    EvalProtocol protocol;
    protocol.shave = model.config.scale;
    double sum = 0.0;
    for (const auto& p : pairs) {
        const auto outputs = forward_primal(model.primal, p.lr);
        sum += psnr(outputs.back(), p.hr, protocol);
    }
    return sum / static_cast<double>(pairs.size());
}

namespace detail {

inline void check_finite(const LossTerms& terms, std::int64_t iter) {
    if (!std::isfinite(terms.primal_value()))
        throw TrainingError("non-finite primal loss at iteration " + std::to_string(iter));
    if (!std::isfinite(terms.dual_value()))
        throw TrainingError("non-finite dual loss at iteration " + std::to_string(iter));
    if (!std::isfinite(terms.total_value()))
        throw TrainingError("non-finite total loss at iteration " + std::to_string(iter));
}

inline void emit(TrainResult& result, const TrainHooks& hooks, LogRecord rec) {
    if (hooks.log) *hooks.log << rec.format() << '\n';
    result.records.push_back(std::move(rec));
}

}  // namespace detail

/// Minimizes primal + lambda * dual over paired data with one Adam step over
/// primal and dual parameters jointly per iteration.
inline TrainResult train_paired(const std::vector<ImagePair>& pairs, DrnModel& model, const TrainConfig& cfg,
                                const LossConfig& loss_cfg, const std::vector<ImagePair>& validation = {},
                                const TrainHooks& hooks = {}) {
    cfg.validate();
    loss_cfg.validate();
    if (pairs.empty()) throw std::invalid_argument("train_paired: empty dataset");
    const auto samples = make_training_samples(pairs, model.config.scale);
    Rng rng(cfg.seed, "train.data");
    Adam optimizer(model.parameters());
    const CosineSchedule schedule{cfg.lr_start, cfg.lr_end, cfg.iterations};
    TrainResult result;

    for (std::int64_t it = 0; it < cfg.iterations; ++it) {
        const auto batch = draw_batch(samples, cfg.batch, cfg.patch, rng, cfg.augment);
        const auto sr = forward_primal(model.primal, batch.front());
        const auto recon = forward_dual(model.duals, sr);
        const LossTerms terms = dual_regression_loss(sr, recon, batch, loss_cfg);
        detail::check_finite(terms, it);
        const double lr = schedule(it);
        optimizer.zero_grad();
        backward(terms.total);
        optimizer.step(lr);

        const bool last = it + 1 == cfg.iterations;
        LogRecord rec{it + 1, terms.primal_value(), terms.dual_value(), terms.total_value(), lr, std::nullopt};
        if (!validation.empty() && cfg.val_every > 0 && ((it + 1) % cfg.val_every == 0 || last))
            rec.psnr = validation_psnr(model, validation);
        if (last) result.final_psnr = rec.psnr;
        detail::emit(result, hooks, rec);
        if (hooks.on_step) hooks.on_step(rec);
        if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 && !last)
            hooks.on_checkpoint(it + 1);
    }
    return result;
}

/// Adapts a model to unpaired LR data: each iteration draws m unpaired LR
/// patches and n paired patches, updates the primal network on the masked
/// objective, then updates the dual networks on the dual term. Both updates
/// use gradients from the same forward pass.
inline TrainResult adapt_unpaired(const std::vector<Tensor>& unpaired_lr, const std::vector<ImagePair>& paired,
                                  DrnModel& model, const AdaptConfig& cfg, const LossConfig& loss_cfg,
                                  const std::vector<ImagePair>& validation = {}, const TrainHooks& hooks = {}) {
    cfg.validate();
    loss_cfg.validate();
    const std::int64_t m = cfg.unpaired_batch;
    const std::int64_t n = cfg.paired_batch;
    if (m > 0 && unpaired_lr.empty()) throw std::invalid_argument("adapt_unpaired: m > 0 but no unpaired images");
    if (n > 0 && paired.empty()) throw std::invalid_argument("adapt_unpaired: n > 0 but no paired images");

    const auto samples = make_training_samples(paired, model.config.scale);
    std::vector<TrainingSample> unpaired_samples;
    for (std::size_t i = 0; i < unpaired_lr.size(); ++i)
        unpaired_samples.push_back(TrainingSample{"unpaired" + std::to_string(i), {unpaired_lr[i]}});

    Rng rng(cfg.seed, "train.data");
    Adam primal_opt(model.primal_parameters());
    Adam dual_opt(model.dual_parameters());
    TrainResult result;

    for (std::int64_t it = 0; it < cfg.iterations; ++it) {
        std::optional<Tensor> unpaired_batch;
        if (m > 0) unpaired_batch = draw_batch(unpaired_samples, m, cfg.patch, rng, cfg.augment).front();
        std::vector<Tensor> paired_batch;
        if (n > 0) paired_batch = draw_batch(samples, n, cfg.patch, rng, cfg.augment);

        std::vector<Tensor> sr_p, recon_p, sr_u, recon_u;
        if (n > 0) {
            sr_p = forward_primal(model.primal, paired_batch.front());
            recon_p = forward_dual(model.duals, sr_p);
        }
        if (m > 0) {
            sr_u = forward_primal(model.primal, *unpaired_batch);
            recon_u = unpaired_dual_chain(model.duals, sr_u);
        }
        const LossTerms terms = adaptation_loss(n > 0 ? &sr_p : nullptr, n > 0 ? &recon_p : nullptr,
                                                n > 0 ? &paired_batch : nullptr, m > 0 ? &recon_u : nullptr,
                                                m > 0 ? &*unpaired_batch : nullptr, m, n, loss_cfg);
        detail::check_finite(terms, it);
        primal_opt.zero_grad();
        dual_opt.zero_grad();
        backward(terms.total);
        // primal step on the masked objective; the dual parameters only see
        // lambda * dual, so their gradient is that of the dual objective
        primal_opt.step(cfg.lr);
        dual_opt.step(cfg.lr);

        const bool last = it + 1 == cfg.iterations;
        LogRecord rec{it + 1, terms.primal_value(), terms.dual_value(), terms.total_value(), cfg.lr, std::nullopt};
        if (!validation.empty() && cfg.val_every > 0 && ((it + 1) % cfg.val_every == 0 || last))
            rec.psnr = validation_psnr(model, validation);
        if (last) result.final_psnr = rec.psnr;
        detail::emit(result, hooks, rec);
        if (hooks.on_step) hooks.on_step(rec);
        if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 && !last)
            hooks.on_checkpoint(it + 1);
    }
    return result;
}

}  // namespace drn
