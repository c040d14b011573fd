#pragma once
// Differentiable tensor operations.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "drn/detail/gemm.hpp"
#include "drn/tensor.hpp"

namespace drn {

namespace detail {

inline void im2col(const float* in, std::int64_t channels, std::int64_t height, std::int64_t width, std::int64_t kh,
                   std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t out_h, std::int64_t out_w,
                   float* col) {
    const std::int64_t plane = out_h * out_w;
    for (std::int64_t c = 0; c < channels; ++c) {
        const float* src = in + c * height * width;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
            for (std::int64_t kx = 0; kx < kw; ++kx) {
                float* dst = col + ((c * kh + ky) * kw + kx) * plane;
                for (std::int64_t oy = 0; oy < out_h; ++oy) {
                    const std::int64_t iy = oy * stride - pad + ky;
                    float* row = dst + oy * out_w;
                    if (iy < 0 || iy >= height) {
                        std::fill(row, row + out_w, 0.0f);
                        continue;
                    }
                    const float* srow = src + iy * width;
                    if (stride == 1) {
                        const std::int64_t shift = kx - pad;
                        const std::int64_t lo = std::clamp<std::int64_t>(-shift, 0, out_w);
                        const std::int64_t hi = std::clamp<std::int64_t>(width - shift, lo, out_w);
                        std::fill(row, row + lo, 0.0f);
                        std::copy(srow + lo + shift, srow + hi + shift, row + lo);
                        std::fill(row + hi, row + out_w, 0.0f);
                    } else {
                        for (std::int64_t ox = 0; ox < out_w; ++ox) {
                            const std::int64_t ix = ox * stride - pad + kx;
                            row[ox] = (ix >= 0 && ix < width) ? srow[ix] : 0.0f;
                        }
                    }
                }
            }
        }
    }
}

inline void col2im_add(const float* col, std::int64_t channels, std::int64_t height, std::int64_t width,
                       std::int64_t kh, std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t out_h,
                       std::int64_t out_w, float* in) {
    const std::int64_t plane = out_h * out_w;
    for (std::int64_t c = 0; c < channels; ++c) {
        float* dst = in + c * height * width;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
            for (std::int64_t kx = 0; kx < kw; ++kx) {
                const float* src = col + ((c * kh + ky) * kw + kx) * plane;
                for (std::int64_t oy = 0; oy < out_h; ++oy) {
                    const std::int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= height) continue;
                    const float* row = src + oy * out_w;
                    float* drow = dst + iy * width;
                    if (stride == 1) {
                        const std::int64_t shift = kx - pad;
                        const std::int64_t lo = std::clamp<std::int64_t>(-shift, 0, out_w);
                        const std::int64_t hi = std::clamp<std::int64_t>(width - shift, lo, out_w);
                        for (std::int64_t ox = lo; ox < hi; ++ox) drow[ox + shift] += row[ox];
                    } else {
                        for (std::int64_t ox = 0; ox < out_w; ++ox) {
                            const std::int64_t ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < width) drow[ix] += row[ox];
                        }
                    }
                }
            }
        }
    }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                    to_string(b.shape()));
}

inline std::int64_t conv_out_size(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

/// 2-D cross-correlation with zero padding. weight is (out_c, in_c, kh, kw);
/// bias, when given, is (1, out_c, 1, 1) or any shape with out_c elements.
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
                     std::int64_t stride = 1, std::int64_t padding = 0) {
    const Shape is = input.shape();
    const Shape ws = weight.shape();
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
    if (ws.c != is.c)
        throw std::invalid_argument("conv2d: in_channels mismatch, input has " + std::to_string(is.c) +
                                    " channels but weight expects " + std::to_string(ws.c));
    if (bias && bias->numel() != ws.n)
        throw std::invalid_argument("conv2d: out_channels mismatch, bias has " + std::to_string(bias->numel()) +
                                    " elements but weight has " + std::to_string(ws.n) + " filters");
    if (is.h + 2 * padding < ws.h)
        throw std::invalid_argument("conv2d: height " + std::to_string(is.h) + " too small for kernel");
    if (is.w + 2 * padding < ws.w)
        throw std::invalid_argument("conv2d: width " + std::to_string(is.w) + " too small for kernel");

    const std::int64_t oh = detail::conv_out_size(is.h, ws.h, stride, padding);
    const std::int64_t ow = detail::conv_out_size(is.w, ws.w, stride, padding);
    const Shape os{is.n, ws.n, oh, ow};
    const std::int64_t M = ws.n;
    const std::int64_t K = ws.c * ws.h * ws.w;
    const std::int64_t P = oh * ow;
    const bool direct = ws.h == 1 && ws.w == 1 && stride == 1 && padding == 0;

    std::vector<float> out(static_cast<std::size_t>(os.numel()), 0.0f);
    {
        std::vector<float> col(direct ? 0 : static_cast<std::size_t>(K * P));
        const float* wdata = weight.data().data();
        for (std::int64_t n = 0; n < is.n; ++n) {
            const float* src = input.data().data() + n * is.c * is.plane();
            float* dst = out.data() + n * M * P;
            if (bias) {
                const auto b = bias->data();
                for (std::int64_t m = 0; m < M; ++m) std::fill(dst + m * P, dst + (m + 1) * P, b[m]);
            }
            const float* cols = src;
            if (!direct) {
                detail::im2col(src, is.c, is.h, is.w, ws.h, ws.w, stride, padding, oh, ow, col.data());
                cols = col.data();
            }
            detail::gemm_nn(M, P, K, wdata, cols, dst);
        }
    }

    const bool has_bias = bias.has_value();
    return detail::make_result(
        os, std::move(out), {&input, &weight, has_bias ? &*bias : nullptr},
        [is, ws, os, stride, padding, M, K, P, direct, has_bias](detail::Node& self) {
            detail::Node& in = *self.inputs[0];
            detail::Node& wt = *self.inputs[1];
            const float* dout = self.grad.data();
            std::vector<float> col(direct ? 0 : static_cast<std::size_t>(K * P));

            if (has_bias && self.inputs[2]->requires_grad) {
                float* db = self.inputs[2]->grad_buffer();
                for (std::int64_t n = 0; n < is.n; ++n)
                    for (std::int64_t m = 0; m < M; ++m) {
                        const float* g = dout + (n * M + m) * P;
                        float s = 0.0f;
                        for (std::int64_t p = 0; p < P; ++p) s += g[p];
                        db[m] += s;
                    }
            }
            if (wt.requires_grad) {
                float* dw = wt.grad_buffer();
                for (std::int64_t n = 0; n < is.n; ++n) {
                    const float* src = in.data.data() + n * is.c * is.plane();
                    const float* cols = src;
                    if (!direct) {
                        detail::im2col(src, is.c, is.h, is.w, ws.h, ws.w, stride, padding, os.h, os.w, col.data());
                        cols = col.data();
                    }
                    detail::gemm_nt(M, K, P, dout + n * M * P, cols, dw);
                }
            }
            if (in.requires_grad) {
                float* din = in.grad_buffer();
                std::vector<float> wt_t(static_cast<std::size_t>(K * M));
                for (std::int64_t m = 0; m < M; ++m)
                    for (std::int64_t k = 0; k < K; ++k) wt_t[k * M + m] = wt.data[m * K + k];
                std::vector<float> dcol(static_cast<std::size_t>(K * P));
                for (std::int64_t n = 0; n < is.n; ++n) {
                    float* dst = din + n * is.c * is.plane();
                    if (direct) {
                        detail::gemm_nn(K, P, M, wt_t.data(), dout + n * M * P, dst);
                        continue;
                    }
                    std::fill(dcol.begin(), dcol.end(), 0.0f);
                    detail::gemm_nn(K, P, M, wt_t.data(), dout + n * M * P, dcol.data());
                    detail::col2im_add(dcol.data(), is.c, is.h, is.w, ws.h, ws.w, stride, padding, os.h, os.w, dst);
                }
            }
        });
}

/// Depth-to-space: (n, c*r*r, h, w) -> (n, c, h*r, w*r).
inline Tensor pixel_shuffle(const Tensor& input, std::int64_t r) {
    const Shape is = input.shape();
    if (r < 1) throw std::invalid_argument("pixel_shuffle: factor must be >= 1");
    if (is.c % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channels " + std::to_string(is.c) + " not divisible by r^2 = " +
                                    std::to_string(r * r));
    const Shape os{is.n, is.c / (r * r), is.h * r, is.w * r};
    // Index map out_index -> in_index, shared by forward and backward.
    auto src_index = [is, os, r](std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
        const std::int64_t ic = c * r * r + (y % r) * r + (x % r);
        return ((n * is.c + ic) * is.h + y / r) * is.w + x / r;
    };
    std::vector<float> out(static_cast<std::size_t>(os.numel()));
    const auto in = input.data();
    std::size_t o = 0;
    for (std::int64_t n = 0; n < os.n; ++n)
        for (std::int64_t c = 0; c < os.c; ++c)
            for (std::int64_t y = 0; y < os.h; ++y)
                for (std::int64_t x = 0; x < os.w; ++x) out[o++] = in[src_index(n, c, y, x)];
    return detail::make_result(os, std::move(out), {&input}, [os, src_index](detail::Node& self) {
        detail::Node& in = *self.inputs[0];
        if (!in.requires_grad) return;
        float* din = in.grad_buffer();
        std::size_t o = 0;
        for (std::int64_t n = 0; n < os.n; ++n)
            for (std::int64_t c = 0; c < os.c; ++c)
                for (std::int64_t y = 0; y < os.h; ++y)
                    for (std::int64_t x = 0; x < os.w; ++x) din[src_index(n, c, y, x)] += self.grad[o++];
    });
}

namespace detail {

template <class Fwd, class Deriv>
Tensor unary(const Tensor& input, Fwd fwd, Deriv deriv) {
    const auto in = input.data();
    std::vector<float> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    return make_result(input.shape(), std::move(out), {&input}, [deriv](Node& self) {
        Node& src = *self.inputs[0];
        if (!src.requires_grad) return;
        float* g = src.grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * deriv(src.data[i], self.data[i]);
    });
}

}  // namespace detail

/// Derivative at exactly zero is taken as `slope`.
inline Tensor leaky_relu(const Tensor& x, float slope) {
    return detail::unary(
        x, [slope](float v) { return v > 0.0f ? v : v * slope; },
        [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

inline Tensor relu(const Tensor& x) {
    return detail::unary(
        x, [](float v) { return v > 0.0f ? v : 0.0f; }, [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

inline Tensor sigmoid(const Tensor& x) {
    return detail::unary(
        x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); }, [](float, float y) { return y * (1.0f - y); });
}

inline Tensor scale(const Tensor& x, float factor) {
    return detail::unary(
        x, [factor](float v) { return v * factor; }, [factor](float, float) { return factor; });
}

/// Spatial mean per channel: (n, c, h, w) -> (n, c, 1, 1).
inline Tensor global_avg_pool(const Tensor& input) {
    const Shape is = input.shape();
    if (is.plane() == 0) throw std::invalid_argument("global_avg_pool: zero spatial size " + to_string(is));
    const std::int64_t planes = is.n * is.c;
    const std::int64_t hw = is.plane();
    const auto in = input.data();
    std::vector<float> out(static_cast<std::size_t>(planes));
    for (std::int64_t p = 0; p < planes; ++p) {
        float s = 0.0f;
        for (std::int64_t i = 0; i < hw; ++i) s += in[p * hw + i];
        out[p] = s / static_cast<float>(hw);
    }
    return detail::make_result(Shape{is.n, is.c, 1, 1}, std::move(out), {&input}, [planes, hw](detail::Node& self) {
        detail::Node& src = *self.inputs[0];
        if (!src.requires_grad) return;
        float* g = src.grad_buffer();
        const float inv = 1.0f / static_cast<float>(hw);
        for (std::int64_t p = 0; p < planes; ++p) {
            const float v = self.grad[p] * inv;
            for (std::int64_t i = 0; i < hw; ++i) g[p * hw + i] += v;
        }
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    const auto x = a.data();
    const auto y = b.data();
    std::vector<float> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return detail::make_result(a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
        for (auto& in : self.inputs) {
            if (!in->requires_grad) continue;
            float* g = in->grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
    });
}

/// x (n, c, h, w) scaled per channel by s (n, c, 1, 1).
inline Tensor mul_channelwise(const Tensor& x, const Tensor& s) {
    const Shape xs = x.shape();
    const Shape ss = s.shape();
    if (ss.n != xs.n || ss.c != xs.c || ss.h != 1 || ss.w != 1)
        throw std::invalid_argument("mul_channelwise: scale shape " + to_string(ss) + " does not broadcast over " +
                                    to_string(xs));
    const std::int64_t planes = xs.n * xs.c;
    const std::int64_t hw = xs.plane();
    const auto xv = x.data();
    const auto sv = s.data();
    std::vector<float> out(xv.size());
    for (std::int64_t p = 0; p < planes; ++p)
        for (std::int64_t i = 0; i < hw; ++i) out[p * hw + i] = xv[p * hw + i] * sv[p];
    return detail::make_result(xs, std::move(out), {&x, &s}, [planes, hw](detail::Node& self) {
        detail::Node& xn = *self.inputs[0];
        detail::Node& sn = *self.inputs[1];
        if (xn.requires_grad) {
            float* g = xn.grad_buffer();
            for (std::int64_t p = 0; p < planes; ++p)
                for (std::int64_t i = 0; i < hw; ++i) g[p * hw + i] += self.grad[p * hw + i] * sn.data[p];
        }
        if (sn.requires_grad) {
            float* g = sn.grad_buffer();
            for (std::int64_t p = 0; p < planes; ++p) {
                float acc = 0.0f;
                for (std::int64_t i = 0; i < hw; ++i) acc += self.grad[p * hw + i] * xn.data[p * hw + i];
                g[p] += acc;
            }
        }
    });
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Shape as = a.shape();
    const Shape bs = b.shape();
    if (as.n != bs.n) throw std::invalid_argument("concat_channels: batch mismatch " + to_string(as) + " vs " + to_string(bs));
    if (as.h != bs.h) throw std::invalid_argument("concat_channels: height mismatch " + to_string(as) + " vs " + to_string(bs));
    if (as.w != bs.w) throw std::invalid_argument("concat_channels: width mismatch " + to_string(as) + " vs " + to_string(bs));
    const Shape os{as.n, as.c + bs.c, as.h, as.w};
    const std::int64_t ablock = as.c * as.plane();
    const std::int64_t bblock = bs.c * bs.plane();
    std::vector<float> out(static_cast<std::size_t>(os.numel()));
    const auto av = a.data();
    const auto bv = b.data();
    for (std::int64_t n = 0; n < os.n; ++n) {
        std::copy_n(av.data() + n * ablock, ablock, out.data() + n * (ablock + bblock));
        std::copy_n(bv.data() + n * bblock, bblock, out.data() + n * (ablock + bblock) + ablock);
    }
    return detail::make_result(os, std::move(out), {&a, &b}, [os, ablock, bblock](detail::Node& self) {
        detail::Node& an = *self.inputs[0];
        detail::Node& bn = *self.inputs[1];
        for (std::int64_t n = 0; n < os.n; ++n) {
            const float* g = self.grad.data() + n * (ablock + bblock);
            if (an.requires_grad) {
                float* d = an.grad_buffer() + n * ablock;
                for (std::int64_t i = 0; i < ablock; ++i) d[i] += g[i];
            }
            if (bn.requires_grad) {
                float* d = bn.grad_buffer() + n * bblock;
                for (std::int64_t i = 0; i < bblock; ++i) d[i] += g[ablock + i];
            }
        }
    });
}

/// Mean absolute error. Backward uses sign(0) = 0.
inline Tensor l1_loss(const Tensor& pred, const Tensor& target) {
    detail::require_same_shape(pred, target, "l1_loss");
    const auto p = pred.data();
    const auto t = target.data();
    if (p.empty()) throw std::invalid_argument("l1_loss: empty tensors");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += std::fabs(static_cast<double>(p[i]) - t[i]);
    const float count = static_cast<float>(p.size());
    std::vector<float> out{static_cast<float>(sum / static_cast<double>(p.size()))};
    return detail::make_result(Shape{1, 1, 1, 1}, std::move(out), {&pred, &target}, [count](detail::Node& self) {
        detail::Node& pn = *self.inputs[0];
        detail::Node& tn = *self.inputs[1];
        const float g = self.grad[0] / count;
        auto sign = [](float d) { return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f); };
        if (pn.requires_grad) {
            float* d = pn.grad_buffer();
            for (std::size_t i = 0; i < pn.data.size(); ++i) d[i] += g * sign(pn.data[i] - tn.data[i]);
        }
        if (tn.requires_grad) {
            float* d = tn.grad_buffer();
            for (std::size_t i = 0; i < tn.data.size(); ++i) d[i] -= g * sign(pn.data[i] - tn.data[i]);
        }
    });
}

/// Stacks tensors along the batch axis. Inputs must share (c, h, w).
inline Tensor stack_batch(const std::vector<Tensor>& items) {
    if (items.empty()) throw std::invalid_argument("stack_batch: no tensors");
    Shape s = items.front().shape();
    std::vector<float> out;
    out.reserve(static_cast<std::size_t>(s.numel()) * items.size());
    for (const auto& t : items) {
        const Shape ts = t.shape();
        if (ts.c != s.c || ts.h != s.h || ts.w != s.w)
            throw std::invalid_argument("stack_batch: mismatched shapes " + to_string(s) + " vs " + to_string(ts));
        out.insert(out.end(), t.data().begin(), t.data().end());
    }
    std::int64_t n = 0;
    for (const auto& t : items) n += t.shape().n;
    return Tensor(Shape{n, s.c, s.h, s.w}, std::move(out));
}

}  // namespace drn
