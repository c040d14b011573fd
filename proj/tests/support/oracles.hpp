#pragma once
// Slow reference implementations used to check the library. They share no
// code with include/drn beyond the Tensor container and follow the textbook
// formulas literally: no separable passes, no tap tables, double everywhere.

#include <algorithm>
#include <cmath>
#include <vector>

#include "drn/tensor.hpp"

namespace oracle {

/// Keys cubic convolution kernel, a = -0.5.
inline double keys(double x) {
    const double a = -0.5;
    x = std::fabs(x);
    if (x <= 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
    if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
    return 0.0;
}

/// Direct 2-D evaluation of the imresize-style bicubic: every output pixel is
/// an explicit weighted sum over the input neighbourhood with the kernel
/// widened by the shrink factor, clamped source indices and weights
/// normalized over the full 2-D footprint.
inline drn::Tensor bicubic(const drn::Tensor& img, std::int64_t oh, std::int64_t ow) {
    const drn::Shape s = img.shape();
    drn::Tensor out(drn::Shape{s.n, s.c, oh, ow});
    auto d = out.mutable_data();
    const auto src = img.data();
    const double sy = double(oh) / double(s.h);
    const double sx = double(ow) / double(s.w);
    const double ky = std::min(sy, 1.0);  // kernel compression when shrinking
    const double kx = std::min(sx, 1.0);
    const double ry = 2.0 / ky;
    const double rx = 2.0 / kx;
    for (std::int64_t p = 0; p < s.n * s.c; ++p)
        for (std::int64_t y = 0; y < oh; ++y)
            for (std::int64_t x = 0; x < ow; ++x) {
                const double cy = (double(y) + 0.5) / sy - 0.5;
                const double cx = (double(x) + 0.5) / sx - 0.5;
                double acc = 0.0, wsum = 0.0;
                for (auto i = static_cast<std::int64_t>(std::floor(cy - ry)) - 1; i <= std::ceil(cy + ry) + 1; ++i)
                    for (auto j = static_cast<std::int64_t>(std::floor(cx - rx)) - 1; j <= std::ceil(cx + rx) + 1;
                         ++j) {
                        const double w = ky * keys(ky * (cy - double(i))) * kx * keys(kx * (cx - double(j)));
                        if (w == 0.0) continue;
                        const std::int64_t ci = std::clamp<std::int64_t>(i, 0, s.h - 1);
                        const std::int64_t cj = std::clamp<std::int64_t>(j, 0, s.w - 1);
                        acc += w * src[static_cast<std::size_t>((p * s.h + ci) * s.w + cj)];
                        wsum += w;
                    }
                d[static_cast<std::size_t>((p * oh + y) * ow + x)] = static_cast<float>(acc / wsum);
            }
    return out;
}

/// 8-bit planes as scored: quantize, optional rounded BT.601 luma, shave.
inline std::vector<std::vector<double>> planes(const drn::Tensor& img, bool luma, std::int64_t shave,
                                               std::int64_t& h, std::int64_t& w) {
    const drn::Shape s = img.shape();
    auto q = [&](std::int64_t c, std::int64_t y, std::int64_t x) {
        const double v = std::clamp(double(img.at(0, c, y, x)), 0.0, 1.0);
        return std::floor(v * 255.0 + 0.5);
    };
    h = s.h - 2 * shave;
    w = s.w - 2 * shave;
    std::vector<std::vector<double>> out;
    if (luma) {
        std::vector<double> p;
        for (std::int64_t y = shave; y < s.h - shave; ++y)
            for (std::int64_t x = shave; x < s.w - shave; ++x) {
                const double yv = 16.0 + (65.481 * q(0, y, x) + 128.553 * q(1, y, x) + 24.966 * q(2, y, x)) / 255.0;
                p.push_back(std::floor(yv + 0.5));
            }
        out.push_back(p);
    } else {
        for (std::int64_t c = 0; c < s.c; ++c) {
            std::vector<double> p;
            for (std::int64_t y = shave; y < s.h - shave; ++y)
                for (std::int64_t x = shave; x < s.w - shave; ++x) p.push_back(q(c, y, x));
            out.push_back(p);
        }
    }
    return out;
}

inline double psnr(const drn::Tensor& a, const drn::Tensor& b, bool luma, std::int64_t shave) {
    std::int64_t h = 0, w = 0;
    const auto pa = planes(a, luma, shave, h, w);
    const auto pb = planes(b, luma, shave, h, w);
    double se = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < pa.size(); ++c)
        for (std::size_t i = 0; i < pa[c].size(); ++i) {
            se += (pa[c][i] - pb[c][i]) * (pa[c][i] - pb[c][i]);
            ++count;
        }
    const double mse = se / double(count);
    if (mse == 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

/// Mean SSIM over all fully contained 11x11 windows, computed window by
/// window with a 2-D Gaussian (sigma 1.5) and population statistics.
inline double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, std::int64_t h, std::int64_t w) {
    const int k = 11;
    const double sigma = 1.5;
    double win[11][11];
    double total = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const double dy = i - 5, dx = j - 5;
            win[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            total += win[i][j];
        }
    for (auto& row : win)
        for (double& v : row) v /= total;
    const double c1 = (0.01 * 255) * (0.01 * 255);
    const double c2 = (0.03 * 255) * (0.03 * 255);
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::int64_t y = 0; y + k <= h; ++y)
        for (std::int64_t x = 0; x + k <= w; ++x) {
            double ma = 0, mb = 0;
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) {
                    ma += win[i][j] * a[(y + i) * w + x + j];
                    mb += win[i][j] * b[(y + i) * w + x + j];
                }
            double va = 0, vb = 0, cov = 0;
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) {
                    const double da = a[(y + i) * w + x + j] - ma;
                    const double db = b[(y + i) * w + x + j] - mb;
                    va += win[i][j] * da * da;
                    vb += win[i][j] * db * db;
                    cov += win[i][j] * da * db;
                }
            sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++n;
        }
    return sum / double(n);
}

inline double ssim(const drn::Tensor& a, const drn::Tensor& b, bool luma, std::int64_t shave) {
    std::int64_t h = 0, w = 0;
    const auto pa = planes(a, luma, shave, h, w);
    const auto pb = planes(b, luma, shave, h, w);
    double s = 0.0;
    for (std::size_t c = 0; c < pa.size(); ++c) s += ssim_plane(pa[c], pb[c], h, w);
    return s / double(pa.size());
}

}  // namespace oracle
