#pragma once
// PSNR / SSIM under the usual SR protocol: quantize to 8 bits, optionally keep
// only BT.601 luma, shave a border, then score.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drn/degradation.hpp"
#include "drn/png.hpp"
#include "drn/tensor.hpp"

namespace drn {

struct EvalProtocol {
    enum class Channel { Y, RGB };

    Channel channel = Channel::Y;
    std::int64_t shave = 4;

    [[nodiscard]] std::string describe() const {
        return std::string("channel=") + (channel == Channel::Y ? "y" : "rgb") + " shave=" + std::to_string(shave) +
               " peak=255 quantized=8bit";
    }
};

inline constexpr double kPsnrCap = 100.0;

/// BT.601 luma on [0,1] RGB input, producing values on the 16..235 scale.
inline Tensor rgb_to_y(const Tensor& image) {
    const Shape s = image.shape();
    if (s.c != 3) throw std::invalid_argument("rgb_to_y: expected 3 channels, got " + std::to_string(s.c));
    Tensor out(Shape{s.n, 1, s.h, s.w});
    auto dst = out.mutable_data();
    const auto src = image.data();
    const std::int64_t hw = s.plane();
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t i = 0; i < hw; ++i) {
            const double r = src[(n * 3 + 0) * hw + i];
            const double g = src[(n * 3 + 1) * hw + i];
            const double b = src[(n * 3 + 2) * hw + i];
            dst[n * hw + i] = static_cast<float>(65.481 * r + 128.553 * g + 24.966 * b + 16.0);
        }
    return out;
}

/// A scoring plane: row-major doubles on the 0..255 scale.
struct Plane {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<double> v;
};

/// Quantizes, converts per protocol, and shaves. Expects a single image.
inline std::vector<Plane> scoring_planes(const Tensor& image, const EvalProtocol& protocol) {
    const Shape s = image.shape();
    if (s.n != 1 || s.c != 3) throw std::invalid_argument("expected a (1,3,h,w) image, got " + to_string(s));
    const std::int64_t sh = protocol.shave;
    if (sh < 0) throw std::invalid_argument("shave must be >= 0");
    const std::int64_t h = s.h - 2 * sh;
    const std::int64_t w = s.w - 2 * sh;
    if (h < 1 || w < 1) throw std::invalid_argument("image " + to_string(s) + " too small for shave " + std::to_string(sh));

    const auto src = image.data();
    auto q = [&](std::int64_t c, std::int64_t y, std::int64_t x) {
        return static_cast<double>(quantize_u8(src[(c * s.h + y) * s.w + x]));
    };
    std::vector<Plane> planes;
    if (protocol.channel == EvalProtocol::Channel::Y) {
        Plane p{h, w, std::vector<double>(static_cast<std::size_t>(h * w))};
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const double luma = (65.481 * q(0, y + sh, x + sh) + 128.553 * q(1, y + sh, x + sh) +
                                     24.966 * q(2, y + sh, x + sh)) / 255.0 + 16.0;
                p.v[y * w + x] = std::round(luma);
            }
        planes.push_back(std::move(p));
    } else {
        for (std::int64_t c = 0; c < 3; ++c) {
            Plane p{h, w, std::vector<double>(static_cast<std::size_t>(h * w))};
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x) p.v[y * w + x] = q(c, y + sh, x + sh);
            planes.push_back(std::move(p));
        }
    }
    return planes;
}

inline double psnr_from_mse(double mse) {
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

inline void require_same_image_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                    to_string(b.shape()));
}

inline double psnr(const Tensor& a, const Tensor& b, const EvalProtocol& protocol) {
    require_same_image_shape(a, b, "psnr");
    const auto pa = scoring_planes(a, protocol);
    const auto pb = scoring_planes(b, protocol);
    double se = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < pa.size(); ++c)
        for (std::size_t i = 0; i < pa[c].v.size(); ++i) {
            const double d = pa[c].v[i] - pb[c].v[i];
            se += d * d;
            ++count;
        }
    return psnr_from_mse(se / static_cast<double>(count));
}

namespace detail {

inline std::vector<double> gaussian_window_1d(int size, double sigma) {
    std::vector<double> g(static_cast<std::size_t>(size));
    const int r = size / 2;
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        g[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += g[i + r];
    }
    for (double& v : g) v /= sum;
    return g;
}

/// Separable 'valid' filtering with a 1-D window along both axes.
inline std::vector<double> filter_valid(const std::vector<double>& img, std::int64_t h, std::int64_t w,
                                        const std::vector<double>& g) {
    const auto k = static_cast<std::int64_t>(g.size());
    const std::int64_t oh = h - k + 1;
    const std::int64_t ow = w - k + 1;
    std::vector<double> rows(static_cast<std::size_t>(h * ow));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < k; ++i) acc += g[i] * img[y * w + x + i];
            rows[y * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh * ow));
    for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < k; ++i) acc += g[i] * rows[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

inline double ssim_plane(const Plane& a, const Plane& b) {
    constexpr int kWindow = 11;
    constexpr double kSigma = 1.5;
    constexpr double C1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double C2 = (0.03 * 255.0) * (0.03 * 255.0);
    if (a.h < kWindow || a.w < kWindow)
        throw std::invalid_argument("ssim: scored region " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                                    " smaller than the 11x11 window");
    const auto g = gaussian_window_1d(kWindow, kSigma);
    std::vector<double> aa(a.v.size()), bb(a.v.size()), ab(a.v.size());
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        aa[i] = a.v[i] * a.v[i];
        bb[i] = b.v[i] * b.v[i];
        ab[i] = a.v[i] * b.v[i];
    }
    const auto mu_a = filter_valid(a.v, a.h, a.w, g);
    const auto mu_b = filter_valid(b.v, a.h, a.w, g);
    const auto e_aa = filter_valid(aa, a.h, a.w, g);
    const auto e_bb = filter_valid(bb, a.h, a.w, g);
    const auto e_ab = filter_valid(ab, a.h, a.w, g);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma;
        const double vb = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    return sum / static_cast<double>(mu_a.size());
}

}  // namespace detail

/// Mean SSIM (11x11 Gaussian window, sigma 1.5, valid region); RGB mode
/// averages the per-channel scores.
inline double ssim(const Tensor& a, const Tensor& b, const EvalProtocol& protocol) {
    require_same_image_shape(a, b, "ssim");
    const auto pa = scoring_planes(a, protocol);
    const auto pb = scoring_planes(b, protocol);
    double total = 0.0;
    for (std::size_t c = 0; c < pa.size(); ++c) total += detail::ssim_plane(pa[c], pb[c]);
    return total / static_cast<double>(pa.size());
}

struct EvalRow {
    std::string image;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::string protocol;
    std::vector<EvalRow> rows;
    std::vector<std::string> errors;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

inline void finalize(EvalReport& report) {
    if (report.rows.empty()) {
        std::string msg = "evaluation produced no scored images";
        for (const auto& e : report.errors) msg += "\n  " + e;
        throw std::runtime_error(msg);
    }
    double p = 0.0, s = 0.0;
    for (const auto& r : report.rows) {
        p += r.psnr_db;
        s += r.ssim;
    }
    report.mean_psnr = p / static_cast<double>(report.rows.size());
    report.mean_ssim = s / static_cast<double>(report.rows.size());
}

/// Scores every image in `output_dir` against the same-named image in
/// `reference_dir`. A larger reference is cropped from the top-left to the
/// output size, matching the HR crop applied before degradation.
inline EvalReport evaluate_dataset(const std::filesystem::path& output_dir, const std::filesystem::path& reference_dir,
                                   const EvalProtocol& protocol) {
    EvalReport report;
    report.protocol = protocol.describe();
    std::map<std::string, std::filesystem::path> refs;
    for (const auto& f : list_images(reference_dir)) refs[f.filename().string()] = f;
    for (const auto& f : list_images(output_dir)) {
        const std::string name = f.filename().string();
        auto it = refs.find(name);
        if (it == refs.end()) {
            report.errors.push_back(name + ": no reference image");
            continue;
        }
        try {
            Tensor out = png_read(f);
            Tensor ref = png_read(it->second);
            const Shape os = out.shape();
            const Shape rs = ref.shape();
            if (rs.h >= os.h && rs.w >= os.w && (rs.h != os.h || rs.w != os.w)) {
                Tensor cropped(Shape{1, 3, os.h, os.w});
                auto d = cropped.mutable_data();
                const auto r = ref.data();
                for (std::int64_t c = 0; c < 3; ++c)
                    for (std::int64_t y = 0; y < os.h; ++y)
                        for (std::int64_t x = 0; x < os.w; ++x)
                            d[(c * os.h + y) * os.w + x] = r[(c * rs.h + y) * rs.w + x];
                ref = cropped;
            }
            report.rows.push_back({name, psnr(out, ref, protocol), ssim(out, ref, protocol)});
        } catch (const std::exception& e) {
            report.errors.push_back(name + ": " + e.what());
        }
        refs.erase(it);
    }
    for (const auto& [name, path] : refs) report.errors.push_back(name + ": no output image");
    finalize(report);
    return report;
}

inline std::string format_table(const EvalReport& report) {
    std::ostringstream os;
    os << "# protocol: " << report.protocol << '\n';
    std::size_t width = 5;
    for (const auto& r : report.rows) width = std::max(width, r.image.size());
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %9s  %7s\n", static_cast<int>(width), "image", "PSNR(dB)", "SSIM");
    os << buf;
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %9.4f  %7.4f\n", static_cast<int>(width), r.image.c_str(), r.psnr_db,
                      r.ssim);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "%-*s  %9.4f  %7.4f\n", static_cast<int>(width), "mean", report.mean_psnr,
                  report.mean_ssim);
    os << buf;
    if (!report.errors.empty()) {
        os << "errors:\n";
        for (const auto& e : report.errors) os << "  " << e << '\n';
    }
    return os.str();
}

inline std::string format_csv(const EvalReport& report) {
    std::ostringstream os;
    char buf[256];
    os << "image,psnr_db,ssim\n";
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f\n", r.image.c_str(), r.psnr_db, r.ssim);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f\n", report.mean_psnr, report.mean_ssim);
    os << buf;
    return os.str();
}

}  // namespace drn
