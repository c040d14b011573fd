#pragma once
// HR -> LR degradations and bicubic resampling.
//
// Images are (n, c, h, w) tensors with values in [0, 1]; every plane is
// processed independently. None of these functions record gradients.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "drn/png.hpp"
#include "drn/tensor.hpp"

namespace drn {

/// Cubic convolution kernel with a = -0.5.
inline double cubic_kernel(double x) {
    const double ax = std::fabs(x);
    const double ax2 = ax * ax;
    const double ax3 = ax2 * ax;
    if (ax <= 1.0) return 1.5 * ax3 - 2.5 * ax2 + 1.0;
    if (ax <= 2.0) return -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0;
    return 0.0;
}

/// Taps contributing to one output sample along one axis.
struct ResizeTaps {
    std::vector<std::int64_t> index;  // clamped into [0, in_len)
    std::vector<double> weight;       // sums to 1
};

/// Per-output interpolation taps for resizing in_len -> out_len samples,
/// half-pixel aligned, kernel widened by 1/scale when shrinking.
inline std::vector<ResizeTaps> bicubic_taps(std::int64_t in_len, std::int64_t out_len) {
    const double scale = static_cast<double>(out_len) / static_cast<double>(in_len);
    const bool shrink = scale < 1.0;
    const double width = shrink ? 4.0 / scale : 4.0;
    const auto taps_per_output = static_cast<std::int64_t>(std::ceil(width)) + 2;
    std::vector<ResizeTaps> out(static_cast<std::size_t>(out_len));
    for (std::int64_t i = 0; i < out_len; ++i) {
        const double u = (static_cast<double>(i) + 0.5) / scale - 0.5;
        const auto left = static_cast<std::int64_t>(std::floor(u - width / 2.0));
        ResizeTaps& t = out[static_cast<std::size_t>(i)];
        double sum = 0.0;
        for (std::int64_t p = 0; p < taps_per_output; ++p) {
            const std::int64_t j = left + p;
            const double d = u - static_cast<double>(j);
            const double wgt = shrink ? scale * cubic_kernel(scale * d) : cubic_kernel(d);
            if (wgt == 0.0) continue;
            t.index.push_back(std::clamp<std::int64_t>(j, 0, in_len - 1));
            t.weight.push_back(wgt);
            sum += wgt;
        }
        for (double& wgt : t.weight) wgt /= sum;
    }
    return out;
}

inline Tensor bicubic_resize(const Tensor& image, std::int64_t out_h, std::int64_t out_w) {
    const Shape s = image.shape();
    if (s.numel() == 0) throw std::invalid_argument("bicubic_resize: empty image " + to_string(s));
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("bicubic_resize: target size must be positive, got " + std::to_string(out_h) +
                                    "x" + std::to_string(out_w));
    const auto rows = bicubic_taps(s.h, out_h);
    const auto cols = bicubic_taps(s.w, out_w);
    const std::int64_t planes = s.n * s.c;
    const auto in = image.data();
    Tensor out(Shape{s.n, s.c, out_h, out_w});
    auto dst = out.mutable_data();
    std::vector<double> tmp(static_cast<std::size_t>(out_h * s.w));
    for (std::int64_t p = 0; p < planes; ++p) {
        const float* src = in.data() + p * s.plane();
        for (std::int64_t y = 0; y < out_h; ++y) {
            const ResizeTaps& t = rows[static_cast<std::size_t>(y)];
            for (std::int64_t x = 0; x < s.w; ++x) {
                double acc = 0.0;
                for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weight[k] * src[t.index[k] * s.w + x];
                tmp[y * s.w + x] = acc;
            }
        }
        float* o = dst.data() + p * out_h * out_w;
        for (std::int64_t y = 0; y < out_h; ++y)
            for (std::int64_t x = 0; x < out_w; ++x) {
                const ResizeTaps& t = cols[static_cast<std::size_t>(x)];
                double acc = 0.0;
                for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weight[k] * tmp[y * s.w + t.index[k]];
                o[y * out_w + x] = static_cast<float>(acc);
            }
    }
    return out;
}

/// Keeps the top-left sample of every s x s cell.
inline Tensor nearest_downsample(const Tensor& image, std::int64_t s) {
    const Shape is = image.shape();
    if (s < 1) throw std::invalid_argument("nearest_downsample: factor must be >= 1");
    if (is.h % s != 0 || is.w % s != 0)
        throw std::invalid_argument("nearest_downsample: size " + std::to_string(is.h) + "x" + std::to_string(is.w) +
                                    " not divisible by " + std::to_string(s));
    const Shape os{is.n, is.c, is.h / s, is.w / s};
    Tensor out(os);
    auto dst = out.mutable_data();
    const auto src = image.data();
    for (std::int64_t p = 0; p < is.n * is.c; ++p)
        for (std::int64_t y = 0; y < os.h; ++y)
            for (std::int64_t x = 0; x < os.w; ++x)
                dst[(p * os.h + y) * os.w + x] = src[(p * is.h + y * s) * is.w + x * s];
    return out;
}

struct DegradationKernel {
    enum class Kind { Bicubic, Nearest, BDGaussian };

    Kind kind = Kind::Bicubic;
    std::int64_t scale = 4;
    std::int64_t size = 7;  // BDGaussian only
    double sigma = 1.6;     // BDGaussian only

    static DegradationKernel bicubic(std::int64_t s) { return {Kind::Bicubic, s, 7, 1.6}; }
    static DegradationKernel nearest(std::int64_t s) { return {Kind::Nearest, s, 7, 1.6}; }
    static DegradationKernel bd(std::int64_t s, std::int64_t size = 7, double sigma = 1.6) {
        return {Kind::BDGaussian, s, size, sigma};
    }

    void validate() const {
        if (scale < 1 || (scale & (scale - 1)) != 0)
            throw std::invalid_argument("degradation scale must be a power of two, got " + std::to_string(scale));
        if (kind == Kind::BDGaussian) {
            if (size < 3 || size % 2 == 0)
                throw std::invalid_argument("BD kernel size must be odd and >= 3, got " + std::to_string(size));
            if (!(sigma > 0.0)) throw std::invalid_argument("BD kernel sigma must be positive");
        }
    }
};

inline std::string to_string(DegradationKernel::Kind k) {
    switch (k) {
        case DegradationKernel::Kind::Bicubic: return "bicubic";
        case DegradationKernel::Kind::Nearest: return "nearest";
        case DegradationKernel::Kind::BDGaussian: return "bd";
    }
    return "?";
}

inline DegradationKernel::Kind parse_kernel_kind(const std::string& name) {
    if (name == "bicubic") return DegradationKernel::Kind::Bicubic;
    if (name == "nearest") return DegradationKernel::Kind::Nearest;
    if (name == "bd") return DegradationKernel::Kind::BDGaussian;
    throw std::invalid_argument("unknown degradation kernel '" + name + "' (expected bicubic|nearest|bd)");
}

/// Normalized size x size Gaussian table, row-major.
inline std::vector<float> gaussian_table(std::int64_t size, double sigma) {
    const std::int64_t r = size / 2;
    std::vector<double> raw;
    raw.reserve(static_cast<std::size_t>(size * size));
    double sum = 0.0;
    for (std::int64_t dy = -r; dy <= r; ++dy)
        for (std::int64_t dx = -r; dx <= r; ++dx) {
            const double v = std::exp(-static_cast<double>(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            raw.push_back(v);
            sum += v;
        }
    std::vector<float> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i] / sum);
    return out;
}

/// Mirror index without repeating the edge sample: -1 -> 1, len -> len - 2.
inline std::int64_t reflect_index(std::int64_t i, std::int64_t len) {
    if (len == 1) return 0;
    const std::int64_t period = 2 * (len - 1);
    i %= period;
    if (i < 0) i += period;
    return i < len ? i : period - i;
}

/// Gaussian blur (reflect padding) followed by stride-s subsampling at offset 0.
inline Tensor bd_degrade(const Tensor& image, const DegradationKernel& kernel) {
    kernel.validate();
    if (kernel.kind != DegradationKernel::Kind::BDGaussian)
        throw std::invalid_argument("bd_degrade: kernel is not BDGaussian");
    const Shape is = image.shape();
    const std::int64_t s = kernel.scale;
    if (is.h % s != 0 || is.w % s != 0)
        throw std::invalid_argument("bd_degrade: size " + std::to_string(is.h) + "x" + std::to_string(is.w) +
                                    " not divisible by " + std::to_string(s));
    const auto table = gaussian_table(kernel.size, kernel.sigma);
    const std::int64_t r = kernel.size / 2;
    const Shape os{is.n, is.c, is.h / s, is.w / s};
    Tensor out(os);
    auto dst = out.mutable_data();
    const auto src = image.data();
    for (std::int64_t p = 0; p < is.n * is.c; ++p) {
        const float* plane = src.data() + p * is.plane();
        for (std::int64_t y = 0; y < os.h; ++y)
            for (std::int64_t x = 0; x < os.w; ++x) {
                double acc = 0.0;
                for (std::int64_t dy = -r; dy <= r; ++dy) {
                    const std::int64_t iy = reflect_index(y * s + dy, is.h);
                    for (std::int64_t dx = -r; dx <= r; ++dx) {
                        const std::int64_t ix = reflect_index(x * s + dx, is.w);
                        acc += static_cast<double>(table[(dy + r) * kernel.size + dx + r]) * plane[iy * is.w + ix];
                    }
                }
                dst[(p * os.h + y) * os.w + x] = static_cast<float>(acc);
            }
    }
    return out;
}

/// Crops from the top-left so both spatial sizes are multiples of s.
inline Tensor crop_to_multiple(const Tensor& image, std::int64_t s) {
    const Shape is = image.shape();
    const std::int64_t h = is.h - is.h % s;
    const std::int64_t w = is.w - is.w % s;
    if (h == is.h && w == is.w) return image;
    if (h == 0 || w == 0) throw std::invalid_argument("image " + to_string(is) + " smaller than scale factor");
    Tensor out(Shape{is.n, is.c, h, w});
    auto dst = out.mutable_data();
    const auto src = image.data();
    for (std::int64_t p = 0; p < is.n * is.c; ++p)
        for (std::int64_t y = 0; y < h; ++y)
            std::copy_n(src.data() + (p * is.h + y) * is.w, w, dst.data() + (p * h + y) * w);
    return out;
}

/// Applies a degradation to an HR image whose size is divisible by the scale.
inline Tensor degrade(const Tensor& hr, const DegradationKernel& kernel) {
    kernel.validate();
    const Shape s = hr.shape();
    switch (kernel.kind) {
        case DegradationKernel::Kind::Bicubic:
            if (s.h % kernel.scale != 0 || s.w % kernel.scale != 0)
                throw std::invalid_argument("degrade: size not divisible by scale");
            return bicubic_resize(hr, s.h / kernel.scale, s.w / kernel.scale);
        case DegradationKernel::Kind::Nearest: return nearest_downsample(hr, kernel.scale);
        case DegradationKernel::Kind::BDGaussian: return bd_degrade(hr, kernel);
    }
    throw std::logic_error("unhandled degradation kind");
}

struct ImagePair {
    std::string name;
    Tensor lr;
    Tensor hr;
};

struct PairSet {
    std::vector<ImagePair> pairs;
    std::vector<std::string> warnings;
};

/// Sorted list of PNG files in a flat directory.
inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: '" + dir.string() + "'");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

inline ImagePair make_pair_from_hr(std::string name, const Tensor& hr, const DegradationKernel& kernel) {
    Tensor cropped = crop_to_multiple(hr, kernel.scale);
    Tensor lr = degrade(cropped, kernel);
    return ImagePair{std::move(name), std::move(lr), std::move(cropped)};
}

/// Builds (LR, HR) pairs from every decodable PNG in hr_dir, sorted by name.
inline PairSet make_pairs(const std::filesystem::path& hr_dir, const DegradationKernel& kernel) {
    kernel.validate();
    PairSet set;
    for (const auto& file : list_images(hr_dir)) {
        try {
            set.pairs.push_back(make_pair_from_hr(file.filename().string(), png_read(file), kernel));
        } catch (const std::exception& e) {
            set.warnings.push_back("skipped " + file.filename().string() + ": " + e.what());
        }
    }
    if (set.pairs.empty()) throw IoError("no usable images in '" + hr_dir.string() + "'");
    return set;
}

}  // namespace drn
