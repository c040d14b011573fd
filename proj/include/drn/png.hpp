#pragma once
// 8-bit PNG codec on top of libpng's simplified API.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "drn/tensor.hpp"

namespace drn {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::uint8_t quantize_u8(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

/// Reads an 8-bit gray/RGB(A)/palette PNG as a (1, 3, h, w) tensor in [0, 1].
/// Gray images are replicated to three channels; alpha is dropped.
inline Tensor png_read(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
    if (image.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&image);
        throw IoError("unsupported PNG '" + path.string() + "': 16-bit channels");
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    const bool alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
    image.format = color ? (alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB) : (alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY);
    const std::int64_t stride_px = PNG_IMAGE_PIXEL_CHANNELS(image.format);
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG '" + path.string() + "': " + msg);
    }
    const std::int64_t h = image.height;
    const std::int64_t w = image.width;
    Tensor out(Shape{1, 3, h, w});
    auto d = out.mutable_data();
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const std::uint8_t* px = buffer.data() + (y * w + x) * stride_px;
            for (std::int64_t c = 0; c < 3; ++c) {
                const std::uint8_t v = color ? px[c] : px[0];
                d[(c * h + y) * w + x] = static_cast<float>(v) / 255.0f;
            }
        }
    return out;
}

/// Writes a (1, 3, h, w) or (1, 1, h, w) tensor as 8-bit PNG through a
/// temporary file and rename.
inline void png_write(const Tensor& image, const std::filesystem::path& path) {
    const Shape s = image.shape();
    if (s.n != 1 || (s.c != 3 && s.c != 1))
        throw std::invalid_argument("png_write: expected (1,3,h,w) or (1,1,h,w), got " + to_string(s));
    std::vector<std::uint8_t> buffer(static_cast<std::size_t>(s.numel()));
    const auto d = image.data();
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x)
            for (std::int64_t c = 0; c < s.c; ++c)
                buffer[(y * s.w + x) * s.c + c] = quantize_u8(d[(c * s.h + y) * s.w + x]);

    png_image out{};
    out.version = PNG_IMAGE_VERSION;
    out.width = static_cast<png_uint_32>(s.w);
    out.height = static_cast<png_uint_32>(s.h);
    out.format = s.c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    if (!png_image_write_to_file(&out, tmp.string().c_str(), 0, buffer.data(), 0, nullptr))
        throw IoError("cannot write PNG '" + path.string() + "': " + out.message);
    std::filesystem::rename(tmp, path);
}

}  // namespace drn
