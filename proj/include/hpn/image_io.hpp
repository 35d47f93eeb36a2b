#pragma once

// 8-bit RGB PNG (libpng) and little-endian PFM output.

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "hpn/error.hpp"
#include "hpn/mesh_io.hpp"
#include "hpn/render.hpp"

namespace hpn {

inline std::uint8_t to_byte(double v) {
    if (!(v > 0.0)) return 0;  // also maps NaN to 0
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

inline std::string encode_png(const Image& img) {
    std::vector<std::uint8_t> pixels(img.rgb.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = to_byte(img.rgb[i]);
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr))
        throw IoError(std::string("png: ") + image.message);
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr))
        throw IoError(std::string("png: ") + image.message);
    out.resize(size);
    return out;
}

/// Decodes an 8-bit RGB or RGBA PNG into [0,1] floats (alpha dropped).
inline Image decode_png(const std::string& bytes) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw FormatError(std::string("png: ") + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw FormatError(std::string("png: ") + image.message);
    }
    Image img(static_cast<int>(image.width), static_cast<int>(image.height));
    for (std::size_t i = 0; i < buf.size(); ++i) img.rgb[i] = buf[i] / 255.0;
    return img;
}

/// PFM stores rows bottom-up; negative scale marks little-endian.
inline std::string encode_pfm(const Image& img) {
    std::string out = "PF\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
    for (int y = img.height - 1; y >= 0; --y)
        for (int x = 0; x < 3 * img.width; ++x) {
            const float v = static_cast<float>(img.rgb[std::size_t(y) * 3 * img.width + x]);
            char b[4];
            std::memcpy(b, &v, 4);
            out.append(b, 4);
        }
    return out;
}

inline void save_png(const std::string& path, const Image& img) { detail::write_file(path, encode_png(img)); }
inline void save_pfm(const std::string& path, const Image& img) { detail::write_file(path, encode_pfm(img)); }

}  // namespace hpn
