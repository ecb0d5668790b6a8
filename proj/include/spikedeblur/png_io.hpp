#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "spikedeblur/image.hpp"

namespace spikedeblur {

// ---------------------------------------------------------------------------
// PNG: 8-bit or 16-bit, grayscale or RGB, values mapped linearly to [0,1].
// No gamma handling; codes k map to k/255 (or k/65535) and back.
// ---------------------------------------------------------------------------

namespace detail_png {

struct FileHandle {
    std::FILE* f = nullptr;
    explicit FileHandle(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {}
    ~FileHandle() {
        if (f) std::fclose(f);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

}  // namespace detail_png

inline Image load_png(const std::string& path) {
    detail_png::FileHandle file(path, "rb");
    if (!file.f) throw std::runtime_error("png: cannot open: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: read struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png: info struct allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: failed to read: " + path);
    }

    png_init_io(png, file.f);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int color_type = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if ((color_type & PNG_COLOR_MASK_ALPHA) || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // files are big-endian

    png_read_update_info(png, info);
    bit_depth = png_get_bit_depth(png, info);
    const int channels = static_cast<int>(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: unsupported channel count after decode: " + path);
    }

    const std::size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> raster(row_bytes * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = raster.data() + row_bytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image out(static_cast<int>(width), static_cast<int>(height), channels);
    const double scale = bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            for (int c = 0; c < channels; ++c) {
                const std::size_t idx = (static_cast<std::size_t>(y) * width + x) * channels + c;
                const double v = bit_depth == 16
                                     ? reinterpret_cast<const std::uint16_t*>(raster.data())[idx]
                                     : raster[idx];
                out.at(c, y, x) = v * scale;
            }
        }
    }
    return out;
}

/// Write an image as PNG. Values are clamped to [0,1] and quantized to the
/// requested bit depth (8 or 16).
inline void save_png(const std::string& path, const Image& image, int bit_depth = 8) {
    if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("png: bit depth must be 8 or 16");
    if (image.width < 1 || image.height < 1) throw std::invalid_argument("png: empty image");

    detail_png::FileHandle file(path, "wb");
    if (!file.f) throw std::runtime_error("png: cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: write struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png: info struct allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png: failed to write: " + path);
    }

    png_init_io(png, file.f);
    const int color_type = image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);

    const double maxval = bit_depth == 16 ? 65535.0 : 255.0;
    const std::size_t row_elems = static_cast<std::size_t>(image.width) * image.channels;
    if (bit_depth == 8) {
        std::vector<std::uint8_t> row(row_elems);
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x)
                for (int c = 0; c < image.channels; ++c) {
                    const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                    row[static_cast<std::size_t>(x) * image.channels + c] =
                        static_cast<std::uint8_t>(std::lround(v * maxval));
                }
            png_write_row(png, row.data());
        }
    } else {
        std::vector<std::uint16_t> row(row_elems);
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x)
                for (int c = 0; c < image.channels; ++c) {
                    const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                    row[static_cast<std::size_t>(x) * image.channels + c] =
                        static_cast<std::uint16_t>(std::lround(v * maxval));
                }
            png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
        }
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// ---------------------------------------------------------------------------
// Raw float dumps: magic "RAWF", little-endian u32 width, height, channels,
// then channels*height*width float32 values, planar. Used for fixtures where
// PNG quantization would interfere.
// ---------------------------------------------------------------------------

inline void save_rawf(const std::string& path, const Image& image) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("rawf: cannot open for writing: " + path);
    f.write("RAWF", 4);
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(image.width),
                                   static_cast<std::uint32_t>(image.height),
                                   static_cast<std::uint32_t>(image.channels)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> buf(image.data.begin(), image.data.end());
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw std::runtime_error("rawf: write failed: " + path);
}

inline Image load_rawf(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("rawf: cannot open: " + path);
    char magic[4];
    std::uint32_t dims[3];
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!f || std::memcmp(magic, "RAWF", 4) != 0) throw std::runtime_error("rawf: bad header: " + path);
    if (dims[0] < 1 || dims[1] < 1 || (dims[2] != 1 && dims[2] != 3))
        throw std::runtime_error("rawf: bad dimensions: " + path);
    Image out(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]));
    std::vector<float> buf(out.data.size());
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw std::runtime_error("rawf: truncated payload: " + path);
    std::copy(buf.begin(), buf.end(), out.data.begin());
    return out;
}

}  // namespace spikedeblur
