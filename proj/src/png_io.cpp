#include "stenonet/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace stenonet {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_rows(const std::string& path, int h, int w, int bit_depth, int color_type,
                const std::vector<png_bytep>& rows) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);  // host is little-endian
    for (png_bytep row : rows) png_write_row(png, row);
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

struct Decoded {
    int h = 0, w = 0, bit_depth = 0, channels = 0;
    std::vector<std::uint8_t> bytes;  // row-major, native endianness for 16-bit
};

Decoded read_any(const std::string& path, int want_depth) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng read failed: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    Decoded out;
    out.h = static_cast<int>(png_get_image_height(png, info));
    out.w = static_cast<int>(png_get_image_width(png, info));
    out.bit_depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY || out.bit_depth != want_depth) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path + ": expected " + std::to_string(want_depth) + "-bit grayscale");
    }
    if (out.bit_depth == 16) png_set_swap(png);
    png_read_update_info(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.bytes.resize(stride * static_cast<std::size_t>(out.h));
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.h));
    for (int i = 0; i < out.h; ++i) rows[static_cast<std::size_t>(i)] = out.bytes.data() + stride * static_cast<std::size_t>(i);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace

void write_png_gray16(const std::string& path, const TensorF& image) {
    if (image.ndim() != 2) throw std::invalid_argument("write_png_gray16: expects 2-d image");
    const int h = image.dim(0), w = image.dim(1);
    std::vector<std::uint16_t> buf(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const float v = std::clamp(image.data[i], 0.0f, 1.0f);
        buf[i] = static_cast<std::uint16_t>(std::lround(static_cast<double>(v) * 65535.0));
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int i = 0; i < h; ++i)
        rows[static_cast<std::size_t>(i)] = reinterpret_cast<png_bytep>(buf.data() + static_cast<std::size_t>(i) * w);
    write_rows(path, h, w, 16, PNG_COLOR_TYPE_GRAY, rows);
}

TensorF read_png_gray16(const std::string& path) {
    Decoded d = read_any(path, 16);
    TensorF img({d.h, d.w});
    const auto* px = reinterpret_cast<const std::uint16_t*>(d.bytes.data());
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<float>(px[i]) / 65535.0f;
    return img;
}

void write_png_mask(const std::string& path, const Mask& mask) {
    if (mask.ndim() != 2) throw std::invalid_argument("write_png_mask: expects 2-d mask");
    const int h = mask.dim(0), w = mask.dim(1);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask.data[i] ? 255 : 0;
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int i = 0; i < h; ++i) rows[static_cast<std::size_t>(i)] = buf.data() + static_cast<std::size_t>(i) * w;
    write_rows(path, h, w, 8, PNG_COLOR_TYPE_GRAY, rows);
}

Mask read_png_mask(const std::string& path) {
    Decoded d = read_any(path, 8);
    Mask mask({d.h, d.w});
    for (std::size_t i = 0; i < mask.data.size(); ++i) mask.data[i] = d.bytes[i] >= 128 ? 1 : 0;
    return mask;
}

void write_png_rgb(const std::string& path, const TensorT<std::uint8_t>& rgb) {
    if (rgb.ndim() != 3 || rgb.dim(2) != 3) throw std::invalid_argument("write_png_rgb: expects [H,W,3]");
    const int h = rgb.dim(0), w = rgb.dim(1);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int i = 0; i < h; ++i)
        rows[static_cast<std::size_t>(i)] =
            const_cast<png_bytep>(rgb.data.data() + static_cast<std::size_t>(i) * w * 3);
    write_rows(path, h, w, 8, PNG_COLOR_TYPE_RGB, rows);
}

}  // namespace stenonet
