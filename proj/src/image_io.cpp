#include "palmforge/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace palmforge {

namespace {

constexpr float kFlowMagic = 202021.25f;
constexpr float kNoiseMagic = 212021.25f;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    require(f != nullptr, ErrorCode::io_error, "cannot open " + path);
    return f;
}

// All container integers/floats are little-endian on disk. The host is
// little-endian in every supported environment; memcpy keeps this honest
// against strict aliasing rather than punning pointers.
template <typename T>
void write_le(std::FILE* f, T value) {
    static_assert(sizeof(T) == 4);
    unsigned char bytes[4];
    std::memcpy(bytes, &value, 4);
    require(std::fwrite(bytes, 1, 4, f) == 4, ErrorCode::io_error, "short write");
}

template <typename T>
bool read_le(std::FILE* f, T& value) {
    static_assert(sizeof(T) == 4);
    unsigned char bytes[4];
    if (std::fread(bytes, 1, 4, f) != 4) return false;
    std::memcpy(&value, bytes, 4);
    return true;
}

void write_float_block(std::FILE* f, const std::vector<float>& values) {
    const std::size_t n =
        std::fwrite(values.data(), sizeof(float), values.size(), f);
    require(n == values.size(), ErrorCode::io_error, "short write");
}

std::vector<float> read_float_block(std::FILE* f, std::size_t count,
                                    const std::string& path) {
    std::vector<float> values(count);
    const std::size_t n = std::fread(values.data(), sizeof(float), count, f);
    require(n == count, ErrorCode::truncated, "truncated payload in " + path);
    for (float v : values)
        require(std::isfinite(v), ErrorCode::non_finite,
                "non-finite value in " + path);
    return values;
}

void read_header(std::FILE* f, float expected_magic, const std::string& path,
                 int& width, int& height) {
    float magic = 0.0f;
    require(read_le(f, magic), ErrorCode::truncated, "truncated header in " + path);
    require(magic == expected_magic, ErrorCode::format_error,
            "bad magic in " + path);
    std::int32_t w = 0, h = 0;
    require(read_le(f, w) && read_le(f, h), ErrorCode::truncated,
            "truncated header in " + path);
    require(w > 0 && h > 0 && w < (1 << 20) && h < (1 << 20), ErrorCode::format_error,
            "implausible dimensions in " + path);
    width = w;
    height = h;
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
    // libpng longjmps by default; convert to our exception instead.
    (void)png;
    fail(ErrorCode::format_error, std::string("png: ") + msg);
}

void png_warning_fn(png_structp, png_const_charp) {}

} // namespace

GrayImage read_png(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             png_error_fn, png_warning_fn);
    require(png != nullptr, ErrorCode::internal_error, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(ErrorCode::internal_error, "png_create_info_struct failed");
    }
    try {
        png_init_io(png, f.get());
        png_read_info(png, info);
        const png_uint_32 width = png_get_image_width(png, info);
        const png_uint_32 height = png_get_image_height(png, info);
        const int bit_depth = png_get_bit_depth(png, info);
        const int color_type = png_get_color_type(png, info);
        const int interlace = png_get_interlace_type(png, info);
        require(color_type == PNG_COLOR_TYPE_GRAY, ErrorCode::format_error,
                path + ": only grayscale PNG is supported");
        require(bit_depth == 8, ErrorCode::format_error,
                path + ": only 8-bit PNG is supported");
        require(interlace == PNG_INTERLACE_NONE, ErrorCode::format_error,
                path + ": interlaced PNG is not supported");

        std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * height);
        std::vector<png_bytep> rows(height);
        for (png_uint_32 y = 0; y < height; ++y)
            rows[y] = pixels.data() + static_cast<std::size_t>(y) * width;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
        png_destroy_read_struct(&png, &info, nullptr);

        std::vector<float> data(pixels.size());
        for (std::size_t i = 0; i < pixels.size(); ++i)
            data[i] = static_cast<float>(2.0 * pixels[i] / 255.0 - 1.0);
        return GrayImage::from_data(static_cast<int>(height), static_cast<int>(width),
                                    std::move(data));
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
}

void write_png(const GrayImage& img, const std::string& path) {
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              png_error_fn, png_warning_fn);
    require(png != nullptr, ErrorCode::internal_error, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorCode::internal_error, "png_create_info_struct failed");
    }
    try {
        png_init_io(png, f.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
                     static_cast<png_uint_32>(img.height()), 8, PNG_COLOR_TYPE_GRAY,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);

        const int w = img.width();
        std::vector<unsigned char> row(static_cast<std::size_t>(w));
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < w; ++x) {
                const double p = std::lround((img.at(y, x) + 1.0) / 2.0 * 255.0);
                row[static_cast<std::size_t>(x)] =
                    static_cast<unsigned char>(std::clamp(p, 0.0, 255.0));
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
}

FlowField read_flo(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    int width = 0, height = 0;
    read_header(f.get(), kFlowMagic, path, width, height);
    auto values =
        read_float_block(f.get(), static_cast<std::size_t>(width) * height * 2, path);
    return FlowField::from_data(height, width, std::move(values));
}

void write_flo(const FlowField& flow, const std::string& path) {
    FilePtr f = open_file(path, "wb");
    write_le(f.get(), kFlowMagic);
    write_le(f.get(), static_cast<std::int32_t>(flow.width()));
    write_le(f.get(), static_cast<std::int32_t>(flow.height()));
    write_float_block(f.get(), flow.data());
}

std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
    std::vector<std::uint8_t> out(12 + flow.data().size() * sizeof(float));
    const float magic = kFlowMagic;
    const std::int32_t w = flow.width(), h = flow.height();
    std::memcpy(out.data(), &magic, 4);
    std::memcpy(out.data() + 4, &w, 4);
    std::memcpy(out.data() + 8, &h, 4);
    std::memcpy(out.data() + 12, flow.data().data(), flow.data().size() * sizeof(float));
    return out;
}

FlowField decode_flo(const std::uint8_t* bytes, std::size_t size,
                     const std::string& context) {
    require(size >= 12, ErrorCode::truncated, "truncated header in " + context);
    float magic = 0.0f;
    std::int32_t w = 0, h = 0;
    std::memcpy(&magic, bytes, 4);
    std::memcpy(&w, bytes + 4, 4);
    std::memcpy(&h, bytes + 8, 4);
    require(magic == kFlowMagic, ErrorCode::format_error, "bad magic in " + context);
    require(w > 0 && h > 0 && w < (1 << 20) && h < (1 << 20), ErrorCode::format_error,
            "implausible dimensions in " + context);
    const std::size_t count = static_cast<std::size_t>(w) * h * 2;
    require(size == 12 + count * sizeof(float), ErrorCode::truncated,
            "payload size mismatch in " + context);
    std::vector<float> values(count);
    std::memcpy(values.data(), bytes + 12, count * sizeof(float));
    for (float v : values)
        require(std::isfinite(v), ErrorCode::non_finite, "non-finite value in " + context);
    return FlowField::from_data(h, w, std::move(values));
}

NoiseField read_noise(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    int width = 0, height = 0;
    read_header(f.get(), kNoiseMagic, path, width, height);
    auto values =
        read_float_block(f.get(), static_cast<std::size_t>(width) * height, path);
    return NoiseField::from_data(height, width, std::move(values));
}

void write_noise(const NoiseField& field, const std::string& path) {
    FilePtr f = open_file(path, "wb");
    write_le(f.get(), kNoiseMagic);
    write_le(f.get(), static_cast<std::int32_t>(field.width()));
    write_le(f.get(), static_cast<std::int32_t>(field.height()));
    write_float_block(f.get(), field.data());
}

} // namespace palmforge
