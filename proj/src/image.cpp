#include "palmforge/image.hpp"

#include <algorithm>
#include <cmath>

namespace palmforge {

namespace {

void check_dims(int height, int width) {
    require(height > 0 && width > 0, ErrorCode::invalid_argument,
            "raster dimensions must be positive");
}

void check_finite(const std::vector<float>& data, const char* what) {
    for (float v : data)
        require(std::isfinite(v), ErrorCode::non_finite,
                std::string(what) + " contains a non-finite value");
}

} // namespace

GrayImage::GrayImage(int height, int width) : height_(height), width_(width) {
    check_dims(height, width);
    data_.assign(static_cast<std::size_t>(height) * width, 0.0f);
}

GrayImage GrayImage::from_data(int height, int width, std::vector<float> data) {
    check_dims(height, width);
    require(data.size() == static_cast<std::size_t>(height) * width,
            ErrorCode::shape_mismatch, "image data size does not match dimensions");
    check_finite(data, "image");
    for (float& v : data) v = std::clamp(v, -1.0f, 1.0f);
    GrayImage img;
    img.height_ = height;
    img.width_ = width;
    img.data_ = std::move(data);
    return img;
}

NoiseField::NoiseField(int height, int width) : height_(height), width_(width) {
    check_dims(height, width);
    data_.assign(static_cast<std::size_t>(height) * width, 0.0f);
}

NoiseField NoiseField::from_data(int height, int width, std::vector<float> data) {
    check_dims(height, width);
    require(data.size() == static_cast<std::size_t>(height) * width,
            ErrorCode::shape_mismatch, "field data size does not match dimensions");
    check_finite(data, "field");
    NoiseField f;
    f.height_ = height;
    f.width_ = width;
    f.data_ = std::move(data);
    return f;
}

NoiseField NoiseField::from_image(const GrayImage& img) {
    NoiseField f;
    f.height_ = img.height();
    f.width_ = img.width();
    f.data_ = img.data();
    return f;
}

GrayImage NoiseField::to_image_clamped() const {
    std::vector<float> clamped = data_;
    for (float& v : clamped) v = std::clamp(v, -1.0f, 1.0f);
    return GrayImage::from_data(height_, width_, std::move(clamped));
}

FlowField::FlowField(int height, int width) : height_(height), width_(width) {
    check_dims(height, width);
    data_.assign(static_cast<std::size_t>(height) * width * 2, 0.0f);
}

FlowField FlowField::from_data(int height, int width, std::vector<float> uv) {
    check_dims(height, width);
    require(uv.size() == static_cast<std::size_t>(height) * width * 2,
            ErrorCode::shape_mismatch, "flow data size does not match dimensions");
    check_finite(uv, "flow");
    FlowField f;
    f.height_ = height;
    f.width_ = width;
    f.data_ = std::move(uv);
    return f;
}

void FlowField::validate_finite() const { check_finite(data_, "flow"); }

std::vector<float> warp_bilinear_raw(const float* src, int height, int width,
                                     const FlowField& flow) {
    require(flow.height() == height && flow.width() == width, ErrorCode::shape_mismatch,
            "flow dimensions must match the image");
    std::vector<float> out(static_cast<std::size_t>(height) * width);
    const float max_x = static_cast<float>(width - 1);
    const float max_y = static_cast<float>(height - 1);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            float sx = std::clamp(static_cast<float>(x) + flow.u(y, x), 0.0f, max_x);
            float sy = std::clamp(static_cast<float>(y) + flow.v(y, x), 0.0f, max_y);
            const int x0 = static_cast<int>(sx);
            const int y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, width - 1);
            const int y1 = std::min(y0 + 1, height - 1);
            const float fx = sx - static_cast<float>(x0);
            const float fy = sy - static_cast<float>(y0);
            const std::size_t r0 = static_cast<std::size_t>(y0) * width;
            const std::size_t r1 = static_cast<std::size_t>(y1) * width;
            const float top = (1.0f - fx) * src[r0 + x0] + fx * src[r0 + x1];
            const float bot = (1.0f - fx) * src[r1 + x0] + fx * src[r1 + x1];
            out[static_cast<std::size_t>(y) * width + x] = (1.0f - fy) * top + fy * bot;
        }
    }
    return out;
}

GrayImage warp_bilinear(const GrayImage& img, const FlowField& flow) {
    return GrayImage::from_data(
        img.height(), img.width(),
        warp_bilinear_raw(img.data().data(), img.height(), img.width(), flow));
}

Jacobian jacobian(const FlowField& flow) {
    const int h = flow.height();
    const int w = flow.width();
    require(h >= 3 && w >= 3, ErrorCode::invalid_argument,
            "jacobian needs at least a 3x3 field");
    Jacobian jac;
    jac.height = h;
    jac.width = w;
    jac.data.resize(static_cast<std::size_t>(h) * w * 4);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float du_dx, du_dy, dv_dx, dv_dy;
            if (x == 0) {
                du_dx = flow.u(y, 1) - flow.u(y, 0);
                dv_dx = flow.v(y, 1) - flow.v(y, 0);
            } else if (x == w - 1) {
                du_dx = flow.u(y, x) - flow.u(y, x - 1);
                dv_dx = flow.v(y, x) - flow.v(y, x - 1);
            } else {
                du_dx = 0.5f * (flow.u(y, x + 1) - flow.u(y, x - 1));
                dv_dx = 0.5f * (flow.v(y, x + 1) - flow.v(y, x - 1));
            }
            if (y == 0) {
                du_dy = flow.u(1, x) - flow.u(0, x);
                dv_dy = flow.v(1, x) - flow.v(0, x);
            } else if (y == h - 1) {
                du_dy = flow.u(y, x) - flow.u(y - 1, x);
                dv_dy = flow.v(y, x) - flow.v(y - 1, x);
            } else {
                du_dy = 0.5f * (flow.u(y + 1, x) - flow.u(y - 1, x));
                dv_dy = 0.5f * (flow.v(y + 1, x) - flow.v(y - 1, x));
            }
            const std::size_t i = jac.idx(y, x);
            jac.data[i] = du_dx;
            jac.data[i + 1] = du_dy;
            jac.data[i + 2] = dv_dx;
            jac.data[i + 3] = dv_dy;
        }
    }
    return jac;
}

std::vector<float> gaussian_blur(const std::vector<float>& src, int height, int width,
                                 double sigma) {
    if (sigma <= 0.0) return src;
    check_dims(height, width);
    require(src.size() == static_cast<std::size_t>(height) * width,
            ErrorCode::shape_mismatch, "blur input size does not match dimensions");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<float> kernel(static_cast<std::size_t>(radius) * 2 + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double k = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = static_cast<float>(k);
        sum += k;
    }
    for (float& k : kernel) k = static_cast<float>(k / sum);

    std::vector<float> tmp(src.size());
    std::vector<float> out(src.size());
    // horizontal
    for (int y = 0; y < height; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * width;
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xi = std::clamp(x + i, 0, width - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * src[row + xi];
            }
            tmp[row + x] = static_cast<float>(acc);
        }
    }
    // vertical
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yi = std::clamp(y + i, 0, height - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       tmp[static_cast<std::size_t>(yi) * width + x];
            }
            out[static_cast<std::size_t>(y) * width + x] = static_cast<float>(acc);
        }
    }
    return out;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    return GrayImage::from_data(img.height(), img.width(),
                                gaussian_blur(img.data(), img.height(), img.width(), sigma));
}

std::vector<float> box_downsample2(const std::vector<float>& src, int height, int width,
                                   int& out_height, int& out_width) {
    check_dims(height, width);
    out_height = (height + 1) / 2;
    out_width = (width + 1) / 2;
    std::vector<float> out(static_cast<std::size_t>(out_height) * out_width);
    for (int y = 0; y < out_height; ++y) {
        for (int x = 0; x < out_width; ++x) {
            double acc = 0.0;
            int n = 0;
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    const int sy = 2 * y + dy;
                    const int sx = 2 * x + dx;
                    if (sy < height && sx < width) {
                        acc += src[static_cast<std::size_t>(sy) * width + sx];
                        ++n;
                    }
                }
            }
            out[static_cast<std::size_t>(y) * out_width + x] = static_cast<float>(acc / n);
        }
    }
    return out;
}

} // namespace palmforge
