#pragma once

#include <cstddef>
#include <vector>

#include "palmforge/error.hpp"

namespace palmforge {

// Single-channel raster, row-major, pixel centers at integer coordinates.
// Every stored value is finite and inside [-1, +1]; construction clamps.
class GrayImage {
  public:
    GrayImage() = default;
    GrayImage(int height, int width);

    // Clamps into [-1, 1]; rejects non-finite input and size mismatches.
    static GrayImage from_data(int height, int width, std::vector<float> data);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }

    float at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    float& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

  private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

// Same container contract as GrayImage but without the range clamp; carries
// noise fields and unclamped sampler states. Values must be finite.
class NoiseField {
  public:
    NoiseField() = default;
    NoiseField(int height, int width);
    static NoiseField from_data(int height, int width, std::vector<float> data);
    static NoiseField from_image(const GrayImage& img);

    // Clamps into [-1, 1] and converts; the one sanctioned exit to GrayImage.
    GrayImage to_image_clamped() const;

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }

    float at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    float& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

  private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

// Dense displacement field F = (u, v), interleaved per pixel, row-major.
// F(x, y) points from a pixel of the warp *output* to the position in the
// source it reads from: out(x, y) = src(x + u, y + v). Components finite.
class FlowField {
  public:
    FlowField() = default;
    FlowField(int height, int width);
    static FlowField from_data(int height, int width, std::vector<float> uv);

    int height() const { return height_; }
    int width() const { return width_; }

    float u(int y, int x) const { return data_[idx(y, x)]; }
    float v(int y, int x) const { return data_[idx(y, x) + 1]; }
    float& u(int y, int x) { return data_[idx(y, x)]; }
    float& v(int y, int x) { return data_[idx(y, x) + 1]; }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    void validate_finite() const;

  private:
    std::size_t idx(int y, int x) const {
        return (static_cast<std::size_t>(y) * width_ + x) * 2;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_; // 2*H*W: u0,v0,u1,v1,...
};

// Per-pixel 2x2 flow Jacobian: du/dx, du/dy, dv/dx, dv/dy.
struct Jacobian {
    int height = 0;
    int width = 0;
    std::vector<float> data; // 4*H*W in the order above

    float du_dx(int y, int x) const { return data[idx(y, x)]; }
    float du_dy(int y, int x) const { return data[idx(y, x) + 1]; }
    float dv_dx(int y, int x) const { return data[idx(y, x) + 2]; }
    float dv_dy(int y, int x) const { return data[idx(y, x) + 3]; }

    std::size_t idx(int y, int x) const {
        return (static_cast<std::size_t>(y) * width + x) * 4;
    }
};

// Backward bilinear warp: out(x, y) = src(x + u, y + v), sample positions
// clamped to the canvas (edge values extend outward). Exact pass-through for
// zero flow. Works on raw planes so noise-like data can be warped too.
std::vector<float> warp_bilinear_raw(const float* src, int height, int width,
                                     const FlowField& flow);
GrayImage warp_bilinear(const GrayImage& img, const FlowField& flow);

// Central differences in the interior, one-sided at the border rows/columns.
// Exact for affine fields everywhere. Requires height, width >= 3.
Jacobian jacobian(const FlowField& flow);

// --- small raster utilities shared across modules ---

// Separable Gaussian blur, replicated borders, kernel radius ceil(3*sigma).
// sigma <= 0 returns the input unchanged.
std::vector<float> gaussian_blur(const std::vector<float>& src, int height, int width,
                                 double sigma);
GrayImage gaussian_blur(const GrayImage& img, double sigma);

// 2x2 box average; odd trailing row/column averages what is in bounds.
std::vector<float> box_downsample2(const std::vector<float>& src, int height, int width,
                                   int& out_height, int& out_width);

} // namespace palmforge
