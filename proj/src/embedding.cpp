#include "palmforge/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "palmforge/error.hpp"

namespace palmforge {

namespace {
constexpr int kImageSize = 256;
constexpr int kGrid = 8;
constexpr int kBlock = kImageSize / kGrid;
constexpr int kBins = 8;
constexpr double kPi = 3.14159265358979323846;
} // namespace

std::vector<float> BlockGradientEmbedder::embed(const GrayImage& img) const {
    require(img.height() == kImageSize && img.width() == kImageSize,
            ErrorCode::invalid_argument, "embedder expects a 256x256 image");

    std::vector<double> hist(static_cast<std::size_t>(kGrid) * kGrid * kBins, 0.0);
    for (int y = 0; y < kImageSize; ++y) {
        const int ym = std::max(y - 1, 0), yp = std::min(y + 1, kImageSize - 1);
        for (int x = 0; x < kImageSize; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, kImageSize - 1);
            const double gx = (img.at(y, xp) - img.at(y, xm)) / (xp - xm);
            const double gy = (img.at(yp, x) - img.at(ym, x)) / (yp - ym);
            const double mag = std::hypot(gx, gy);
            if (mag == 0.0) continue;
            double angle = std::atan2(gy, gx); // (-pi, pi]; orientation is mod pi
            if (angle < 0.0) angle += kPi;
            if (angle >= kPi) angle -= kPi;
            const int bin = std::min(static_cast<int>(angle / kPi * kBins), kBins - 1);
            const int block = (y / kBlock) * kGrid + (x / kBlock);
            hist[static_cast<std::size_t>(block) * kBins + bin] += mag;
        }
    }

    double norm_sq = 0.0;
    for (double h : hist) norm_sq += h * h;
    std::vector<float> out(hist.size(), 0.0f);
    if (norm_sq <= 0.0) {
        out[0] = 1.0f; // constant image: degenerate fallback keeps unit norm
        return out;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (std::size_t i = 0; i < hist.size(); ++i)
        out[i] = static_cast<float>(hist[i] * inv);
    return out;
}

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
    require(a.size() == b.size() && !a.empty(), ErrorCode::shape_mismatch,
            "cosine similarity needs equal-length non-empty vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    require(na > 0.0 && nb > 0.0, ErrorCode::invalid_argument,
            "cosine similarity is undefined for zero vectors");
    return dot / std::sqrt(na * nb);
}

} // namespace palmforge
