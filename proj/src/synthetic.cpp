#include "palmforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "palmforge/rng.hpp"

namespace palmforge {

namespace {

float uniform_in(Rng& rng, double lo, double hi) {
    return static_cast<float>(lo + (hi - lo) * rng.uniform01());
}

struct Vec2 {
    double x = 0.0, y = 0.0;
};

Vec2 bezier_point(const CreaseCurve& c, double t) {
    const double s = 1.0 - t;
    const double b0 = s * s * s, b1 = 3 * s * s * t, b2 = 3 * s * t * t, b3 = t * t * t;
    return {b0 * c.points[0] + b1 * c.points[2] + b2 * c.points[4] + b3 * c.points[6],
            b0 * c.points[1] + b1 * c.points[3] + b2 * c.points[5] + b3 * c.points[7]};
}

double point_segment_dist_sq(double px, double py, const Vec2& a, const Vec2& b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len_sq = dx * dx + dy * dy;
    double t = 0.0;
    if (len_sq > 0.0)
        t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len_sq, 0.0, 1.0);
    const double cx = a.x + t * dx - px, cy = a.y + t * dy - py;
    return cx * cx + cy * cy;
}

} // namespace

CreaseIdentity CreaseIdentity::from_seed(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "crease-curves"));
    CreaseIdentity id;
    id.seed = seed;
    const int n_curves = 3 + static_cast<int>(rng.below(3)); // 3..5
    id.curves.reserve(static_cast<std::size_t>(n_curves));
    for (int i = 0; i < n_curves; ++i) {
        CreaseCurve c;
        // crease-like arcs: start on the left, end on the right, mid control
        // points jittered off the chord
        const float x0 = uniform_in(rng, 0.05, 0.35);
        const float y0 = uniform_in(rng, 0.15, 0.85);
        const float x3 = uniform_in(rng, 0.65, 0.95);
        const float y3 = uniform_in(rng, 0.15, 0.85);
        auto jitter = [&] { return uniform_in(rng, -0.22, 0.22); };
        const float x1 = std::clamp(x0 + (x3 - x0) / 3.0f + jitter(), 0.0f, 1.0f);
        const float y1 = std::clamp(y0 + (y3 - y0) / 3.0f + jitter(), 0.0f, 1.0f);
        const float x2 = std::clamp(x0 + 2.0f * (x3 - x0) / 3.0f + jitter(), 0.0f, 1.0f);
        const float y2 = std::clamp(y0 + 2.0f * (y3 - y0) / 3.0f + jitter(), 0.0f, 1.0f);
        c.points = {x0, y0, x1, y1, x2, y2, x3, y3};
        c.width_px = uniform_in(rng, 1.6, 3.0);
        c.intensity = uniform_in(rng, 0.75, 1.0);
        id.curves.push_back(c);
    }
    return id;
}

GrayImage gen_crease_map(const CreaseIdentity& identity, int size) {
    require(size >= 32, ErrorCode::invalid_argument, "crease map size too small");
    require(!identity.curves.empty(), ErrorCode::invalid_argument,
            "identity has no curves");
    for (const auto& c : identity.curves) {
        require(c.width_px > 0.0f && c.intensity > 0.0f && c.intensity <= 1.0f,
                ErrorCode::invalid_argument, "bad curve profile parameters");
        for (float p : c.points)
            require(p >= 0.0f && p <= 1.0f, ErrorCode::invalid_argument,
                    "curve control point outside the unit square");
    }

    const double scale = size - 1.0;
    std::vector<float> ridge(static_cast<std::size_t>(size) * size, 0.0f);

    for (const auto& curve : identity.curves) {
        const double sigma = curve.width_px;
        const double reach = 3.0 * sigma + 1.0;
        const int n_samples = 2 * size; // segments well under a pixel long
        Vec2 prev = bezier_point(curve, 0.0);
        prev.x *= scale;
        prev.y *= scale;
        for (int s = 1; s <= n_samples; ++s) {
            Vec2 cur = bezier_point(curve, static_cast<double>(s) / n_samples);
            cur.x *= scale;
            cur.y *= scale;
            const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(prev.x, cur.x) - reach)));
            const int x_hi = std::min(size - 1, static_cast<int>(std::ceil(std::max(prev.x, cur.x) + reach)));
            const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(prev.y, cur.y) - reach)));
            const int y_hi = std::min(size - 1, static_cast<int>(std::ceil(std::max(prev.y, cur.y) + reach)));
            for (int y = y_lo; y <= y_hi; ++y) {
                for (int x = x_lo; x <= x_hi; ++x) {
                    const double d_sq = point_segment_dist_sq(x, y, prev, cur);
                    if (d_sq > reach * reach) continue;
                    const float g = static_cast<float>(
                        curve.intensity * std::exp(-d_sq / (2.0 * sigma * sigma)));
                    float& cell = ridge[static_cast<std::size_t>(y) * size + x];
                    cell = std::max(cell, g); // order-invariant combine
                }
            }
            prev = cur;
        }
    }

    std::vector<float> data(ridge.size());
    for (std::size_t i = 0; i < ridge.size(); ++i)
        data[i] = -1.0f + 2.0f * ridge[i];
    return GrayImage::from_data(size, size, std::move(data));
}

GrayImage render_palm_like(const GrayImage& crease, std::uint64_t texture_seed,
                           float texture_weight, double smooth_sigma) {
    require(texture_weight >= 0.0f, ErrorCode::invalid_argument,
            "texture weight must be non-negative");
    const int h = crease.height(), w = crease.width();
    std::vector<float> out = gaussian_blur(crease.data(), h, w, smooth_sigma);
    if (texture_weight > 0.0f) {
        Rng rng(derive_seed(texture_seed, "texture"));
        std::vector<float> white(out.size());
        for (float& v : white) v = static_cast<float>(rng.normal());
        auto lo = gaussian_blur(white, h, w, 1.5);
        auto hi = gaussian_blur(white, h, w, 6.0);
        // mid-frequency band, normalized to zero mean / unit std
        double mean = 0.0;
        for (std::size_t i = 0; i < lo.size(); ++i) {
            lo[i] -= hi[i];
            mean += lo[i];
        }
        mean /= static_cast<double>(lo.size());
        double var = 0.0;
        for (float v : lo) var += (v - mean) * (v - mean);
        var /= static_cast<double>(lo.size());
        const double inv_std = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] += texture_weight * static_cast<float>((lo[i] - mean) * inv_std);
    }
    return GrayImage::from_data(h, w, std::move(out)); // clamps
}

FlowField gen_smooth_deformation(const DeformationParams& params, std::uint64_t seed,
                                 int height, int width) {
    require(params.smoothness >= 8.0, ErrorCode::invalid_argument,
            "smoothness (grid spacing) must be >= 8 px");
    require(params.max_displacement >= 0.0, ErrorCode::invalid_argument,
            "max_displacement must be non-negative");
    require(height >= 2 && width >= 2, ErrorCode::invalid_argument,
            "deformation field too small");

    FlowField flow(height, width);
    if (params.max_displacement > 0.0) {
        const double spacing = params.smoothness;
        const int nx = static_cast<int>(std::ceil((width - 1) / spacing)) + 1;
        const int ny = static_cast<int>(std::ceil((height - 1) / spacing)) + 1;
        Rng rng(derive_seed(seed, "deform-grid"));
        std::vector<double> grid(static_cast<std::size_t>(nx) * ny * 2);
        for (double& g : grid) g = rng.normal();

        double max_mag_sq = 0.0;
        for (int y = 0; y < height; ++y) {
            const double gy = y / spacing;
            const int iy = std::min(static_cast<int>(gy), ny - 2);
            const double fy = gy - iy;
            for (int x = 0; x < width; ++x) {
                const double gx = x / spacing;
                const int ix = std::min(static_cast<int>(gx), nx - 2);
                const double fx = gx - ix;
                for (int c = 0; c < 2; ++c) {
                    const auto node = [&](int yy, int xx) {
                        return grid[(static_cast<std::size_t>(yy) * nx + xx) * 2 + c];
                    };
                    const double top = (1 - fx) * node(iy, ix) + fx * node(iy, ix + 1);
                    const double bot = (1 - fx) * node(iy + 1, ix) + fx * node(iy + 1, ix + 1);
                    const double val = (1 - fy) * top + fy * bot;
                    flow.data()[(static_cast<std::size_t>(y) * width + x) * 2 + c] =
                        static_cast<float>(val);
                }
                const double u = flow.u(y, x), v = flow.v(y, x);
                max_mag_sq = std::max(max_mag_sq, u * u + v * v);
            }
        }
        // exact rescale so the largest |(u, v)| equals max_displacement
        const double factor =
            max_mag_sq > 0.0 ? params.max_displacement / std::sqrt(max_mag_sq) : 0.0;
        for (float& v : flow.data()) v = static_cast<float>(v * factor);
    }

    if (params.affine) {
        const auto& a = *params.affine;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                flow.u(y, x) += static_cast<float>(a[0] * x + a[1] * y + a[2] - x);
                flow.v(y, x) += static_cast<float>(a[3] * x + a[4] * y + a[5] - y);
            }
        flow.validate_finite();
    }
    return flow;
}

FlowField make_step_column_field(int height, int width, int column, float magnitude) {
    require(column > 0 && column < width, ErrorCode::invalid_argument,
            "step column out of range");
    FlowField flow(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = column; x < width; ++x) flow.u(y, x) = magnitude;
    return flow;
}

FlowField inject_step_cross(const FlowField& flow, float magnitude) {
    FlowField out = flow;
    const int cx = flow.width() / 2;
    const int cy = flow.height() / 2;
    for (int y = 0; y < flow.height(); ++y)
        for (int x = 0; x < flow.width(); ++x) {
            if (x >= cx) out.u(y, x) += magnitude;
            if (y >= cy) out.v(y, x) += magnitude;
        }
    return out;
}

std::vector<CorpusPair> gen_pair_corpus(int n_identities, int pairs_per_identity,
                                        const DeformationParams& params,
                                        std::uint64_t seed, int size,
                                        int corrupted_per_identity) {
    require(n_identities > 0 && pairs_per_identity >= 0 && corrupted_per_identity >= 0,
            ErrorCode::invalid_argument, "corpus sizes must be non-negative");
    require(pairs_per_identity + corrupted_per_identity > 0, ErrorCode::invalid_argument,
            "corpus would be empty");

    std::vector<CorpusPair> pairs;
    pairs.reserve(static_cast<std::size_t>(n_identities) *
                  (pairs_per_identity + corrupted_per_identity));
    for (int i = 0; i < n_identities; ++i) {
        char id_buf[16];
        std::snprintf(id_buf, sizeof(id_buf), "id%03d", i);
        const std::string identity_id(id_buf);

        const auto identity = CreaseIdentity::from_seed(derive_seed(seed, "identity", i));
        const auto crease = gen_crease_map(identity, size);
        const auto base = render_palm_like(crease, derive_seed(seed, "texture", i));

        const int total = pairs_per_identity + corrupted_per_identity;
        for (int j = 0; j < total; ++j) {
            const bool corrupted = j >= pairs_per_identity;
            FlowField truth =
                gen_smooth_deformation(params, derive_seed(seed, "deform", i, j), size, size);
            if (corrupted) truth = inject_step_cross(truth);

            CorpusPair pair;
            pair.identity_id = identity_id;
            pair.pair_id = identity_id + "/p" + std::to_string(j);
            pair.target = warp_bilinear(base, truth);
            pair.source = base;
            pair.truth = std::move(truth);
            pair.corrupted = corrupted;
            pairs.push_back(std::move(pair));
        }
    }
    return pairs;
}

} // namespace palmforge
