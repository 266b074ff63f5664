#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "palmforge/image.hpp"

namespace palmforge {

// One crease curve: cubic Bezier in the unit square with a Gaussian
// cross-profile of the given width (pixels) and peak intensity in (0, 1].
struct CreaseCurve {
    std::array<float, 8> points; // x0,y0, x1,y1, x2,y2, x3,y3, all in [0,1]
    float width_px = 2.0f;
    float intensity = 1.0f;
};

// A synthetic identity is fully determined by its curves; from_seed derives
// 3-5 crease-like curves deterministically from the identity seed.
struct CreaseIdentity {
    std::uint64_t seed = 0;
    std::vector<CreaseCurve> curves;

    static CreaseIdentity from_seed(std::uint64_t seed);
};

// Rasterizes the identity's curves onto a [-1, +1] canvas: background -1,
// crease ridges rising toward +1. Per-pixel value is the max over curves of
// intensity * exp(-d^2 / (2 width^2)), d = distance to the curve; max-combine
// makes the result independent of curve enumeration order.
GrayImage gen_crease_map(const CreaseIdentity& identity, int size = 256);

// Crease map blended with band-limited procedural texture: the smoothed
// crease plus texture_weight times a normalized (blur(w,1.5) - blur(w,6))
// noise band, clamped to [-1, 1]. texture_weight == 0 returns the smoothed
// crease alone.
GrayImage render_palm_like(const GrayImage& crease, std::uint64_t texture_seed,
                           float texture_weight = 0.3f, double smooth_sigma = 1.0);

// Optional affine component of a deformation, row-major 2x3:
//   [a00 a01 b0; a10 a11 b1], mapping (x, y) -> (a00 x + a01 y + b0, ...).
using AffineComponent = std::array<double, 6>;

struct DeformationParams {
    double max_displacement = 4.0; // px; the rescale target for the random part
    double smoothness = 32.0;      // control-grid spacing in px, >= 8
    std::optional<AffineComponent> affine;
};

// Smooth random deformation: seeded N(0,1) control values on a coarse grid
// (spacing = smoothness), bilinearly upsampled, rescaled so the maximum
// displacement magnitude equals max_displacement exactly, then the optional
// affine flow (A p + b - p) is added on top.
FlowField gen_smooth_deformation(const DeformationParams& params, std::uint64_t seed,
                                 int height, int width);

// Test fixture: u jumps by `magnitude` at `column` (v stays 0).
FlowField make_step_column_field(int height, int width, int column, float magnitude);

// Corruption used for filter-rejection corpora: adds a step of `magnitude`
// to u across a column AND to v across a row. A single step column at
// 256x256 flags only ~0.008 of pixels -- below the 0.01 rejection threshold
// -- so the corruptor uses a cross, which fails the filter at every size.
FlowField inject_step_cross(const FlowField& flow, float magnitude = 12.0f);

struct CorpusPair {
    std::string identity_id;
    std::string pair_id;
    GrayImage source;
    GrayImage target; // warp_bilinear(source, truth) by construction
    FlowField truth;
    bool corrupted = false;
};

// Rendered pairs for n_identities x (pairs_per_identity smooth +
// corrupted_per_identity step-corrupted) deformations. Fully reproducible
// from the seed; target is exactly the warp of the source by the truth flow.
std::vector<CorpusPair> gen_pair_corpus(int n_identities, int pairs_per_identity,
                                        const DeformationParams& params,
                                        std::uint64_t seed, int size = 256,
                                        int corrupted_per_identity = 0);

} // namespace palmforge
