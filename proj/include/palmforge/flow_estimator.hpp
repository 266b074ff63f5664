#pragma once

#include "palmforge/image.hpp"

namespace palmforge {

struct FlowEstimatorParams {
    double regularization_weight = 10.0; // smoothness weight alpha
    int iterations_per_level = 200;      // fixed-point iterations per pyramid level
    int pyramid_levels = 4;
    double pyramid_factor = 0.5; // only 0.5 is supported: levels are 2x2 box averages
};

struct FlowResult {
    FlowField flow;
    // set instead of erroring when an input image is constant: the data term
    // vanishes everywhere, so the zero field is returned with a warning
    bool degenerate = false;
};

// Dense flow F with warp_bilinear(source, F) ~= target, estimated by
// coarse-to-fine variational refinement: per level, the source is warped by
// the current flow, the brightness-constancy term is linearized there, and
// iterations of the classic coupled update with an alpha-weighted Laplacian
// smoothness term refine the field. Deterministic: same inputs, same bits.
// Inputs must be the same shape and at least 16x16.
FlowResult estimate_flow(const GrayImage& source, const GrayImage& target,
                         const FlowEstimatorParams& params = {});

// Mean endpoint error: average Euclidean distance between the flow vectors.
double endpoint_error(const FlowField& estimate, const FlowField& truth);

} // namespace palmforge
