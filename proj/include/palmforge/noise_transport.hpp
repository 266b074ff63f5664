#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "palmforge/image.hpp"

namespace palmforge {

struct TransportConfig {
    int subpixel_factor = 4; // k: each pixel's value rides on k^2 subsample carriers
};

// Distribution-preserving warp of a standard-normal noise field along a flow.
// Each pixel value z is split onto k^2 exactly-N(0,1) carriers (bridge
// upsampling: g_i' = g_i - mean(g) + z/k), carriers move from their subpixel
// center c to c - F(c) (forward transport along the approximate inverse of
// the backward image warp), and every output pixel aggregates the carriers
// that landed in it as sum/sqrt(n). Empty pixels draw from a refill stream
// derived from the seed. Output pixels are therefore independent and exactly
// N(0,1) marginally. Zero flow reproduces the input element-exact; constant
// integer flows co-move the noise with the image warp on the interior.
NoiseField warp_noise(const NoiseField& noise, const FlowField& flow,
                      const TransportConfig& config, std::uint64_t seed);

struct GaussianityTolerances {
    double mean_abs;    // bound on |per-pixel sample mean| over the tested subset
    double var_low;     // bounds on per-pixel sample variance
    double var_high;
    double corr_abs;    // bound on |pairwise correlation|
    double ks_alpha;    // significance level for the pooled KS critical value
};

// Family-aware defaults: per-statistic bounds sit at ~4.2-4.9 standard errors
// so that a true-N(0,1) batch passes the whole family with high probability
// while real defects (biased mean, scaled variance, induced correlation)
// still fail by a wide margin.
GaussianityTolerances default_gaussianity_tolerances(std::size_t n_fields);

struct PairCorrelation {
    int ay, ax, by, bx;
    double corr;
};

struct GaussianityReport {
    std::size_t fields = 0;
    int height = 0, width = 0;
    std::vector<float> mean_map; // per-pixel sample mean over the fields
    std::vector<float> var_map;  // per-pixel sample variance (1/(n-1))
    std::vector<std::pair<int, int>> tested; // (y, x) of the 8x8 evaluation grid
    double max_abs_mean = 0.0;               // extrema over the tested subset
    double min_var = 0.0, max_var = 0.0;
    std::vector<PairCorrelation> correlations; // grid pairs + adjacent-neighbor pairs
    double max_abs_corr = 0.0;
    double ks_statistic = 0.0; // pooled one-sample KS vs the standard normal
    double ks_critical = 0.0;
    std::size_t ks_n = 0;
    GaussianityTolerances tolerances{};
    std::vector<std::string> violations; // human-readable; empty means passed
    bool passed = false;
};

// Statistics of a batch of nominally-N(0,1) fields (>= 100, equal shapes,
// at least 8x8): mean/variance maps, correlations on a deterministic pixel
// subset, and a pooled KS test, each checked against the tolerances.
GaussianityReport gaussianity_report(const std::vector<NoiseField>& samples);
GaussianityReport gaussianity_report(const std::vector<NoiseField>& samples,
                                     const GaussianityTolerances& tolerances);

std::string to_json(const GaussianityReport& report);

} // namespace palmforge
