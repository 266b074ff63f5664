#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "palmforge/deformation_library.hpp"
#include "palmforge/image.hpp"
#include "palmforge/noise_transport.hpp"

namespace palmforge {

// Variance schedule: beta[i] is the step-(i+1) variance, alpha = 1 - beta,
// alpha_bar[t] the cumulative product with alpha_bar[0] = 1 (so alpha_bar
// has T+1 entries and is strictly decreasing).
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    void validate() const;
};

// Linear beta ramp inclusive of both endpoints.
NoiseSchedule make_linear_schedule(int T = 250, double beta_start = 1e-4,
                                   double beta_end = 0.02);

struct SamplerConfig {
    int T = 250;
    double t_star_fraction = 0.5; // clean-denoise boundary, as a fraction of T
    double tau_u = 0.25;          // unconditional-stage boundary fraction
    double eta = 0.0;             // 0 = fully deterministic updates
    int step_stride = 1;          // >1 runs a strided timestep subsequence
};

// Noise predictor interface. condition == nullptr means unconditioned.
// Implementations must be deterministic for fixed inputs and reentrant.
class Denoiser {
  public:
    virtual ~Denoiser() = default;
    virtual NoiseField evaluate(const NoiseField& x, const GrayImage* condition,
                                int t) = 0;
};

// Closed-form reference denoiser for data x_0 ~ N(m, s^2 I): the posterior
// mean of x_0 given x_t, expressed as a noise prediction. m is a smoothing
// of the condition image, or the configured fallback when unconditioned.
struct GaussianDenoiserSpec {
    double data_std = 0.3;
    double condition_smoothing_sigma = 1.0; // m(C) = blur(C, sigma); 0 = C itself
    std::optional<GrayImage> unconditional_mean; // m when no condition is given
    float unconditional_level = 0.0f;            // flat fallback when unset
};

std::unique_ptr<Denoiser> gaussian_denoiser(const GaussianDenoiserSpec& spec,
                                            const NoiseSchedule& schedule);

// One reverse update from x_t to x_{t_prev}. For consecutive timesteps this
// is the classic eta-parameterized deterministic update; for strided jumps
// the per-step alpha generalizes to alpha_bar[t]/alpha_bar[t_prev]. xi is
// required (and used) only when eta > 0.
NoiseField ddim_step(const NoiseField& x_t, const NoiseField& eps, int t, int t_prev,
                     const NoiseSchedule& schedule, double eta = 0.0,
                     const NoiseField* xi = nullptr);

// Jump straight to the noise-free estimate at timestep t.
NoiseField clean_denoise(const NoiseField& x_t, const NoiseField& eps, int t,
                         const NoiseSchedule& schedule);

// Re-diffuse a clean image to timestep t with the given noise.
NoiseField renoise(const NoiseField& x_clean, const NoiseField& noise, int t,
                   const NoiseSchedule& schedule);

// Descending timestep nodes per stage; each stage's steps are the pairs of
// consecutive nodes, and stage boundaries are always hit exactly even when
// the stride does not divide the stage length.
struct StagePlan {
    int t_star = 0; // round(t_star_fraction * T): clean-denoise timestep
    int t_u = 0;    // floor(tau_u * T) + 1: last conditioned step
    std::vector<int> stage1; // T .. t_star, conditioned
    std::vector<int> stage2; // t_star .. t_u, conditioned (after re-injection)
    std::vector<int> stage3; // t_u .. 0, unconditioned
};

StagePlan stage_plan(const SamplerConfig& config);

// Intermediates captured when requested: the warped condition, the states
// around the clean-denoise / re-injection boundary, and stage-end states.
struct SampleTrace {
    GrayImage condition_warped;
    NoiseField stage1_end;   // x at t_star entering the clean step
    NoiseField x_clean;
    NoiseField x_renoised;   // x at t_star after warped-noise injection
    NoiseField stage2_end;   // x at t_u entering the unconditional stage
    NoiseField final_unclamped;
};

struct SampleOptions {
    // Pre-warp noise stream shared across samples of one identity; defaults
    // to the master seed (no sharing).
    std::optional<std::uint64_t> shared_noise_seed;
    TransportConfig transport;
    SampleTrace* trace = nullptr;
};

// Three-stage generation: conditioned denoising from pure noise down to
// t_star, clean denoise + warped-noise re-injection, conditioned denoising
// down past t_u, then unconditional refinement to x_0 (clamped at the end).
GrayImage sample_three_stage(Denoiser& denoiser, const GrayImage& crease,
                             const DeformationRecord& record,
                             const SamplerConfig& config, const NoiseSchedule& schedule,
                             std::uint64_t master_seed,
                             const SampleOptions& options = {});

} // namespace palmforge
