#include "palmforge/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "palmforge/error.hpp"
#include "palmforge/rng.hpp"

namespace palmforge {

void NoiseSchedule::validate() const {
    require(T >= 1, ErrorCode::invalid_argument, "schedule needs at least one step");
    require(beta.size() == static_cast<std::size_t>(T) && alpha.size() == beta.size() &&
                alpha_bar.size() == beta.size() + 1,
            ErrorCode::invalid_argument, "schedule array sizes do not match T");
    require(alpha_bar[0] == 1.0, ErrorCode::invalid_argument,
            "cumulative alpha must start at 1");
    for (int t = 1; t <= T; ++t) {
        const double b = beta[static_cast<std::size_t>(t - 1)];
        require(b > 0.0 && b < 1.0, ErrorCode::invalid_argument,
                "beta values must lie in (0, 1)");
        require(alpha_bar[static_cast<std::size_t>(t)] <
                    alpha_bar[static_cast<std::size_t>(t - 1)],
                ErrorCode::invalid_argument, "cumulative alpha must strictly decrease");
    }
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    require(T >= 2, ErrorCode::invalid_argument, "schedule needs at least two steps");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
            ErrorCode::invalid_argument,
            "beta range must satisfy 0 < start <= end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<std::size_t>(T));
    s.alpha.resize(static_cast<std::size_t>(T));
    s.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = static_cast<double>(t - 1) / (T - 1);
        const double b = beta_start + (beta_end - beta_start) * frac;
        s.beta[static_cast<std::size_t>(t - 1)] = b;
        s.alpha[static_cast<std::size_t>(t - 1)] = 1.0 - b;
        s.alpha_bar[static_cast<std::size_t>(t)] =
            s.alpha_bar[static_cast<std::size_t>(t - 1)] * (1.0 - b);
    }
    s.validate();
    return s;
}

namespace {

void check_step_args(const NoiseSchedule& schedule, int t, int t_low) {
    require(schedule.alpha_bar.size() == static_cast<std::size_t>(schedule.T) + 1,
            ErrorCode::invalid_argument, "schedule array sizes do not match T");
    require(t >= t_low && t <= schedule.T, ErrorCode::invalid_argument,
            "timestep out of schedule range");
}

void check_same_shape(const NoiseField& a, const NoiseField& b, const char* what) {
    require(a.height() == b.height() && a.width() == b.width(),
            ErrorCode::shape_mismatch, what);
}

} // namespace

NoiseField ddim_step(const NoiseField& x_t, const NoiseField& eps, int t, int t_prev,
                     const NoiseSchedule& schedule, double eta, const NoiseField* xi) {
    check_step_args(schedule, t, 1);
    require(t_prev >= 0 && t_prev < t, ErrorCode::invalid_argument,
            "t_prev must lie below t");
    require(eta >= 0.0 && eta <= 1.0, ErrorCode::invalid_argument,
            "eta must lie in [0, 1]");
    check_same_shape(x_t, eps, "noise prediction shape must match the state");

    const double ab_t = schedule.alpha_bar[static_cast<std::size_t>(t)];
    const double ab_prev = schedule.alpha_bar[static_cast<std::size_t>(t_prev)];
    const double alpha_eff = ab_t / ab_prev; // = alpha_t for t_prev == t-1
    const double eps_coef = (1.0 - alpha_eff) / std::sqrt(1.0 - ab_t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha_eff);

    double sigma = 0.0;
    if (eta > 0.0) {
        require(xi != nullptr, ErrorCode::invalid_argument,
                "stochastic update needs an injected noise field");
        check_same_shape(x_t, *xi, "injected noise shape must match the state");
        sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - alpha_eff));
    }

    NoiseField out(x_t.height(), x_t.width());
    const std::size_t n = x_t.size();
    for (std::size_t i = 0; i < n; ++i) {
        double v = (static_cast<double>(x_t.data()[i]) -
                    eps_coef * static_cast<double>(eps.data()[i])) *
                   inv_sqrt_alpha;
        if (sigma > 0.0) v += sigma * static_cast<double>(xi->data()[i]);
        out.data()[i] = static_cast<float>(v);
    }
    return out;
}

NoiseField clean_denoise(const NoiseField& x_t, const NoiseField& eps, int t,
                         const NoiseSchedule& schedule) {
    // t = 0 (alpha_bar = 1) is the identity; accepted for the edge case
    check_step_args(schedule, t, 0);
    check_same_shape(x_t, eps, "noise prediction shape must match the state");
    const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
    const double noise_coef = std::sqrt(1.0 - ab);
    const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
    NoiseField out(x_t.height(), x_t.width());
    for (std::size_t i = 0; i < x_t.size(); ++i)
        out.data()[i] = static_cast<float>(
            (static_cast<double>(x_t.data()[i]) -
             noise_coef * static_cast<double>(eps.data()[i])) *
            inv_sqrt_ab);
    return out;
}

NoiseField renoise(const NoiseField& x_clean, const NoiseField& noise, int t,
                   const NoiseSchedule& schedule) {
    check_step_args(schedule, t, 0);
    check_same_shape(x_clean, noise, "noise shape must match the clean image");
    const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    NoiseField out(x_clean.height(), x_clean.width());
    for (std::size_t i = 0; i < x_clean.size(); ++i)
        out.data()[i] = static_cast<float>(a * static_cast<double>(x_clean.data()[i]) +
                                           b * static_cast<double>(noise.data()[i]));
    return out;
}

namespace {

std::uint64_t content_hash(const std::vector<float>& data, int h, int w, double sigma) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    hash = detail::fnv1a_accumulate(hash, data.data(), data.size() * sizeof(float));
    hash = detail::fnv1a_accumulate(hash, &h, sizeof(h));
    hash = detail::fnv1a_accumulate(hash, &w, sizeof(w));
    hash = detail::fnv1a_accumulate(hash, &sigma, sizeof(sigma));
    return hash;
}

class GaussianDenoiser final : public Denoiser {
  public:
    GaussianDenoiser(const GaussianDenoiserSpec& spec, const NoiseSchedule& schedule)
        : spec_(spec), schedule_(schedule) {
        require(spec.data_std > 0.0, ErrorCode::invalid_argument,
                "data std must be positive");
        require(spec.condition_smoothing_sigma >= 0.0, ErrorCode::invalid_argument,
                "smoothing sigma must be non-negative");
        schedule_.validate();
    }

    NoiseField evaluate(const NoiseField& x, const GrayImage* condition,
                        int t) override {
        require(t >= 1 && t <= schedule_.T, ErrorCode::invalid_argument,
                "timestep out of schedule range");
        if (condition != nullptr)
            require(condition->height() == x.height() && condition->width() == x.width(),
                    ErrorCode::shape_mismatch, "condition shape must match the state");

        const auto mean = mean_for(condition, x.height(), x.width());
        const double ab = schedule_.alpha_bar[static_cast<std::size_t>(t)];
        const double sqrt_ab = std::sqrt(ab);
        const double rem = 1.0 - ab;
        const double s2 = spec_.data_std * spec_.data_std;
        // posterior mean of x_0 given x_t, then re-expressed as the noise
        // prediction (x_t - sqrt(ab) x0_hat)/sqrt(1 - ab)
        const double gain = s2 * sqrt_ab / (ab * s2 + rem);
        const double inv_rem = 1.0 / std::sqrt(rem);

        NoiseField out(x.height(), x.width());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double m = (*mean)[i];
            const double xv = x.data()[i];
            const double x0_hat = m + gain * (xv - sqrt_ab * m);
            out.data()[i] = static_cast<float>((xv - sqrt_ab * x0_hat) * inv_rem);
        }
        return out;
    }

  private:
    using MeanPtr = std::shared_ptr<const std::vector<double>>;

    MeanPtr mean_for(const GrayImage* condition, int h, int w) {
        if (condition == nullptr) {
            std::lock_guard<std::mutex> lock(mutex_);
            if (!uncond_ || uncond_h_ != h || uncond_w_ != w) {
                auto m = std::make_shared<std::vector<double>>();
                if (spec_.unconditional_mean) {
                    const GrayImage& img = *spec_.unconditional_mean;
                    require(img.height() == h && img.width() == w,
                            ErrorCode::shape_mismatch,
                            "unconditional mean image shape must match the state");
                    m->assign(img.data().begin(), img.data().end());
                } else {
                    m->assign(static_cast<std::size_t>(h) * w,
                              static_cast<double>(spec_.unconditional_level));
                }
                uncond_ = std::move(m);
                uncond_h_ = h;
                uncond_w_ = w;
            }
            return uncond_;
        }
        const std::uint64_t key =
            content_hash(condition->data(), h, w, spec_.condition_smoothing_sigma);
        std::lock_guard<std::mutex> lock(mutex_);
        if (!cond_ || key != cond_key_) {
            const auto blurred = gaussian_blur(condition->data(), h, w,
                                               spec_.condition_smoothing_sigma);
            auto m = std::make_shared<std::vector<double>>(blurred.begin(),
                                                           blurred.end());
            cond_ = std::move(m);
            cond_key_ = key;
        }
        return cond_;
    }

    GaussianDenoiserSpec spec_;
    NoiseSchedule schedule_;
    std::mutex mutex_;
    MeanPtr cond_;
    std::uint64_t cond_key_ = 0;
    MeanPtr uncond_;
    int uncond_h_ = -1, uncond_w_ = -1;
};

} // namespace

std::unique_ptr<Denoiser> gaussian_denoiser(const GaussianDenoiserSpec& spec,
                                            const NoiseSchedule& schedule) {
    return std::make_unique<GaussianDenoiser>(spec, schedule);
}

namespace {

void validate_sampler_config(const SamplerConfig& c) {
    require(c.T >= 2, ErrorCode::config_error, "sampler needs at least two timesteps");
    require(c.tau_u > 0.0 && c.tau_u < c.t_star_fraction && c.t_star_fraction < 1.0,
            ErrorCode::config_error,
            "stage fractions must satisfy 0 < tau_u < t_star_fraction < 1");
    require(c.eta >= 0.0 && c.eta <= 1.0, ErrorCode::config_error,
            "eta must lie in [0, 1]");
    require(c.step_stride >= 1, ErrorCode::config_error,
            "step stride must be at least 1");
}

// hi, hi-stride, ... , lo with the boundary forced as the final node
std::vector<int> descend(int hi, int lo, int stride) {
    std::vector<int> nodes;
    for (int t = hi; t > lo; t -= stride) nodes.push_back(t);
    nodes.push_back(lo);
    return nodes;
}

} // namespace

StagePlan stage_plan(const SamplerConfig& config) {
    validate_sampler_config(config);
    StagePlan plan;
    plan.t_star = static_cast<int>(std::lround(config.t_star_fraction * config.T));
    plan.t_u = static_cast<int>(std::floor(config.tau_u * config.T)) + 1;
    require(plan.t_u < plan.t_star && plan.t_star < config.T, ErrorCode::config_error,
            "stage fractions leave an empty stage at this T");
    plan.stage1 = descend(config.T, plan.t_star, config.step_stride);
    plan.stage2 = descend(plan.t_star, plan.t_u, config.step_stride);
    plan.stage3 = descend(plan.t_u, 0, config.step_stride);
    return plan;
}

namespace {

NoiseField seeded_normal_field(int h, int w, std::uint64_t seed) {
    NoiseField f(h, w);
    Rng rng(seed);
    for (auto& v : f.data()) v = static_cast<float>(rng.normal());
    return f;
}

// one stage of reverse updates over consecutive node pairs
void run_stage(NoiseField& x, const std::vector<int>& nodes, Denoiser& denoiser,
               const GrayImage* condition, const SamplerConfig& config,
               const NoiseSchedule& schedule, std::uint64_t master_seed) {
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        const int t = nodes[i], t_prev = nodes[i + 1];
        NoiseField eps = denoiser.evaluate(x, condition, t);
        require(eps.height() == x.height() && eps.width() == x.width(),
                ErrorCode::shape_mismatch,
                "denoiser returned a prediction of the wrong shape");
        if (config.eta > 0.0) {
            const NoiseField xi = seeded_normal_field(
                x.height(), x.width(),
                derive_seed(master_seed, "eta-xi", static_cast<std::uint64_t>(t)));
            x = ddim_step(x, eps, t, t_prev, schedule, config.eta, &xi);
        } else {
            x = ddim_step(x, eps, t, t_prev, schedule);
        }
    }
}

} // namespace

GrayImage sample_three_stage(Denoiser& denoiser, const GrayImage& crease,
                             const DeformationRecord& record,
                             const SamplerConfig& config, const NoiseSchedule& schedule,
                             std::uint64_t master_seed, const SampleOptions& options) {
    schedule.validate();
    require(config.T == schedule.T, ErrorCode::config_error,
            "sampler config and schedule disagree on T");
    const StagePlan plan = stage_plan(config);

    require(crease.height() > 0 && crease.width() > 0, ErrorCode::invalid_argument,
            "crease image is empty");
    float lo = crease.data()[0], hi = lo;
    for (float v : crease.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    require(hi - lo > 1e-4f, ErrorCode::invalid_argument,
            "crease image is constant; nothing to condition on");
    require(record.flow.height() == crease.height() &&
                record.flow.width() == crease.width(),
            ErrorCode::shape_mismatch, "deformation shape must match the crease");
    record.flow.validate_finite();

    const int h = crease.height(), w = crease.width();
    const GrayImage condition = warp_bilinear(crease, record.flow);

    NoiseField x = seeded_normal_field(h, w, derive_seed(master_seed, "init"));
    run_stage(x, plan.stage1, denoiser, &condition, config, schedule, master_seed);
    if (options.trace) {
        options.trace->condition_warped = condition;
        options.trace->stage1_end = x;
    }

    // clean denoise at t_star, still under the stage-one condition
    NoiseField eps_star = denoiser.evaluate(x, &condition, plan.t_star);
    require(eps_star.height() == h && eps_star.width() == w, ErrorCode::shape_mismatch,
            "denoiser returned a prediction of the wrong shape");
    NoiseField x_clean = clean_denoise(x, eps_star, plan.t_star, schedule);

    // fresh noise, warped by the same deformation, re-injected at t_star; the
    // pre-warp stream may be shared across samples of one identity
    const std::uint64_t noise_root = options.shared_noise_seed.value_or(master_seed);
    const NoiseField xi =
        seeded_normal_field(h, w, derive_seed(noise_root, "xi"));
    const NoiseField n_warp = warp_noise(xi, record.flow, options.transport,
                                         derive_seed(noise_root, "transport"));
    x = renoise(x_clean, n_warp, plan.t_star, schedule);
    if (options.trace) {
        options.trace->x_clean = std::move(x_clean);
        options.trace->x_renoised = x;
    }

    run_stage(x, plan.stage2, denoiser, &condition, config, schedule, master_seed);
    if (options.trace) options.trace->stage2_end = x;

    run_stage(x, plan.stage3, denoiser, nullptr, config, schedule, master_seed);
    if (options.trace) options.trace->final_unclamped = x;

    return x.to_image_clamped();
}

} // namespace palmforge
