#include "palmforge/noise_transport.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "palmforge/error.hpp"
#include "palmforge/rng.hpp"

namespace palmforge {

namespace {

// clamped bilinear flow lookup at a fractional position
std::pair<double, double> flow_at(const FlowField& flow, double x, double y) {
    const int w = flow.width(), h = flow.height();
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = std::min(static_cast<int>(x), w - 1);
    const int y0 = std::min(static_cast<int>(y), h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    auto lerp2 = [&](auto get) {
        const double top = (1 - fx) * get(y0, x0) + fx * get(y0, x1);
        const double bot = (1 - fx) * get(y1, x0) + fx * get(y1, x1);
        return (1 - fy) * top + fy * bot;
    };
    return {lerp2([&](int yy, int xx) { return static_cast<double>(flow.u(yy, xx)); }),
            lerp2([&](int yy, int xx) { return static_cast<double>(flow.v(yy, xx)); })};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace

NoiseField warp_noise(const NoiseField& noise, const FlowField& flow,
                      const TransportConfig& config, std::uint64_t seed) {
    require(noise.height() == flow.height() && noise.width() == flow.width(),
            ErrorCode::shape_mismatch, "noise and flow must share a shape");
    require(config.subpixel_factor >= 1, ErrorCode::invalid_argument,
            "subpixel factor must be at least 1");
    flow.validate_finite();

    const int h = noise.height(), w = noise.width();
    const int k = config.subpixel_factor;
    const int kk = k * k;
    const std::size_t n_px = static_cast<std::size_t>(h) * w;

    std::vector<double> sum(n_px, 0.0);
    std::vector<std::int32_t> count(n_px, 0);
    // provenance per output pixel: -1 none yet, -2 mixed, else the single
    // source pixel every carrier so far came from
    std::vector<std::int64_t> source(n_px, -1);

    std::vector<double> g(static_cast<std::size_t>(kk));
    for (int sy = 0; sy < h; ++sy) {
        for (int sx = 0; sx < w; ++sx) {
            const std::size_t src_idx = static_cast<std::size_t>(sy) * w + sx;
            const double z = noise.data()[src_idx];

            // bridge upsampling: k^2 carriers, exactly N(0,1), summing to k*z
            Rng rng(derive_seed(seed, "bridge", src_idx));
            double mean = 0.0;
            for (int i = 0; i < kk; ++i) {
                g[static_cast<std::size_t>(i)] = rng.normal();
                mean += g[static_cast<std::size_t>(i)];
            }
            mean /= kk;
            const double lift = z / k - mean;

            for (int j = 0; j < k; ++j) {
                const double cy = sy - 0.5 + (j + 0.5) / k;
                for (int i = 0; i < k; ++i) {
                    const double cx = sx - 0.5 + (i + 0.5) / k;
                    const auto [fu, fv] = flow_at(flow, cx, cy);
                    const double dx = cx - fu;
                    const double dy = cy - fv;
                    const int px = static_cast<int>(std::floor(dx + 0.5));
                    const int py = static_cast<int>(std::floor(dy + 0.5));
                    if (px < 0 || px >= w || py < 0 || py >= h) continue;
                    const std::size_t out_idx = static_cast<std::size_t>(py) * w + px;
                    sum[out_idx] += g[static_cast<std::size_t>(j * k + i)] + lift;
                    ++count[out_idx];
                    if (source[out_idx] == -1)
                        source[out_idx] = static_cast<std::int64_t>(src_idx);
                    else if (source[out_idx] != static_cast<std::int64_t>(src_idx))
                        source[out_idx] = -2;
                }
            }
        }
    }

    NoiseField out(h, w);
    Rng refill(derive_seed(seed, "refill"));
    for (std::size_t i = 0; i < n_px; ++i) {
        if (count[i] == 0) {
            out.data()[i] = static_cast<float>(refill.normal());
        } else if (count[i] == kk && source[i] >= 0) {
            // one complete carrier group and nothing else: the aggregate is
            // algebraically the source value, so emit it without rounding
            out.data()[i] = noise.data()[static_cast<std::size_t>(source[i])];
        } else {
            out.data()[i] = static_cast<float>(sum[i] / std::sqrt(count[i]));
        }
    }
    return out;
}

GaussianityTolerances default_gaussianity_tolerances(std::size_t n_fields) {
    require(n_fields >= 2, ErrorCode::invalid_argument, "need at least two fields");
    const double n = static_cast<double>(n_fields);
    // standard errors: mean 1/sqrt(n), variance sqrt(2/(n-1)), corr ~1/sqrt(n)
    GaussianityTolerances tol;
    tol.mean_abs = 4.2 / std::sqrt(n);
    tol.var_low = 1.0 - 4.2 * std::sqrt(2.0 / (n - 1));
    tol.var_high = 1.0 + 4.2 * std::sqrt(2.0 / (n - 1));
    tol.corr_abs = 4.9 / std::sqrt(n); // widest family (all grid pairs)
    tol.ks_alpha = 0.01;
    return tol;
}

GaussianityReport gaussianity_report(const std::vector<NoiseField>& samples) {
    return gaussianity_report(samples, default_gaussianity_tolerances(samples.size()));
}

GaussianityReport gaussianity_report(const std::vector<NoiseField>& samples,
                                     const GaussianityTolerances& tolerances) {
    require(samples.size() >= 100, ErrorCode::insufficient_samples,
            "gaussianity report needs at least 100 fields");
    const int h = samples.front().height(), w = samples.front().width();
    require(h >= 8 && w >= 8, ErrorCode::invalid_argument,
            "fields must be at least 8x8");
    for (const NoiseField& f : samples)
        require(f.height() == h && f.width() == w, ErrorCode::shape_mismatch,
                "all fields must share a shape");

    GaussianityReport rep;
    rep.fields = samples.size();
    rep.height = h;
    rep.width = w;
    rep.tolerances = tolerances;
    const std::size_t n_px = static_cast<std::size_t>(h) * w;
    const double n = static_cast<double>(samples.size());

    // per-pixel moments
    std::vector<double> acc(n_px, 0.0), acc2(n_px, 0.0);
    for (const NoiseField& f : samples)
        for (std::size_t i = 0; i < n_px; ++i) {
            const double v = f.data()[i];
            acc[i] += v;
            acc2[i] += v * v;
        }
    rep.mean_map.resize(n_px);
    rep.var_map.resize(n_px);
    for (std::size_t i = 0; i < n_px; ++i) {
        const double m = acc[i] / n;
        rep.mean_map[i] = static_cast<float>(m);
        rep.var_map[i] = static_cast<float>((acc2[i] - n * m * m) / (n - 1.0));
    }

    // deterministic 8x8 evaluation grid
    for (int gy = 0; gy < 8; ++gy)
        for (int gx = 0; gx < 8; ++gx)
            rep.tested.emplace_back((2 * gy + 1) * h / 16, (2 * gx + 1) * w / 16);

    char buf[160];
    rep.min_var = rep.var_map[static_cast<std::size_t>(rep.tested[0].first) * w +
                              rep.tested[0].second];
    rep.max_var = rep.min_var;
    for (const auto& [py, px] : rep.tested) {
        const std::size_t i = static_cast<std::size_t>(py) * w + px;
        const double m = rep.mean_map[i], v = rep.var_map[i];
        rep.max_abs_mean = std::max(rep.max_abs_mean, std::abs(m));
        rep.min_var = std::min(rep.min_var, v);
        rep.max_var = std::max(rep.max_var, v);
        if (std::abs(m) > tolerances.mean_abs) {
            std::snprintf(buf, sizeof(buf), "pixel (%d,%d) mean %.4f outside +-%.4f",
                          py, px, m, tolerances.mean_abs);
            rep.violations.emplace_back(buf);
        }
        if (v < tolerances.var_low || v > tolerances.var_high) {
            std::snprintf(buf, sizeof(buf),
                          "pixel (%d,%d) variance %.4f outside [%.4f, %.4f]", py, px, v,
                          tolerances.var_low, tolerances.var_high);
            rep.violations.emplace_back(buf);
        }
    }

    // correlations: every grid pair plus each grid pixel's right neighbor
    std::vector<std::array<int, 4>> pairs;
    for (std::size_t a = 0; a < rep.tested.size(); ++a)
        for (std::size_t b = a + 1; b < rep.tested.size(); ++b)
            pairs.push_back({rep.tested[a].first, rep.tested[a].second,
                             rep.tested[b].first, rep.tested[b].second});
    for (const auto& [py, px] : rep.tested)
        if (px + 1 < w) pairs.push_back({py, px, py, px + 1});

    auto pixel_series = [&](int py, int px) {
        std::vector<double> series(samples.size());
        const std::size_t i = static_cast<std::size_t>(py) * w + px;
        for (std::size_t s = 0; s < samples.size(); ++s)
            series[s] = samples[s].data()[i];
        return series;
    };
    // cache series for the grid pixels and their neighbor partners; capacity
    // is reserved so returned references stay valid across insertions
    std::vector<std::vector<double>> cache;
    std::vector<std::pair<int, int>> cache_keys;
    cache.reserve(rep.tested.size() * 2);
    cache_keys.reserve(rep.tested.size() * 2);
    auto series_of = [&](int py, int px) -> const std::vector<double>& {
        for (std::size_t i = 0; i < cache_keys.size(); ++i)
            if (cache_keys[i] == std::make_pair(py, px)) return cache[i];
        cache_keys.emplace_back(py, px);
        cache.push_back(pixel_series(py, px));
        return cache.back();
    };

    for (const auto& [ay, ax, by, bx] : pairs) {
        const auto& a = series_of(ay, ax);
        const auto& b = series_of(by, bx);
        double ma = 0.0, mb = 0.0;
        for (std::size_t s = 0; s < a.size(); ++s) {
            ma += a[s];
            mb += b[s];
        }
        ma /= n;
        mb /= n;
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (std::size_t s = 0; s < a.size(); ++s) {
            sab += (a[s] - ma) * (b[s] - mb);
            saa += (a[s] - ma) * (a[s] - ma);
            sbb += (b[s] - mb) * (b[s] - mb);
        }
        const double corr = sab / std::sqrt(saa * sbb);
        rep.correlations.push_back({ay, ax, by, bx, corr});
        rep.max_abs_corr = std::max(rep.max_abs_corr, std::abs(corr));
        if (std::abs(corr) > tolerances.corr_abs) {
            std::snprintf(buf, sizeof(buf),
                          "pixels (%d,%d)x(%d,%d) correlation %.4f outside +-%.4f", ay,
                          ax, by, bx, corr, tolerances.corr_abs);
            rep.violations.emplace_back(buf);
        }
    }

    // pooled KS over the tested pixels' values across all fields
    std::vector<double> pooled;
    pooled.reserve(rep.tested.size() * samples.size());
    for (const auto& [py, px] : rep.tested) {
        const std::size_t i = static_cast<std::size_t>(py) * w + px;
        for (const NoiseField& f : samples) pooled.push_back(f.data()[i]);
    }
    std::sort(pooled.begin(), pooled.end());
    rep.ks_n = pooled.size();
    double d = 0.0;
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        const double cdf = normal_cdf(pooled[i]);
        d = std::max(d, std::abs(cdf - static_cast<double>(i) / pooled.size()));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / pooled.size() - cdf));
    }
    rep.ks_statistic = d;
    rep.ks_critical = std::sqrt(-std::log(tolerances.ks_alpha / 2.0) / 2.0) /
                      std::sqrt(static_cast<double>(pooled.size()));
    if (rep.ks_statistic > rep.ks_critical) {
        std::snprintf(buf, sizeof(buf), "pooled KS %.5f above critical %.5f",
                      rep.ks_statistic, rep.ks_critical);
        rep.violations.emplace_back(buf);
    }

    rep.passed = rep.violations.empty();
    return rep;
}

std::string to_json(const GaussianityReport& rep) {
    nlohmann::json j;
    j["fields"] = rep.fields;
    j["height"] = rep.height;
    j["width"] = rep.width;
    j["tolerances"] = {{"mean_abs", rep.tolerances.mean_abs},
                       {"var_low", rep.tolerances.var_low},
                       {"var_high", rep.tolerances.var_high},
                       {"corr_abs", rep.tolerances.corr_abs},
                       {"ks_alpha", rep.tolerances.ks_alpha}};
    nlohmann::json tested = nlohmann::json::array();
    for (const auto& [y, x] : rep.tested) tested.push_back({y, x});
    j["tested_pixels"] = std::move(tested);
    j["max_abs_mean"] = rep.max_abs_mean;
    j["min_var"] = rep.min_var;
    j["max_var"] = rep.max_var;
    j["max_abs_corr"] = rep.max_abs_corr;
    j["ks"] = {{"statistic", rep.ks_statistic},
               {"critical", rep.ks_critical},
               {"n", rep.ks_n}};
    j["mean_map"] = rep.mean_map;
    j["var_map"] = rep.var_map;
    nlohmann::json corr = nlohmann::json::array();
    for (const PairCorrelation& c : rep.correlations)
        corr.push_back({{"a", {c.ay, c.ax}}, {"b", {c.by, c.bx}}, {"corr", c.corr}});
    j["correlations"] = std::move(corr);
    j["violations"] = rep.violations;
    j["passed"] = rep.passed;
    return j.dump(2);
}

} // namespace palmforge
