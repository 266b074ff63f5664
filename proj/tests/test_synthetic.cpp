#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "palmforge/error.hpp"
#include "palmforge/rng.hpp"
#include "palmforge/synthetic.hpp"

using namespace palmforge;

TEST_CASE("crease identities are deterministic with 3-5 in-square curves") {
    for (std::uint64_t seed : {1ULL, 77ULL, 123456789ULL}) {
        const auto a = CreaseIdentity::from_seed(seed);
        const auto b = CreaseIdentity::from_seed(seed);
        REQUIRE(a.curves.size() == b.curves.size());
        CHECK(a.curves.size() >= 3);
        CHECK(a.curves.size() <= 5);
        for (std::size_t i = 0; i < a.curves.size(); ++i) {
            CHECK(a.curves[i].points == b.curves[i].points);
            for (float p : a.curves[i].points) {
                CHECK(p >= 0.0f);
                CHECK(p <= 1.0f);
            }
        }
    }
}

TEST_CASE("crease maps are reproducible with a plausible lit fraction") {
    int seen_min_curves = 10, seen_max_curves = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto identity = CreaseIdentity::from_seed(seed);
        seen_min_curves = std::min<int>(seen_min_curves, identity.curves.size());
        seen_max_curves = std::max<int>(seen_max_curves, identity.curves.size());
        const auto crease = gen_crease_map(identity);
        REQUIRE(crease.height() == 256);
        REQUIRE(crease.width() == 256);
        std::size_t lit = 0;
        std::size_t out_of_range = 0;
        for (float v : crease.data()) {
            if (v < -1.0f || v > 1.0f) ++out_of_range;
            if (v > 0.0f) ++lit;
        }
        CHECK(out_of_range == 0);
        const double fraction = static_cast<double>(lit) / crease.size();
        CHECK(fraction >= 0.01);
        CHECK(fraction <= 0.25);
    }
    // the curve-count range is actually exercised
    CHECK(seen_min_curves == 3);
    CHECK(seen_max_curves == 5);

    const auto identity = CreaseIdentity::from_seed(5);
    CHECK(gen_crease_map(identity).data() == gen_crease_map(identity).data());
}

TEST_CASE("crease rasterization ignores curve enumeration order") {
    auto identity = CreaseIdentity::from_seed(21);
    REQUIRE(identity.curves.size() >= 3);
    auto shuffled = identity;
    std::rotate(shuffled.curves.begin(), shuffled.curves.begin() + 1,
                shuffled.curves.end());
    std::swap(shuffled.curves[0], shuffled.curves[1]);
    CHECK(gen_crease_map(identity).data() == gen_crease_map(shuffled).data());
}

TEST_CASE("crease map rejects empty identities and bad control points") {
    CreaseIdentity empty;
    CHECK_THROWS_AS(gen_crease_map(empty), Error);

    auto identity = CreaseIdentity::from_seed(3);
    identity.curves[0].points[0] = 1.5f;
    CHECK_THROWS_AS(gen_crease_map(identity), Error);
}

TEST_CASE("texture-free render is exactly the smoothed crease") {
    const auto crease = gen_crease_map(CreaseIdentity::from_seed(9), 64);
    const auto plain = render_palm_like(crease, 1234, 0.0f, 1.0);
    const auto smoothed = gaussian_blur(crease, 1.0);
    CHECK(plain.data() == smoothed.data());
}

TEST_CASE("different texture seeds decorrelate the background") {
    GrayImage blank(96, 96);
    for (float& v : blank.data()) v = -1.0f;
    const auto a = render_palm_like(blank, 1);
    const auto b = render_palm_like(blank, 2);
    CHECK(std::abs(oracles::pearson(a.data(), b.data())) < 0.2);
    // same seed reproduces exactly
    CHECK(render_palm_like(blank, 1).data() == a.data());
}

TEST_CASE("smooth deformations hit the displacement budget exactly") {
    DeformationParams params;
    params.max_displacement = 4.0;
    params.smoothness = 32.0;
    for (std::uint64_t seed : {0ULL, 5ULL, 99ULL}) {
        const auto flow = gen_smooth_deformation(params, seed, 256, 256);
        double max_mag = 0.0;
        for (int y = 0; y < 256; ++y)
            for (int x = 0; x < 256; ++x)
                max_mag = std::max(
                    max_mag, std::hypot(static_cast<double>(flow.u(y, x)),
                                        static_cast<double>(flow.v(y, x))));
        CHECK(std::abs(max_mag - 4.0) <= 1e-4);
    }
    const auto a = gen_smooth_deformation(params, 7, 64, 48);
    const auto b = gen_smooth_deformation(params, 7, 64, 48);
    CHECK(a.data() == b.data());
}

TEST_CASE("zero displacement budget gives the zero field") {
    DeformationParams params;
    params.max_displacement = 0.0;
    const auto flow = gen_smooth_deformation(params, 3, 32, 32);
    for (float v : flow.data()) CHECK(v == 0.0f);
}

TEST_CASE("smoothness below the 8px floor is rejected") {
    DeformationParams params;
    params.smoothness = 4.0;
    CHECK_THROWS_AS(gen_smooth_deformation(params, 1, 64, 64), Error);
}

TEST_CASE("default smooth deformations never trip the discontinuity filter") {
    DeformationParams params;
    params.max_displacement = 8.0;
    params.smoothness = 16.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto flow = gen_smooth_deformation(params, seed, 128, 128);
        CHECK(oracles::brute_discontinuity_ratio(flow, 5.0) == 0.0);
    }
}

TEST_CASE("affine component adds the exact affine flow") {
    DeformationParams params;
    params.max_displacement = 0.0;
    params.affine = AffineComponent{1.03, -0.02, 1.5, 0.01, 0.97, -2.0};
    const auto flow = gen_smooth_deformation(params, 11, 40, 40);
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x) {
            CHECK(flow.u(y, x) ==
                  doctest::Approx(1.03 * x - 0.02 * y + 1.5 - x).epsilon(1e-5).scale(1.0));
            CHECK(flow.v(y, x) ==
                  doctest::Approx(0.01 * x + 0.97 * y - 2.0 - y).epsilon(1e-5).scale(1.0));
        }

    // and its Jacobian is A - I everywhere (one-sided stencils are exact here)
    const auto jac = oracles::brute_jacobian(flow);
    for (std::size_t p = 0; p < jac.size() / 4; ++p) {
        CHECK(jac[p * 4] == doctest::Approx(0.03).epsilon(1e-4).scale(1.0));
        CHECK(jac[p * 4 + 1] == doctest::Approx(-0.02).epsilon(1e-4).scale(1.0));
        CHECK(jac[p * 4 + 2] == doctest::Approx(0.01).epsilon(1e-4).scale(1.0));
        CHECK(jac[p * 4 + 3] == doctest::Approx(-0.03).epsilon(1e-4).scale(1.0));
    }
}

TEST_CASE("step corruption fails the discontinuity filter at every size") {
    DeformationParams params;
    params.max_displacement = 4.0;
    params.smoothness = 16.0;
    for (int size : {64, 128, 256}) {
        const auto smooth = gen_smooth_deformation(params, 42, size, size);
        const auto corrupted = inject_step_cross(smooth);
        const double d = oracles::brute_discontinuity_ratio(corrupted, 5.0);
        CHECK(d > 0.01);
    }
}

TEST_CASE("step column fixture flags exactly the two adjacent columns") {
    const auto field = make_step_column_field(16, 16, 8, 12.0f);
    CHECK(oracles::brute_discontinuity_ratio(field, 5.0) == 0.125);
}

TEST_CASE("pair corpus construction is exact and reproducible") {
    DeformationParams params;
    params.max_displacement = 3.0;
    params.smoothness = 16.0;
    const auto pairs = gen_pair_corpus(1, 1, params, 2024, 64);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].identity_id == "id000");
    CHECK(pairs[0].pair_id == "id000/p0");
    CHECK_FALSE(pairs[0].corrupted);
    const auto rewarped = warp_bilinear(pairs[0].source, pairs[0].truth);
    CHECK(rewarped.data() == pairs[0].target.data());

    const auto again = gen_pair_corpus(1, 1, params, 2024, 64);
    CHECK(again[0].source.data() == pairs[0].source.data());
    CHECK(again[0].target.data() == pairs[0].target.data());
    CHECK(again[0].truth.data() == pairs[0].truth.data());
}

TEST_CASE("pair corpus counts and corruption flags") {
    DeformationParams params;
    params.max_displacement = 3.0;
    params.smoothness = 16.0;
    const auto pairs = gen_pair_corpus(3, 2, params, 7, 64, 1);
    REQUIRE(pairs.size() == 9);
    int corrupted = 0;
    for (const auto& p : pairs) corrupted += p.corrupted ? 1 : 0;
    CHECK(corrupted == 3);
    // smooth pairs precede the corrupted one within each identity
    CHECK_FALSE(pairs[0].corrupted);
    CHECK_FALSE(pairs[1].corrupted);
    CHECK(pairs[2].corrupted);

    CHECK_THROWS_AS(gen_pair_corpus(0, 1, params, 7), Error);
    CHECK_THROWS_AS(gen_pair_corpus(1, 0, params, 7, 64, 0), Error);
}
