#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "palmforge/error.hpp"
#include "palmforge/metrics.hpp"
#include "palmforge/rng.hpp"

using namespace palmforge;

namespace {

using Rows = std::vector<std::vector<float>>;

Rows gaussian_cloud(std::uint64_t seed, std::size_t n, std::size_t dim, double mean = 0.0,
                    double stddev = 1.0) {
    Rng rng(seed);
    Rows rows(n, std::vector<float>(dim));
    for (auto& row : rows)
        for (auto& v : row) v = static_cast<float>(mean + stddev * rng.normal());
    return rows;
}

std::vector<float> unit(std::vector<double> v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
    return out;
}

// Unit vector near a unit centroid: normalize(c + spread * g).
std::vector<float> unit_near(Rng& rng, const std::vector<double>& centroid, double spread) {
    std::vector<double> v(centroid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = centroid[i] + spread * rng.normal();
    return unit(std::move(v));
}

// Basis-aligned 3-D Givens rotation product, applied row-wise in doubles.
Rows rotate3(const Rows& rows, double a, double b, double c) {
    auto apply = [](std::vector<double>& v, int i, int j, double t) {
        const double x = v[static_cast<std::size_t>(i)], y = v[static_cast<std::size_t>(j)];
        v[static_cast<std::size_t>(i)] = std::cos(t) * x - std::sin(t) * y;
        v[static_cast<std::size_t>(j)] = std::sin(t) * x + std::cos(t) * y;
    };
    Rows out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        std::vector<double> v(row.begin(), row.end());
        apply(v, 0, 1, a);
        apply(v, 1, 2, b);
        apply(v, 0, 2, c);
        out.emplace_back(v.begin(), v.end());
    }
    return out;
}

double exact_mean_cosine_distance(const EmbeddingSet& e, bool same_label) {
    double sum = 0.0;
    std::size_t count = 0;
    const auto& vs = e.vectors();
    for (std::size_t i = 0; i + 1 < vs.size(); ++i)
        for (std::size_t j = i + 1; j < vs.size(); ++j) {
            if ((e.labels()[i] == e.labels()[j]) != same_label) continue;
            double dot = 0.0;
            for (std::size_t k = 0; k < vs[i].size(); ++k)
                dot += static_cast<double>(vs[i][k]) * vs[j][k];
            sum += 1.0 - dot;
            ++count;
        }
    return sum / static_cast<double>(count);
}

} // namespace

TEST_CASE("frechet distance is zero between identical populations") {
    const Rows a = gaussian_cloud(11, 200, 6);
    CHECK(frechet_distance(a, a, std::nullopt) <= 1e-5);
    CHECK(frechet_distance(a, a) <= 1e-5);
    CHECK(frechet_distance(a, a, 3) <= 1e-5);
}

TEST_CASE("frechet distance matches the closed form on exact two-point sets") {
    // means 0/0, sample variances 2/8 -> fd^2 = (sqrt(2) - sqrt(8))^2 = 2
    const Rows a = {{-1.0f}, {1.0f}};
    const Rows b = {{-2.0f}, {2.0f}};
    CHECK(frechet_distance(a, b, std::nullopt) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));

    // zero-covariance point masses: distance is the mean gap
    const Rows p(3, std::vector<float>{0.0f, 0.0f});
    const Rows q(3, std::vector<float>{3.0f, 4.0f});
    CHECK(frechet_distance(p, q, std::nullopt) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("frechet distance of sampled N(0,1) vs N(1,4) approaches sqrt(2)") {
    // population value: sqrt(1^2 + (1 - 2)^2) = sqrt(2)
    const Rows a = gaussian_cloud(101, 100000, 1, 0.0, 1.0);
    const Rows b = gaussian_cloud(202, 100000, 1, 1.0, 2.0);
    const double fd = frechet_distance(a, b, std::nullopt);
    CHECK(fd == doctest::Approx(std::sqrt(2.0)).epsilon(0.05));
}

TEST_CASE("frechet distance is symmetric") {
    const Rows a = gaussian_cloud(31, 80, 5, 0.0, 1.0);
    const Rows b = gaussian_cloud(32, 120, 5, 0.7, 1.5);
    CHECK(frechet_distance(a, b, std::nullopt) ==
          doctest::Approx(frechet_distance(b, a, std::nullopt)).epsilon(1e-9));
    CHECK(frechet_distance(a, b, 3) == doctest::Approx(frechet_distance(b, a, 3)).epsilon(1e-9));
}

TEST_CASE("frechet distance is invariant under a common rotation") {
    const Rows a = gaussian_cloud(41, 60, 3, 0.0, 1.0);
    const Rows b = gaussian_cloud(42, 60, 3, 0.5, 1.3);
    const double base = frechet_distance(a, b, std::nullopt);
    const double rotated =
        frechet_distance(rotate3(a, 0.4, -1.1, 2.2), rotate3(b, 0.4, -1.1, 2.2), std::nullopt);
    CHECK(rotated == doctest::Approx(base).epsilon(1e-5));
}

TEST_CASE("frechet distance grows with the population gap") {
    const Rows a = gaussian_cloud(51, 5000, 2, 0.0, 1.0);
    const Rows near = gaussian_cloud(52, 5000, 2, 0.5, 1.0);
    const Rows far = gaussian_cloud(53, 5000, 2, 3.0, 1.0);
    CHECK(frechet_distance(a, near, std::nullopt) < frechet_distance(a, far, std::nullopt));
}

TEST_CASE("dimensionality reduction unlocks sample-starved high dimensions") {
    const Rows a = gaussian_cloud(61, 20, 64);
    const Rows b = gaussian_cloud(62, 20, 64, 0.8);
    CHECK_THROWS_AS((void)frechet_distance(a, b, std::nullopt), Error); // needs 65
    CHECK_THROWS_AS((void)frechet_distance(a, b), Error); // default 32 still needs 33

    const double fd = frechet_distance(a, b, 16);
    CHECK(std::isfinite(fd));
    CHECK(fd > 0.0);
    // separated populations stay separated after projection
    CHECK(fd > frechet_distance(a, gaussian_cloud(63, 20, 64), 16));
}

TEST_CASE("reduction target at or above the ambient dimension is a no-op") {
    const Rows a = gaussian_cloud(71, 50, 8, 0.0, 1.0);
    const Rows b = gaussian_cloud(72, 50, 8, 0.4, 1.2);
    const double plain = frechet_distance(a, b, std::nullopt);
    CHECK(frechet_distance(a, b) == doctest::Approx(plain).epsilon(1e-12));   // default 32
    CHECK(frechet_distance(a, b, 8) == doctest::Approx(plain).epsilon(1e-12));
}

TEST_CASE("frechet distance rejects unusable inputs") {
    const Rows ok = gaussian_cloud(81, 10, 3);
    CHECK_THROWS_AS((void)frechet_distance(ok, Rows{}, std::nullopt), Error);
    CHECK_THROWS_AS((void)frechet_distance(Rows{}, ok, std::nullopt), Error);

    // 3 samples of dim 3: one short of dim + 1
    const Rows three = gaussian_cloud(82, 3, 3);
    CHECK_THROWS_AS((void)frechet_distance(three, ok, std::nullopt), Error);

    const Rows other_dim = gaussian_cloud(83, 10, 4);
    CHECK_THROWS_AS((void)frechet_distance(ok, other_dim, std::nullopt), Error);

    Rows ragged = ok;
    ragged[2].push_back(0.0f);
    CHECK_THROWS_AS((void)frechet_distance(ragged, ok, std::nullopt), Error);

    Rows poisoned = ok;
    poisoned[1][0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS((void)frechet_distance(poisoned, ok, std::nullopt), Error);

    CHECK_THROWS_AS((void)frechet_distance(ok, ok, 0), Error);
    CHECK_THROWS_AS((void)frechet_distance(ok, ok, -4), Error);

    try {
        (void)frechet_distance(three, ok, std::nullopt);
        FAIL("expected a sample-count error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::insufficient_samples);
    }
}

TEST_CASE("embedding set enforces unit norm and aligned labels") {
    CHECK_NOTHROW(EmbeddingSet::create({{1.0f, 0.0f}, {0.0f, -1.0f}}, {"a", "b"}));

    CHECK_THROWS_AS(EmbeddingSet::create({}, {}), Error);
    CHECK_THROWS_AS(EmbeddingSet::create({{0.9f, 0.0f}}, {"a"}), Error);
    CHECK_THROWS_AS(EmbeddingSet::create({{1.0f, 0.0f}}, {"a", "b"}), Error);
    CHECK_THROWS_AS(EmbeddingSet::create({{1.0f, 0.0f}, {1.0f}}, {"a", "b"}), Error);
    const float inf = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(EmbeddingSet::create({{inf, 0.0f}}, {"a"}), Error);

    // norm within 1e-6 is accepted
    CHECK_NOTHROW(EmbeddingSet::create({{1.0f + 5e-7f, 0.0f}}, {"a"}));
}

TEST_CASE("class distances match hand-enumerated pairs on a tiny set") {
    const auto e = EmbeddingSet::create(
        {unit({1.0, 0.0, 0.0}), unit({0.0, 1.0, 0.0}), unit({1.0, 1.0, 0.0})},
        {"left", "left", "right"});
    const auto d = class_distances(e);
    REQUIRE(d.intra.has_value());
    REQUIRE(d.inter.has_value());
    CHECK(d.intra_pairs == 1);
    CHECK(d.inter_pairs == 2);
    // intra: the orthogonal left pair; inter: both pairs at 45 degrees
    CHECK(*d.intra == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(*d.inter == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("class distances separate orthogonal classes exactly") {
    Rows vecs;
    std::vector<std::string> labels;
    for (int i = 0; i < 3; ++i) {
        vecs.push_back({1.0f, 0.0f});
        labels.emplace_back("x");
        vecs.push_back({0.0f, 1.0f});
        labels.emplace_back("y");
    }
    const auto d = class_distances(EmbeddingSet::create(vecs, labels));
    REQUIRE(d.intra.has_value());
    REQUIRE(d.inter.has_value());
    CHECK(std::abs(*d.intra) <= 1e-9);
    CHECK(*d.inter == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.intra_pairs == 6); // 2 classes x C(3,2)
    CHECK(d.inter_pairs == 9);
}

TEST_CASE("statistics without pairs are absent, not errors") {
    const auto one_class = class_distances(
        EmbeddingSet::create({{1.0f, 0.0f}, {0.0f, 1.0f}}, {"same", "same"}));
    CHECK(one_class.intra.has_value());
    CHECK_FALSE(one_class.inter.has_value());
    CHECK(one_class.inter_pairs == 0);

    const auto singletons = class_distances(
        EmbeddingSet::create({{1.0f, 0.0f}, {0.0f, 1.0f}}, {"a", "b"}));
    CHECK_FALSE(singletons.intra.has_value());
    CHECK(singletons.inter.has_value());

    const auto lone = class_distances(EmbeddingSet::create({{1.0f, 0.0f}}, {"only"}));
    CHECK_FALSE(lone.intra.has_value());
    CHECK_FALSE(lone.inter.has_value());
}

TEST_CASE("class distances depend on the partition, not the label names") {
    Rng rng(91);
    Rows vecs;
    std::vector<std::string> a_names, b_names;
    for (int i = 0; i < 40; ++i) {
        vecs.push_back(unit_near(rng, {1.0, 0.0, 0.0, 0.0}, 0.3));
        a_names.emplace_back(i % 3 == 0 ? "red" : i % 3 == 1 ? "green" : "blue");
        b_names.emplace_back(i % 3 == 0 ? "zebra" : i % 3 == 1 ? "ant" : "quail");
    }
    const auto da = class_distances(EmbeddingSet::create(vecs, a_names));
    const auto db = class_distances(EmbeddingSet::create(vecs, b_names));
    REQUIRE(da.intra.has_value());
    REQUIRE(da.inter.has_value());
    CHECK(*da.intra == doctest::Approx(*db.intra).epsilon(1e-12));
    CHECK(*da.inter == doctest::Approx(*db.inter).epsilon(1e-12));
    CHECK(da.intra_pairs == db.intra_pairs);
    CHECK(da.inter_pairs == db.inter_pairs);
}

TEST_CASE("pair subsampling is seed-deterministic and tracks the exact mean") {
    // 2 classes x 1100 vectors: both pair families exceed the 1e6 cap.
    Rng rng(92);
    Rows vecs;
    std::vector<std::string> labels;
    for (int c = 0; c < 2; ++c) {
        const std::vector<double> centroid =
            c == 0 ? std::vector<double>{1.0, 0.0, 0.0, 0.0} : std::vector<double>{0.0, 1.0, 0.0, 0.0};
        for (int i = 0; i < 1100; ++i) {
            vecs.push_back(unit_near(rng, centroid, 0.25));
            labels.emplace_back(c == 0 ? "first" : "second");
        }
    }
    const auto e = EmbeddingSet::create(vecs, labels);

    const auto d1 = class_distances(e, 7);
    const auto d2 = class_distances(e, 7);
    const auto d3 = class_distances(e, 8);
    REQUIRE(d1.intra.has_value());
    REQUIRE(d1.inter.has_value());
    CHECK(d1.intra_pairs == kClassPairCap);
    CHECK(d1.inter_pairs == kClassPairCap);
    CHECK(*d1.intra == *d2.intra); // bitwise: same seed, same draws
    CHECK(*d1.inter == *d2.inter);
    CHECK(*d1.intra != *d3.intra); // a fresh seed redraws the sample
    CHECK(*d1.inter != *d3.inter);

    const double exact_intra = exact_mean_cosine_distance(e, true);
    const double exact_inter = exact_mean_cosine_distance(e, false);
    CHECK(*d1.intra == doctest::Approx(exact_intra).epsilon(0.02));
    CHECK(*d1.inter == doctest::Approx(exact_inter).epsilon(0.02));
    CHECK(*d3.intra == doctest::Approx(exact_intra).epsilon(0.02));
}

TEST_CASE("tighter clusters shrink intra and wider centroids grow inter") {
    auto make = [](std::uint64_t seed, double spread, double angle) {
        Rng rng(seed);
        Rows vecs;
        std::vector<std::string> labels;
        const std::vector<double> c0{1.0, 0.0, 0.0};
        const std::vector<double> c1{std::cos(angle), std::sin(angle), 0.0};
        for (int i = 0; i < 150; ++i) {
            vecs.push_back(unit_near(rng, c0, spread));
            labels.emplace_back("p");
            vecs.push_back(unit_near(rng, c1, spread));
            labels.emplace_back("q");
        }
        return class_distances(EmbeddingSet::create(vecs, labels));
    };
    const auto tight = make(93, 0.05, 1.2);
    const auto loose = make(93, 0.40, 1.2);
    CHECK(*tight.intra < *loose.intra);

    const auto close_by = make(94, 0.10, 0.3);
    const auto far_off = make(94, 0.10, 2.0);
    CHECK(*close_by.inter < *far_off.inter);
}

TEST_CASE("metrics report serializes every field with null for absent values") {
    MetricsReport full;
    full.frechet = 1.25;
    full.inter = 0.6;
    full.intra = 0.1;
    full.n_samples = 64;
    full.dim = 128;
    full.reduce_dim = 32;
    full.seed = 99;
    const auto j = nlohmann::json::parse(to_json(full));
    CHECK(j.at("frechet").get<double>() == doctest::Approx(1.25));
    CHECK(j.at("inter").get<double>() == doctest::Approx(0.6));
    CHECK(j.at("intra").get<double>() == doctest::Approx(0.1));
    CHECK(j.at("n_samples").get<std::size_t>() == 64);
    CHECK(j.at("dim").get<std::size_t>() == 128);
    CHECK(j.at("reduce_dim").get<int>() == 32);
    CHECK(j.at("seed").get<std::uint64_t>() == 99);

    const auto bare = nlohmann::json::parse(to_json(MetricsReport{}));
    CHECK(bare.at("frechet").is_null());
    CHECK(bare.at("inter").is_null());
    CHECK(bare.at("intra").is_null());
    CHECK(bare.at("reduce_dim").is_null());
}
