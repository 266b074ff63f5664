#include <doctest.h>

#include <cmath>
#include <vector>

#include "palmforge/embedding.hpp"
#include "palmforge/error.hpp"
#include "palmforge/synthetic.hpp"

using namespace palmforge;

namespace {

// vertical stripes confined to one 32px block column; the two-pixel margin
// keeps every nonzero gradient sample inside that column's blocks
GrayImage block_stripes(int block_x) {
    GrayImage img(256, 256);
    for (int y = 0; y < 256; ++y)
        for (int x = block_x * 32 + 2; x <= block_x * 32 + 29; ++x)
            img.at(y, x) = (x % 2 == 0) ? 0.8f : -0.8f;
    return img;
}

GrayImage full_stripes(bool horizontal) {
    GrayImage img(256, 256);
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x)
            img.at(y, x) = ((horizontal ? y : x) % 2 == 0) ? 0.7f : -0.7f;
    return img;
}

} // namespace

TEST_CASE("embeddings are unit norm") {
    BlockGradientEmbedder emb;
    for (unsigned seed : {11u, 12u, 13u}) {
        auto id = CreaseIdentity::from_seed(seed);
        auto img = render_palm_like(gen_crease_map(id, 256), seed);
        auto e = emb.embed(img);
        REQUIRE(e.size() == 512);
        double norm_sq = 0.0;
        for (float v : e) norm_sq += static_cast<double>(v) * v;
        CHECK(std::abs(std::sqrt(norm_sq) - 1.0) <= 1e-6);
    }
}

TEST_CASE("constant image maps to the canonical fallback vector") {
    BlockGradientEmbedder emb;
    auto e = emb.embed(GrayImage(256, 256));
    CHECK(e[0] == 1.0f);
    for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i] == 0.0f);
    // any constant level degenerates the same way
    std::vector<float> half(256 * 256, 0.5f);
    CHECK(emb.embed(GrayImage::from_data(256, 256, half)) == e);
}

TEST_CASE("embedding is deterministic and size-checked") {
    BlockGradientEmbedder emb;
    auto id = CreaseIdentity::from_seed(21);
    auto img = render_palm_like(gen_crease_map(id, 256), 21);
    CHECK(emb.embed(img) == emb.embed(img));
    CHECK(cosine_similarity(emb.embed(img), emb.embed(img)) == doctest::Approx(1.0));
    auto small = render_palm_like(gen_crease_map(id, 128), 21);
    CHECK_THROWS_AS(emb.embed(small), Error);
}

TEST_CASE("disjoint-block textures embed orthogonally") {
    BlockGradientEmbedder emb;
    auto a = emb.embed(block_stripes(0));
    auto b = emb.embed(block_stripes(7));
    CHECK(cosine_similarity(a, b) == 0.0);
}

TEST_CASE("orthogonal orientations occupy disjoint bins") {
    BlockGradientEmbedder emb;
    auto v = emb.embed(full_stripes(false)); // gradients along x: bin 0
    auto h = emb.embed(full_stripes(true));  // gradients along y: bin 4
    CHECK(cosine_similarity(v, h) == 0.0);
}

TEST_CASE("cosine similarity hand values and rejects") {
    std::vector<float> x{1.0f, 0.0f}, y{0.0f, 1.0f};
    CHECK(cosine_similarity(x, y) == 0.0);
    CHECK(cosine_similarity(x, x) == doctest::Approx(1.0));
    std::vector<float> a{1.0f, 2.0f, 3.0f}, b{2.0f, 4.0f, 6.0f};
    CHECK(cosine_similarity(a, b) == doctest::Approx(1.0));
    std::vector<float> neg{-1.0f, 0.0f};
    CHECK(cosine_similarity(x, neg) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine_similarity(x, a), Error);
    std::vector<float> zero{0.0f, 0.0f};
    CHECK_THROWS_AS(cosine_similarity(x, zero), Error);
}
