#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "palmforge/error.hpp"
#include "palmforge/image.hpp"
#include "palmforge/image_io.hpp"
#include "palmforge/rng.hpp"

using namespace palmforge;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "palmforge_imaging_tests";
    fs::create_directories(dir);
    return dir;
}

GrayImage random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> data(static_cast<std::size_t>(h) * w);
    for (float& v : data) v = static_cast<float>(2.0 * rng.uniform01() - 1.0);
    return GrayImage::from_data(h, w, std::move(data));
}

FlowField constant_flow(int h, int w, float u, float v) {
    FlowField f(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            f.u(y, x) = u;
            f.v(y, x) = v;
        }
    return f;
}

} // namespace

TEST_CASE("gray image construction clamps and validates") {
    auto img = GrayImage::from_data(1, 3, {-2.0f, 0.25f, 1.5f});
    CHECK(img.at(0, 0) == -1.0f);
    CHECK(img.at(0, 1) == 0.25f);
    CHECK(img.at(0, 2) == 1.0f);

    CHECK_THROWS_AS(GrayImage::from_data(1, 2, {0.0f}), Error);
    CHECK_THROWS_AS(
        GrayImage::from_data(1, 1, {std::numeric_limits<float>::quiet_NaN()}), Error);
    CHECK_THROWS_AS(GrayImage(0, 4), Error);
}

TEST_CASE("flow field rejects non-finite components") {
    CHECK_THROWS_AS(
        FlowField::from_data(1, 1, {std::numeric_limits<float>::infinity(), 0.0f}),
        Error);
}

TEST_CASE("zero flow warp is an exact pass-through") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto img = random_image(17, 23, seed);
        auto out = warp_bilinear(img, FlowField(17, 23));
        CHECK(out.data() == img.data());
    }
}

TEST_CASE("constant integer flow shifts the sampling position") {
    // ramp along x scaled into [-1, 1]; flow (1, 0) reads the next column
    const int h = 8, w = 16;
    std::vector<float> data(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            data[static_cast<std::size_t>(y) * w + x] =
                static_cast<float>(2.0 * x / (w - 1) - 1.0);
    auto img = GrayImage::from_data(h, w, std::move(data));
    auto out = warp_bilinear(img, constant_flow(h, w, 1.0f, 0.0f));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w - 1; ++x)
            CHECK(out.at(y, x) == img.at(y, x + 1));
}

TEST_CASE("out-of-canvas samples clamp to the nearest edge pixel") {
    auto img = random_image(12, 12, 99);
    auto out = warp_bilinear(img, constant_flow(12, 12, 100.0f, 100.0f));
    // every sample lands past the bottom-right corner
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) CHECK(out.at(y, x) == img.at(11, 11));
}

TEST_CASE("warp is linear in the image argument") {
    const int h = 14, w = 14;
    auto a = random_image(h, w, 1);
    auto b = random_image(h, w, 2);
    Rng rng(3);
    FlowField flow(h, w);
    for (float& v : flow.data()) v = static_cast<float>(rng.uniform01() * 4.0 - 2.0);

    std::vector<float> combo(a.size());
    for (std::size_t i = 0; i < combo.size(); ++i)
        combo[i] = 0.6f * a.data()[i] + 0.4f * b.data()[i];

    auto warped_combo = warp_bilinear_raw(combo.data(), h, w, flow);
    auto wa = warp_bilinear_raw(a.data().data(), h, w, flow);
    auto wb = warp_bilinear_raw(b.data().data(), h, w, flow);
    for (std::size_t i = 0; i < combo.size(); ++i)
        CHECK(std::abs(warped_combo[i] - (0.6f * wa[i] + 0.4f * wb[i])) <= 1e-6f);
}

TEST_CASE("warp requires matching flow dimensions") {
    auto img = random_image(8, 8, 7);
    CHECK_THROWS_AS(warp_bilinear(img, FlowField(8, 9)), Error);
}

TEST_CASE("jacobian of an affine flow is A - I everywhere") {
    // F(x) = A*p + b - p with A = [[1.02, -0.01], [0.03, 0.98]], b = (0.5, -0.2)
    const int h = 9, w = 11;
    FlowField f(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            f.u(y, x) = static_cast<float>(1.02 * x + -0.01 * y + 0.5 - x);
            f.v(y, x) = static_cast<float>(0.03 * x + 0.98 * y - 0.2 - y);
        }
    auto jac = jacobian(f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            CHECK(jac.du_dx(y, x) == doctest::Approx(0.02).epsilon(1e-5).scale(1.0));
            CHECK(jac.du_dy(y, x) == doctest::Approx(-0.01).epsilon(1e-5).scale(1.0));
            CHECK(jac.dv_dx(y, x) == doctest::Approx(0.03).epsilon(1e-5).scale(1.0));
            CHECK(jac.dv_dy(y, x) == doctest::Approx(-0.02).epsilon(1e-5).scale(1.0));
        }
}

TEST_CASE("jacobian of a pure translation vanishes") {
    auto jac = jacobian(constant_flow(6, 6, 3.0f, -2.0f));
    for (float v : jac.data) CHECK(v == 0.0f);
}

TEST_CASE("jacobian rejects fields smaller than 3x3") {
    CHECK_THROWS_AS(jacobian(FlowField(2, 5)), Error);
}

TEST_CASE("png round trip stays within one quantization step") {
    auto dir = temp_dir();
    auto img = random_image(33, 41, 1234);
    const auto path = (dir / "roundtrip.png").string();
    write_png(img, path);
    auto back = read_png(path);
    REQUIRE(back.height() == 33);
    REQUIRE(back.width() == 41);
    // 1/255 of the [-1, 1] value range
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(std::abs(back.data()[i] - img.data()[i]) <= 2.0f / 255.0f);
}

TEST_CASE("png pixel values map linearly") {
    auto dir = temp_dir();
    GrayImage img(1, 3);
    img.at(0, 0) = -1.0f;
    img.at(0, 1) = static_cast<float>(2.0 * 128 / 255.0 - 1.0);
    img.at(0, 2) = 1.0f;
    const auto path = (dir / "levels.png").string();
    write_png(img, path);
    auto back = read_png(path);
    CHECK(back.at(0, 0) == -1.0f);
    CHECK(back.at(0, 1) == doctest::Approx(0.0039215686).epsilon(1e-7).scale(1.0));
    CHECK(back.at(0, 2) == 1.0f);
}

TEST_CASE("png rejects color images and missing files") {
    // minimal valid 2x2 RGB png
    static const unsigned char rgb_png[] = {
        0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d,
        0x49, 0x48, 0x44, 0x52, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02,
        0x08, 0x02, 0x00, 0x00, 0x00, 0xfd, 0xd4, 0x9a, 0x73, 0x00, 0x00, 0x00,
        0x13, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x10, 0x50, 0x30, 0x00,
        0x22, 0x06, 0x87, 0x80, 0x04, 0x20, 0x02, 0x00, 0x0d, 0xfe, 0x02, 0xa1,
        0x22, 0x35, 0x9b, 0x73, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44,
        0xae, 0x42, 0x60, 0x82};
    auto dir = temp_dir();
    const auto path = (dir / "rgb.png").string();
    {
        std::ofstream out(path, std::ios::binary);
        out.write(reinterpret_cast<const char*>(rgb_png), sizeof(rgb_png));
    }
    CHECK_THROWS_WITH_AS(read_png(path), doctest::Contains("grayscale"), Error);
    CHECK_THROWS_AS(read_png((dir / "does_not_exist.png").string()), Error);
}

TEST_CASE("flo round trip is byte-identical and sized exactly") {
    auto dir = temp_dir();
    FlowField f(2, 2);
    f.u(0, 0) = 1.25f;
    f.v(0, 0) = -3.5f;
    f.u(1, 1) = 1e-20f;
    f.v(1, 1) = 42.0f;
    const auto path = (dir / "tiny.flo").string();
    write_flo(f, path);
    CHECK(fs::file_size(path) == 44); // 4 magic + 8 dims + 4 px * 8 bytes

    auto back = read_flo(path);
    CHECK(back.data() == f.data());

    const auto copy = (dir / "tiny_copy.flo").string();
    write_flo(back, copy);
    std::ifstream f1(path, std::ios::binary), f2(copy, std::ios::binary);
    std::vector<char> b1((std::istreambuf_iterator<char>(f1)), {});
    std::vector<char> b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
}

TEST_CASE("flo reader rejects bad magic, truncation, and non-finite data") {
    auto dir = temp_dir();

    const auto bad_magic = (dir / "bad_magic.flo").string();
    {
        std::ofstream out(bad_magic, std::ios::binary);
        const float magic = 0.0f;
        const std::int32_t dims[2] = {2, 2};
        out.write(reinterpret_cast<const char*>(&magic), 4);
        out.write(reinterpret_cast<const char*>(dims), 8);
    }
    try {
        read_flo(bad_magic);
        FAIL("expected format error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::format_error);
    }

    const auto truncated = (dir / "truncated.flo").string();
    {
        FlowField f(4, 4);
        write_flo(f, truncated);
        fs::resize_file(truncated, 40); // chop into the payload
    }
    try {
        read_flo(truncated);
        FAIL("expected truncation error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::truncated);
    }

    const auto non_finite = (dir / "nan.flo").string();
    {
        std::ofstream out(non_finite, std::ios::binary);
        const float magic = 202021.25f;
        const std::int32_t dims[2] = {1, 1};
        const float payload[2] = {std::numeric_limits<float>::quiet_NaN(), 0.0f};
        out.write(reinterpret_cast<const char*>(&magic), 4);
        out.write(reinterpret_cast<const char*>(dims), 8);
        out.write(reinterpret_cast<const char*>(payload), 8);
    }
    try {
        read_flo(non_finite);
        FAIL("expected non-finite error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::non_finite);
    }
}

TEST_CASE("noise container round trips and keeps a distinct magic") {
    auto dir = temp_dir();
    Rng rng(5);
    NoiseField n(3, 5);
    for (float& v : n.data()) v = static_cast<float>(rng.normal());
    const auto path = (dir / "noise.nfl").string();
    write_noise(n, path);
    auto back = read_noise(path);
    CHECK(back.data() == n.data());

    // a flow file is not a noise file and vice versa
    FlowField f(3, 5);
    const auto flow_path = (dir / "plain.flo").string();
    write_flo(f, flow_path);
    CHECK_THROWS_AS(read_noise(flow_path), Error);
    CHECK_THROWS_AS(read_flo(path), Error);
}

TEST_CASE("gaussian blur preserves constants and mass") {
    std::vector<float> flat(64, 0.25f);
    auto out = gaussian_blur(flat, 8, 8, 1.7);
    for (float v : out) CHECK(v == doctest::Approx(0.25f).epsilon(1e-6).scale(1.0));

    // blur of an impulse sums to ~1 with replicated borders keeping mass
    std::vector<float> impulse(81, 0.0f);
    impulse[40] = 1.0f;
    auto blurred = gaussian_blur(impulse, 9, 9, 1.0);
    double sum = 0.0;
    for (float v : blurred) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("box downsample halves dimensions and averages") {
    std::vector<float> src = {0.0f, 2.0f, 4.0f, 6.0f,
                              8.0f, 10.0f, 12.0f, 14.0f};
    int oh = 0, ow = 0;
    auto out = box_downsample2(src, 2, 4, oh, ow);
    REQUIRE(oh == 1);
    REQUIRE(ow == 2);
    CHECK(out[0] == doctest::Approx(5.0f));
    CHECK(out[1] == doctest::Approx(9.0f));
}

TEST_CASE("seed derivation separates labels and indices") {
    const auto a = derive_seed(42, "bridge");
    const auto b = derive_seed(42, "refill");
    const auto c = derive_seed(43, "bridge");
    const auto d = derive_seed(42, "bridge", 0);
    const auto e = derive_seed(42, "bridge", 1);
    CHECK(a != b);
    CHECK(a != c);
    CHECK(a != d);
    CHECK(d != e);
    CHECK(derive_seed(42, "bridge") == a); // stable
}

TEST_CASE("rng streams are deterministic and roughly shaped") {
    Rng r1(7), r2(7);
    for (int i = 0; i < 100; ++i) CHECK(r1.next_u64() == r2.next_u64());

    Rng rng(11);
    double sum = 0.0, sum_sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sum_sq += v * v;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(0.03).scale(1.0));
    CHECK(sum_sq / n == doctest::Approx(1.0).epsilon(0.04).scale(1.0));

    Rng u(13);
    int counts[4] = {0, 0, 0, 0};
    for (int i = 0; i < 40000; ++i) ++counts[u.below(4)];
    for (int c : counts) CHECK(c == doctest::Approx(10000).epsilon(0.03));
}
