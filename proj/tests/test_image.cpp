#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "nht/image.hpp"

using namespace nht;

namespace {
std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("mulaw endpoints and closed form") {
    MuLawParams p;
    CHECK(mulaw_encode(0.0, p) == 0.0);
    CHECK(mulaw_encode(p.w, p) == doctest::Approx(1.0).epsilon(1e-12));
    // x = w/mu gives log(2)/log(1+mu)
    double expect = std::log(2.0) / std::log(5001.0);
    CHECK(mulaw_encode(p.w / p.mu, p) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mulaw is strictly monotone on a dense grid") {
    MuLawParams p;
    double prev = -1.0;
    for (int i = 0; i <= 4096; ++i) {
        double y = mulaw_encode(p.w * i / 4096.0, p);
        CHECK(y > prev);
        prev = y;
    }
}

TEST_CASE("mulaw roundtrips within 1e-6 relative") {
    MuLawParams p;
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        double y = rng.uniform();
        double y2 = mulaw_encode(mulaw_decode(y, p), p);
        CHECK(std::abs(y2 - y) <= 1e-6 * std::max(1.0, std::abs(y)));
        double x = rng.uniform(0.0, p.w);
        double x2 = mulaw_decode(mulaw_encode(x, p), p);
        CHECK(std::abs(x2 - x) <= 1e-6 * std::max(1.0, std::abs(x)));
    }
    CHECK(mulaw_decode(0.0, p) == 0.0);
    CHECK(mulaw_decode(1.0, p) == doctest::Approx(p.w).epsilon(1e-12));
}

TEST_CASE("checked mulaw rejects out-of-range input") {
    MuLawParams p;
    CHECK_THROWS_AS(mulaw_encode_checked(-1.0, p), NhtError);
    CHECK_THROWS_AS(mulaw_encode_checked(p.w + 1.0, p), NhtError);
    CHECK_THROWS_AS(mulaw_decode_checked(-0.1, p), NhtError);
    CHECK_THROWS_AS(mulaw_decode_checked(1.1, p), NhtError);
}

TEST_CASE("tonemap gamma") {
    CHECK(tonemap_sample(0.0, kDefaultWhiteLevel) == 0.0);
    CHECK(tonemap_sample(kDefaultWhiteLevel, kDefaultWhiteLevel) == doctest::Approx(1.0));
    CHECK(tonemap_sample(kDefaultWhiteLevel / 2, kDefaultWhiteLevel) ==
          doctest::Approx(std::pow(0.5, 1.0 / 2.2)).epsilon(1e-12));
}

TEST_CASE("pfm roundtrip is bitwise lossless") {
    HdrImage img(7, 5);
    Rng rng(3);
    for (auto& v : img.data) v = float(rng.uniform(0.0, 16383.0));
    auto path = tmp_path("nht_test_roundtrip.pfm");
    save_pfm(img, path);
    HdrImage back = load_pfm(path);
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    for (size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == img.data[i]);
    std::filesystem::remove(path);
}

TEST_CASE("all-zero pfm loads as zeros") {
    HdrImage img(2, 2);
    auto path = tmp_path("nht_test_zero.pfm");
    save_pfm(img, path);
    HdrImage back = load_pfm(path);
    for (float v : back.data) CHECK(v == 0.0f);
    std::filesystem::remove(path);
}

TEST_CASE("negative samples are rejected") {
    HdrImage img(2, 2);
    img.data[5] = -1.0f;
    auto path = tmp_path("nht_test_neg.pfm");
    save_pfm(img, path);
    CHECK_THROWS_AS(load_pfm(path), NhtError);
    std::filesystem::remove(path);
}

TEST_CASE("16-bit png full scale maps to the white level") {
    HdrImage disp(3, 2, 3, 1.0);
    disp.data.assign(disp.data.size(), 0.25f);
    disp.at(1, 0, 0) = 1.0f;
    auto path = tmp_path("nht_test16.png");
    save_png16(disp, path);
    HdrImage back = load_png(path);
    CHECK(back.at(1, 0, 0) == doctest::Approx(kDefaultWhiteLevel).epsilon(1e-6));
    CHECK(back.at(0, 0, 0) < back.at(1, 0, 0));
    std::filesystem::remove(path);
}

TEST_CASE("load_image rejects unknown extensions and missing files") {
    CHECK_THROWS_AS(load_image("/nonexistent/foo.pfm"), NhtError);
    CHECK_THROWS_AS(load_image("/tmp/foo.tiff"), NhtError);
}

TEST_CASE("bilinear sampling at pixel centers and midpoints") {
    HdrImage img(2, 2, 3, 1.0);
    for (int c = 0; c < 3; ++c) {
        img.at(0, 0, c) = 0.0f;
        img.at(1, 0, c) = 1.0f;
        img.at(0, 1, c) = 2.0f;
        img.at(1, 1, c) = 3.0f;
    }
    double out[3];
    sample_bilinear(img, 0.5, 0.5, out);
    CHECK(out[0] == doctest::Approx(0.0));
    sample_bilinear(img, 1.0, 0.5, out);
    CHECK(out[0] == doctest::Approx(0.5));
    sample_bilinear(img, 1.0, 1.0, out);
    CHECK(out[0] == doctest::Approx(1.5));
}
