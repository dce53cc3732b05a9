#include <doctest.h>

#include <cmath>
#include <vector>

#include "nht/harmonic.hpp"

using namespace nht;

TEST_CASE("sincos endpoints") {
    double f0[3] = {0, 0, 0}, out[6];
    encode_sincos(f0, 3, out);
    for (int i = 0; i < 3; ++i) {
        CHECK(out[i] == 0.0);
        CHECK(out[3 + i] == 1.0);
    }
    double fh[2] = {M_PI / 2, M_PI / 2};
    double out2[4];
    encode_sincos(fh, 2, out2);
    CHECK(out2[0] == doctest::Approx(1.0));
    CHECK(out2[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sincos outputs bounded and 2pi periodic") {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        double f = rng.uniform(-50.0, 50.0);
        double a[2], b[2];
        double fp = f + 2.0 * M_PI;
        encode_sincos(&f, 1, a);
        encode_sincos(&fp, 1, b);
        CHECK(std::abs(a[0]) <= 1.0);
        CHECK(std::abs(a[1]) <= 1.0);
        CHECK(std::abs(a[0] - b[0]) < 1e-9);
        CHECK(std::abs(a[1] - b[1]) < 1e-9);
    }
}

TEST_CASE("sincos gradient matches finite differences") {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        double f = rng.normal();
        double g[2] = {rng.normal(), rng.normal()};
        double df;
        encode_sincos_backward(&f, 1, g, &df);
        double h = 1e-6, op[2], om[2];
        double fp = f + h, fm = f - h;
        encode_sincos(&fp, 1, op);
        encode_sincos(&fm, 1, om);
        double fd = (g[0] * (op[0] - om[0]) + g[1] * (op[1] - om[1])) / (2 * h);
        CHECK(std::abs(df - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("encoding variants") {
    double f[2] = {-1.0, 0.5};
    double out[4];
    encode_variant(EncodeMode::Identity, f, 2, out);
    CHECK(out[0] == -1.0);
    CHECK(out[1] == 0.5);
    encode_variant(EncodeMode::Relu, f, 2, out);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.5);
    encode_variant(EncodeMode::Cos, f, 2, out);
    double sc[4];
    encode_variant(EncodeMode::SinCos, f, 2, sc);
    CHECK(out[0] == sc[2]);  // cos equals the second half of sincos
    CHECK(out[1] == sc[3]);
    CHECK(encoded_width(EncodeMode::SinCos, 4) == 8);
    CHECK(encoded_width(EncodeMode::Cos, 4) == 4);
    CHECK_THROWS_AS(encode_mode_from_name("fourier"), NhtError);
}

TEST_CASE("variant gradients match finite differences") {
    Rng rng(43);
    for (auto mode : {EncodeMode::Identity, EncodeMode::Relu, EncodeMode::Cos,
                      EncodeMode::SinCos}) {
        int n = 3;
        int w = encoded_width(mode, n);
        std::vector<double> f(n), g(w), df(n);
        for (auto& v : f) v = rng.normal() + 0.1;  // keep away from the relu kink
        for (auto& v : g) v = rng.normal();
        encode_variant_backward(mode, f.data(), n, g.data(), df.data());
        double h = 1e-6;
        for (int i = 0; i < n; ++i) {
            auto fp = f, fm = f;
            fp[i] += h;
            fm[i] -= h;
            std::vector<double> op(w), om(w);
            encode_variant(mode, fp.data(), n, op.data());
            encode_variant(mode, fm.data(), n, om.data());
            double fd = 0.0;
            for (int j = 0; j < w; ++j) fd += g[j] * (op[j] - om[j]) / (2 * h);
            CHECK(std::abs(df[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("sh2 at the pole matches the real orthonormal table") {
    auto y = sh2_encode({0.0, 0.0, 1.0});
    CHECK(y[0] == doctest::Approx(0.282095).epsilon(1e-6));
    CHECK(y[1] == doctest::Approx(0.0));
    CHECK(y[2] == doctest::Approx(0.488603).epsilon(1e-6));  // z band
    CHECK(y[3] == doctest::Approx(0.0));
    CHECK(y[4] == doctest::Approx(0.0));
    CHECK(y[5] == doctest::Approx(0.0));
    // orthonormal value sqrt(5/16pi)*(3z^2-1) = 0.630783 at z=1
    CHECK(y[6] == doctest::Approx(0.6307831).epsilon(1e-6));
    CHECK(y[7] == doctest::Approx(0.0));
    CHECK(y[8] == doctest::Approx(0.0));
}

TEST_CASE("sh2 constant band and scaling") {
    Rng rng(44);
    for (int i = 0; i < 20; ++i) {
        Vec3 d{rng.normal(), rng.normal(), rng.normal()};
        double n = d.norm();
        d = {d.x / n, d.y / n, d.z / n};
        auto y = sh2_encode(d);
        CHECK(y[0] == doctest::Approx(0.282095).epsilon(1e-6));
        auto y2 = sh2_encode(d, 2.5);
        for (int k = 0; k < 9; ++k) CHECK(y2[k] == doctest::Approx(2.5 * y[k]));
    }
}

TEST_CASE("per-band sh power is rotation invariant") {
    Rng rng(45);
    double band1_ref = -1.0, band2_ref = -1.0;
    for (int i = 0; i < 100; ++i) {
        Vec3 d{rng.normal(), rng.normal(), rng.normal()};
        double n = d.norm();
        if (n < 1e-6) continue;
        d = {d.x / n, d.y / n, d.z / n};
        auto y = sh2_encode(d);
        double band1 = y[1] * y[1] + y[2] * y[2] + y[3] * y[3];
        double band2 = 0.0;
        for (int k = 4; k < 9; ++k) band2 += y[k] * y[k];
        if (band1_ref < 0) { band1_ref = band1; band2_ref = band2; }
        CHECK(std::abs(band1 - band1_ref) < 1e-10);
        CHECK(std::abs(band2 - band2_ref) < 1e-10);
    }
}

TEST_CASE("non-unit directions are normalized and flagged") {
    bool flagged = false;
    auto y = sh2_encode({0.0, 0.0, 3.0}, 1.0, &flagged);
    CHECK(flagged);
    auto y1 = sh2_encode({0.0, 0.0, 1.0});
    for (int k = 0; k < 9; ++k) CHECK(y[k] == doctest::Approx(y1[k]).epsilon(1e-12));
    flagged = true;
    sh2_encode({0.0, 0.0, 1.0}, 1.0, &flagged);
    CHECK(!flagged);
    CHECK_THROWS_AS(sh2_encode({0.0, 0.0, 0.0}), NhtError);
}
