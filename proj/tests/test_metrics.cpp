#include <doctest.h>

#include <cmath>
#include <vector>

#include "nht/metrics.hpp"

using namespace nht;

namespace {

HdrImage random_display_image(int w, int h, uint64_t seed) {
    HdrImage img(w, h, 3, 1.0);
    Rng rng(seed);
    for (auto& v : img.data) v = float(rng.uniform());
    return img;
}

// Independent SSIM written directly from the definition: full 2D 11x11
// Gaussian window, symmetric reflection, per-channel average.
double naive_ssim_mean(const HdrImage& a, const HdrImage& b) {
    const int half = 5;
    double kern[11][11];
    double ksum = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            double dx = i - half, dy = j - half;
            kern[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            ksum += kern[i][j];
        }
    for (auto& row : kern)
        for (auto& v : row) v /= ksum;
    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double acc = 0.0;
    for (int c = 0; c < a.channels; ++c)
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = -half; i <= half; ++i)
                    for (int j = -half; j <= half; ++j) {
                        double va = a.at(reflect(x + i, a.width), reflect(y + j, a.height), c);
                        double vb = b.at(reflect(x + i, a.width), reflect(y + j, a.height), c);
                        double k = kern[i + half][j + half];
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
                acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
    return acc / (double(a.pixel_count()) * a.channels);
}

}  // namespace

TEST_CASE("psnr sentinel and closed form") {
    HdrImage a = random_display_image(16, 12, 1);
    CHECK(std::isinf(psnr(a, a, MetricSpace::Linear)));
    // uniform offset 0.1 in [0,1] -> exactly 20 dB
    HdrImage lo(8, 8, 3, 1.0), hi(8, 8, 3, 1.0);
    for (auto& v : lo.data) v = 0.3f;
    for (auto& v : hi.data) v = 0.4f;
    CHECK(psnr(lo, hi, MetricSpace::Linear) == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("psnr matches a reference mse computation") {
    HdrImage a = random_display_image(9, 7, 2);
    HdrImage b = random_display_image(9, 7, 3);
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = double(a.data[i]) - double(b.data[i]);
        mse += d * d;
    }
    mse /= double(a.data.size());
    CHECK(psnr(a, b, MetricSpace::Linear) ==
          doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-10));
    HdrImage c(9, 8, 3, 1.0);
    CHECK_THROWS_AS(psnr(a, c, MetricSpace::Linear), NhtError);
}

TEST_CASE("ssim of identical images is 1 everywhere") {
    HdrImage a = random_display_image(20, 14, 4);
    SsimMap m = ssim_map(a, a);
    for (double v : m.value) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(dssim(a, a) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("ssim is symmetric and dssim bounded") {
    HdrImage a = random_display_image(17, 13, 5);
    HdrImage b = random_display_image(17, 13, 6);
    CHECK(ssim_map(a, b).mean == doctest::Approx(ssim_map(b, a).mean).epsilon(1e-12));
    double d = dssim(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
}

TEST_CASE("inverted image has large dssim") {
    HdrImage a = random_display_image(24, 18, 7);
    HdrImage b = a;
    for (auto& v : b.data) v = 1.0f - v;
    CHECK(dssim(a, b) > 0.3);
}

TEST_CASE("ssim matches an independently written implementation") {
    HdrImage a = random_display_image(15, 11, 8);
    HdrImage b = random_display_image(15, 11, 9);
    CHECK(ssim_map(a, b).mean == doctest::Approx(naive_ssim_mean(a, b)).epsilon(1e-8));
    // smaller than the window: reflect padding still defined
    HdrImage s1 = random_display_image(5, 4, 10);
    HdrImage s2 = random_display_image(5, 4, 11);
    CHECK(ssim_map(s1, s2).mean == doctest::Approx(naive_ssim_mean(s1, s2)).epsilon(1e-8));
}

TEST_CASE("ssim gradient matches finite differences") {
    HdrImage a = random_display_image(9, 8, 12);
    HdrImage b = random_display_image(9, 8, 13);
    std::vector<double> grad;
    double base = ssim_mean_with_grad(a, b, grad);
    CHECK(base == doctest::Approx(ssim_map(a, b).mean).epsilon(1e-12));
    Rng rng(14);
    double h = 1e-3;  // storage is float; keep FD above the rounding noise
    for (int trial = 0; trial < 24; ++trial) {
        size_t i = rng.index(a.data.size());
        HdrImage ap = a, am = a;
        ap.data[i] += float(h);
        am.data[i] -= float(h);
        double hp = double(ap.data[i]) - double(a.data[i]);
        double hm = double(a.data[i]) - double(am.data[i]);
        double fd = (ssim_map(ap, b).mean - ssim_map(am, b).mean) / (hp + hm);
        CHECK(std::abs(grad[i] - fd) <= 5e-3 * std::abs(fd) + 1e-7);
    }
}
