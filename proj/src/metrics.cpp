#include "nht/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace nht {

namespace {

constexpr int kWin = 11;
constexpr int kHalf = kWin / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWin> gauss_kernel() {
    std::array<double, kWin> k{};
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        double d = i - kHalf;
        k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

inline int reflect(int i, int n) {
    // symmetric reflection: -1 -> 0, n -> n-1
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

using Field = std::vector<double>;

// separable 11x11 Gaussian with reflect padding
void blur(const Field& in, Field& out, Field& tmp, int w, int h) {
    static const auto K = gauss_kernel();
    tmp.assign(in.size(), 0.0);
    out.assign(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -kHalf; k <= kHalf; ++k)
                s += K[k + kHalf] * in[size_t(y) * w + reflect(x + k, w)];
            tmp[size_t(y) * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -kHalf; k <= kHalf; ++k)
                s += K[k + kHalf] * tmp[size_t(reflect(y + k, h)) * w + x];
            out[size_t(y) * w + x] = s;
        }
}

// exact adjoint of blur() (scatter with the same reflected indices)
void blur_adjoint(const Field& in, Field& out, Field& tmp, int w, int h) {
    static const auto K = gauss_kernel();
    tmp.assign(in.size(), 0.0);
    out.assign(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double g = in[size_t(y) * w + x];
            for (int k = -kHalf; k <= kHalf; ++k)
                tmp[size_t(reflect(y + k, h)) * w + x] += K[k + kHalf] * g;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double g = tmp[size_t(y) * w + x];
            for (int k = -kHalf; k <= kHalf; ++k)
                out[size_t(y) * w + reflect(x + k, w)] += K[k + kHalf] * g;
        }
}

void extract_channel(const HdrImage& img, int c, Field& out) {
    out.resize(img.pixel_count());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = img.data[i * img.channels + c];
}

struct SsimFields {
    Field mu_a, mu_b, s_aa, s_bb, s_ab;
};

void ssim_channel_stats(const Field& a, const Field& b, int w, int h, SsimFields& f) {
    Field tmp, prod(a.size());
    blur(a, f.mu_a, tmp, w, h);
    blur(b, f.mu_b, tmp, w, h);
    for (size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * a[i];
    blur(prod, f.s_aa, tmp, w, h);
    for (size_t i = 0; i < a.size(); ++i) prod[i] = b[i] * b[i];
    blur(prod, f.s_bb, tmp, w, h);
    for (size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * b[i];
    blur(prod, f.s_ab, tmp, w, h);
}

inline double ssim_value(const SsimFields& f, size_t i, double* parts = nullptr) {
    double mu_a = f.mu_a[i], mu_b = f.mu_b[i];
    double var_a = f.s_aa[i] - mu_a * mu_a;
    double var_b = f.s_bb[i] - mu_b * mu_b;
    double cov = f.s_ab[i] - mu_a * mu_b;
    double a1 = 2.0 * mu_a * mu_b + kC1;
    double a2 = 2.0 * cov + kC2;
    double b1 = mu_a * mu_a + mu_b * mu_b + kC1;
    double b2 = var_a + var_b + kC2;
    if (parts) { parts[0] = a1; parts[1] = a2; parts[2] = b1; parts[3] = b2; }
    return (a1 * a2) / (b1 * b2);
}

}  // namespace

double psnr(const HdrImage& a, const HdrImage& b, MetricSpace space,
            const MuLawParams& p) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw NhtError("psnr: dimension mismatch");
    auto map = [&](double x, double white) -> double {
        switch (space) {
            case MetricSpace::MuLaw:
                return mulaw_encode(std::clamp(x, 0.0, p.w), p);
            case MetricSpace::Tonemapped:
                return tonemap_sample(x, white);
            case MetricSpace::Linear:
                return std::clamp(x / white, 0.0, 1.0);
        }
        return 0.0;
    };
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = map(a.data[i], a.white_level) - map(b.data[i], b.white_level);
        mse += d * d;
    }
    mse /= double(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

SsimMap ssim_map(const HdrImage& a, const HdrImage& b) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw NhtError("ssim: dimension mismatch");
    SsimMap m;
    m.width = a.width;
    m.height = a.height;
    m.value.assign(a.pixel_count(), 0.0);
    Field fa, fb;
    SsimFields f;
    for (int c = 0; c < a.channels; ++c) {
        extract_channel(a, c, fa);
        extract_channel(b, c, fb);
        ssim_channel_stats(fa, fb, a.width, a.height, f);
        for (size_t i = 0; i < m.value.size(); ++i)
            m.value[i] += ssim_value(f, i) / a.channels;
    }
    double sum = 0.0;
    for (double v : m.value) sum += v;
    m.mean = sum / double(m.value.size());
    return m;
}

double ssim_mean_with_grad(const HdrImage& a, const HdrImage& b,
                           std::vector<double>& grad_a) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw NhtError("ssim: dimension mismatch");
    int w = a.width, h = a.height;
    size_t n = a.pixel_count();
    grad_a.assign(a.data.size(), 0.0);
    double mean = 0.0;
    double scale = 1.0 / (double(n) * a.channels);
    Field fa, fb, c_mu(n), c_saa(n), c_sab(n), adj, tmp;
    SsimFields f;
    double parts[4];
    for (int c = 0; c < a.channels; ++c) {
        extract_channel(a, c, fa);
        extract_channel(b, c, fb);
        ssim_channel_stats(fa, fb, w, h, f);
        for (size_t i = 0; i < n; ++i) {
            double s = ssim_value(f, i, parts);
            mean += s * scale;
            double a1 = parts[0], a2 = parts[1], b1 = parts[2], b2 = parts[3];
            double inv = 1.0 / (b1 * b2);
            double mu_a = f.mu_a[i], mu_b = f.mu_b[i];
            // ds in terms of d(mu_a), d(S_aa), d(S_ab)
            c_mu[i] = scale * (2.0 * mu_b * (a2 - a1) * inv -
                               2.0 * mu_a * s / b1 + 2.0 * mu_a * s / b2);
            c_saa[i] = scale * (-s / b2);
            c_sab[i] = scale * (2.0 * a1 * inv);
        }
        blur_adjoint(c_mu, adj, tmp, w, h);
        for (size_t i = 0; i < n; ++i) grad_a[i * a.channels + c] += adj[i];
        blur_adjoint(c_saa, adj, tmp, w, h);
        for (size_t i = 0; i < n; ++i)
            grad_a[i * a.channels + c] += 2.0 * fa[i] * adj[i];
        blur_adjoint(c_sab, adj, tmp, w, h);
        for (size_t i = 0; i < n; ++i)
            grad_a[i * a.channels + c] += fb[i] * adj[i];
    }
    return mean;
}

}  // namespace nht
