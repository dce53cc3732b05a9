#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nht/common.hpp"

namespace nht {

constexpr double kDefaultWhiteLevel = 16383.0;  // 2^14 - 1
constexpr double kDefaultMu = 5000.0;

// Linear-light HDR image, row-major, channels interleaved. Samples live in
// [0, white_level].
struct HdrImage {
    int width = 0;
    int height = 0;
    int channels = 3;
    double white_level = kDefaultWhiteLevel;
    std::vector<float> data;

    HdrImage() = default;
    HdrImage(int w, int h, int c = 3, double white = kDefaultWhiteLevel)
        : width(w), height(h), channels(c), white_level(white),
          data(size_t(w) * h * c, 0.0f) {}

    size_t pixel_count() const { return size_t(width) * height; }
    float* pixel(int x, int y) { return &data[(size_t(y) * width + x) * channels]; }
    const float* pixel(int x, int y) const {
        return &data[(size_t(y) * width + x) * channels];
    }
    float& at(int x, int y, int c) { return data[(size_t(y) * width + x) * channels + c]; }
    float at(int x, int y, int c) const {
        return data[(size_t(y) * width + x) * channels + c];
    }
    void validate() const;  // throws NhtError on NaN/negative/size mismatch
};

struct MuLawParams {
    double mu = kDefaultMu;
    double w = kDefaultWhiteLevel;
};

// f(x) = log(1 + mu*x/w) / log(1 + mu), monotone [0,w] -> [0,1].
inline double mulaw_encode(double x, const MuLawParams& p) {
    return std::log1p(p.mu * x / p.w) / std::log1p(p.mu);
}
inline double mulaw_decode(double y, const MuLawParams& p) {
    return std::expm1(y * std::log1p(p.mu)) * p.w / p.mu;
}
// d/dx mulaw_encode
inline double mulaw_encode_deriv(double x, const MuLawParams& p) {
    return p.mu / (p.w * std::log1p(p.mu) * (1.0 + p.mu * x / p.w));
}

// Strict variants used on the metrics path.
double mulaw_encode_checked(double x, const MuLawParams& p);
double mulaw_decode_checked(double y, const MuLawParams& p);

// Display transform: clamp to [0,1] after normalization, gamma 1/2.2.
inline double tonemap_sample(double x, double white_level) {
    double t = x / white_level;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    return std::pow(t, 1.0 / 2.2);
}
HdrImage tonemap(const HdrImage& img);  // returns image in [0,1], white_level 1

// Bilinear lookup at continuous coords (pixel centers at i+0.5), clamped at
// the border. Writes `channels` values to out.
void sample_bilinear(const HdrImage& img, double x, double y, double* out);

// PFM: "PF" (RGB) / "Pf" (gray), negative scale = little endian.
HdrImage load_pfm(const std::string& path, double white_level = kDefaultWhiteLevel);
void save_pfm(const HdrImage& img, const std::string& path);

// PNG: 8/16-bit RGB(A); samples are mapped to linear light by inverse sRGB
// and scaled so full-scale input maps to white_level.
HdrImage load_png(const std::string& path, double white_level = kDefaultWhiteLevel);
// Writes a 16-bit RGB PNG of values already in [0,1] (e.g. tonemapped).
void save_png16(const HdrImage& display_img, const std::string& path);

// Dispatch on extension (.pfm/.png).
HdrImage load_image(const std::string& path, double white_level = kDefaultWhiteLevel);

inline double srgb_to_linear(double s) {
    return s <= 0.04045 ? s / 12.92 : std::pow((s + 0.055) / 1.055, 2.4);
}
inline double linear_to_srgb(double l) {
    return l <= 0.0031308 ? l * 12.92 : 1.055 * std::pow(l, 1.0 / 2.4) - 0.055;
}

}  // namespace nht
