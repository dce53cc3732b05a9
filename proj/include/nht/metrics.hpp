#pragma once

#include <vector>

#include "nht/image.hpp"

namespace nht {

enum class MetricSpace { MuLaw, Tonemapped, Linear };

// 10*log10(1/MSE) after mapping both images into [0,1] via the chosen space.
// Identical images return +infinity.
double psnr(const HdrImage& a, const HdrImage& b, MetricSpace space,
            const MuLawParams& p = MuLawParams{});

// Per-pixel SSIM over channel-averaged windows: 11x11 Gaussian, sigma 1.5,
// K1=0.01, K2=0.03, dynamic range 1 (inputs must already be in [0,1]).
// Channels are evaluated independently and averaged per pixel.
struct SsimMap {
    int width = 0, height = 0;
    std::vector<double> value;  // per pixel, averaged over channels
    double mean = 0.0;
};
SsimMap ssim_map(const HdrImage& a, const HdrImage& b);

inline double dssim(const HdrImage& a, const HdrImage& b) {
    return (1.0 - ssim_map(a, b).mean) * 0.5;
}

// Mean SSIM plus its gradient w.r.t. every sample of `a` (same layout as
// a.data). Used by the splat-mode training loss.
double ssim_mean_with_grad(const HdrImage& a, const HdrImage& b,
                           std::vector<double>& grad_a);

}  // namespace nht
