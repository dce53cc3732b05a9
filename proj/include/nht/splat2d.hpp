#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nht/common.hpp"
#include "nht/image.hpp"
#include "nht/nn.hpp"

namespace nht {

// Canonical bounding triangle: equilateral, circumscribing the unit circle
// of the whitened kernel (vertices at radius 2).
inline const std::array<Vec2, 3>& scaffold_vertices() {
    static const std::array<Vec2, 3> v = {
        Vec2{0.0, 2.0},
        Vec2{-std::sqrt(3.0), -1.0},
        Vec2{std::sqrt(3.0), -1.0},
    };
    return v;
}

// 2D Gaussian primitive with three feature vectors on the canonical triangle.
struct Splat {
    Vec2 mean;
    double theta = 0.0;        // rotation, radians
    Vec2 scales{1.0, 1.0};     // > 0
    double opacity = 1.0;      // (0, 1]
    double z = 0.0;            // global depth proxy; smaller renders first
    std::vector<double> features;  // 3 x n_f

    const double* f(int corner, int n_f) const { return &features[size_t(corner) * n_f]; }
    double* f(int corner, int n_f) { return &features[size_t(corner) * n_f]; }
};

struct SplatSet {
    int n_f = 0;
    std::vector<Splat> splats;

    // stable sort by z; afterwards z is non-decreasing with ties kept in
    // index order
    void sort_by_depth();
};

// whitened coordinate: S^{-1} R^T (p - mean)
Vec2 whiten(const Splat& s, const Vec2& p);

// rho = exp(-0.5 |whiten(p)|^2); 1 at the mean.
double kernel_eval(const Splat& s, const Vec2& p);

// Barycentric feature lookup on the canonical triangle at the whitened
// point; outside points use clamped-and-renormalized barycentrics.
void interpolate_on_scaffold(const Splat& s, const Vec2& p, int n_f, double* out);

// Front-to-back alpha compositing of [sin f; cos f] with k * SH2(d)
// appended; out has 2*n_f + 9 entries. The set must be depth-sorted.
void composite_pixel(const SplatSet& set, const Vec2& p, const Vec3& dir,
                     double dir_scale, double* out);

// Per-pixel intermediates retained for the training backward pass.
struct CompositeTape {
    struct Node {
        int splat;
        double alpha, transmittance, rho;
        Vec2 white;
        std::array<double, 3> bary;
        std::array<double, 3> raw_bary;
        bool clamped;
    };
    std::vector<Node> nodes;
};
void composite_pixel_tape(const SplatSet& set, const Vec2& p, const Vec3& dir,
                          double dir_scale, double* out, CompositeTape& tape);

struct SplatGrads {
    int n_f = 0;
    std::vector<double> mean;      // P x 2
    std::vector<double> theta;     // P
    std::vector<double> scales;    // P x 2
    std::vector<double> opacity;   // P
    std::vector<double> features;  // P x 3 x n_f

    void init(size_t n_splats, int nf);
    void add(const SplatGrads& o);
};

// Adjoint of composite_pixel for the harmonic part of the output (first
// 2*n_f entries of d_out).
void composite_pixel_backward(const SplatSet& set, const Vec2& p,
                              const CompositeTape& tape, const double* d_out,
                              SplatGrads& grads);

struct PinholeCamera {
    double focal_scale = 1.0;  // focal length = focal_scale * max(W, H)
    Vec3 direction(double x, double y, int width, int height) const {
        double f = focal_scale * std::max(width, height);
        Vec3 d{(x - 0.5 * width) / f, (y - 0.5 * height) / f, 1.0};
        double n = d.norm();
        return {d.x / n, d.y / n, d.z / n};
    }
};

struct RenderStats {
    uint64_t mlp_evals = 0;
};

// One deferred MLP decode per pixel over the composited harmonics. Splats
// with kernel contribution below kernel_cutoff are skipped per pixel;
// early_t > 0 stops once transmittance drops below it.
HdrImage render_deferred(const SplatSet& set, const MlpParams& mlp, int width,
                         int height, const PinholeCamera& cam,
                         double dir_scale = 1.0, double early_t = 1e-4,
                         RenderStats* stats = nullptr, int threads = 0);

// Plain-text scene: header line "width=.. height=.. nf=.. seed=.. ..." then
// one "splat mu=x,y theta=t s=sx,sy sigma=o z=d f0=a;b;.. f1=.. f2=.." per line.
struct SplatScene {
    int width = 256, height = 256;
    int n_f = 4;
    uint64_t seed = 1;
    int hidden_width = 32;
    int hidden_layers = 2;
    double dir_scale = 1.0;
    SplatSet set;
};
SplatScene load_splat_scene(const std::string& path);
void save_splat_scene(const SplatScene& scene, const std::string& path);

}  // namespace nht
