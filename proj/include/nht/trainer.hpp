#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nht/codec.hpp"
#include "nht/metrics.hpp"
#include "nht/model.hpp"

namespace nht {

struct TrainConfig {
    int iters = 25000;
    int batch_pixels = 160000;
    double lr_positions = 1e-4;
    double lr_features = 5e-3;
    double lr_mlp = 5e-5;
    int densify_start = 1500;
    int densify_end = 15000;
    int densify_every = 500;
    double densify_growth = 0.35;
    double score_exponent = 0.75;
    int densify_min_pixels = 3;
    double mu = kDefaultMu;
    uint64_t seed = 0;
    int refine_iters = 3000;
    double lambda_dssim = 0.1;
    double lambda_alpha = 0.02;
    double lambda_scale = 0.005;
    double gamma_ema = 0.95;

    int n_f = 8;
    int hidden_width = 64;
    int hidden_layers = 2;
    int n_init = 256;
    double init_floor = 0.05;
    double feature_init = 0.25;  // stddev of the initial latent features
    std::string encoding = "sincos";
    std::string scheme = "macro";  // macro | single
    bool densify = true;
    bool train_positions = true;
    bool grad_through_gradient_positions = true;
    int threads = 0;  // 0 = NHT_THREADS or hardware
    int log_every = 100;
    int score_stride = 1;
    double dir_scale = 1.0;
    int max_vertices = 0;  // densification cap, 0 = none

    void validate() const;
    EncodeMode encode_mode() const { return encode_mode_from_name(encoding); }
    CtScheme ct_scheme() const {
        return scheme == "single" ? CtScheme::SingleCubic : CtScheme::MacroC1;
    }
};

// key=value per line, '#' comments.
TrainConfig load_train_config(const std::string& path);
void set_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value);

struct BatchSample {
    Vec2 pos;
    std::array<double, 3> gt;  // linear light
};

// Stratified: ceil(sqrt(n))^2 strata, one jittered sample per stratum; the
// surplus strata (when n is not a perfect square) are dropped at random each
// call so coverage stays uniform in expectation.
std::vector<BatchSample> sample_batch(Rng& rng, const HdrImage& img, int n);

// Mean over all entries of (mulaw(pred) - mulaw(gt))^2, with out-of-range
// predictions clamped (count reported via clamped). d_pred, when given, gets
// the analytic gradient through the mu-law transform.
double loss_mulaw_mse(const double* pred, const double* gt, size_t n,
                      const MuLawParams& p, double* d_pred = nullptr,
                      size_t* clamped = nullptr);

struct SplatLoss {
    double value = 0.0;
    double l1 = 0.0;
    double dssim = 0.0;
    double r_alpha = 0.0;
    double r_scale = 0.0;
    std::vector<double> d_pred;  // same layout as pred.data
};
// (1-lambda) L1 + lambda D-SSIM + lambda_alpha R_alpha + lambda_scale R_s
SplatLoss loss_splat(const HdrImage& pred, const HdrImage& gt, const SplatSet& set,
                     double lambda, double lambda_alpha, double lambda_scale,
                     bool with_grad = true);

// Full-frame decode of a mesh model (mu-law space in [0,1], white_level 1).
// A stride > 1 renders every stride-th pixel into a smaller image. tri_map,
// when given, receives the containing triangle per rendered pixel.
HdrImage render_mesh_mu(const MeshModel& model, int stride = 1,
                        std::vector<int>* tri_map = nullptr, bool use_ema = true,
                        int threads = 0);
// Same decode mapped back to linear light through the inverse mu-law.
HdrImage render_mesh(const MeshModel& model, bool use_ema = true, int threads = 0);

// score_t = mean DSSIM over the triangle's pixels * |pixels|^exponent;
// triangles with fewer than min_pixels get -inf.
std::vector<double> score_triangles(const Mesh& mesh, const SsimMap& ssim,
                                    const std::vector<int>& tri_map,
                                    double exponent, int min_pixels);

struct DensifyStats {
    int inserted = 0;
    bool changed = false;
};
// Inserts centroid vertices for the top-scoring triangles (up to
// growth * V, only positive scores), averages parent features, re-runs the
// Delaunay triangulation. Vertex order is preserved; new vertices append.
DensifyStats densify_step(Mesh& mesh, FeatureField& field,
                          const std::vector<double>& scores, double growth,
                          int max_vertices = 0);

// Accumulated adjoints of one batch against a mesh model.
struct BatchGrads {
    double loss = 0.0;
    std::vector<double> feat;        // V x n_f
    std::vector<double> grad_cache;  // V x n_f x 2 (adjoint of the cache)
    std::vector<double> pos;         // V x 2
    std::vector<double> theta;       // packed like mlp.theta

    void reset(size_t nv, int nf, size_t ntheta);
    void add(const BatchGrads& o);
};

// Forward + backward of the mu-law MSE objective over a sample range. The
// model's gradient cache must be fresh. loss is accumulated scaled by inv_n
// (1 / (total samples * channels)); the grad_cache adjoint still needs
// vertex_gradients_backward to reach features/positions.
void mesh_batch_range(const MeshModel& model, const BatchSample* samples, size_t n,
                      double inv_n, bool positions_on, BatchGrads& out);

// Whole-pipeline loss + complete gradients (features, positions, mlp) for a
// fixed sample set; single-threaded. The finite-difference harness checks
// against exactly this function.
BatchGrads mesh_pipeline_gradients(MeshModel& model,
                                   const std::vector<BatchSample>& samples,
                                   bool through_positions,
                                   bool through_gradient_positions = true);

using LogSink = std::function<void(const std::string&)>;

MeshModel fit_image(const HdrImage& img, const TrainConfig& cfg,
                    const LogSink& log = nullptr);
SplatModel fit_splats(const HdrImage& img, const TrainConfig& cfg,
                      const LogSink& log = nullptr);

HdrImage render_splat_display(const SplatModel& model, bool use_ema = true,
                              int threads = 0);

}  // namespace nht
