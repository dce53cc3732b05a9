#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nht/common.hpp"

namespace nht {

// Shallow decoder: ReLU hidden layers, identity output. Parameters are packed
// into one flat vector (W1, b1, W2, b2, ...; W row-major out x in) so the
// optimizer, EMA filter and serializer all see plain arrays.
struct MlpParams {
    std::vector<int> dims;      // [in, hidden..., out]
    std::vector<double> theta;

    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
    int layer_count() const { return int(dims.size()) - 1; }
    size_t weight_offset(int layer) const;
    size_t bias_offset(int layer) const;
    static size_t param_count(const std::vector<int>& dims);
    int max_width() const;
};

MlpParams make_mlp(const std::vector<int>& dims, Rng& rng);

// Per-thread forward cache: post-activation values of every layer.
struct MlpScratch {
    std::vector<double> acts;       // concatenated per-layer activations
    std::vector<size_t> offsets;    // per layer into acts
    uint64_t revision = uint64_t(-1);
};

// y = mlp(x); the scratch retains what backward needs.
void mlp_forward(const MlpParams& p, const double* x, MlpScratch& s, double* y);
// Accumulates parameter gradients into d_theta (same packing) and writes
// dL/dx. Requires the scratch of the matching forward call.
void mlp_backward(const MlpParams& p, const MlpScratch& s, const double* d_y,
                  double* d_theta, double* d_x);

// Batch wrappers (row-major n x dim).
std::vector<double> mlp_forward_batch(const MlpParams& p,
                                      const std::vector<double>& x, size_t n);

struct AdamState {
    std::vector<double> m, v;
    int64_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void init(size_t n) { m.assign(n, 0.0); v.assign(n, 0.0); t = 0; }
    void resize_preserving(size_t n) { m.resize(n, 0.0); v.resize(n, 0.0); }
};

// Textbook Adam with bias correction; one shared step counter per state.
void adam_step(AdamState& st, std::span<double> params,
               std::span<const double> grads, double lr);

enum class LrSchedule { Exp2d, Cosine, Exp3d };
LrSchedule lr_schedule_from_name(const std::string& name);

// Exp2d:  base * 0.33^max(0, (t - 20000)/10000), continuous exponent.
// Cosine: annealing to a 0.1 floor at t_max.
// Exp3d:  base * 0.01^(t/t_max).
double lr_at(LrSchedule s, int64_t t, double base, int64_t t_max);

// theta_bar <- gamma * theta_bar + (1 - gamma) * theta
void ema_update(std::vector<double>& shadow, const std::vector<double>& theta,
                double gamma);

}  // namespace nht
