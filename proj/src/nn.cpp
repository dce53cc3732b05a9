#include "nht/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace nht {

size_t MlpParams::weight_offset(int layer) const {
    size_t off = 0;
    for (int l = 0; l < layer; ++l)
        off += size_t(dims[l + 1]) * dims[l] + dims[l + 1];
    return off;
}

size_t MlpParams::bias_offset(int layer) const {
    return weight_offset(layer) + size_t(dims[layer + 1]) * dims[layer];
}

size_t MlpParams::param_count(const std::vector<int>& dims) {
    size_t n = 0;
    for (size_t l = 0; l + 1 < dims.size(); ++l)
        n += size_t(dims[l + 1]) * dims[l] + dims[l + 1];
    return n;
}

int MlpParams::max_width() const {
    return *std::max_element(dims.begin(), dims.end());
}

MlpParams make_mlp(const std::vector<int>& dims, Rng& rng) {
    if (dims.size() < 2) throw NhtError("make_mlp: need at least 2 dims");
    MlpParams p;
    p.dims = dims;
    p.theta.assign(MlpParams::param_count(dims), 0.0);
    for (int l = 0; l + 1 < int(dims.size()); ++l) {
        // He-uniform fan-in init, zero bias
        double bound = std::sqrt(6.0 / dims[l]);
        double* w = &p.theta[p.weight_offset(l)];
        for (size_t i = 0; i < size_t(dims[l + 1]) * dims[l]; ++i)
            w[i] = rng.uniform(-bound, bound);
    }
    return p;
}

void mlp_forward(const MlpParams& p, const double* x, MlpScratch& s, double* y) {
    int L = p.layer_count();
    size_t total = 0;
    s.offsets.resize(L + 1);
    for (int l = 0; l <= L; ++l) {
        s.offsets[l] = total;
        total += p.dims[l];
    }
    s.acts.resize(total);
    std::memcpy(s.acts.data(), x, sizeof(double) * p.dims[0]);
    for (int l = 0; l < L; ++l) {
        const double* in = &s.acts[s.offsets[l]];
        double* out = &s.acts[s.offsets[l + 1]];
        const double* w = &p.theta[p.weight_offset(l)];
        const double* b = &p.theta[p.bias_offset(l)];
        int ni = p.dims[l], no = p.dims[l + 1];
        bool hidden = l + 1 < L;
        for (int o = 0; o < no; ++o) {
            const double* row = w + size_t(o) * ni;
            double acc = b[o];
            for (int i = 0; i < ni; ++i) acc += row[i] * in[i];
            out[o] = hidden && acc < 0.0 ? 0.0 : acc;
        }
    }
    std::memcpy(y, &s.acts[s.offsets[L]], sizeof(double) * p.dims[L]);
}

void mlp_backward(const MlpParams& p, const MlpScratch& s, const double* d_y,
                  double* d_theta, double* d_x) {
    int L = p.layer_count();
    std::vector<double> delta(d_y, d_y + p.dims[L]);
    std::vector<double> prev;
    for (int l = L - 1; l >= 0; --l) {
        const double* in = &s.acts[s.offsets[l]];
        const double* out = &s.acts[s.offsets[l + 1]];
        const double* w = &p.theta[p.weight_offset(l)];
        double* dw = d_theta + p.weight_offset(l);
        double* db = d_theta + p.bias_offset(l);
        int ni = p.dims[l], no = p.dims[l + 1];
        bool hidden = l + 1 < L;
        if (hidden)
            for (int o = 0; o < no; ++o)
                if (out[o] <= 0.0) delta[o] = 0.0;
        prev.assign(ni, 0.0);
        for (int o = 0; o < no; ++o) {
            double g = delta[o];
            if (g == 0.0) continue;
            db[o] += g;
            double* dwr = dw + size_t(o) * ni;
            const double* row = w + size_t(o) * ni;
            for (int i = 0; i < ni; ++i) {
                dwr[i] += g * in[i];
                prev[i] += g * row[i];
            }
        }
        delta.swap(prev);
    }
    if (d_x) std::memcpy(d_x, delta.data(), sizeof(double) * p.dims[0]);
}

std::vector<double> mlp_forward_batch(const MlpParams& p,
                                      const std::vector<double>& x, size_t n) {
    if (x.size() != n * size_t(p.input_dim()))
        throw NhtError("mlp_forward_batch: input shape mismatch");
    std::vector<double> y(n * p.output_dim());
    MlpScratch s;
    for (size_t i = 0; i < n; ++i)
        mlp_forward(p, &x[i * p.input_dim()], s, &y[i * p.output_dim()]);
    return y;
}

void adam_step(AdamState& st, std::span<double> params,
               std::span<const double> grads, double lr) {
    if (st.m.size() != params.size()) throw NhtError("adam_step: state size mismatch");
    if (grads.size() != params.size()) throw NhtError("adam_step: grad size mismatch");
    ++st.t;
    double bc1 = 1.0 - std::pow(st.beta1, double(st.t));
    double bc2 = 1.0 - std::pow(st.beta2, double(st.t));
    for (size_t i = 0; i < params.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
        double mhat = st.m[i] / bc1;
        double vhat = st.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

LrSchedule lr_schedule_from_name(const std::string& name) {
    if (name == "exp2d") return LrSchedule::Exp2d;
    if (name == "cosine") return LrSchedule::Cosine;
    if (name == "exp3d") return LrSchedule::Exp3d;
    throw NhtError("unknown lr schedule: " + name);
}

double lr_at(LrSchedule s, int64_t t, double base, int64_t t_max) {
    if (t < 0) throw NhtError("lr_at: negative step");
    switch (s) {
        case LrSchedule::Exp2d:
            return base * std::pow(0.33, std::max(0.0, (double(t) - 20000.0) / 10000.0));
        case LrSchedule::Cosine: {
            double f = t_max > 0 ? double(std::min(t, t_max)) / double(t_max) : 1.0;
            return base * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(M_PI * f)));
        }
        case LrSchedule::Exp3d: {
            double f = t_max > 0 ? double(std::min(t, t_max)) / double(t_max) : 1.0;
            return base * std::pow(0.01, f);
        }
    }
    throw NhtError("lr_at: unknown schedule");
}

void ema_update(std::vector<double>& shadow, const std::vector<double>& theta,
                double gamma) {
    if (shadow.size() != theta.size()) shadow = theta;
    for (size_t i = 0; i < theta.size(); ++i)
        shadow[i] = gamma * shadow[i] + (1.0 - gamma) * theta[i];
}

}  // namespace nht
