#include "nht/harmonic.hpp"

#include <cmath>

namespace nht {

void encode_sincos(const double* f, int n, double* out) {
    for (int i = 0; i < n; ++i) {
        out[i] = std::sin(f[i]);
        out[n + i] = std::cos(f[i]);
    }
}

void encode_sincos_backward(const double* f, int n, const double* d_out, double* d_f) {
    for (int i = 0; i < n; ++i)
        d_f[i] = std::cos(f[i]) * d_out[i] - std::sin(f[i]) * d_out[n + i];
}

EncodeMode encode_mode_from_name(const std::string& name) {
    if (name == "identity") return EncodeMode::Identity;
    if (name == "relu") return EncodeMode::Relu;
    if (name == "cos") return EncodeMode::Cos;
    if (name == "sincos") return EncodeMode::SinCos;
    throw NhtError("unknown encoding mode: " + name);
}

const char* encode_mode_name(EncodeMode m) {
    switch (m) {
        case EncodeMode::Identity: return "identity";
        case EncodeMode::Relu: return "relu";
        case EncodeMode::Cos: return "cos";
        case EncodeMode::SinCos: return "sincos";
    }
    return "?";
}

int encoded_width(EncodeMode m, int n) {
    return m == EncodeMode::SinCos ? 2 * n : n;
}

void encode_variant(EncodeMode m, const double* f, int n, double* out) {
    switch (m) {
        case EncodeMode::Identity:
            for (int i = 0; i < n; ++i) out[i] = f[i];
            break;
        case EncodeMode::Relu:
            for (int i = 0; i < n; ++i) out[i] = f[i] > 0.0 ? f[i] : 0.0;
            break;
        case EncodeMode::Cos:
            for (int i = 0; i < n; ++i) out[i] = std::cos(f[i]);
            break;
        case EncodeMode::SinCos:
            encode_sincos(f, n, out);
            break;
    }
}

void encode_variant_backward(EncodeMode m, const double* f, int n,
                             const double* d_out, double* d_f) {
    switch (m) {
        case EncodeMode::Identity:
            for (int i = 0; i < n; ++i) d_f[i] = d_out[i];
            break;
        case EncodeMode::Relu:
            for (int i = 0; i < n; ++i) d_f[i] = f[i] > 0.0 ? d_out[i] : 0.0;
            break;
        case EncodeMode::Cos:
            for (int i = 0; i < n; ++i) d_f[i] = -std::sin(f[i]) * d_out[i];
            break;
        case EncodeMode::SinCos:
            encode_sincos_backward(f, n, d_out, d_f);
            break;
    }
}

std::array<double, 9> sh2_encode(const Vec3& d, double k, bool* flagged) {
    double n = d.norm();
    if (flagged) *flagged = std::abs(n - 1.0) > 1e-6;
    if (n <= 0.0) throw NhtError("sh2_encode: zero direction");
    double x = d.x / n, y = d.y / n, z = d.z / n;
    // orthonormal real basis constants
    constexpr double c00 = 0.28209479177387814;   // 1/(2 sqrt(pi))
    constexpr double c1 = 0.4886025119029199;     // sqrt(3/(4 pi))
    constexpr double c2a = 1.0925484305920792;    // sqrt(15/(4 pi))
    constexpr double c20 = 0.31539156525252005;   // sqrt(5/(16 pi))
    constexpr double c22 = 0.5462742152960396;    // sqrt(15/(16 pi))
    return {k * c00,
            k * c1 * y,
            k * c1 * z,
            k * c1 * x,
            k * c2a * x * y,
            k * c2a * y * z,
            k * c20 * (3.0 * z * z - 1.0),
            k * c2a * x * z,
            k * c22 * (x * x - y * y)};
}

}  // namespace nht
