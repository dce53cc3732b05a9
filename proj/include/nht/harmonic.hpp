#pragma once

#include <array>
#include <string>

#include "nht/common.hpp"

namespace nht {

// [sin(f); cos(f)], the periodic activation that turns compositing into a
// sum of harmonics.
void encode_sincos(const double* f, int n, double* out);
void encode_sincos_backward(const double* f, int n, const double* d_out, double* d_f);

enum class EncodeMode { Identity, Relu, Cos, SinCos };
EncodeMode encode_mode_from_name(const std::string& name);
const char* encode_mode_name(EncodeMode m);

int encoded_width(EncodeMode m, int n);
void encode_variant(EncodeMode m, const double* f, int n, double* out);
void encode_variant_backward(EncodeMode m, const double* f, int n,
                             const double* d_out, double* d_f);

// Real orthonormal spherical harmonics, bands l = 0..2, order
// (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2),
// scaled by k. Non-unit directions are normalized; *flagged is set if the
// deviation exceeded 1e-6.
std::array<double, 9> sh2_encode(const Vec3& d, double k = 1.0,
                                 bool* flagged = nullptr);

}  // namespace nht
