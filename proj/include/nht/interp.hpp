#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "nht/common.hpp"
#include "nht/mesh.hpp"

namespace nht {

// Per-vertex latent features plus the cached least-squares gradient estimate.
// The cache is stamped so stale reads are detectable.
struct FeatureField {
    int n_f = 0;
    std::vector<double> features;   // V x n_f
    std::vector<double> gradients;  // V x n_f x 2, row-major (d, then x/y)
    uint64_t feature_revision = 0;
    uint64_t gradient_revision = uint64_t(-1);  // matches feature_revision when fresh

    FeatureField() = default;
    FeatureField(size_t n_vertices, int nf)
        : n_f(nf), features(n_vertices * nf, 0.0), gradients(n_vertices * nf * 2, 0.0) {}

    size_t vertex_count() const { return n_f ? features.size() / n_f : 0; }
    double* feat(size_t v) { return &features[v * n_f]; }
    const double* feat(size_t v) const { return &features[v * n_f]; }
    double* grad(size_t v) { return &gradients[v * n_f * 2]; }
    const double* grad(size_t v) const { return &gradients[v * n_f * 2]; }
    void touch() { ++feature_revision; }
    bool gradients_fresh() const { return gradient_revision == feature_revision; }
};

// Signed-area barycentrics; linear reproduction holds also outside the
// triangle. Throws on degenerate input.
std::array<double, 3> bary_tri(const Vec2& p, const Vec2& v0, const Vec2& v1,
                               const Vec2& v2);
// Signed-volume barycentrics of a tetrahedron.
std::array<double, 4> bary_tet(const Vec3& p, const Vec3& v0, const Vec3& v1,
                               const Vec3& v2, const Vec3& v3);

// One-ring least-squares gradient fit: grad_v = A_v^{-1} b_v with
// A_v = sum dp dp^T, b_v = sum df dp. Near-singular rings are Tikhonov
// regularized with lambda = 1e-8 * trace(A_v).
void vertex_gradients(const Mesh& mesh, FeatureField& field);

// Adjoint of vertex_gradients: consumes dL/d(gradients) (same layout as
// field.gradients) and accumulates into dL/d(features) and, when
// through_positions is set, dL/d(positions) (V x 2).
void vertex_gradients_backward(const Mesh& mesh, const FeatureField& field,
                               const std::vector<double>& grad_adjoint,
                               std::vector<double>& d_features,
                               std::vector<double>& d_positions,
                               bool through_positions);

// 10 cubic Bezier control points, order:
//   [300, 030, 003, 210, 120, 021, 012, 102, 201, 111]
struct CtPatch {
    int n_f = 0;
    std::vector<double> c;  // 10 x n_f
    double* cp(int i) { return &c[size_t(i) * n_f]; }
    const double* cp(int i) const { return &c[size_t(i) * n_f]; }
};

// Exactly the closed-form control points built from vertex values, vertex
// gradients and edge vectors, including the interior point
// c111 = (1/6) * (sum of the six edge points) - (1/6) * (sum of corners).
CtPatch ct_control_points(const double* f0, const double* f1, const double* f2,
                          const double* g0, const double* g1, const double* g2,
                          int n_f, const Vec2& v0, const Vec2& v1, const Vec2& v2);

// Cubic Bernstein evaluation of a 10-point patch.
void ct_eval(const CtPatch& patch, const std::array<double, 3>& bary, double* out);
// d(out)/d(control points) is the Bernstein basis; also returns
// d(out_d)/d(bary) for each feature dim (n_f x 3).
void ct_eval_backward(const CtPatch& patch, const std::array<double, 3>& bary,
                      const double* d_out, double* d_c, double* d_bary);

// Interpolation scheme used by the field evaluator. MacroC1 is the classic
// centroid-split construction (C1 across all edges for arbitrary vertex
// data); SingleCubic evaluates the plain 10-point patch above, which is C0
// only and does not reproduce constants at the interior point.
enum class CtScheme { MacroC1, SingleCubic };

// Evaluation reduced to per-vertex weights: for every feature dim d,
//   value_d = sum_k a[k] * f_k[d] + b[k].x * G_k[d].x + b[k].y * G_k[d].y
struct CtSampleWeights {
    std::array<double, 3> a{};
    std::array<Vec2, 3> b{};
};
CtSampleWeights ct_sample_weights(const Vec2& v0, const Vec2& v1, const Vec2& v2,
                                  const std::array<double, 3>& bary, CtScheme scheme);

// Same weights plus their Jacobian w.r.t. the six vertex-position scalars
// (order v0.x, v0.y, v1.x, v1.y, v2.x, v2.y). The barycentrics are recomputed
// internally from the sample point so that position dependence flows through
// them as well.
struct CtSampleWeightsJac {
    CtSampleWeights w;
    std::array<std::array<double, 6>, 3> da{};         // da[k][m]
    std::array<std::array<std::array<double, 6>, 2>, 3> db{};  // db[k][xy][m]
};
CtSampleWeightsJac ct_sample_weights_jac(const Vec2& v0, const Vec2& v1,
                                         const Vec2& v2, const Vec2& p,
                                         CtScheme scheme);

// Convenience: evaluate the feature field at p inside triangle t.
void ct_field_eval(const Mesh& mesh, const FeatureField& field, int t,
                   const std::array<double, 3>& bary, CtScheme scheme, double* out);

}  // namespace nht
