#include "nht/interp.hpp"

#include <algorithm>
#include <cmath>

namespace nht {

std::array<double, 3> bary_tri(const Vec2& p, const Vec2& v0, const Vec2& v1,
                               const Vec2& v2) {
    double area = (v1 - v0).cross(v2 - v0);
    if (std::abs(area) < 2.0 * kEpsArea)
        throw NhtError("bary_tri: degenerate triangle");
    double a0 = (v1 - p).cross(v2 - p) / area;
    double a1 = (v2 - p).cross(v0 - p) / area;
    double a2 = (v0 - p).cross(v1 - p) / area;
    return {a0, a1, a2};
}

std::array<double, 4> bary_tet(const Vec3& p, const Vec3& v0, const Vec3& v1,
                               const Vec3& v2, const Vec3& v3) {
    auto triple = [](const Vec3& a, const Vec3& b, const Vec3& c) {
        return a.cross(b).dot(c);
    };
    double vol = triple(v1 - v0, v2 - v0, v3 - v0);
    if (std::abs(vol) < 1e-14)
        throw NhtError("bary_tet: degenerate tetrahedron");
    // signed sub-tetrahedron volumes over the total volume
    double a0 = triple(v1 - p, v2 - p, v3 - p) / vol;
    double a1 = triple(p - v0, v2 - v0, v3 - v0) / vol;
    double a2 = triple(v1 - v0, p - v0, v3 - v0) / vol;
    double a3 = triple(v1 - v0, v2 - v0, p - v0) / vol;
    return {a0, a1, a2, a3};
}

namespace {

struct LsSystem {
    double a00 = 0, a01 = 0, a11 = 0;  // A_v (symmetric)
    double lambda = 0;                 // Tikhonov term actually applied
    double det = 0;
    double i00 = 0, i01 = 0, i11 = 0;  // (A_v + lambda I)^{-1}
};

LsSystem ring_system(const Mesh& mesh, size_t v) {
    LsSystem s;
    const Vec2 pv = mesh.positions[v];
    for (int j : mesh.one_ring[v]) {
        Vec2 dp = mesh.positions[j] - pv;
        s.a00 += dp.x * dp.x;
        s.a01 += dp.x * dp.y;
        s.a11 += dp.y * dp.y;
    }
    double tr = s.a00 + s.a11;
    double det = s.a00 * s.a11 - s.a01 * s.a01;
    if (det < 1e-10 * tr * tr || tr == 0.0) {
        s.lambda = 1e-8 * tr + (tr == 0.0 ? 1e-30 : 0.0);
    }
    double b00 = s.a00 + s.lambda, b11 = s.a11 + s.lambda;
    s.det = b00 * b11 - s.a01 * s.a01;
    s.i00 = b11 / s.det;
    s.i11 = b00 / s.det;
    s.i01 = -s.a01 / s.det;
    return s;
}

}  // namespace

void vertex_gradients(const Mesh& mesh, FeatureField& field) {
    size_t nv = mesh.vertex_count();
    int nf = field.n_f;
    field.gradients.assign(nv * nf * 2, 0.0);
    for (size_t v = 0; v < nv; ++v) {
        LsSystem s = ring_system(mesh, v);
        const Vec2 pv = mesh.positions[v];
        const double* fv = field.feat(v);
        double* gv = field.grad(v);
        // b_v accumulated per feature dim, then solved with the shared inverse
        for (int j : mesh.one_ring[v]) {
            Vec2 dp = mesh.positions[j] - pv;
            const double* fj = field.feat(j);
            for (int d = 0; d < nf; ++d) {
                double df = fj[d] - fv[d];
                gv[d * 2 + 0] += df * dp.x;
                gv[d * 2 + 1] += df * dp.y;
            }
        }
        for (int d = 0; d < nf; ++d) {
            double bx = gv[d * 2 + 0], by = gv[d * 2 + 1];
            gv[d * 2 + 0] = s.i00 * bx + s.i01 * by;
            gv[d * 2 + 1] = s.i01 * bx + s.i11 * by;
        }
    }
    field.gradient_revision = field.feature_revision;
}

void vertex_gradients_backward(const Mesh& mesh, const FeatureField& field,
                               const std::vector<double>& grad_adjoint,
                               std::vector<double>& d_features,
                               std::vector<double>& d_positions,
                               bool through_positions) {
    size_t nv = mesh.vertex_count();
    int nf = field.n_f;
    if (d_features.size() != nv * size_t(nf))
        throw NhtError("vertex_gradients_backward: d_features size");
    if (through_positions && d_positions.size() != nv * 2)
        throw NhtError("vertex_gradients_backward: d_positions size");
    std::vector<double> m(size_t(nf) * 2);  // M = Gbar * A^{-1} per dim
    for (size_t v = 0; v < nv; ++v) {
        LsSystem s = ring_system(mesh, v);
        const Vec2 pv = mesh.positions[v];
        const double* gbar = &grad_adjoint[v * nf * 2];
        const double* g = field.grad(v);
        for (int d = 0; d < nf; ++d) {
            m[d * 2 + 0] = s.i00 * gbar[d * 2 + 0] + s.i01 * gbar[d * 2 + 1];
            m[d * 2 + 1] = s.i01 * gbar[d * 2 + 0] + s.i11 * gbar[d * 2 + 1];
        }
        // dL/dA = -G^T M (2x2), accumulated over feature dims
        double da00 = 0, da01 = 0, da10 = 0, da11 = 0;
        if (through_positions) {
            for (int d = 0; d < nf; ++d) {
                da00 -= g[d * 2 + 0] * m[d * 2 + 0];
                da01 -= g[d * 2 + 0] * m[d * 2 + 1];
                da10 -= g[d * 2 + 1] * m[d * 2 + 0];
                da11 -= g[d * 2 + 1] * m[d * 2 + 1];
            }
            if (s.lambda > 0.0) {
                // lambda = 1e-8 * tr(A): its adjoint feeds the diagonal
                double dlam = da00 + da11;
                da00 += 1e-8 * dlam;
                da11 += 1e-8 * dlam;
            }
        }
        const double* fv = field.feat(v);
        for (int j : mesh.one_ring[v]) {
            Vec2 dp = mesh.positions[j] - pv;
            const double* fj = field.feat(j);
            double dpx = 0.0, dpy = 0.0;
            for (int d = 0; d < nf; ++d) {
                double mdx = m[d * 2 + 0], mdy = m[d * 2 + 1];
                double ddf = mdx * dp.x + mdy * dp.y;
                d_features[j * nf + d] += ddf;
                d_features[v * nf + d] -= ddf;
                if (through_positions) {
                    double df = fj[d] - fv[d];
                    dpx += df * mdx;
                    dpy += df * mdy;
                }
            }
            if (through_positions) {
                // A path: (dL/dA + dL/dA^T) dp
                dpx += (2.0 * da00) * dp.x + (da01 + da10) * dp.y;
                dpy += (da01 + da10) * dp.x + (2.0 * da11) * dp.y;
                d_positions[j * 2 + 0] += dpx;
                d_positions[j * 2 + 1] += dpy;
                d_positions[v * 2 + 0] -= dpx;
                d_positions[v * 2 + 1] -= dpy;
            }
        }
    }
}

CtPatch ct_control_points(const double* f0, const double* f1, const double* f2,
                          const double* g0, const double* g1, const double* g2,
                          int n_f, const Vec2& v0, const Vec2& v1, const Vec2& v2) {
    Vec2 e01 = v1 - v0, e12 = v2 - v1, e20 = v0 - v2;
    double area = e01.cross(v2 - v0);
    if (std::abs(area) < 2.0 * kEpsArea)
        throw NhtError("ct_control_points: degenerate triangle");
    CtPatch p;
    p.n_f = n_f;
    p.c.assign(10 * size_t(n_f), 0.0);
    auto dot2 = [](const double* g, int d, const Vec2& e) {
        return g[d * 2 + 0] * e.x + g[d * 2 + 1] * e.y;
    };
    for (int d = 0; d < n_f; ++d) {
        double c300 = f0[d], c030 = f1[d], c003 = f2[d];
        double c210 = f0[d] + dot2(g0, d, e01) / 3.0;
        double c120 = f1[d] - dot2(g1, d, e01) / 3.0;
        double c021 = f1[d] + dot2(g1, d, e12) / 3.0;
        double c012 = f2[d] - dot2(g2, d, e12) / 3.0;
        double c102 = f2[d] + dot2(g2, d, e20) / 3.0;
        double c201 = f0[d] - dot2(g0, d, e20) / 3.0;
        double c111 = (c210 + c120 + c021 + c012 + c102 + c201) / 6.0 -
                      (c300 + c030 + c003) / 6.0;
        double* c = p.c.data() + d;
        c[0 * n_f] = c300; c[1 * n_f] = c030; c[2 * n_f] = c003;
        c[3 * n_f] = c210; c[4 * n_f] = c120; c[5 * n_f] = c021;
        c[6 * n_f] = c012; c[7 * n_f] = c102; c[8 * n_f] = c201;
        c[9 * n_f] = c111;
    }
    return p;
}

namespace {

// Bernstein basis matching the CtPatch control-point order.
inline void bernstein10(double a0, double a1, double a2, double* B) {
    B[0] = a0 * a0 * a0;
    B[1] = a1 * a1 * a1;
    B[2] = a2 * a2 * a2;
    B[3] = 3.0 * a0 * a0 * a1;
    B[4] = 3.0 * a0 * a1 * a1;
    B[5] = 3.0 * a1 * a1 * a2;
    B[6] = 3.0 * a1 * a2 * a2;
    B[7] = 3.0 * a0 * a2 * a2;
    B[8] = 3.0 * a0 * a0 * a2;
    B[9] = 6.0 * a0 * a1 * a2;
}

inline void bernstein10_dalpha(double a0, double a1, double a2, double dB[10][3]) {
    double z[10][3] = {
        {3 * a0 * a0, 0, 0},
        {0, 3 * a1 * a1, 0},
        {0, 0, 3 * a2 * a2},
        {6 * a0 * a1, 3 * a0 * a0, 0},
        {3 * a1 * a1, 6 * a0 * a1, 0},
        {0, 6 * a1 * a2, 3 * a1 * a1},
        {0, 3 * a2 * a2, 6 * a1 * a2},
        {3 * a2 * a2, 0, 6 * a0 * a2},
        {6 * a0 * a2, 0, 3 * a0 * a0},
        {6 * a1 * a2, 6 * a0 * a2, 6 * a0 * a1},
    };
    std::copy(&z[0][0], &z[0][0] + 30, &dB[0][0]);
}

}  // namespace

void ct_eval(const CtPatch& patch, const std::array<double, 3>& bary, double* out) {
    double B[10];
    bernstein10(bary[0], bary[1], bary[2], B);
    for (int d = 0; d < patch.n_f; ++d) {
        double acc = 0.0;
        for (int i = 0; i < 10; ++i) acc += B[i] * patch.c[size_t(i) * patch.n_f + d];
        out[d] = acc;
    }
}

void ct_eval_backward(const CtPatch& patch, const std::array<double, 3>& bary,
                      const double* d_out, double* d_c, double* d_bary) {
    double B[10];
    double dB[10][3];
    bernstein10(bary[0], bary[1], bary[2], B);
    bernstein10_dalpha(bary[0], bary[1], bary[2], dB);
    if (d_bary) std::fill(d_bary, d_bary + 3, 0.0);
    for (int i = 0; i < 10; ++i) {
        for (int d = 0; d < patch.n_f; ++d) {
            double g = d_out[d];
            if (d_c) d_c[size_t(i) * patch.n_f + d] += B[i] * g;
            if (d_bary) {
                double c = patch.c[size_t(i) * patch.n_f + d];
                d_bary[0] += g * c * dB[i][0];
                d_bary[1] += g * c * dB[i][1];
                d_bary[2] += g * c * dB[i][2];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Weight-space construction of the interpolant. A WVec is the linear map from
// the 9 per-dim inputs [f0,f1,f2, G0x,G0y, G1x,G1y, G2x,G2y] to one scalar,
// so all control points and the final value are WVecs. Templated on the
// scalar type to obtain exact position Jacobians through 6-lane duals.
// ---------------------------------------------------------------------------

namespace {

struct Dual6 {
    double v = 0.0;
    std::array<double, 6> d{};

    Dual6() = default;
    Dual6(double value) : v(value) {}
    static Dual6 seeded(double value, int lane) {
        Dual6 r(value);
        r.d[lane] = 1.0;
        return r;
    }
};

inline Dual6 operator+(const Dual6& a, const Dual6& b) {
    Dual6 r(a.v + b.v);
    for (int i = 0; i < 6; ++i) r.d[i] = a.d[i] + b.d[i];
    return r;
}
inline Dual6 operator-(const Dual6& a, const Dual6& b) {
    Dual6 r(a.v - b.v);
    for (int i = 0; i < 6; ++i) r.d[i] = a.d[i] - b.d[i];
    return r;
}
inline Dual6 operator-(const Dual6& a) {
    Dual6 r(-a.v);
    for (int i = 0; i < 6; ++i) r.d[i] = -a.d[i];
    return r;
}
inline Dual6 operator*(const Dual6& a, const Dual6& b) {
    Dual6 r(a.v * b.v);
    for (int i = 0; i < 6; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
}
inline Dual6 operator/(const Dual6& a, const Dual6& b) {
    Dual6 r(a.v / b.v);
    double inv2 = 1.0 / (b.v * b.v);
    for (int i = 0; i < 6; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv2;
    return r;
}

template <typename S>
struct V2 {
    S x{}, y{};
    V2<S> operator+(const V2& o) const { return {x + o.x, y + o.y}; }
    V2<S> operator-(const V2& o) const { return {x - o.x, y - o.y}; }
    V2<S> operator*(const S& s) const { return {x * s, y * s}; }
    S cross(const V2& o) const { return x * o.y - y * o.x; }
};

// linear map coefficients from [f0,f1,f2,G0x,G0y,G1x,G1y,G2x,G2y]
template <typename S>
struct WVec {
    std::array<S, 9> c{};
    WVec operator+(const WVec& o) const {
        WVec r;
        for (int i = 0; i < 9; ++i) r.c[i] = c[i] + o.c[i];
        return r;
    }
    WVec operator-(const WVec& o) const {
        WVec r;
        for (int i = 0; i < 9; ++i) r.c[i] = c[i] - o.c[i];
        return r;
    }
    WVec operator*(const S& s) const {
        WVec r;
        for (int i = 0; i < 9; ++i) r.c[i] = c[i] * s;
        return r;
    }
};

template <typename S>
WVec<S> w_f(int k) {
    WVec<S> r;
    r.c[k] = S(1.0);
    return r;
}
// coefficient on G_k . e
template <typename S>
WVec<S> w_g(int k, const V2<S>& e) {
    WVec<S> r;
    r.c[3 + 2 * k] = e.x;
    r.c[4 + 2 * k] = e.y;
    return r;
}

template <typename S>
std::array<S, 3> bary_generic(const V2<S>& p, const V2<S>& v0, const V2<S>& v1,
                              const V2<S>& v2) {
    S area = (v1 - v0).cross(v2 - v0);
    return {(v1 - p).cross(v2 - p) / area, (v2 - p).cross(v0 - p) / area,
            (v0 - p).cross(v1 - p) / area};
}

// Single 10-point cubic patch as sample weights.
template <typename S>
std::array<S, 9> single_cubic_weights(const V2<S> v[3], const std::array<S, 3>& al) {
    WVec<S> c[10];
    S third(1.0 / 3.0);
    V2<S> e01 = v[1] - v[0], e12 = v[2] - v[1], e20 = v[0] - v[2];
    c[0] = w_f<S>(0);
    c[1] = w_f<S>(1);
    c[2] = w_f<S>(2);
    c[3] = w_f<S>(0) + w_g<S>(0, e01 * third);
    c[4] = w_f<S>(1) - w_g<S>(1, e01 * third);
    c[5] = w_f<S>(1) + w_g<S>(1, e12 * third);
    c[6] = w_f<S>(2) - w_g<S>(2, e12 * third);
    c[7] = w_f<S>(2) + w_g<S>(2, e20 * third);
    c[8] = w_f<S>(0) - w_g<S>(0, e20 * third);
    c[9] = (c[3] + c[4] + c[5] + c[6] + c[7] + c[8]) * S(1.0 / 6.0) -
           (c[0] + c[1] + c[2]) * S(1.0 / 6.0);
    S B[10];
    S a0 = al[0], a1 = al[1], a2 = al[2];
    B[0] = a0 * a0 * a0;
    B[1] = a1 * a1 * a1;
    B[2] = a2 * a2 * a2;
    B[3] = S(3.0) * a0 * a0 * a1;
    B[4] = S(3.0) * a0 * a1 * a1;
    B[5] = S(3.0) * a1 * a1 * a2;
    B[6] = S(3.0) * a1 * a2 * a2;
    B[7] = S(3.0) * a0 * a2 * a2;
    B[8] = S(3.0) * a0 * a0 * a2;
    B[9] = S(6.0) * a0 * a1 * a2;
    WVec<S> acc;
    for (int i = 0; i < 10; ++i) acc = acc + c[i] * B[i];
    return acc.c;
}

// Clough-Tocher macroelement: centroid split, Hermite boundary rows, linear
// cross-boundary derivative on outer edges, C1 conditions across the three
// internal edges. C1 for arbitrary vertex values/gradients.
template <typename S>
std::array<S, 9> macro_c1_weights(const V2<S> v[3], const std::array<S, 3>& al) {
    S third(1.0 / 3.0);
    V2<S> c{(v[0].x + v[1].x + v[2].x) * third, (v[0].y + v[1].y + v[2].y) * third};

    WVec<S> corner[3] = {w_f<S>(0), w_f<S>(1), w_f<S>(2)};
    WVec<S> edgept[3][2];  // edgept[k] = (b_ij, b_ji) on outer edge opposite k
    WVec<S> dpt[3];        // Hermite points toward the centroid
    WVec<S> ept[3];        // interior point of sub-patch opposite corner k
    for (int k = 0; k < 3; ++k) {
        int i = (k + 1) % 3, j = (k + 2) % 3;
        dpt[k] = w_f<S>(k) + w_g<S>(k, (c - v[k]) * third);
        edgept[k][0] = w_f<S>(i) + w_g<S>(i, (v[j] - v[i]) * third);
        edgept[k][1] = w_f<S>(j) + w_g<S>(j, (v[i] - v[j]) * third);
    }
    for (int k = 0; k < 3; ++k) {
        int i = (k + 1) % 3, j = (k + 2) % 3;
        // transversal direction: perpendicular of the outer edge; the
        // linearity condition is invariant to its scale
        V2<S> ev = v[j] - v[i];
        V2<S> n{S(0.0) - ev.y, ev.x};
        // direction coordinates u: n = u0*(v_i - c) + u1*(v_j - c), u2 = -u0-u1
        V2<S> r0 = v[i] - c, r1 = v[j] - c;
        S det = r0.cross(r1);
        S u0 = n.cross(r1) / det;
        S u1 = r0.cross(n) / det;
        S u2 = S(0.0) - u0 - u1;
        WVec<S> q0 = corner[i] * u0 + edgept[k][0] * u1 + dpt[i] * u2;
        WVec<S> q2 = edgept[k][1] * u0 + corner[j] * u1 + dpt[j] * u2;
        ept[k] = ((q0 + q2) * S(0.5) - edgept[k][0] * u0 - edgept[k][1] * u1) *
                 (S(1.0) / u2);
    }
    WVec<S> apt[3];
    for (int k = 0; k < 3; ++k) {
        int i = (k + 1) % 3, j = (k + 2) % 3;
        apt[k] = (dpt[k] + ept[i] + ept[j]) * third;
    }
    WVec<S> zpt = (apt[0] + apt[1] + apt[2]) * third;

    // sub-triangle opposite the smallest barycentric
    int k = 0;
    {
        double a0 = [&] { if constexpr (std::is_same_v<S, double>) return al[0]; else return al[0].v; }();
        double a1 = [&] { if constexpr (std::is_same_v<S, double>) return al[1]; else return al[1].v; }();
        double a2 = [&] { if constexpr (std::is_same_v<S, double>) return al[2]; else return al[2].v; }();
        if (a1 < a0 || a2 < a0) k = a1 <= a2 ? 1 : 2;
    }
    int i = (k + 1) % 3, j = (k + 2) % 3;
    S b0 = al[i] - al[k];
    S b1 = al[j] - al[k];
    S b2 = S(3.0) * al[k];

    // control net of sub-patch (v_i, v_j, centroid)
    WVec<S> p300 = corner[i], p030 = corner[j], p003 = zpt;
    WVec<S> p210 = edgept[k][0], p120 = edgept[k][1];
    WVec<S> p201 = dpt[i], p021 = dpt[j];
    WVec<S> p111 = ept[k];
    WVec<S> p102 = apt[i], p012 = apt[j];

    S B300 = b0 * b0 * b0, B030 = b1 * b1 * b1, B003 = b2 * b2 * b2;
    S B210 = S(3.0) * b0 * b0 * b1, B120 = S(3.0) * b0 * b1 * b1;
    S B201 = S(3.0) * b0 * b0 * b2, B021 = S(3.0) * b1 * b1 * b2;
    S B102 = S(3.0) * b0 * b2 * b2, B012 = S(3.0) * b1 * b2 * b2;
    S B111 = S(6.0) * b0 * b1 * b2;

    WVec<S> acc = p300 * B300 + p030 * B030 + p003 * B003 + p210 * B210 +
                  p120 * B120 + p201 * B201 + p021 * B021 + p111 * B111 +
                  p102 * B102 + p012 * B012;
    return acc.c;
}

template <typename S>
std::array<S, 9> weights_generic(const V2<S> v[3], const std::array<S, 3>& al,
                                 CtScheme scheme) {
    return scheme == CtScheme::MacroC1 ? macro_c1_weights<S>(v, al)
                                       : single_cubic_weights<S>(v, al);
}

}  // namespace

CtSampleWeights ct_sample_weights(const Vec2& v0, const Vec2& v1, const Vec2& v2,
                                  const std::array<double, 3>& bary,
                                  CtScheme scheme) {
    V2<double> v[3] = {{v0.x, v0.y}, {v1.x, v1.y}, {v2.x, v2.y}};
    auto w = weights_generic<double>(v, bary, scheme);
    CtSampleWeights r;
    for (int k = 0; k < 3; ++k) {
        r.a[k] = w[k];
        r.b[k] = {w[3 + 2 * k], w[4 + 2 * k]};
    }
    return r;
}

CtSampleWeightsJac ct_sample_weights_jac(const Vec2& v0, const Vec2& v1,
                                         const Vec2& v2, const Vec2& p,
                                         CtScheme scheme) {
    V2<Dual6> v[3] = {{Dual6::seeded(v0.x, 0), Dual6::seeded(v0.y, 1)},
                      {Dual6::seeded(v1.x, 2), Dual6::seeded(v1.y, 3)},
                      {Dual6::seeded(v2.x, 4), Dual6::seeded(v2.y, 5)}};
    V2<Dual6> pd{Dual6(p.x), Dual6(p.y)};
    auto al = bary_generic<Dual6>(pd, v[0], v[1], v[2]);
    auto w = weights_generic<Dual6>(v, al, scheme);
    CtSampleWeightsJac r;
    for (int k = 0; k < 3; ++k) {
        r.w.a[k] = w[k].v;
        r.w.b[k] = {w[3 + 2 * k].v, w[4 + 2 * k].v};
        r.da[k] = w[k].d;
        r.db[k][0] = w[3 + 2 * k].d;
        r.db[k][1] = w[4 + 2 * k].d;
    }
    return r;
}

void ct_field_eval(const Mesh& mesh, const FeatureField& field, int t,
                   const std::array<double, 3>& bary, CtScheme scheme, double* out) {
    const auto& tr = mesh.triangles[t];
    CtSampleWeights w = ct_sample_weights(mesh.positions[tr[0]], mesh.positions[tr[1]],
                                          mesh.positions[tr[2]], bary, scheme);
    for (int d = 0; d < field.n_f; ++d) out[d] = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double* f = field.feat(tr[k]);
        const double* g = field.grad(tr[k]);
        for (int d = 0; d < field.n_f; ++d)
            out[d] += w.a[k] * f[d] + w.b[k].x * g[d * 2 + 0] + w.b[k].y * g[d * 2 + 1];
    }
}

}  // namespace nht
