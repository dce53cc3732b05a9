#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "nht/mesh.hpp"

using namespace nht;

namespace {

// Brute-force empty-circumcircle verifier (on-circle counts as valid).
int delaunay_violations(const Mesh& m) {
    int bad = 0;
    for (size_t t = 0; t < m.triangle_count(); ++t) {
        const auto& tr = m.triangles[t];
        for (size_t v = 0; v < m.vertex_count(); ++v) {
            if (int(v) == tr[0] || int(v) == tr[1] || int(v) == tr[2]) continue;
            if (incircle_strict(m.positions[tr[0]], m.positions[tr[1]],
                                m.positions[tr[2]], m.positions[v]))
                ++bad;
        }
    }
    return bad;
}

// Independent exhaustive point location: lowest triangle id whose
// barycentrics are all >= -kEpsBary.
int brute_locate(const Mesh& m, const Vec2& p) {
    for (size_t t = 0; t < m.triangle_count(); ++t) {
        const auto& tr = m.triangles[t];
        const Vec2 &a = m.positions[tr[0]], &b = m.positions[tr[1]],
                   &c = m.positions[tr[2]];
        double area = (b - a).cross(c - a);
        double b0 = (b - p).cross(c - p) / area;
        double b1 = (c - p).cross(a - p) / area;
        double b2 = (a - p).cross(b - p) / area;
        if (b0 >= -kEpsBary && b1 >= -kEpsBary && b2 >= -kEpsBary) return int(t);
    }
    return -1;
}

Mesh random_mesh(int n_interior, uint64_t seed, double w = 100.0, double h = 80.0) {
    Rng rng(seed);
    std::vector<Vec2> pts{{0, 0}, {w, 0}, {w, h}, {0, h}};
    for (int i = 0; i < n_interior; ++i)
        pts.push_back({rng.uniform(1.0, w - 1.0), rng.uniform(1.0, h - 1.0)});
    return triangulate(std::move(pts), w, h);
}

HdrImage constant_image(int w, int h, float v) {
    HdrImage img(w, h);
    img.data.assign(img.data.size(), v);
    return img;
}

}  // namespace

TEST_CASE("unit square triangulates into two delaunay triangles") {
    Mesh m = triangulate({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, 1.0, 1.0);
    CHECK(m.triangle_count() == 2);
    CHECK(delaunay_violations(m) == 0);  // co-circular: either diagonal valid
    double area = 0.0;
    for (size_t t = 0; t < m.triangle_count(); ++t) area += m.signed_area(int(t));
    CHECK(area == doctest::Approx(1.0));
}

TEST_CASE("random point sets satisfy empty circumcircle against brute force") {
    for (uint64_t seed : {11ull, 12ull, 13ull}) {
        Mesh m = random_mesh(100, seed);
        CHECK(delaunay_violations(m) == 0);
        double area = 0.0;
        for (size_t t = 0; t < m.triangle_count(); ++t) {
            CHECK(m.signed_area(int(t)) > 0.0);
            area += m.signed_area(int(t));
        }
        CHECK(area == doctest::Approx(100.0 * 80.0).epsilon(1e-9));
    }
}

TEST_CASE("collinear and degenerate inputs are rejected") {
    CHECK_THROWS_AS(triangulate({{0, 0}, {1, 1}, {2, 2}, {3, 3}}, 3, 3), NhtError);
    CHECK_THROWS_AS(triangulate({{0, 0}, {1, 1}}, 1, 1), NhtError);
    CHECK_THROWS_AS(triangulate({{0, 0}, {1, 1}, {1, 1}, {0, 1}}, 1, 1), NhtError);
}

TEST_CASE("locate returns the containing triangle with exact tie rule") {
    Mesh m = random_mesh(60, 21);
    // centroids map to their own triangle with barycentrics 1/3
    for (size_t t = 0; t < std::min<size_t>(m.triangle_count(), 40); ++t) {
        const auto& tr = m.triangles[t];
        Vec2 c = (m.positions[tr[0]] + m.positions[tr[1]] + m.positions[tr[2]]) *
                 (1.0 / 3.0);
        Locate loc = m.locate(c);
        CHECK(brute_locate(m, c) == loc.triangle);
        if (loc.triangle == int(t))
            for (double b : loc.bary) CHECK(b == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    }
    // vertices: lowest incident triangle id, one coordinate ~ 1
    for (size_t v = 0; v < 20; ++v) {
        Locate loc = m.locate(m.positions[v]);
        CHECK(loc.triangle == brute_locate(m, m.positions[v]));
        double mx = std::max({loc.bary[0], loc.bary[1], loc.bary[2]});
        CHECK(mx == doctest::Approx(1.0).epsilon(1e-7));
    }
}

TEST_CASE("tile-accelerated locate agrees with exhaustive scan") {
    Mesh m = random_mesh(150, 33);
    Rng rng(34);
    for (int i = 0; i < 10000; ++i) {
        Vec2 p{rng.uniform(0.0, m.width), rng.uniform(0.0, m.height)};
        Locate fast = m.locate(p);
        Locate slow = m.locate_exhaustive(p);
        CHECK(fast.triangle == slow.triangle);
        CHECK(fast.triangle == brute_locate(m, p));
    }
    CHECK_THROWS_AS(m.locate({-1.0, 5.0}), NhtError);
    CHECK_THROWS_AS(m.locate({5.0, 1e9}), NhtError);
}

TEST_CASE("every pixel center maps to exactly one triangle") {
    Mesh m = random_mesh(40, 55, 32.0, 24.0);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 32; ++x) {
            Locate loc = m.locate({x + 0.5, y + 0.5});
            CHECK(loc.triangle >= 0);
            CHECK(std::min({loc.bary[0], loc.bary[1], loc.bary[2]}) >= -kEpsBary);
        }
}

TEST_CASE("validate_or_remesh keeps valid meshes untouched") {
    Mesh m = random_mesh(30, 77);
    auto tris = m.triangles;
    CHECK(!validate_or_remesh(m));
    CHECK(m.triangles == tris);
}

TEST_CASE("validate_or_remesh clamps out-of-domain vertices") {
    Mesh m = random_mesh(30, 78);
    // drag an interior vertex far outside
    size_t v = 4;
    REQUIRE(m.kinds[v] == VertexKind::Interior);
    m.positions[v] = {m.width + 50.0, -20.0};
    validate_or_remesh(m);
    CHECK(m.positions[v].x <= m.width);
    CHECK(m.positions[v].y >= 0.0);
    CHECK(delaunay_violations(m) == 0);
    for (size_t t = 0; t < m.triangle_count(); ++t)
        CHECK(m.signed_area(int(t)) > kEpsArea);
}

TEST_CASE("validate_or_remesh repairs collapsed triangles") {
    Mesh m = random_mesh(20, 79);
    // collapse one vertex onto another to force degenerate topology
    size_t a = 4, b = 5;
    m.positions[a] = m.positions[b];
    bool rebuilt = validate_or_remesh(m);
    CHECK(rebuilt);
    for (size_t t = 0; t < m.triangle_count(); ++t)
        CHECK(m.signed_area(int(t)) > kEpsArea);
    // coverage restored
    Rng rng(80);
    for (int i = 0; i < 500; ++i) {
        Vec2 p{rng.uniform(0.0, m.width), rng.uniform(0.0, m.height)};
        CHECK(m.locate(p).triangle >= 0);
    }
}

TEST_CASE("edge-aware init degenerates to uniform on constant images") {
    HdrImage img = constant_image(64, 64, 100.0f);
    Rng rng(5);
    Mesh m = init_edge_aware(img, 16, 0.05, rng);
    CHECK(m.vertex_count() == 16);
    CHECK(delaunay_violations(m) == 0);
    int corners = 0;
    for (auto k : m.kinds) corners += k == VertexKind::Corner;
    CHECK(corners == 4);
}

TEST_CASE("n_init=4 with floor=1 gives the corner-only mesh") {
    HdrImage img = constant_image(32, 32, 1.0f);
    Rng rng(6);
    Mesh m = init_edge_aware(img, 4, 1.0, rng);
    CHECK(m.vertex_count() == 4);
    CHECK(m.triangle_count() == 2);
    CHECK_THROWS_AS(init_edge_aware(img, 3, 1.0, rng), NhtError);
}

TEST_CASE("edge-aware init concentrates samples near a strong edge") {
    // vertical step edge at column 64
    HdrImage img(128, 128);
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = x < 64 ? 100.0f : 12000.0f;
    Rng rng(7);
    int n = 200;
    Mesh m = init_edge_aware(img, n, 0.05, rng);
    int interior = 0, near_edge = 0;
    for (size_t v = 0; v < m.vertex_count(); ++v) {
        if (m.kinds[v] != VertexKind::Interior) continue;
        ++interior;
        if (std::abs(m.positions[v].x - 64.0) <= 5.0) ++near_edge;
    }
    CHECK(interior > 100);
    CHECK(double(near_edge) / interior >= 0.6);
}
