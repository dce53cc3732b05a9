#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <set>
#include <vector>

#include "nht/codec.hpp"

using namespace nht;

namespace {

Model random_mesh_model(uint64_t seed, int nv_interior = 20, int nf = 4) {
    Rng rng(seed);
    double W = 64, H = 48;
    std::vector<Vec2> pts{{0, 0}, {W, 0}, {W, H}, {0, H}};
    for (int i = 0; i < nv_interior; ++i)
        pts.push_back({rng.uniform(1, W - 1), rng.uniform(1, H - 1)});
    Model m;
    m.mode = ModelMode::MeshFit;
    m.mesh.width = int(W);
    m.mesh.height = int(H);
    m.mesh.mesh = triangulate(std::move(pts), W, H);
    m.mesh.field = FeatureField(m.mesh.mesh.vertex_count(), nf);
    for (auto& f : m.mesh.field.features) f = 3.0 * rng.normal();
    m.mesh.field.touch();
    vertex_gradients(m.mesh.mesh, m.mesh.field);
    m.mesh.mlp = make_mlp({2 * nf, 16, 3}, rng);
    m.mesh.mlp_ema = m.mesh.mlp.theta;
    return m;
}

bool mesh_models_equal(const MeshModel& a, const MeshModel& b) {
    if (a.mesh.triangles != b.mesh.triangles) return false;
    if (a.mesh.positions.size() != b.mesh.positions.size()) return false;
    for (size_t i = 0; i < a.mesh.positions.size(); ++i)
        if (a.mesh.positions[i].x != b.mesh.positions[i].x ||
            a.mesh.positions[i].y != b.mesh.positions[i].y)
            return false;
    return a.field.features == b.field.features && a.mlp.theta == b.mlp.theta;
}

}  // namespace

TEST_CASE("half-float conversion basics") {
    CHECK(float_to_half(0.0f) == 0);
    CHECK(float_to_half(1.0f) == 0x3c00);
    CHECK(float_to_half(-2.0f) == 0xc000);
    CHECK(half_to_float(0x3c00) == 1.0f);
    CHECK(std::isinf(half_to_float(0x7c00)));
    Rng rng(61);
    for (int i = 0; i < 2000; ++i) {
        float x = float(rng.uniform(-100.0, 100.0));
        float back = half_to_float(float_to_half(x));
        CHECK(std::abs(back - x) <= std::abs(x) * 5e-4 + 1e-7);
    }
    // round-trip of already-half values is exact
    for (uint16_t h : {uint16_t(0x3c00), uint16_t(0x4455), uint16_t(0x0001),
                       uint16_t(0x83ff)}) {
        CHECK(float_to_half(half_to_float(h)) == h);
    }
}

TEST_CASE("feature quantization: constant channels are exact") {
    std::vector<double> values(40);
    for (size_t i = 0; i < values.size(); ++i)
        values[i] = (i % 2 == 0) ? 7.25 : double(i);
    auto qc = quantize_features(values, 2);
    auto back = dequantize_features(qc);
    for (size_t i = 0; i < values.size(); i += 2)
        CHECK(back[i] == 7.25);  // channel 0 constant -> exact
}

TEST_CASE("feature quantization error bound on [-1, 1]") {
    std::vector<double> values(256);
    for (int i = 0; i < 256; ++i) values[i] = -1.0 + 2.0 * i / 255.0;
    auto qc = quantize_features(values, 1);
    auto back = dequantize_features(qc);
    for (int i = 0; i < 256; ++i)
        CHECK(std::abs(back[i] - values[i]) <= 1.0 / 255.0 + 1e-9);
}

TEST_CASE("feature quantization error bound holds on random fields") {
    Rng rng(62);
    for (int trial = 0; trial < 20; ++trial) {
        int ch = 1 + int(rng.index(6));
        int n = 8 + int(rng.index(64));
        std::vector<double> values(size_t(n) * ch);
        for (auto& v : values) v = 50.0 * rng.normal();
        auto qc = quantize_features(values, ch);
        auto back = dequantize_features(qc);
        for (size_t i = 0; i < values.size(); ++i) {
            double scale = qc.scale[i % ch];
            CHECK(std::abs(back[i] - values[i]) <= scale * 0.5 + 1e-6);
        }
    }
    CHECK_THROWS_AS(quantize_features(std::vector<double>(5), 2), NhtError);
}

TEST_CASE("position quantization: corners exact, bound holds") {
    double W = 640, H = 480;
    std::vector<Vec2> pos{{0, 0}, {W, H}, {W, 0}, {0, H}};
    Rng rng(63);
    for (int i = 0; i < 500; ++i) pos.push_back({rng.uniform(0, W), rng.uniform(0, H)});
    auto q = quantize_positions(pos, W, H);
    auto back = dequantize_positions(q, W, H);
    CHECK(back[0].x == 0.0);
    CHECK(back[0].y == 0.0);
    CHECK(back[1].x == W);
    CHECK(back[1].y == H);
    for (size_t i = 0; i < pos.size(); ++i) {
        CHECK(std::abs(back[i].x - pos[i].x) <= 0.5 * W / 65535.0 + 1e-9);
        CHECK(std::abs(back[i].y - pos[i].y) <= 0.5 * H / 65535.0 + 1e-9);
    }
}

TEST_CASE("float container round-trips mesh models losslessly") {
    Model m = random_mesh_model(64);
    QuantSpec spec{false, false, false, false};
    auto bytes = serialize_model(m, spec);
    Model back = deserialize_model(bytes);
    CHECK(mesh_models_equal(m.mesh, back.mesh));
    CHECK(back.mesh.white_level == doctest::Approx(m.mesh.white_level));
    CHECK(back.mesh.encoding == m.mesh.encoding);
}

TEST_CASE("quantized container round-trips bit-exactly after one pass") {
    Model m = random_mesh_model(65);
    QuantSpec spec;  // full quantization + entropy
    auto b1 = serialize_model(m, spec);
    Model m2 = deserialize_model(b1);
    auto b2 = serialize_model(m2, spec);
    Model m3 = deserialize_model(b2);
    CHECK(mesh_models_equal(m2.mesh, m3.mesh));
    auto b3 = serialize_model(m3, spec);
    CHECK(b2 == b3);
}

TEST_CASE("corrupted containers fail with distinct errors, not crashes") {
    Model m = random_mesh_model(66);
    QuantSpec spec;
    auto bytes = serialize_model(m, spec);

    auto flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x40;  // payload byte
    CHECK_THROWS_WITH_AS(deserialize_model(flipped), "container: checksum failure",
                         NhtError);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_WITH_AS(deserialize_model(bad_magic), "container: bad magic",
                         NhtError);

    auto bad_version = bytes;
    bad_version[4] = 99;
    CHECK_THROWS_WITH_AS(deserialize_model(bad_version),
                         "container: version mismatch", NhtError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 9);
    CHECK_THROWS_AS(deserialize_model(truncated), NhtError);
}

TEST_CASE("entropy coding shrinks redundant payloads") {
    Model m = random_mesh_model(67, 200, 8);
    QuantSpec with{true, true, true, true}, without{true, true, true, false};
    auto a = serialize_model(m, with);
    auto b = serialize_model(m, without);
    CHECK(a.size() < b.size());
    Model back = deserialize_model(a);
    CHECK(back.mesh.field.features.size() == m.mesh.field.features.size());
}

TEST_CASE("co-circular tie-breaks reproduce the stored diagonal") {
    // square of co-circular vertices in the interior
    double W = 64, H = 64;
    std::vector<Vec2> pts{{0, 0}, {W, 0}, {W, H}, {0, H},
                          {24, 24}, {40, 24}, {40, 40}, {24, 40}};
    Mesh base = triangulate(pts, W, H);
    // force both diagonals of the inner square in turn
    for (int diag = 0; diag < 2; ++diag) {
        auto tris = base.triangles;
        int t1 = -1, t2 = -1;
        for (int t = 0; t < int(tris.size()); ++t) {
            int inner = 0;
            for (int k = 0; k < 3; ++k) inner += tris[t][k] >= 4;
            if (inner == 3) (t1 < 0 ? t1 : t2) = t;
        }
        REQUIRE(t2 >= 0);
        if (diag == 1) {
            // flip the inner diagonal by hand
            std::vector<int> quad;
            for (int t : {t1, t2})
                for (int k = 0; k < 3; ++k) quad.push_back(tris[t][k]);
            std::sort(quad.begin(), quad.end());
            quad.erase(std::unique(quad.begin(), quad.end()), quad.end());
            REQUIRE(quad.size() == 4);
            // shared edge = the two vertices present in both triangles
            std::vector<int> shared;
            for (int k = 0; k < 3; ++k)
                for (int j = 0; j < 3; ++j)
                    if (tris[t1][k] == tris[t2][j]) shared.push_back(tris[t1][k]);
            std::vector<int> other;
            for (int v : quad)
                if (v != shared[0] && v != shared[1]) other.push_back(v);
            tris[t1] = {other[0], other[1], shared[0]};
            tris[t2] = {other[1], other[0], shared[1]};
        }
        Mesh forced = assemble_mesh(base.positions, tris, W, H);
        Model m;
        m.mode = ModelMode::MeshFit;
        m.mesh.width = int(W);
        m.mesh.height = int(H);
        m.mesh.mesh = forced;
        m.mesh.field = FeatureField(forced.vertex_count(), 2);
        m.mesh.field.touch();
        vertex_gradients(m.mesh.mesh, m.mesh.field);
        Rng rng(70);
        m.mesh.mlp = make_mlp({4, 8, 3}, rng);
        m.mesh.mlp_ema = m.mesh.mlp.theta;
        QuantSpec spec{false, false, false, false};
        Model back = deserialize_model(serialize_model(m, spec));
        auto edge_set = [](const Mesh& mm) {
            std::set<std::pair<int, int>> es;
            for (const auto& tr : mm.triangles)
                for (int e = 0; e < 3; ++e) {
                    int u = tr[e], v = tr[(e + 1) % 3];
                    es.insert({std::min(u, v), std::max(u, v)});
                }
            return es;
        };
        CHECK(edge_set(back.mesh.mesh) == edge_set(forced));
    }
}

TEST_CASE("splat models round-trip through the container") {
    Rng rng(71);
    Model m;
    m.mode = ModelMode::Splat;
    m.splat.width = 32;
    m.splat.height = 32;
    m.splat.dir_scale = 0.5;
    m.splat.set.n_f = 2;
    for (int i = 0; i < 5; ++i) {
        Splat s;
        s.mean = {rng.uniform(0, 32), rng.uniform(0, 32)};
        s.theta = rng.normal();
        s.scales = {rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)};
        s.opacity = rng.uniform(0.1, 0.9);
        s.z = rng.uniform();
        s.features.assign(6, 0.0);
        for (auto& f : s.features) f = rng.normal();
        m.splat.set.splats.push_back(s);
    }
    m.splat.set.sort_by_depth();
    m.splat.mlp = make_mlp({2 * 2 + 9, 8, 3}, rng);
    m.splat.mlp_ema = m.splat.mlp.theta;

    QuantSpec spec;
    Model m2 = deserialize_model(serialize_model(m, spec));
    REQUIRE(m2.mode == ModelMode::Splat);
    REQUIRE(m2.splat.set.splats.size() == 5);
    auto b2 = serialize_model(m2, spec);
    Model m3 = deserialize_model(b2);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(m2.splat.set.splats[i].mean.x == m3.splat.set.splats[i].mean.x);
        CHECK(m2.splat.set.splats[i].features == m3.splat.set.splats[i].features);
    }
    CHECK(serialize_model(m3, spec) == b2);
}
