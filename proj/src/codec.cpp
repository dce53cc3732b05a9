#include "nht/codec.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

namespace nht {

uint16_t float_to_half(float f) {
    uint32_t x;
    std::memcpy(&x, &f, 4);
    uint32_t sign = (x >> 16) & 0x8000u;
    int32_t exp = int32_t((x >> 23) & 0xff) - 127 + 15;
    uint32_t mant = x & 0x7fffffu;
    if (((x >> 23) & 0xff) == 0xff)  // inf/nan
        return uint16_t(sign | 0x7c00u | (mant ? 0x200u : 0u));
    if (exp >= 0x1f) return uint16_t(sign | 0x7c00u);  // overflow -> inf
    if (exp <= 0) {
        if (exp < -10) return uint16_t(sign);  // underflow -> zero
        mant |= 0x800000u;
        int shift = 14 - exp;
        uint32_t half = mant >> shift;
        uint32_t rem = mant & ((1u << shift) - 1);
        uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half & 1u))) ++half;
        return uint16_t(sign | half);
    }
    uint32_t half = uint32_t(exp << 10) | (mant >> 13);
    uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
    return uint16_t(sign | half);
}

float half_to_float(uint16_t h) {
    uint32_t sign = uint32_t(h & 0x8000u) << 16;
    uint32_t exp = (h >> 10) & 0x1fu;
    uint32_t mant = h & 0x3ffu;
    uint32_t x;
    if (exp == 0) {
        if (mant == 0) {
            x = sign;
        } else {  // subnormal
            exp = 127 - 15 + 1;
            while (!(mant & 0x400u)) {
                mant <<= 1;
                --exp;
            }
            mant &= 0x3ffu;
            x = sign | (exp << 23) | (mant << 13);
        }
    } else if (exp == 0x1f) {
        x = sign | 0x7f800000u | (mant << 13);
    } else {
        x = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    float f;
    std::memcpy(&f, &x, 4);
    return f;
}

QuantizedChannels quantize_features(const std::vector<double>& values, int channels) {
    if (channels <= 0 || values.size() % channels != 0)
        throw NhtError("quantize_features: bad channel layout");
    size_t n = values.size() / channels;
    QuantizedChannels qc;
    qc.channels = channels;
    qc.q.resize(values.size());
    qc.scale.resize(channels);
    qc.offset.resize(channels);
    for (int c = 0; c < channels; ++c) {
        double lo = 1e300, hi = -1e300;
        for (size_t i = 0; i < n; ++i) {
            double v = values[i * channels + c];
            if (!std::isfinite(v)) throw NhtError("quantize_features: non-finite value");
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (n == 0) { lo = hi = 0.0; }
        double scale = (hi - lo) / 255.0;
        if (scale <= 0.0) {  // constant channel
            qc.scale[c] = 1.0f;
            qc.offset[c] = float(lo);
            for (size_t i = 0; i < n; ++i) qc.q[i * channels + c] = -128;
            continue;
        }
        qc.scale[c] = float(scale);
        qc.offset[c] = float(lo);
        double s = qc.scale[c], o = qc.offset[c];  // quantize against stored f32
        for (size_t i = 0; i < n; ++i) {
            double v = values[i * channels + c];
            long q = std::lround((v - o) / s) - 128;
            qc.q[i * channels + c] = int8_t(std::clamp(q, -128l, 127l));
        }
    }
    return qc;
}

std::vector<double> dequantize_features(const QuantizedChannels& qc) {
    std::vector<double> out(qc.q.size());
    int c = qc.channels;
    for (size_t i = 0; i < qc.q.size(); ++i) {
        int ch = int(i % c);
        out[i] = double(qc.scale[ch]) * (int(qc.q[i]) + 128) + double(qc.offset[ch]);
    }
    return out;
}

std::vector<uint16_t> quantize_positions(const std::vector<Vec2>& pos,
                                         double width, double height) {
    std::vector<uint16_t> q(pos.size() * 2);
    for (size_t i = 0; i < pos.size(); ++i) {
        double x = std::clamp(pos[i].x / width, 0.0, 1.0);
        double y = std::clamp(pos[i].y / height, 0.0, 1.0);
        q[i * 2 + 0] = uint16_t(std::lround(x * 65535.0));
        q[i * 2 + 1] = uint16_t(std::lround(y * 65535.0));
    }
    return q;
}

std::vector<Vec2> dequantize_positions(const std::vector<uint16_t>& q,
                                       double width, double height) {
    std::vector<Vec2> pos(q.size() / 2);
    for (size_t i = 0; i < pos.size(); ++i) {
        pos[i].x = double(q[i * 2 + 0]) / 65535.0 * width;
        pos[i].y = double(q[i * 2 + 1]) / 65535.0 * height;
    }
    return pos;
}

uint64_t fnv1a64(const uint8_t* data, size_t n) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

constexpr uint32_t kVersion = 1;
constexpr uint8_t kFlagPosU16 = 1, kFlagFeatI8 = 2, kFlagMlpF16 = 4, kFlagEntropy = 8;

enum SectionId : uint32_t {
    SecPositions = 1,
    SecFeatures = 2,
    SecMlp = 3,
    SecTieBreak = 4,
    SecSplatGeo = 5,
};

struct Writer {
    std::vector<uint8_t> buf;
    void raw(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    template <typename T>
    void put(T v) { raw(&v, sizeof v); }
};

struct Reader {
    const uint8_t* p;
    size_t n, pos = 0;
    Reader(const uint8_t* data, size_t len) : p(data), n(len) {}
    void raw(void* out, size_t len) {
        if (pos + len > n) throw NhtError("container: truncated payload");
        std::memcpy(out, p + pos, len);
        pos += len;
    }
    template <typename T>
    T get() {
        T v;
        raw(&v, sizeof v);
        return v;
    }
};

std::vector<uint8_t> deflate_bytes(const std::vector<uint8_t>& raw) {
    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<uint8_t> out(bound);
    if (compress2(out.data(), &bound, raw.data(), uLong(raw.size()),
                  Z_BEST_COMPRESSION) != Z_OK)
        throw NhtError("container: deflate failed");
    out.resize(bound);
    return out;
}

std::vector<uint8_t> inflate_bytes(const std::vector<uint8_t>& comp, size_t raw_len) {
    std::vector<uint8_t> out(raw_len);
    uLongf len = uLongf(raw_len);
    int rc = uncompress(out.data(), &len, comp.data(), uLong(comp.size()));
    if (rc != Z_OK || len != raw_len)
        throw NhtError("container: inflate failed");
    return out;
}

struct TieBreak {
    uint32_t a, b, c, d;  // kept diagonal (a,b); recomputed diagonal (c,d)
};

// Co-circular interior edges where the model kept the other diagonal than a
// fresh triangulation of the same positions would.
std::vector<TieBreak> find_tiebreaks(const Mesh& recomputed, const Mesh& model) {
    std::set<std::pair<int, int>> model_edges;
    for (const auto& tr : model.triangles)
        for (int e = 0; e < 3; ++e) {
            int u = tr[e], v = tr[(e + 1) % 3];
            model_edges.insert({std::min(u, v), std::max(u, v)});
        }
    std::vector<TieBreak> ties;
    for (int t = 0; t < int(recomputed.triangles.size()); ++t) {
        for (int e = 0; e < 3; ++e) {
            int nb = recomputed.neighbors[t][e];
            if (nb < t) continue;  // visit each interior edge once
            const auto& tr = recomputed.triangles[t];
            int u = tr[(e + 1) % 3], v = tr[(e + 2) % 3], a = tr[e];
            const auto& nt = recomputed.triangles[nb];
            int b = -1;
            for (int k = 0; k < 3; ++k)
                if (nt[k] != u && nt[k] != v) b = nt[k];
            if (b < 0) continue;
            const Vec2& pu = recomputed.positions[u];
            const Vec2& pv = recomputed.positions[v];
            const Vec2& pa = recomputed.positions[a];
            const Vec2& pb = recomputed.positions[b];
            // co-circular quad iff b sits on the circumcircle of (u,v,a)
            double det = incircle(pu, pv, pa, pb);
            double scale = std::abs(det) + 1.0;
            double m0 = (pu - pb).norm(), m1 = (pv - pb).norm(), m2 = (pa - pb).norm();
            scale = std::pow(std::max({m0, m1, m2, 1.0}), 4);
            if (std::abs(det) > kEpsCirc * scale) continue;
            bool model_has_uv = model_edges.count({std::min(u, v), std::max(u, v)});
            bool model_has_ab = model_edges.count({std::min(a, b), std::max(a, b)});
            if (!model_has_uv && model_has_ab)
                ties.push_back({uint32_t(a), uint32_t(b), uint32_t(u), uint32_t(v)});
        }
    }
    return ties;
}

void apply_tiebreaks(std::vector<std::array<int, 3>>& tris,
                     const std::vector<TieBreak>& ties) {
    for (const TieBreak& tb : ties) {
        int c = int(tb.c), d = int(tb.d);
        int t1 = -1, t2 = -1;
        for (int t = 0; t < int(tris.size()); ++t) {
            bool has_c = false, has_d = false;
            for (int k = 0; k < 3; ++k) {
                has_c |= tris[t][k] == c;
                has_d |= tris[t][k] == d;
            }
            if (has_c && has_d) (t1 < 0 ? t1 : t2) = t;
        }
        if (t1 < 0 || t2 < 0) continue;
        auto third = [&](int t) {
            for (int k = 0; k < 3; ++k)
                if (tris[t][k] != c && tris[t][k] != d) return tris[t][k];
            return -1;
        };
        int x = third(t1), y = third(t2);
        if ((uint32_t(x) == tb.a && uint32_t(y) == tb.b) ||
            (uint32_t(x) == tb.b && uint32_t(y) == tb.a)) {
            tris[t1] = {x, y, c};
            tris[t2] = {y, x, d};
        }
    }
}

void write_mlp_section(Writer& w, const MlpParams& mlp,
                       const std::vector<double>& eval_theta, bool f16) {
    const std::vector<double>& th =
        eval_theta.size() == mlp.theta.size() ? eval_theta : mlp.theta;
    for (double v : th) {
        if (f16)
            w.put<uint16_t>(float_to_half(float(v)));
        else
            w.put<double>(v);
    }
}

std::vector<double> read_mlp_theta(Reader& r, size_t count, bool f16) {
    std::vector<double> th(count);
    for (size_t i = 0; i < count; ++i)
        th[i] = f16 ? double(half_to_float(r.get<uint16_t>())) : r.get<double>();
    return th;
}

}  // namespace

std::vector<uint8_t> serialize_model(const Model& model, const QuantSpec& spec) {
    Writer payload;
    std::vector<std::pair<uint32_t, std::pair<uint64_t, uint64_t>>> sections;
    auto begin_section = [&](uint32_t id) {
        sections.push_back({id, {payload.buf.size(), 0}});
    };
    auto end_section = [&] {
        sections.back().second.second =
            payload.buf.size() - sections.back().second.first;
    };

    uint32_t n_elem = 0, n_f = 0;
    const MlpParams* mlp = nullptr;
    const std::vector<double>* ema = nullptr;

    if (model.mode == ModelMode::MeshFit) {
        const MeshModel& m = model.mesh;
        n_elem = uint32_t(m.mesh.vertex_count());
        n_f = uint32_t(m.field.n_f);
        mlp = &m.mlp;
        ema = &m.mlp_ema;

        begin_section(SecPositions);
        std::vector<Vec2> decode_pos;
        if (spec.positions_u16) {
            auto q = quantize_positions(m.mesh.positions, m.width, m.height);
            // coincident codes would collapse vertices at decode time
            std::set<std::pair<uint16_t, uint16_t>> used;
            for (size_t i = 0; i < q.size() / 2; ++i) {
                auto key = std::make_pair(q[i * 2], q[i * 2 + 1]);
                int guard = 0;
                while (used.count(key) && guard++ < 1024) {
                    uint32_t bump = (guard % 2) ? 1u : 65535u;  // +-1 alternating
                    if (guard % 4 < 2)
                        key.first = uint16_t(key.first + bump);
                    else
                        key.second = uint16_t(key.second + bump);
                }
                used.insert(key);
                q[i * 2] = key.first;
                q[i * 2 + 1] = key.second;
            }
            payload.raw(q.data(), q.size() * 2);
            decode_pos = dequantize_positions(q, m.width, m.height);
        } else {
            for (const Vec2& p : m.mesh.positions) {
                payload.put<double>(p.x);
                payload.put<double>(p.y);
            }
            decode_pos = m.mesh.positions;
        }
        end_section();

        begin_section(SecFeatures);
        if (spec.features_i8) {
            auto qc = quantize_features(m.field.features, m.field.n_f);
            payload.raw(qc.scale.data(), qc.scale.size() * 4);
            payload.raw(qc.offset.data(), qc.offset.size() * 4);
            payload.raw(qc.q.data(), qc.q.size());
        } else {
            payload.raw(m.field.features.data(), m.field.features.size() * 8);
        }
        end_section();

        begin_section(SecMlp);
        write_mlp_section(payload, *mlp, *ema, spec.mlp_f16);
        end_section();

        begin_section(SecTieBreak);
        Mesh recomputed = triangulate(decode_pos, m.width, m.height);
        auto ties = find_tiebreaks(recomputed, m.mesh);
        payload.put<uint32_t>(uint32_t(ties.size()));
        for (const TieBreak& tb : ties) {
            payload.put<uint32_t>(tb.a);
            payload.put<uint32_t>(tb.b);
            payload.put<uint32_t>(tb.c);
            payload.put<uint32_t>(tb.d);
        }
        end_section();
    } else {
        const SplatModel& m = model.splat;
        n_elem = uint32_t(m.set.splats.size());
        n_f = uint32_t(m.set.n_f);
        mlp = &m.mlp;
        ema = &m.mlp_ema;

        begin_section(SecSplatGeo);
        for (const Splat& s : m.set.splats) {
            if (spec.positions_u16) {
                double x = std::clamp(s.mean.x / m.width, 0.0, 1.0);
                double y = std::clamp(s.mean.y / m.height, 0.0, 1.0);
                payload.put<uint16_t>(uint16_t(std::lround(x * 65535.0)));
                payload.put<uint16_t>(uint16_t(std::lround(y * 65535.0)));
            } else {
                payload.put<double>(s.mean.x);
                payload.put<double>(s.mean.y);
            }
            payload.put<float>(float(s.theta));
            payload.put<float>(float(s.scales.x));
            payload.put<float>(float(s.scales.y));
            payload.put<float>(float(s.opacity));
            payload.put<float>(float(s.z));
        }
        end_section();

        begin_section(SecFeatures);
        std::vector<double> feats;
        feats.reserve(size_t(n_elem) * 3 * n_f);
        for (const Splat& s : m.set.splats)
            feats.insert(feats.end(), s.features.begin(), s.features.end());
        if (spec.features_i8) {
            auto qc = quantize_features(feats, int(n_f));
            payload.raw(qc.scale.data(), qc.scale.size() * 4);
            payload.raw(qc.offset.data(), qc.offset.size() * 4);
            payload.raw(qc.q.data(), qc.q.size());
        } else {
            payload.raw(feats.data(), feats.size() * 8);
        }
        end_section();

        begin_section(SecMlp);
        write_mlp_section(payload, *mlp, *ema, spec.mlp_f16);
        end_section();
    }

    std::vector<uint8_t> stored =
        spec.entropy ? deflate_bytes(payload.buf) : payload.buf;

    Writer out;
    out.raw("NHT1", 4);
    out.put<uint32_t>(kVersion);
    uint8_t qflags = (spec.positions_u16 ? kFlagPosU16 : 0) |
                     (spec.features_i8 ? kFlagFeatI8 : 0) |
                     (spec.mlp_f16 ? kFlagMlpF16 : 0) |
                     (spec.entropy ? kFlagEntropy : 0);
    out.put<uint8_t>(uint8_t(model.mode));
    out.put<uint8_t>(qflags);
    out.put<uint16_t>(0);
    if (model.mode == ModelMode::MeshFit) {
        out.put<uint32_t>(uint32_t(model.mesh.width));
        out.put<uint32_t>(uint32_t(model.mesh.height));
        out.put<float>(float(model.mesh.white_level));
        out.put<float>(float(model.mesh.mu));
        out.put<uint8_t>(uint8_t(model.mesh.encoding));
        out.put<uint8_t>(uint8_t(model.mesh.scheme));
        out.put<uint16_t>(0);
        out.put<float>(0.0f);
        out.put<float>(0.0f);
    } else {
        out.put<uint32_t>(uint32_t(model.splat.width));
        out.put<uint32_t>(uint32_t(model.splat.height));
        out.put<float>(1.0f);
        out.put<float>(0.0f);
        out.put<uint8_t>(uint8_t(EncodeMode::SinCos));
        out.put<uint8_t>(0);
        out.put<uint16_t>(0);
        out.put<float>(float(model.splat.dir_scale));
        out.put<float>(float(model.splat.focal_scale));
    }
    out.put<uint32_t>(n_elem);
    out.put<uint32_t>(n_f);
    out.put<uint32_t>(uint32_t(mlp->dims.size()));
    for (int d : mlp->dims) out.put<uint32_t>(uint32_t(d));
    out.put<uint32_t>(uint32_t(sections.size()));
    for (const auto& s : sections) {
        out.put<uint32_t>(s.first);
        out.put<uint32_t>(0);
        out.put<uint64_t>(s.second.first);
        out.put<uint64_t>(s.second.second);
    }
    out.put<uint64_t>(uint64_t(payload.buf.size()));
    out.put<uint64_t>(uint64_t(stored.size()));
    out.raw(stored.data(), stored.size());
    out.put<uint64_t>(fnv1a64(stored.data(), stored.size()));
    return out.buf;
}

Model deserialize_model(const std::vector<uint8_t>& bytes) {
    Reader r(bytes.data(), bytes.size());
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, "NHT1", 4) != 0)
        throw NhtError("container: bad magic");
    uint32_t version = r.get<uint32_t>();
    if (version != kVersion) throw NhtError("container: version mismatch");
    uint8_t mode = r.get<uint8_t>();
    uint8_t qflags = r.get<uint8_t>();
    r.get<uint16_t>();
    uint32_t width = r.get<uint32_t>();
    uint32_t height = r.get<uint32_t>();
    float white = r.get<float>();
    float mu = r.get<float>();
    uint8_t encoding = r.get<uint8_t>();
    uint8_t scheme = r.get<uint8_t>();
    r.get<uint16_t>();
    float dir_scale = r.get<float>();
    float focal_scale = r.get<float>();
    uint32_t n_elem = r.get<uint32_t>();
    uint32_t n_f = r.get<uint32_t>();
    uint32_t n_dims = r.get<uint32_t>();
    if (n_dims < 2 || n_dims > 64) throw NhtError("container: bad mlp dims");
    std::vector<int> dims(n_dims);
    for (auto& d : dims) d = int(r.get<uint32_t>());
    uint32_t n_sections = r.get<uint32_t>();
    if (n_sections > 64) throw NhtError("container: bad section count");
    std::map<uint32_t, std::pair<uint64_t, uint64_t>> sections;
    for (uint32_t i = 0; i < n_sections; ++i) {
        uint32_t id = r.get<uint32_t>();
        r.get<uint32_t>();
        uint64_t off = r.get<uint64_t>();
        uint64_t len = r.get<uint64_t>();
        sections[id] = {off, len};
    }
    uint64_t raw_len = r.get<uint64_t>();
    uint64_t stored_len = r.get<uint64_t>();
    if (r.pos + stored_len + 8 > r.n) throw NhtError("container: truncated payload");
    std::vector<uint8_t> stored(stored_len);
    r.raw(stored.data(), stored_len);
    uint64_t checksum = r.get<uint64_t>();
    if (checksum != fnv1a64(stored.data(), stored.size()))
        throw NhtError("container: checksum failure");
    std::vector<uint8_t> payload =
        (qflags & kFlagEntropy) ? inflate_bytes(stored, raw_len) : std::move(stored);
    if (payload.size() != raw_len) throw NhtError("container: truncated payload");

    auto section_reader = [&](uint32_t id) {
        auto it = sections.find(id);
        if (it == sections.end()) throw NhtError("container: missing section");
        if (it->second.first + it->second.second > payload.size())
            throw NhtError("container: truncated payload");
        return Reader(payload.data() + it->second.first, it->second.second);
    };

    Model model;
    model.mode = ModelMode(mode);
    size_t theta_count = MlpParams::param_count(dims);

    if (model.mode == ModelMode::MeshFit) {
        MeshModel& m = model.mesh;
        m.width = int(width);
        m.height = int(height);
        m.white_level = white;
        m.mu = mu;
        m.encoding = EncodeMode(encoding);
        m.scheme = CtScheme(scheme);

        Reader pr = section_reader(SecPositions);
        std::vector<Vec2> pos(n_elem);
        if (qflags & kFlagPosU16) {
            std::vector<uint16_t> q(size_t(n_elem) * 2);
            pr.raw(q.data(), q.size() * 2);
            pos = dequantize_positions(q, m.width, m.height);
        } else {
            for (auto& p : pos) {
                p.x = pr.get<double>();
                p.y = pr.get<double>();
            }
        }

        Reader fr = section_reader(SecFeatures);
        m.field = FeatureField(n_elem, int(n_f));
        if (qflags & kFlagFeatI8) {
            QuantizedChannels qc;
            qc.channels = int(n_f);
            qc.scale.resize(n_f);
            qc.offset.resize(n_f);
            qc.q.resize(size_t(n_elem) * n_f);
            fr.raw(qc.scale.data(), qc.scale.size() * 4);
            fr.raw(qc.offset.data(), qc.offset.size() * 4);
            fr.raw(qc.q.data(), qc.q.size());
            m.field.features = dequantize_features(qc);
        } else {
            fr.raw(m.field.features.data(), m.field.features.size() * 8);
        }

        Reader mr = section_reader(SecMlp);
        m.mlp.dims = dims;
        m.mlp.theta = read_mlp_theta(mr, theta_count, qflags & kFlagMlpF16);
        m.mlp_ema = m.mlp.theta;

        Reader tr = section_reader(SecTieBreak);
        uint32_t n_ties = tr.get<uint32_t>();
        std::vector<TieBreak> ties(n_ties);
        for (auto& t : ties) {
            t.a = tr.get<uint32_t>();
            t.b = tr.get<uint32_t>();
            t.c = tr.get<uint32_t>();
            t.d = tr.get<uint32_t>();
        }

        Mesh fresh = triangulate(pos, m.width, m.height);
        if (!ties.empty()) {
            auto tris = fresh.triangles;
            apply_tiebreaks(tris, ties);
            fresh = assemble_mesh(fresh.positions, tris, m.width, m.height);
        }
        m.mesh = std::move(fresh);
        validate_or_remesh(m.mesh);
        m.field.touch();
        vertex_gradients(m.mesh, m.field);
    } else {
        SplatModel& m = model.splat;
        m.width = int(width);
        m.height = int(height);
        m.dir_scale = dir_scale;
        m.focal_scale = focal_scale;
        m.set.n_f = int(n_f);
        m.set.splats.resize(n_elem);

        Reader gr = section_reader(SecSplatGeo);
        for (Splat& s : m.set.splats) {
            if (qflags & kFlagPosU16) {
                s.mean.x = double(gr.get<uint16_t>()) / 65535.0 * m.width;
                s.mean.y = double(gr.get<uint16_t>()) / 65535.0 * m.height;
            } else {
                s.mean.x = gr.get<double>();
                s.mean.y = gr.get<double>();
            }
            s.theta = gr.get<float>();
            s.scales.x = gr.get<float>();
            s.scales.y = gr.get<float>();
            s.opacity = gr.get<float>();
            s.z = gr.get<float>();
        }

        Reader fr = section_reader(SecFeatures);
        size_t total = size_t(n_elem) * 3 * n_f;
        std::vector<double> feats(total);
        if (qflags & kFlagFeatI8) {
            QuantizedChannels qc;
            qc.channels = int(n_f);
            qc.scale.resize(n_f);
            qc.offset.resize(n_f);
            qc.q.resize(total);
            fr.raw(qc.scale.data(), qc.scale.size() * 4);
            fr.raw(qc.offset.data(), qc.offset.size() * 4);
            fr.raw(qc.q.data(), qc.q.size());
            feats = dequantize_features(qc);
        } else {
            fr.raw(feats.data(), feats.size() * 8);
        }
        for (size_t i = 0; i < n_elem; ++i) {
            m.set.splats[i].features.assign(feats.begin() + i * 3 * n_f,
                                            feats.begin() + (i + 1) * 3 * n_f);
        }
        m.set.sort_by_depth();

        Reader mr = section_reader(SecMlp);
        m.mlp.dims = dims;
        m.mlp.theta = read_mlp_theta(mr, theta_count, qflags & kFlagMlpF16);
        m.mlp_ema = m.mlp.theta;
    }
    return model;
}

void save_model(const Model& model, const QuantSpec& spec, const std::string& path) {
    auto bytes = serialize_model(model, spec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NhtError("cannot write model: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw NhtError("short write: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw NhtError("cannot open model: " + path);
    std::vector<uint8_t> bytes(size_t(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!in) throw NhtError("short read: " + path);
    return deserialize_model(bytes);
}

}  // namespace nht
