#include "nht/splat2d.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nht/harmonic.hpp"

namespace nht {

namespace {

// barycentrics on the fixed canonical triangle are an affine map of the
// whitened point: bary_k(w) = g_k . w + h_k
struct CanonicalBary {
    Vec2 g[3];
    double h[3];
};

const CanonicalBary& canonical_bary_map() {
    static const CanonicalBary m = [] {
        const auto& v = scaffold_vertices();
        CanonicalBary m{};
        double area = (v[1] - v[0]).cross(v[2] - v[0]);
        for (int k = 0; k < 3; ++k) {
            const Vec2& a = v[(k + 1) % 3];
            const Vec2& b = v[(k + 2) % 3];
            // bary_k = cross(b - a, w - a) / area
            m.g[k] = Vec2{-(b.y - a.y), b.x - a.x} * (1.0 / area);
            m.h[k] = (b - a).cross(Vec2{0, 0} - a) / area;
        }
        return m;
    }();
    return m;
}

void clamped_bary(const Vec2& w, std::array<double, 3>& raw,
                  std::array<double, 3>& bary, bool& clamped) {
    const auto& m = canonical_bary_map();
    for (int k = 0; k < 3; ++k) raw[k] = m.g[k].dot(w) + m.h[k];
    clamped = raw[0] < 0.0 || raw[1] < 0.0 || raw[2] < 0.0;
    if (!clamped) {
        bary = raw;
        return;
    }
    double sum = 0.0;
    for (int k = 0; k < 3; ++k) {
        bary[k] = std::max(raw[k], 0.0);
        sum += bary[k];
    }
    for (int k = 0; k < 3; ++k) bary[k] /= sum;
}

}  // namespace

void SplatSet::sort_by_depth() {
    std::stable_sort(splats.begin(), splats.end(),
                     [](const Splat& a, const Splat& b) { return a.z < b.z; });
}

Vec2 whiten(const Splat& s, const Vec2& p) {
    double c = std::cos(s.theta), sn = std::sin(s.theta);
    Vec2 r = p - s.mean;
    return {(c * r.x + sn * r.y) / s.scales.x, (-sn * r.x + c * r.y) / s.scales.y};
}

double kernel_eval(const Splat& s, const Vec2& p) {
    if (!(s.scales.x > 0.0 && s.scales.y > 0.0))
        throw NhtError("kernel_eval: non-positive scales");
    Vec2 w = whiten(s, p);
    return std::exp(-0.5 * (w.x * w.x + w.y * w.y));
}

void interpolate_on_scaffold(const Splat& s, const Vec2& p, int n_f, double* out) {
    Vec2 w = whiten(s, p);
    std::array<double, 3> raw, bary;
    bool clamped;
    clamped_bary(w, raw, bary, clamped);
    for (int d = 0; d < n_f; ++d)
        out[d] = bary[0] * s.f(0, n_f)[d] + bary[1] * s.f(1, n_f)[d] +
                 bary[2] * s.f(2, n_f)[d];
}

void composite_pixel(const SplatSet& set, const Vec2& p, const Vec3& dir,
                     double dir_scale, double* out) {
    CompositeTape tape;
    composite_pixel_tape(set, p, dir, dir_scale, out, tape);
}

void composite_pixel_tape(const SplatSet& set, const Vec2& p, const Vec3& dir,
                          double dir_scale, double* out, CompositeTape& tape) {
    int n_f = set.n_f;
    std::fill(out, out + 2 * n_f + 9, 0.0);
    tape.nodes.clear();
    std::vector<double> f(n_f);
    double T = 1.0;
    for (size_t i = 0; i < set.splats.size(); ++i) {
        const Splat& s = set.splats[i];
        Vec2 w = whiten(s, p);
        double rho = std::exp(-0.5 * (w.x * w.x + w.y * w.y));
        double alpha = s.opacity * rho;
        if (alpha <= 0.0) continue;
        CompositeTape::Node node;
        node.splat = int(i);
        node.alpha = alpha;
        node.transmittance = T;
        node.rho = rho;
        node.white = w;
        clamped_bary(w, node.raw_bary, node.bary, node.clamped);
        for (int d = 0; d < n_f; ++d)
            f[d] = node.bary[0] * s.f(0, n_f)[d] + node.bary[1] * s.f(1, n_f)[d] +
                   node.bary[2] * s.f(2, n_f)[d];
        double wgt = alpha * T;
        for (int d = 0; d < n_f; ++d) {
            out[d] += wgt * std::sin(f[d]);
            out[n_f + d] += wgt * std::cos(f[d]);
        }
        tape.nodes.push_back(node);
        T *= 1.0 - alpha;
    }
    auto sh = sh2_encode(dir, dir_scale);
    for (int i = 0; i < 9; ++i) out[2 * n_f + i] = sh[i];
}

void SplatGrads::init(size_t n_splats, int nf) {
    n_f = nf;
    mean.assign(n_splats * 2, 0.0);
    theta.assign(n_splats, 0.0);
    scales.assign(n_splats * 2, 0.0);
    opacity.assign(n_splats, 0.0);
    features.assign(n_splats * 3 * size_t(nf), 0.0);
}

void SplatGrads::add(const SplatGrads& o) {
    for (size_t i = 0; i < mean.size(); ++i) mean[i] += o.mean[i];
    for (size_t i = 0; i < theta.size(); ++i) theta[i] += o.theta[i];
    for (size_t i = 0; i < scales.size(); ++i) scales[i] += o.scales[i];
    for (size_t i = 0; i < opacity.size(); ++i) opacity[i] += o.opacity[i];
    for (size_t i = 0; i < features.size(); ++i) features[i] += o.features[i];
}

void composite_pixel_backward(const SplatSet& set, const Vec2& p,
                              const CompositeTape& tape, const double* d_out,
                              SplatGrads& grads) {
    int n_f = set.n_f;
    std::vector<double> f(n_f), d_f(n_f);
    // suffix_i = sum_{j > i} alpha_j T_j (E_j . d_out), accumulated in reverse
    double suffix = 0.0;
    const auto& m = canonical_bary_map();
    for (int ni = int(tape.nodes.size()) - 1; ni >= 0; --ni) {
        const auto& node = tape.nodes[ni];
        const Splat& s = set.splats[node.splat];
        for (int d = 0; d < n_f; ++d)
            f[d] = node.bary[0] * s.f(0, n_f)[d] + node.bary[1] * s.f(1, n_f)[d] +
                   node.bary[2] * s.f(2, n_f)[d];
        double wgt = node.alpha * node.transmittance;
        double e_dot = 0.0;
        for (int d = 0; d < n_f; ++d) {
            double sf = std::sin(f[d]), cf = std::cos(f[d]);
            e_dot += sf * d_out[d] + cf * d_out[n_f + d];
            d_f[d] = wgt * (cf * d_out[d] - sf * d_out[n_f + d]);
        }
        // d alpha: own contribution minus occlusion of everything behind
        double denom = std::max(1.0 - node.alpha, 1e-12);
        double d_alpha = e_dot * node.transmittance - suffix / denom;
        suffix += wgt * e_dot;

        double* gf = &grads.features[size_t(node.splat) * 3 * n_f];
        std::array<double, 3> d_bary{};
        for (int d = 0; d < n_f; ++d) {
            for (int k = 0; k < 3; ++k) {
                gf[k * n_f + d] += node.bary[k] * d_f[d];
                d_bary[k] += s.f(k, n_f)[d] * d_f[d];
            }
        }
        // bary -> whitened point (through clamp + renormalize if clamped)
        Vec2 d_w{0.0, 0.0};
        if (!node.clamped) {
            for (int k = 0; k < 3; ++k) d_w += m.g[k] * d_bary[k];
        } else {
            double sum = 0.0;
            std::array<double, 3> cl{};
            for (int k = 0; k < 3; ++k) {
                cl[k] = std::max(node.raw_bary[k], 0.0);
                sum += cl[k];
            }
            double dot_cb = 0.0;
            for (int k = 0; k < 3; ++k) dot_cb += cl[k] * d_bary[k];
            for (int k = 0; k < 3; ++k) {
                if (node.raw_bary[k] <= 0.0) continue;
                double d_cl = d_bary[k] / sum - dot_cb / (sum * sum);
                d_w += m.g[k] * d_cl;
            }
        }
        // alpha = opacity * rho
        grads.opacity[node.splat] += d_alpha * node.rho;
        double d_rho = d_alpha * s.opacity;
        // rho = exp(-|w|^2 / 2)
        d_w.x += -d_rho * node.rho * node.white.x;
        d_w.y += -d_rho * node.rho * node.white.y;
        // w = S^{-1} R^T (p - mean)
        double c = std::cos(s.theta), sn = std::sin(s.theta);
        double dwx = d_w.x, dwy = d_w.y;
        double dux = dwx / s.scales.x;  // u = R^T (p - mean)
        double duy = dwy / s.scales.y;
        grads.mean[size_t(node.splat) * 2 + 0] += -(c * dux - sn * duy);
        grads.mean[size_t(node.splat) * 2 + 1] += -(sn * dux + c * duy);
        grads.theta[node.splat] += dwx * node.white.y * s.scales.y / s.scales.x -
                                   dwy * node.white.x * s.scales.x / s.scales.y;
        grads.scales[size_t(node.splat) * 2 + 0] += -dwx * node.white.x / s.scales.x;
        grads.scales[size_t(node.splat) * 2 + 1] += -dwy * node.white.y / s.scales.y;
    }
    (void)p;
}

HdrImage render_deferred(const SplatSet& set, const MlpParams& mlp, int width,
                         int height, const PinholeCamera& cam, double dir_scale,
                         double early_t, RenderStats* stats, int threads) {
    int n_f = set.n_f;
    int in_dim = 2 * n_f + 9;
    if (mlp.input_dim() != in_dim)
        throw NhtError("render_deferred: mlp input dim mismatch");
    HdrImage out(width, height, mlp.output_dim(), 1.0);
    std::vector<uint64_t> evals(max_threads(), 0);
    parallel_ranges(size_t(height), [&](int tid, size_t y0, size_t y1) {
        std::vector<double> acc(in_dim), y(mlp.output_dim());
        MlpScratch scratch;
        for (size_t yy = y0; yy < y1; ++yy) {
            for (int x = 0; x < width; ++x) {
                Vec2 p{x + 0.5, double(yy) + 0.5};
                Vec3 d = cam.direction(p.x, p.y, width, height);
                std::fill(acc.begin(), acc.end(), 0.0);
                double T = 1.0;
                for (const Splat& s : set.splats) {
                    if (early_t > 0.0 && T < early_t) break;
                    Vec2 w = whiten(s, p);
                    double rho = std::exp(-0.5 * (w.x * w.x + w.y * w.y));
                    double alpha = s.opacity * rho;
                    if (alpha <= 0.0) continue;
                    std::array<double, 3> raw, bary;
                    bool clamped;
                    clamped_bary(w, raw, bary, clamped);
                    double wgt = alpha * T;
                    for (int dd = 0; dd < n_f; ++dd) {
                        double f = bary[0] * s.f(0, n_f)[dd] +
                                   bary[1] * s.f(1, n_f)[dd] +
                                   bary[2] * s.f(2, n_f)[dd];
                        acc[dd] += wgt * std::sin(f);
                        acc[n_f + dd] += wgt * std::cos(f);
                    }
                    T *= 1.0 - alpha;
                }
                auto sh = sh2_encode(d, dir_scale);
                for (int i = 0; i < 9; ++i) acc[2 * n_f + i] = sh[i];
                mlp_forward(mlp, acc.data(), scratch, y.data());
                ++evals[tid];
                float* px = out.pixel(x, int(yy));
                for (int c = 0; c < mlp.output_dim(); ++c)
                    px[c] = float(std::clamp(y[c], 0.0, 1.0));
            }
        }
    }, threads);
    if (stats)
        for (uint64_t e : evals) stats->mlp_evals += e;
    return out;
}

namespace {

std::vector<double> parse_list(const std::string& s, char sep) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(std::stod(item));
    return out;
}

}  // namespace

SplatScene load_splat_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NhtError("cannot open scene: " + path);
    SplatScene scene;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string tok;
        ss >> tok;
        bool is_splat = tok == "splat";
        Splat sp;
        auto handle = [&](const std::string& kv) {
            auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw NhtError("scene: malformed token '" + kv + "'");
            std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
            if (is_splat) {
                if (key == "mu") {
                    auto v = parse_list(val, ',');
                    sp.mean = {v.at(0), v.at(1)};
                } else if (key == "theta") sp.theta = std::stod(val);
                else if (key == "s") {
                    auto v = parse_list(val, ',');
                    sp.scales = {v.at(0), v.at(1)};
                } else if (key == "sigma") sp.opacity = std::stod(val);
                else if (key == "z") sp.z = std::stod(val);
                else if (key == "f0" || key == "f1" || key == "f2") {
                    auto v = parse_list(val, ';');
                    if (int(v.size()) != scene.n_f)
                        throw NhtError("scene: feature width != nf");
                    if (sp.features.empty()) sp.features.assign(3 * scene.n_f, 0.0);
                    int c = key[1] - '0';
                    std::copy(v.begin(), v.end(), sp.features.begin() + c * scene.n_f);
                } else throw NhtError("scene: unknown splat key " + key);
            } else {
                if (key == "width") scene.width = std::stoi(val);
                else if (key == "height") scene.height = std::stoi(val);
                else if (key == "nf") scene.n_f = std::stoi(val);
                else if (key == "seed") scene.seed = std::stoull(val);
                else if (key == "hidden") scene.hidden_width = std::stoi(val);
                else if (key == "layers") scene.hidden_layers = std::stoi(val);
                else if (key == "dir_scale") scene.dir_scale = std::stod(val);
                else throw NhtError("scene: unknown header key " + key);
            }
        };
        if (!is_splat) handle(tok);
        std::string kv;
        while (ss >> kv) handle(kv);
        if (is_splat) {
            if (sp.features.empty()) sp.features.assign(3 * scene.n_f, 0.0);
            if (!(sp.scales.x > 0.0 && sp.scales.y > 0.0))
                throw NhtError("scene: non-positive scale");
            if (!(sp.opacity > 0.0 && sp.opacity <= 1.0))
                throw NhtError("scene: opacity outside (0,1]");
            scene.set.splats.push_back(std::move(sp));
        }
    }
    scene.set.n_f = scene.n_f;
    return scene;
}

void save_splat_scene(const SplatScene& scene, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw NhtError("cannot write scene: " + path);
    out << "width=" << scene.width << " height=" << scene.height
        << " nf=" << scene.n_f << " seed=" << scene.seed
        << " hidden=" << scene.hidden_width << " layers=" << scene.hidden_layers
        << " dir_scale=" << scene.dir_scale << "\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const Splat& s : scene.set.splats) {
        out << "splat mu=" << num(s.mean.x) << "," << num(s.mean.y)
            << " theta=" << num(s.theta) << " s=" << num(s.scales.x) << ","
            << num(s.scales.y) << " sigma=" << num(s.opacity)
            << " z=" << num(s.z);
        for (int c = 0; c < 3; ++c) {
            out << " f" << c << "=";
            for (int d = 0; d < scene.n_f; ++d)
                out << (d ? ";" : "") << num(s.f(c, scene.n_f)[d]);
        }
        out << "\n";
    }
}

}  // namespace nht
