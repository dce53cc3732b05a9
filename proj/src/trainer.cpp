#include "nht/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nht/interp.hpp"

namespace nht {

void TrainConfig::validate() const {
    if (iters <= 0 || batch_pixels <= 0) throw NhtError("config: iters/batch must be positive");
    if (!(lr_positions > 0 && lr_features > 0 && lr_mlp > 0))
        throw NhtError("config: learning rates must be positive");
    if (densify) {
        if (!(densify_start <= densify_end && densify_end <= iters))
            throw NhtError("config: densify window must satisfy start <= end <= iters");
        if (densify_every <= 0)
            throw NhtError("config: densify_every must be positive");
    }
    if (!(densify_growth > 0)) throw NhtError("config: densify growth must be positive");
    if (n_f <= 0 || hidden_width <= 0 || hidden_layers <= 0 || n_init < 4)
        throw NhtError("config: bad architecture sizes");
    if (!(mu > 0)) throw NhtError("config: mu must be positive");
    encode_mode_from_name(encoding);
    if (scheme != "macro" && scheme != "single")
        throw NhtError("config: scheme must be macro|single");
}

void set_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
    auto b = [&] {
        if (value == "1" || value == "true" || value == "on") return true;
        if (value == "0" || value == "false" || value == "off") return false;
        throw NhtError("config: bad boolean for " + key);
    };
    if (key == "iters") cfg.iters = std::stoi(value);
    else if (key == "batch_pixels") cfg.batch_pixels = std::stoi(value);
    else if (key == "lr_positions") cfg.lr_positions = std::stod(value);
    else if (key == "lr_features") cfg.lr_features = std::stod(value);
    else if (key == "lr_mlp") cfg.lr_mlp = std::stod(value);
    else if (key == "densify_start") cfg.densify_start = std::stoi(value);
    else if (key == "densify_end") cfg.densify_end = std::stoi(value);
    else if (key == "densify_every") cfg.densify_every = std::stoi(value);
    else if (key == "densify_growth") cfg.densify_growth = std::stod(value);
    else if (key == "score_exponent") cfg.score_exponent = std::stod(value);
    else if (key == "densify_min_pixels") cfg.densify_min_pixels = std::stoi(value);
    else if (key == "mu") cfg.mu = std::stod(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "refine_iters") cfg.refine_iters = std::stoi(value);
    else if (key == "lambda_dssim") cfg.lambda_dssim = std::stod(value);
    else if (key == "lambda_alpha") cfg.lambda_alpha = std::stod(value);
    else if (key == "lambda_scale") cfg.lambda_scale = std::stod(value);
    else if (key == "gamma_ema") cfg.gamma_ema = std::stod(value);
    else if (key == "n_f") cfg.n_f = std::stoi(value);
    else if (key == "hidden_width") cfg.hidden_width = std::stoi(value);
    else if (key == "hidden_layers") cfg.hidden_layers = std::stoi(value);
    else if (key == "n_init") cfg.n_init = std::stoi(value);
    else if (key == "init_floor") cfg.init_floor = std::stod(value);
    else if (key == "feature_init") cfg.feature_init = std::stod(value);
    else if (key == "encoding") cfg.encoding = value;
    else if (key == "scheme") cfg.scheme = value;
    else if (key == "densify") cfg.densify = b();
    else if (key == "train_positions") cfg.train_positions = b();
    else if (key == "grad_through_gradient_positions") cfg.grad_through_gradient_positions = b();
    else if (key == "threads") cfg.threads = std::stoi(value);
    else if (key == "log_every") cfg.log_every = std::stoi(value);
    else if (key == "score_stride") cfg.score_stride = std::stoi(value);
    else if (key == "dir_scale") cfg.dir_scale = std::stod(value);
    else if (key == "max_vertices") cfg.max_vertices = std::stoi(value);
    else throw NhtError("config: unknown key " + key);
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NhtError("cannot open config: " + path);
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto notspace = [](unsigned char c) { return !std::isspace(c); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw NhtError("config parse error at line " + std::to_string(lineno));
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
        value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));
        set_config_kv(cfg, key, value);
    }
    return cfg;
}

std::vector<BatchSample> sample_batch(Rng& rng, const HdrImage& img, int n) {
    int g = int(std::ceil(std::sqrt(double(n))));
    int total = g * g;
    // choose which surplus strata to drop this call
    std::vector<uint8_t> keep(total, 1);
    int drop = total - n;
    if (drop > 0) {
        std::vector<int> idx(total);
        for (int i = 0; i < total; ++i) idx[i] = i;
        for (int i = 0; i < drop; ++i) {
            int j = i + int(rng.index(uint64_t(total - i)));
            std::swap(idx[i], idx[j]);
            keep[idx[i]] = 0;
        }
    }
    std::vector<BatchSample> out;
    out.reserve(n);
    double sx = double(img.width) / g, sy = double(img.height) / g;
    double lim_x = std::nextafter(double(img.width), 0.0);
    double lim_y = std::nextafter(double(img.height), 0.0);
    for (int cell = 0; cell < total; ++cell) {
        double u = rng.uniform(), v = rng.uniform();  // keep the stream aligned
        if (!keep[cell]) continue;
        int cy = cell / g, cx = cell % g;
        BatchSample s;
        s.pos.x = std::min((cx + u) * sx, lim_x);
        s.pos.y = std::min((cy + v) * sy, lim_y);
        double gt[4];
        sample_bilinear(img, s.pos.x, s.pos.y, gt);
        for (int c = 0; c < 3; ++c) s.gt[c] = gt[std::min(c, img.channels - 1)];
        out.push_back(s);
    }
    return out;
}

double loss_mulaw_mse(const double* pred, const double* gt, size_t n,
                      const MuLawParams& p, double* d_pred, size_t* clamped) {
    double acc = 0.0;
    size_t nclamp = 0;
    double inv = 1.0 / double(n);
    for (size_t i = 0; i < n; ++i) {
        double x = pred[i];
        bool out_of_range = x < 0.0 || x > p.w;
        nclamp += out_of_range;
        double xc = std::clamp(x, 0.0, p.w);
        double e = mulaw_encode(xc, p) - mulaw_encode_checked(gt[i], p);
        acc += e * e * inv;
        if (d_pred)
            d_pred[i] = out_of_range ? 0.0
                                     : 2.0 * e * inv * mulaw_encode_deriv(xc, p);
    }
    if (clamped) *clamped = nclamp;
    return acc;
}

SplatLoss loss_splat(const HdrImage& pred, const HdrImage& gt, const SplatSet& set,
                     double lambda, double lambda_alpha, double lambda_scale,
                     bool with_grad) {
    if (pred.width != gt.width || pred.height != gt.height ||
        pred.channels != gt.channels)
        throw NhtError("loss_splat: dimension mismatch");
    SplatLoss out;
    size_t n = pred.data.size();
    double inv = 1.0 / double(n);
    if (with_grad) out.d_pred.assign(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double d = double(pred.data[i]) - double(gt.data[i]);
        out.l1 += std::abs(d) * inv;
        if (with_grad)
            out.d_pred[i] = (1.0 - lambda) * inv * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
    }
    if (lambda != 0.0) {
        if (with_grad) {
            std::vector<double> d_ssim;
            double mean_ssim = ssim_mean_with_grad(pred, gt, d_ssim);
            out.dssim = (1.0 - mean_ssim) * 0.5;
            for (size_t i = 0; i < n; ++i)
                out.d_pred[i] += lambda * (-0.5) * d_ssim[i];
        } else {
            out.dssim = dssim(pred, gt);
        }
    }
    size_t np = set.splats.size();
    if (np) {
        for (const Splat& s : set.splats) {
            out.r_alpha += s.opacity;
            out.r_scale += std::abs(s.scales.x) + std::abs(s.scales.y);
        }
        out.r_alpha /= double(np);
        out.r_scale /= double(np);
    }
    out.value = (1.0 - lambda) * out.l1 + lambda * out.dssim +
                lambda_alpha * out.r_alpha + lambda_scale * out.r_scale;
    return out;
}

namespace {

struct MeshEvalCore {
    const Mesh& mesh;
    const FeatureField& field;
    const MlpParams& mlp;       // dims; theta below may be the EMA copy
    const std::vector<double>& theta;
    EncodeMode encoding;
    CtScheme scheme;

    // y = mlp(encode(field(p))) in mu-law space; returns containing triangle
    int eval(const Vec2& p, MlpScratch& scratch, std::vector<double>& feat,
             std::vector<double>& enc, double* y) const {
        Locate loc = mesh.locate(p);
        ct_field_eval(mesh, field, loc.triangle, loc.bary, scheme, feat.data());
        encode_variant(encoding, feat.data(), field.n_f, enc.data());
        MlpParams view;  // cheap alias with substituted weights
        view.dims = mlp.dims;
        view.theta = theta;
        mlp_forward(view, enc.data(), scratch, y);
        return loc.triangle;
    }
};

HdrImage render_mu_core(const Mesh& mesh, const FeatureField& field,
                        const MlpParams& mlp, const std::vector<double>& theta,
                        EncodeMode encoding, CtScheme scheme, int width,
                        int height, int stride, std::vector<int>* tri_map,
                        int threads) {
    if (!field.gradients_fresh())
        throw NhtError("render: stale gradient cache");
    int ow = (width + stride - 1) / stride;
    int oh = (height + stride - 1) / stride;
    HdrImage out(ow, oh, 3, 1.0);
    if (tri_map) tri_map->assign(size_t(ow) * oh, -1);
    MeshEvalCore core{mesh, field, mlp, theta, encoding, scheme};
    parallel_ranges(size_t(oh), [&](int, size_t y0, size_t y1) {
        MlpScratch scratch;
        std::vector<double> feat(field.n_f), enc(encoded_width(encoding, field.n_f));
        std::vector<double> y(mlp.dims.back());
        for (size_t yy = y0; yy < y1; ++yy) {
            for (int x = 0; x < ow; ++x) {
                Vec2 p{(x * stride) + 0.5, double(yy * stride) + 0.5};
                int tri = core.eval(p, scratch, feat, enc, y.data());
                float* px = out.pixel(x, int(yy));
                for (int c = 0; c < 3; ++c)
                    px[c] = float(std::clamp(y[c], 0.0, 1.0));
                if (tri_map) (*tri_map)[yy * ow + x] = tri;
            }
        }
    }, threads);
    return out;
}

}  // namespace

HdrImage render_mesh_mu(const MeshModel& model, int stride,
                        std::vector<int>* tri_map, bool use_ema, int threads) {
    const std::vector<double>& theta =
        use_ema && model.mlp_ema.size() == model.mlp.theta.size() ? model.mlp_ema
                                                                  : model.mlp.theta;
    return render_mu_core(model.mesh, model.field, model.mlp, theta, model.encoding,
                          model.scheme, model.width, model.height, stride, tri_map,
                          threads);
}

HdrImage render_mesh(const MeshModel& model, bool use_ema, int threads) {
    HdrImage mu = render_mesh_mu(model, 1, nullptr, use_ema, threads);
    HdrImage out(model.width, model.height, 3, model.white_level);
    MuLawParams p = model.mulaw();
    for (size_t i = 0; i < mu.data.size(); ++i)
        out.data[i] = float(mulaw_decode(double(mu.data[i]), p));
    return out;
}

std::vector<double> score_triangles(const Mesh& mesh, const SsimMap& ssim,
                                    const std::vector<int>& tri_map,
                                    double exponent, int min_pixels) {
    const double kExcluded = -std::numeric_limits<double>::infinity();
    std::vector<double> sum(mesh.triangle_count(), 0.0);
    std::vector<int> count(mesh.triangle_count(), 0);
    for (size_t i = 0; i < tri_map.size(); ++i) {
        int t = tri_map[i];
        if (t < 0) continue;
        sum[t] += (1.0 - ssim.value[i]) * 0.5;
        ++count[t];
    }
    std::vector<double> score(mesh.triangle_count());
    for (size_t t = 0; t < score.size(); ++t)
        score[t] = count[t] < min_pixels
                       ? kExcluded
                       : (sum[t] / count[t]) * std::pow(double(count[t]), exponent);
    return score;
}

DensifyStats densify_step(Mesh& mesh, FeatureField& field,
                          const std::vector<double>& scores, double growth,
                          int max_vertices) {
    DensifyStats stats;
    size_t v0 = mesh.vertex_count();
    int budget = int(std::floor(growth * double(v0)));
    if (max_vertices > 0)
        budget = std::min(budget, max_vertices - int(v0));
    if (budget <= 0) return stats;
    std::vector<int> order;
    order.reserve(scores.size());
    for (int t = 0; t < int(scores.size()); ++t)
        if (std::isfinite(scores[t]) && scores[t] > 0.0) order.push_back(t);
    if (order.empty()) return stats;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    if (int(order.size()) > budget) order.resize(budget);

    std::vector<Vec2> pos = mesh.positions;
    int nf = field.n_f;
    for (int t : order) {
        const auto& tr = mesh.triangles[t];
        Vec2 c = (mesh.positions[tr[0]] + mesh.positions[tr[1]] + mesh.positions[tr[2]]) *
                 (1.0 / 3.0);
        pos.push_back(c);
        for (int d = 0; d < nf; ++d)
            field.features.push_back((field.feat(tr[0])[d] + field.feat(tr[1])[d] +
                                      field.feat(tr[2])[d]) / 3.0);
    }
    mesh = triangulate(std::move(pos), mesh.width, mesh.height);
    field.gradients.resize(mesh.vertex_count() * size_t(nf) * 2, 0.0);
    field.touch();
    stats.inserted = int(mesh.vertex_count() - v0);
    stats.changed = stats.inserted > 0;
    return stats;
}

// ---------------------------------------------------------------------------
// mesh-mode training
// ---------------------------------------------------------------------------

void BatchGrads::reset(size_t nv, int nf, size_t ntheta) {
    feat.assign(nv * nf, 0.0);
    grad_cache.assign(nv * nf * 2, 0.0);
    pos.assign(nv * 2, 0.0);
    theta.assign(ntheta, 0.0);
    loss = 0.0;
}

void BatchGrads::add(const BatchGrads& o) {
    for (size_t i = 0; i < feat.size(); ++i) feat[i] += o.feat[i];
    for (size_t i = 0; i < grad_cache.size(); ++i) grad_cache[i] += o.grad_cache[i];
    for (size_t i = 0; i < pos.size(); ++i) pos[i] += o.pos[i];
    for (size_t i = 0; i < theta.size(); ++i) theta[i] += o.theta[i];
    loss += o.loss;
}

void mesh_batch_range(const MeshModel& model, const BatchSample* samples, size_t n,
                      double inv_n, bool positions_on, BatchGrads& out) {
    int nf = model.field.n_f;
    int in_dim = encoded_width(model.encoding, nf);
    MuLawParams mulaw = model.mulaw();
    MlpScratch scratch;
    std::vector<double> feat(nf), enc(in_dim), y(3), d_y(3), d_enc(in_dim), d_feat(nf);
    for (size_t bi = 0; bi < n; ++bi) {
        const BatchSample& s = samples[bi];
        Locate loc = model.mesh.locate(s.pos);
        const auto& tr = model.mesh.triangles[loc.triangle];
        const Vec2& p0 = model.mesh.positions[tr[0]];
        const Vec2& p1 = model.mesh.positions[tr[1]];
        const Vec2& p2 = model.mesh.positions[tr[2]];
        CtSampleWeights w = ct_sample_weights(p0, p1, p2, loc.bary, model.scheme);
        for (int d = 0; d < nf; ++d) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double* fv = model.field.feat(tr[k]);
                const double* gv = model.field.grad(tr[k]);
                acc += w.a[k] * fv[d] + w.b[k].x * gv[d * 2] +
                       w.b[k].y * gv[d * 2 + 1];
            }
            feat[d] = acc;
        }
        encode_variant(model.encoding, feat.data(), nf, enc.data());
        mlp_forward(model.mlp, enc.data(), scratch, y.data());
        for (int c = 0; c < 3; ++c) {
            double e = y[c] - mulaw_encode(s.gt[c], mulaw);
            out.loss += e * e * inv_n;
            d_y[c] = 2.0 * e * inv_n;
        }
        mlp_backward(model.mlp, scratch, d_y.data(), out.theta.data(), d_enc.data());
        encode_variant_backward(model.encoding, feat.data(), nf, d_enc.data(),
                                d_feat.data());
        for (int k = 0; k < 3; ++k) {
            double* df = &out.feat[size_t(tr[k]) * nf];
            double* dg = &out.grad_cache[size_t(tr[k]) * nf * 2];
            for (int d = 0; d < nf; ++d) {
                df[d] += w.a[k] * d_feat[d];
                dg[d * 2 + 0] += w.b[k].x * d_feat[d];
                dg[d * 2 + 1] += w.b[k].y * d_feat[d];
            }
        }
        if (positions_on) {
            CtSampleWeightsJac jac =
                ct_sample_weights_jac(p0, p1, p2, s.pos, model.scheme);
            for (int m = 0; m < 6; ++m) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) {
                    const double* fv = model.field.feat(tr[k]);
                    const double* gv = model.field.grad(tr[k]);
                    double da = jac.da[k][m];
                    double dbx = jac.db[k][0][m], dby = jac.db[k][1][m];
                    for (int d = 0; d < nf; ++d)
                        acc += d_feat[d] * (da * fv[d] + dbx * gv[d * 2] +
                                            dby * gv[d * 2 + 1]);
                }
                out.pos[size_t(tr[m / 2]) * 2 + (m % 2)] += acc;
            }
        }
    }
}

BatchGrads mesh_pipeline_gradients(MeshModel& model,
                                   const std::vector<BatchSample>& samples,
                                   bool through_positions,
                                   bool through_gradient_positions) {
    if (!model.field.gradients_fresh())
        vertex_gradients(model.mesh, model.field);
    BatchGrads g;
    g.reset(model.mesh.vertex_count(), model.field.n_f, model.mlp.theta.size());
    mesh_batch_range(model, samples.data(), samples.size(),
                     1.0 / double(samples.size() * 3), through_positions, g);
    vertex_gradients_backward(model.mesh, model.field, g.grad_cache, g.feat, g.pos,
                              through_positions && through_gradient_positions);
    return g;
}

namespace {

void project_boundary_gradients(const Mesh& mesh, std::vector<double>& d_pos) {
    for (size_t v = 0; v < mesh.vertex_count(); ++v) {
        switch (mesh.kinds[v]) {
            case VertexKind::Corner:
                d_pos[v * 2 + 0] = 0.0;
                d_pos[v * 2 + 1] = 0.0;
                break;
            case VertexKind::Left:
            case VertexKind::Right:
                d_pos[v * 2 + 0] = 0.0;  // slide along the vertical border
                break;
            case VertexKind::Bottom:
            case VertexKind::Top:
                d_pos[v * 2 + 1] = 0.0;
                break;
            default:
                break;
        }
    }
}

std::string json_line(std::initializer_list<std::pair<const char*, double>> nums,
                      int step, const char* event = nullptr) {
    std::ostringstream os;
    os << "{\"step\":" << step;
    if (event) os << ",\"event\":\"" << event << "\"";
    for (const auto& [k, v] : nums) {
        os << ",\"" << k << "\":";
        if (std::isfinite(v)) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.8g", v);
            os << buf;
        } else {
            os << "\"inf\"";
        }
    }
    os << "}";
    return os.str();
}

}  // namespace

MeshModel fit_image(const HdrImage& img, const TrainConfig& cfg, const LogSink& log) {
    cfg.validate();
    img.validate();
    Rng rng(cfg.seed);

    MeshModel model;
    model.width = img.width;
    model.height = img.height;
    model.white_level = img.white_level;
    model.mu = cfg.mu;
    model.encoding = cfg.encode_mode();
    model.scheme = cfg.ct_scheme();
    model.mesh = init_edge_aware(img, cfg.n_init, cfg.init_floor, rng);

    size_t nv = model.mesh.vertex_count();
    int nf = cfg.n_f;
    model.field = FeatureField(nv, nf);
    for (double& f : model.field.features) f = cfg.feature_init * rng.normal();
    model.field.touch();

    int in_dim = encoded_width(model.encoding, nf);
    std::vector<int> dims{in_dim};
    for (int l = 0; l < cfg.hidden_layers; ++l) dims.push_back(cfg.hidden_width);
    dims.push_back(3);
    model.mlp = make_mlp(dims, rng);
    model.mlp_ema = model.mlp.theta;

    AdamState adam_feat, adam_pos, adam_mlp;
    adam_feat.init(model.field.features.size());
    adam_pos.init(nv * 2);
    adam_mlp.init(model.mlp.theta.size());

    MuLawParams mulaw{cfg.mu, img.white_level};

    // fixed probe set for the held-out PSNR log
    Rng probe_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<BatchSample> probe = sample_batch(probe_rng, img, 2048);
    std::vector<double> probe_gt_mu(probe.size() * 3);
    for (size_t i = 0; i < probe.size(); ++i)
        for (int c = 0; c < 3; ++c)
            probe_gt_mu[i * 3 + c] = mulaw_encode(probe[i].gt[c], mulaw);

    int threads = cfg.threads > 0 ? cfg.threads : max_threads();
    std::vector<BatchGrads> buffers(threads);

    auto probe_psnr = [&]() {
        MlpScratch scratch;
        std::vector<double> feat(nf), enc(in_dim), y(3);
        MeshEvalCore core{model.mesh, model.field, model.mlp, model.mlp_ema,
                          model.encoding, model.scheme};
        double mse = 0.0;
        for (size_t i = 0; i < probe.size(); ++i) {
            core.eval(probe[i].pos, scratch, feat, enc, y.data());
            for (int c = 0; c < 3; ++c) {
                double e = std::clamp(y[c], 0.0, 1.0) - probe_gt_mu[i * 3 + c];
                mse += e * e;
            }
        }
        mse /= double(probe.size() * 3);
        return mse > 0.0 ? 10.0 * std::log10(1.0 / mse)
                         : std::numeric_limits<double>::infinity();
    };

    for (int step = 0; step < cfg.iters; ++step) {
        bool refining = step >= cfg.iters - cfg.refine_iters;
        bool densify_due = cfg.densify && !refining && step >= cfg.densify_start &&
                           step <= cfg.densify_end && (step - cfg.densify_start) %
                           cfg.densify_every == 0;
        if (densify_due) {
            if (!model.field.gradients_fresh())
                vertex_gradients(model.mesh, model.field);
            std::vector<int> tri_map;
            HdrImage pred_mu = render_mu_core(model.mesh, model.field, model.mlp,
                                              model.mlp_ema, model.encoding,
                                              model.scheme, img.width, img.height,
                                              cfg.score_stride, &tri_map, threads);
            HdrImage gt_mu(pred_mu.width, pred_mu.height, 3, 1.0);
            for (int y = 0; y < pred_mu.height; ++y)
                for (int x = 0; x < pred_mu.width; ++x)
                    for (int c = 0; c < 3; ++c) {
                        int sx = std::min(x * cfg.score_stride, img.width - 1);
                        int sy = std::min(y * cfg.score_stride, img.height - 1);
                        double v = img.at(sx, sy, std::min(c, img.channels - 1));
                        gt_mu.at(x, y, c) = float(mulaw_encode(v, mulaw));
                    }
            SsimMap ssim = ssim_map(pred_mu, gt_mu);
            auto scores = score_triangles(model.mesh, ssim, tri_map,
                                          cfg.score_exponent, cfg.densify_min_pixels);
            DensifyStats st = densify_step(model.mesh, model.field, scores,
                                           cfg.densify_growth, cfg.max_vertices);
            if (st.changed) {
                nv = model.mesh.vertex_count();
                adam_feat.resize_preserving(model.field.features.size());
                adam_pos.resize_preserving(nv * 2);
                if (log)
                    log(json_line({{"inserted", double(st.inserted)},
                                   {"vertices", double(nv)}},
                                  step, "densify"));
            }
        }

        if (!model.field.gradients_fresh())
            vertex_gradients(model.mesh, model.field);

        std::vector<BatchSample> batch = sample_batch(rng, img, cfg.batch_pixels);
        bool positions_on = cfg.train_positions && !refining;
        double inv_n = 1.0 / double(batch.size() * 3);

        for (int t = 0; t < threads; ++t)
            buffers[t].reset(nv, nf, model.mlp.theta.size());

        parallel_ranges(batch.size(), [&](int tid, size_t b0, size_t b1) {
            mesh_batch_range(model, batch.data() + b0, b1 - b0, inv_n, positions_on,
                             buffers[tid]);
        }, threads);

        for (int t = 1; t < threads; ++t) buffers[0].add(buffers[t]);
        BatchGrads& g = buffers[0];
        if (!std::isfinite(g.loss)) {
            throw NhtError("fit_image: non-finite loss at step " +
                           std::to_string(step) + " (vertices=" +
                           std::to_string(nv) + ")");
        }

        // pull the gradient-cache adjoint back into features and positions
        vertex_gradients_backward(model.mesh, model.field, g.grad_cache, g.feat,
                                  g.pos,
                                  positions_on && cfg.grad_through_gradient_positions);

        double lr_f = lr_at(LrSchedule::Exp2d, step, cfg.lr_features, cfg.iters);
        double lr_p = lr_at(LrSchedule::Exp2d, step, cfg.lr_positions, cfg.iters);
        double lr_m = lr_at(LrSchedule::Exp2d, step, cfg.lr_mlp, cfg.iters);

        adam_step(adam_feat, model.field.features, g.feat, lr_f);
        model.field.touch();
        if (positions_on) {
            project_boundary_gradients(model.mesh, g.pos);
            std::vector<double> pos_flat(nv * 2);
            for (size_t v = 0; v < nv; ++v) {
                pos_flat[v * 2 + 0] = model.mesh.positions[v].x;
                pos_flat[v * 2 + 1] = model.mesh.positions[v].y;
            }
            adam_step(adam_pos, pos_flat, g.pos, lr_p);
            for (size_t v = 0; v < nv; ++v) {
                model.mesh.positions[v].x = pos_flat[v * 2 + 0];
                model.mesh.positions[v].y = pos_flat[v * 2 + 1];
            }
            bool rebuilt = validate_or_remesh(model.mesh);
            if (!rebuilt) model.mesh.rebuild_tile_grid();
            model.field.touch();  // geometry moved; gradient cache is stale
        }
        adam_step(adam_mlp, model.mlp.theta, g.theta, lr_m);
        ema_update(model.mlp_ema, model.mlp.theta, cfg.gamma_ema);

        if (log && (step % cfg.log_every == 0 || step + 1 == cfg.iters)) {
            if (!model.field.gradients_fresh())
                vertex_gradients(model.mesh, model.field);
            log(json_line({{"loss", g.loss},
                           {"lr_features", lr_f},
                           {"lr_positions", lr_p},
                           {"lr_mlp", lr_m},
                           {"vertices", double(nv)},
                           {"triangles", double(model.mesh.triangle_count())},
                           {"psnr_probe", probe_psnr()}},
                          step));
        }
    }
    if (!model.field.gradients_fresh())
        vertex_gradients(model.mesh, model.field);
    return model;
}

// ---------------------------------------------------------------------------
// splat-mode training
// ---------------------------------------------------------------------------

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct SplatParams {
    std::vector<double> mean;      // P x 2
    std::vector<double> theta;     // P
    std::vector<double> log_s;     // P x 2
    std::vector<double> logit_o;   // P
    std::vector<double> features;  // P x 3 x nf

    void write_into(SplatSet& set) const {
        int nf = set.n_f;
        for (size_t i = 0; i < set.splats.size(); ++i) {
            Splat& s = set.splats[i];
            s.mean = {mean[i * 2], mean[i * 2 + 1]};
            s.theta = theta[i];
            s.scales = {std::exp(std::clamp(log_s[i * 2], -7.0, 9.0)),
                        std::exp(std::clamp(log_s[i * 2 + 1], -7.0, 9.0))};
            s.opacity = std::clamp(sigmoid(logit_o[i]), 1e-6, 1.0 - 1e-6);
            std::copy(features.begin() + i * 3 * nf, features.begin() + (i + 1) * 3 * nf,
                      s.features.begin());
        }
    }
};

}  // namespace

SplatModel fit_splats(const HdrImage& img, const TrainConfig& cfg, const LogSink& log) {
    cfg.validate();
    img.validate();
    Rng rng(cfg.seed);

    HdrImage gt = tonemap(img);  // supervise in display space, white level 1
    int W = img.width, H = img.height;

    SplatModel model;
    model.width = W;
    model.height = H;
    model.dir_scale = cfg.dir_scale;
    model.set.n_f = cfg.n_f;
    int nf = cfg.n_f;

    int grid = std::max(1, int(std::ceil(std::sqrt(double(cfg.n_init)))));
    double spacing = double(std::max(W, H)) / grid;
    SplatParams par;
    for (int gy = 0; gy < grid && int(model.set.splats.size()) < cfg.n_init; ++gy)
        for (int gx = 0; gx < grid && int(model.set.splats.size()) < cfg.n_init; ++gx) {
            Splat s;
            s.mean = {(gx + 0.2 + 0.6 * rng.uniform()) * W / grid,
                      (gy + 0.2 + 0.6 * rng.uniform()) * H / grid};
            s.theta = 0.0;
            s.scales = {spacing * 0.75, spacing * 0.75};
            s.opacity = 0.5;
            s.z = rng.uniform();
            s.features.assign(size_t(3) * nf, 0.0);
            for (double& f : s.features) f = cfg.feature_init * rng.normal();
            model.set.splats.push_back(std::move(s));
        }
    model.set.sort_by_depth();
    size_t P = model.set.splats.size();

    par.mean.resize(P * 2);
    par.theta.resize(P);
    par.log_s.resize(P * 2);
    par.logit_o.resize(P);
    par.features.resize(P * 3 * nf);
    for (size_t i = 0; i < P; ++i) {
        const Splat& s = model.set.splats[i];
        par.mean[i * 2] = s.mean.x;
        par.mean[i * 2 + 1] = s.mean.y;
        par.theta[i] = s.theta;
        par.log_s[i * 2] = std::log(s.scales.x);
        par.log_s[i * 2 + 1] = std::log(s.scales.y);
        par.logit_o[i] = 0.0;
        std::copy(s.features.begin(), s.features.end(), par.features.begin() + i * 3 * nf);
    }
    par.write_into(model.set);

    std::vector<int> dims{2 * nf + 9};
    for (int l = 0; l < cfg.hidden_layers; ++l) dims.push_back(cfg.hidden_width);
    dims.push_back(3);
    model.mlp = make_mlp(dims, rng);
    model.mlp_ema = model.mlp.theta;

    AdamState a_mean, a_theta, a_logs, a_logo, a_feat, a_mlp;
    a_mean.init(par.mean.size());
    a_theta.init(par.theta.size());
    a_logs.init(par.log_s.size());
    a_logo.init(par.logit_o.size());
    a_feat.init(par.features.size());
    a_mlp.init(model.mlp.theta.size());

    PinholeCamera cam{model.focal_scale};
    int threads = cfg.threads > 0 ? cfg.threads : max_threads();
    int in_dim = 2 * nf + 9;

    for (int step = 0; step < cfg.iters; ++step) {
        bool refining = step >= cfg.iters - cfg.refine_iters;

        // pass A: full-frame prediction with the raw weights
        HdrImage pred(W, H, 3, 1.0);
        parallel_ranges(size_t(H), [&](int, size_t y0, size_t y1) {
            MlpScratch scratch;
            std::vector<double> acc(in_dim), y(3);
            for (size_t yy = y0; yy < y1; ++yy)
                for (int x = 0; x < W; ++x) {
                    Vec2 p{x + 0.5, double(yy) + 0.5};
                    Vec3 d = cam.direction(p.x, p.y, W, H);
                    composite_pixel(model.set, p, d, cfg.dir_scale, acc.data());
                    mlp_forward(model.mlp, acc.data(), scratch, y.data());
                    float* px = pred.pixel(x, int(yy));
                    for (int c = 0; c < 3; ++c) px[c] = float(y[c]);
                }
        }, threads);

        double la = refining ? 0.0 : cfg.lambda_alpha;
        double ls = refining ? 0.0 : cfg.lambda_scale;
        SplatLoss loss = loss_splat(pred, gt, model.set, cfg.lambda_dssim, la, ls);
        if (!std::isfinite(loss.value))
            throw NhtError("fit_splats: non-finite loss at step " + std::to_string(step));

        // pass B: per-pixel backward through decode and compositing
        std::vector<SplatGrads> sg(threads);
        std::vector<std::vector<double>> mg(threads);
        for (int t = 0; t < threads; ++t) {
            sg[t].init(P, nf);
            mg[t].assign(model.mlp.theta.size(), 0.0);
        }
        parallel_ranges(size_t(H), [&](int tid, size_t y0, size_t y1) {
            MlpScratch scratch;
            CompositeTape tape;
            std::vector<double> acc(in_dim), y(3), d_y(3), d_in(in_dim);
            for (size_t yy = y0; yy < y1; ++yy)
                for (int x = 0; x < W; ++x) {
                    Vec2 p{x + 0.5, double(yy) + 0.5};
                    Vec3 d = cam.direction(p.x, p.y, W, H);
                    composite_pixel_tape(model.set, p, d, cfg.dir_scale, acc.data(), tape);
                    mlp_forward(model.mlp, acc.data(), scratch, y.data());
                    const double* dp = &loss.d_pred[(yy * W + x) * 3];
                    for (int c = 0; c < 3; ++c) d_y[c] = dp[c];
                    mlp_backward(model.mlp, scratch, d_y.data(), mg[tid].data(),
                                 d_in.data());
                    composite_pixel_backward(model.set, p, tape, d_in.data(), sg[tid]);
                }
        }, threads);
        for (int t = 1; t < threads; ++t) {
            sg[0].add(sg[t]);
            for (size_t i = 0; i < mg[0].size(); ++i) mg[0][i] += mg[t][i];
        }

        // raw-parameter chain rule + regularizer gradients
        std::vector<double> d_mean(P * 2), d_theta(P), d_logs(P * 2), d_logo(P);
        for (size_t i = 0; i < P; ++i) {
            const Splat& s = model.set.splats[i];
            d_mean[i * 2] = sg[0].mean[i * 2];
            d_mean[i * 2 + 1] = sg[0].mean[i * 2 + 1];
            d_theta[i] = sg[0].theta[i];
            double gx = sg[0].scales[i * 2] + ls / double(P);
            double gy = sg[0].scales[i * 2 + 1] + ls / double(P);
            d_logs[i * 2] = gx * s.scales.x;
            d_logs[i * 2 + 1] = gy * s.scales.y;
            double go = sg[0].opacity[i] + la / double(P);
            d_logo[i] = go * s.opacity * (1.0 - s.opacity);
        }

        double lr_pos = lr_at(LrSchedule::Exp3d, step, cfg.lr_positions, cfg.iters);
        double lr_feat = lr_at(LrSchedule::Cosine, step, cfg.lr_features, cfg.iters);
        double lr_mlp = lr_at(LrSchedule::Cosine, step, cfg.lr_mlp, cfg.iters);

        if (!refining) {
            adam_step(a_mean, par.mean, d_mean, lr_pos);
            adam_step(a_theta, par.theta, d_theta, 1e-3);
            adam_step(a_logs, par.log_s, d_logs, 5e-3);
            adam_step(a_logo, par.logit_o, d_logo, 5e-2);
        }
        adam_step(a_feat, par.features, sg[0].features, lr_feat);
        adam_step(a_mlp, model.mlp.theta, mg[0], lr_mlp);
        ema_update(model.mlp_ema, model.mlp.theta, cfg.gamma_ema);
        par.write_into(model.set);

        if (log && (step % cfg.log_every == 0 || step + 1 == cfg.iters))
            log(json_line({{"loss", loss.value},
                           {"l1", loss.l1},
                           {"dssim", loss.dssim},
                           {"r_alpha", loss.r_alpha},
                           {"r_scale", loss.r_scale},
                           {"lr_features", lr_feat},
                           {"splats", double(P)}},
                          step));
    }
    return model;
}

HdrImage render_splat_display(const SplatModel& model, bool use_ema, int threads) {
    MlpParams mlp = use_ema ? model.ema_mlp() : model.mlp;
    SplatSet set = model.set;
    set.sort_by_depth();
    PinholeCamera cam{model.focal_scale};
    return render_deferred(set, mlp, model.width, model.height, cam,
                           model.dir_scale, 1e-4, nullptr, threads);
}

}  // namespace nht
