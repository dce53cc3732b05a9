#include "nht/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace nht {

double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
    double adx = a.x - p.x, ady = a.y - p.y;
    double bdx = b.x - p.x, bdy = b.y - p.y;
    double cdx = c.x - p.x, cdy = c.y - p.y;
    double ad = adx * adx + ady * ady;
    double bd = bdx * bdx + bdy * bdy;
    double cd = cdx * cdx + cdy * cdy;
    return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) +
           ad * (bdx * cdy - bdy * cdx);
}

bool incircle_strict(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
    double det = incircle(a, b, c, p);
    double adx = a.x - p.x, ady = a.y - p.y;
    double bdx = b.x - p.x, bdy = b.y - p.y;
    double cdx = c.x - p.x, cdy = c.y - p.y;
    double ad = adx * adx + ady * ady;
    double bd = bdx * bdx + bdy * bdy;
    double cd = cdx * cdx + cdy * cdy;
    double scale = (std::abs(adx) + std::abs(ady)) * (bd + cd) +
                   (std::abs(bdx) + std::abs(bdy)) * (ad + cd) +
                   (std::abs(cdx) + std::abs(cdy)) * (ad + bd);
    return det > kEpsCirc * scale;
}

namespace {

inline double orient(const Vec2& a, const Vec2& b, const Vec2& p) {
    return (b - a).cross(p - a);
}

void bary_raw(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p,
              std::array<double, 3>& out) {
    double area = orient(a, b, c);
    out[0] = orient(p, b, c) / area;
    out[1] = orient(a, p, c) / area;
    out[2] = orient(a, b, p) / area;
}

// Bowyer-Watson state: triangle soup with adjacency and tombstones.
struct Builder {
    std::vector<Vec2> pts;
    std::vector<std::array<int, 3>> tris;
    std::vector<std::array<int, 3>> adj;
    std::vector<uint8_t> dead;
    int last_alive = 0;

    int add_tri(int a, int b, int c) {
        tris.push_back({a, b, c});
        adj.push_back({-1, -1, -1});
        dead.push_back(0);
        return int(tris.size()) - 1;
    }

    // walk to the triangle containing p; -1 never happens on valid state
    int walk(const Vec2& p, int hint) const {
        int t = hint;
        if (t < 0 || t >= int(tris.size()) || dead[t]) t = -1;
        if (t < 0)
            for (int i = int(tris.size()) - 1; i >= 0; --i)
                if (!dead[i]) { t = i; break; }
        size_t steps = 0, cap = tris.size() * 4 + 64;
        while (t >= 0 && steps++ < cap) {
            const auto& tr = tris[t];
            int next = -1;
            for (int e = 0; e < 3; ++e) {
                // edge opposite vertex e is (e+1, e+2)
                const Vec2& u = pts[tr[(e + 1) % 3]];
                const Vec2& v = pts[tr[(e + 2) % 3]];
                if (orient(u, v, p) < 0.0) { next = adj[t][e]; break; }
            }
            if (next < 0) return t;
            t = next;
        }
        // fallback: exhaustive with tolerance
        int best = -1;
        double best_min = -1e300;
        std::array<double, 3> bc;
        for (int i = 0; i < int(tris.size()); ++i) {
            if (dead[i]) continue;
            bary_raw(pts[tris[i][0]], pts[tris[i][1]], pts[tris[i][2]], p, bc);
            double mn = std::min({bc[0], bc[1], bc[2]});
            if (mn > best_min) { best_min = mn; best = i; }
        }
        return best;
    }

    void insert(int pi) {
        const Vec2& p = pts[pi];
        int seed = walk(p, last_alive);
        if (seed < 0) throw NhtError("triangulate: point location failed");
        // collect the cavity of circumcircle violations
        std::vector<int> bad, stack{seed};
        std::set<int> seen{seed};
        while (!stack.empty()) {
            int t = stack.back();
            stack.pop_back();
            bad.push_back(t);
            for (int e = 0; e < 3; ++e) {
                int n = adj[t][e];
                if (n >= 0 && !seen.count(n)) {
                    const auto& nt = tris[n];
                    if (incircle_strict(pts[nt[0]], pts[nt[1]], pts[nt[2]], p)) {
                        seen.insert(n);
                        stack.push_back(n);
                    }
                }
            }
        }
        // cavity boundary: edges of bad triangles whose neighbor is not bad
        std::set<int> bad_set(bad.begin(), bad.end());
        struct Rim { int u, v, outside; };
        std::vector<Rim> rim;
        for (int t : bad) {
            for (int e = 0; e < 3; ++e) {
                int n = adj[t][e];
                if (n < 0 || !bad_set.count(n))
                    rim.push_back({tris[t][(e + 1) % 3], tris[t][(e + 2) % 3], n});
            }
        }
        for (int t : bad) dead[t] = 1;
        // fan from p; link new triangles to outside and to each other
        std::map<std::pair<int, int>, std::pair<int, int>> open_edge;  // (u,v)->(tri,slot)
        for (const Rim& r : rim) {
            if (r.outside < 0) {
                // point exactly on a hull edge: the collinear fan triangle
                // would be degenerate; the spokes become hull edges instead
                double o = orient(pts[r.u], pts[r.v], p);
                double scale = (pts[r.u] - p).norm() * (pts[r.v] - p).norm();
                if (std::abs(o) <= 1e-12 * std::max(scale, 1.0)) continue;
            }
            int nt = add_tri(pi, r.u, r.v);
            adj[nt][0] = r.outside;
            if (r.outside >= 0) {
                for (int e = 0; e < 3; ++e) {
                    int a = tris[r.outside][(e + 1) % 3];
                    int b = tris[r.outside][(e + 2) % 3];
                    if ((a == r.v && b == r.u)) adj[r.outside][e] = nt;
                }
            }
            auto link = [&](int a, int b, int slot) {
                auto it = open_edge.find({b, a});
                if (it != open_edge.end()) {
                    adj[nt][slot] = it->second.first;
                    adj[it->second.first][it->second.second] = nt;
                    open_edge.erase(it);
                } else {
                    open_edge[{a, b}] = {nt, slot};
                }
            };
            link(pi, r.u, 2);  // edge (pi,u) is opposite vertex 2 (v)
            link(r.v, pi, 1);  // edge (v,pi) is opposite vertex 1 (u)
            last_alive = nt;
        }
    }
};

bool on_seg(double v, double lo, double hi) { return v >= lo - 1e-9 && v <= hi + 1e-9; }

VertexKind classify_vertex(const Vec2& p, double w, double h) {
    const double e = 1e-9;
    bool l = std::abs(p.x) <= e, r = std::abs(p.x - w) <= e;
    bool b = std::abs(p.y) <= e, t = std::abs(p.y - h) <= e;
    if ((l || r) && (b || t)) return VertexKind::Corner;
    if (l) return VertexKind::Left;
    if (r) return VertexKind::Right;
    if (b) return VertexKind::Bottom;
    if (t) return VertexKind::Top;
    return VertexKind::Interior;
}

}  // namespace

Locate Mesh::locate_exhaustive(const Vec2& p) const {
    if (!on_seg(p.x, 0, width) || !on_seg(p.y, 0, height))
        throw NhtError("locate: point outside image rectangle");
    std::array<double, 3> bc;
    int best = -1;
    double best_min = -1e300;
    for (int t = 0; t < int(triangles.size()); ++t) {
        const auto& tr = triangles[t];
        bary_raw(positions[tr[0]], positions[tr[1]], positions[tr[2]], p, bc);
        double mn = std::min({bc[0], bc[1], bc[2]});
        if (mn >= -kEpsBary) return {t, bc};
        if (mn > best_min) { best_min = mn; best = t; }
    }
    if (best < 0) throw NhtError("locate: empty mesh");
    // numeric sliver miss; surface the closest triangle as corruption-safe
    const auto& tr = triangles[best];
    bary_raw(positions[tr[0]], positions[tr[1]], positions[tr[2]], p, bc);
    return {best, bc};
}

Locate Mesh::locate(const Vec2& p) const {
    if (!on_seg(p.x, 0, width) || !on_seg(p.y, 0, height))
        throw NhtError("locate: point outside image rectangle");
    int tx = std::clamp(int(p.x / kTileSize), 0, tiles_x - 1);
    int ty = std::clamp(int(p.y / kTileSize), 0, tiles_y - 1);
    const auto& cand = tile_grid[size_t(ty) * tiles_x + tx];
    std::array<double, 3> bc;
    for (int t : cand) {
        const auto& tr = triangles[t];
        bary_raw(positions[tr[0]], positions[tr[1]], positions[tr[2]], p, bc);
        if (std::min({bc[0], bc[1], bc[2]}) >= -kEpsBary) return {t, bc};
    }
    return locate_exhaustive(p);
}

void Mesh::rebuild_tile_grid() {
    tiles_x = std::max(1, int(std::ceil(width / kTileSize)));
    tiles_y = std::max(1, int(std::ceil(height / kTileSize)));
    tile_grid.assign(size_t(tiles_x) * tiles_y, {});
    for (int t = 0; t < int(triangles.size()); ++t) {
        const auto& tr = triangles[t];
        double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
        for (int k = 0; k < 3; ++k) {
            const Vec2& v = positions[tr[k]];
            x0 = std::min(x0, v.x); x1 = std::max(x1, v.x);
            y0 = std::min(y0, v.y); y1 = std::max(y1, v.y);
        }
        int tx0 = std::clamp(int(x0 / kTileSize), 0, tiles_x - 1);
        int tx1 = std::clamp(int(x1 / kTileSize), 0, tiles_x - 1);
        int ty0 = std::clamp(int(y0 / kTileSize), 0, tiles_y - 1);
        int ty1 = std::clamp(int(y1 / kTileSize), 0, tiles_y - 1);
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                tile_grid[size_t(ty) * tiles_x + tx].push_back(t);
    }
}

void Mesh::rebuild_one_ring() {
    one_ring.assign(positions.size(), {});
    for (const auto& tr : triangles)
        for (int k = 0; k < 3; ++k) {
            one_ring[tr[k]].push_back(tr[(k + 1) % 3]);
            one_ring[tr[k]].push_back(tr[(k + 2) % 3]);
        }
    for (auto& ring : one_ring) {
        std::sort(ring.begin(), ring.end());
        ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
    }
}

Mesh triangulate(std::vector<Vec2> positions, double width, double height) {
    size_t n = positions.size();
    if (n < 3) throw NhtError("triangulate: need at least 3 points");
    {
        std::set<std::pair<double, double>> uniq;
        for (const Vec2& p : positions)
            if (!uniq.insert({p.x, p.y}).second)
                throw NhtError("triangulate: coincident points");
    }
    {
        bool noncollinear = false;
        for (size_t i = 2; i < n && !noncollinear; ++i)
            if (std::abs(orient(positions[0], positions[1], positions[i])) > 1e-12)
                noncollinear = true;
        if (!noncollinear) throw NhtError("triangulate: all points collinear");
    }

    // Seed from the four image corners (required by the coverage contract):
    // every other point is interior to the current triangulation, so no
    // super-triangle and no ghost predicates are needed.
    int c_bl = -1, c_br = -1, c_tr = -1, c_tl = -1;
    for (size_t i = 0; i < n; ++i) {
        const Vec2& p = positions[i];
        if (p.x == 0.0 && p.y == 0.0) c_bl = int(i);
        else if (p.x == width && p.y == 0.0) c_br = int(i);
        else if (p.x == width && p.y == height) c_tr = int(i);
        else if (p.x == 0.0 && p.y == height) c_tl = int(i);
    }
    if (c_bl < 0 || c_br < 0 || c_tr < 0 || c_tl < 0)
        throw NhtError("triangulate: the four image corners must be present");
    for (size_t i = 0; i < n; ++i) {
        const Vec2& p = positions[i];
        if (!(p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height))
            throw NhtError("triangulate: point outside the image rectangle");
    }

    Builder b;
    b.pts = positions;
    int t0 = b.add_tri(c_bl, c_br, c_tr);
    int t1 = b.add_tri(c_bl, c_tr, c_tl);
    b.adj[t0][1] = t1;  // edge (tr, bl) shared
    b.adj[t1][2] = t0;  // edge (bl, tr) shared
    for (size_t i = 0; i < n; ++i) {
        if (int(i) == c_bl || int(i) == c_br || int(i) == c_tr || int(i) == c_tl)
            continue;
        b.insert(int(i));
    }

    std::vector<std::array<int, 3>> tris;
    for (size_t t = 0; t < b.tris.size(); ++t)
        if (!b.dead[t]) tris.push_back(b.tris[t]);
    if (tris.empty()) throw NhtError("triangulate: degenerate input");
    return assemble_mesh(std::move(positions), std::move(tris), width, height);
}

Mesh assemble_mesh(std::vector<Vec2> positions,
                   std::vector<std::array<int, 3>> triangles, double width,
                   double height) {
    Mesh mesh;
    mesh.width = width;
    mesh.height = height;
    mesh.positions = std::move(positions);
    mesh.triangles = std::move(triangles);
    for (auto& tr : mesh.triangles)
        if (orient(mesh.positions[tr[0]], mesh.positions[tr[1]],
                   mesh.positions[tr[2]]) < 0.0)
            std::swap(tr[1], tr[2]);

    mesh.neighbors.assign(mesh.triangles.size(), {-1, -1, -1});
    std::map<std::pair<int, int>, std::pair<int, int>> half;  // directed edge -> (tri, slot)
    for (int t = 0; t < int(mesh.triangles.size()); ++t) {
        const auto& tr = mesh.triangles[t];
        for (int e = 0; e < 3; ++e) {
            int u = tr[(e + 1) % 3], v = tr[(e + 2) % 3];
            auto it = half.find({v, u});
            if (it != half.end()) {
                mesh.neighbors[t][e] = it->second.first;
                mesh.neighbors[it->second.first][it->second.second] = t;
            }
            half[{u, v}] = {t, e};
        }
    }

    mesh.kinds.resize(mesh.positions.size());
    for (size_t i = 0; i < mesh.positions.size(); ++i)
        mesh.kinds[i] = classify_vertex(mesh.positions[i], width, height);
    mesh.rebuild_one_ring();
    mesh.rebuild_tile_grid();
    return mesh;
}

Mesh init_edge_aware(const HdrImage& img, int n_init, double floor_frac, Rng& rng) {
    if (n_init < 4) throw NhtError("init_edge_aware: n_init must be >= 4");
    double W = img.width, H = img.height;
    int per_side = std::max(0, int(std::sqrt(double(n_init)) / 2.0) - 1);
    std::vector<Vec2> pts;
    pts.push_back({0, 0});
    pts.push_back({W, 0});
    pts.push_back({W, H});
    pts.push_back({0, H});
    for (int i = 1; i <= per_side; ++i) {
        double fx = W * i / (per_side + 1), fy = H * i / (per_side + 1);
        pts.push_back({fx, 0});
        pts.push_back({fx, H});
        pts.push_back({0, fy});
        pts.push_back({W, fy});
    }
    int interior = n_init - int(pts.size());

    if (interior > 0) {
        // Sobel magnitudes on a downsampled tonemapped copy (max dim 512)
        int stride = std::max(1, (std::max(img.width, img.height) + 511) / 512);
        int dw = std::max(1, img.width / stride), dh = std::max(1, img.height / stride);
        std::vector<double> gray(size_t(dw) * dh, 0.0);
        for (int y = 0; y < dh; ++y)
            for (int x = 0; x < dw; ++x) {
                double acc = 0.0;
                int cnt = 0;
                for (int sy = y * stride; sy < std::min((y + 1) * stride, img.height); ++sy)
                    for (int sx = x * stride; sx < std::min((x + 1) * stride, img.width); ++sx) {
                        double lum = 0.0;
                        for (int c = 0; c < img.channels; ++c)
                            lum += tonemap_sample(img.at(sx, sy, c), img.white_level);
                        acc += lum / img.channels;
                        ++cnt;
                    }
                gray[size_t(y) * dw + x] = acc / std::max(1, cnt);
            }
        std::vector<double> mag(gray.size(), 0.0);
        double mag_sum = 0.0;
        auto g = [&](int x, int y) {
            return gray[size_t(std::clamp(y, 0, dh - 1)) * dw + std::clamp(x, 0, dw - 1)];
        };
        for (int y = 0; y < dh; ++y)
            for (int x = 0; x < dw; ++x) {
                double gx = (g(x + 1, y - 1) + 2 * g(x + 1, y) + g(x + 1, y + 1)) -
                            (g(x - 1, y - 1) + 2 * g(x - 1, y) + g(x - 1, y + 1));
                double gy = (g(x - 1, y + 1) + 2 * g(x, y + 1) + g(x + 1, y + 1)) -
                            (g(x - 1, y - 1) + 2 * g(x, y - 1) + g(x + 1, y - 1));
                mag[size_t(y) * dw + x] = std::sqrt(gx * gx + gy * gy);
            }
        mag_sum = std::accumulate(mag.begin(), mag.end(), 0.0);

        std::vector<double> cdf(mag.size());
        double acc = 0.0;
        double n_cells = double(mag.size());
        for (size_t i = 0; i < mag.size(); ++i) {
            double p = mag_sum > 0.0
                           ? (1.0 - floor_frac) * mag[i] / mag_sum + floor_frac / n_cells
                           : 1.0 / n_cells;
            acc += p;
            cdf[i] = acc;
        }
        for (int k = 0; k < interior; ++k) {
            double u = rng.uniform() * acc;
            size_t cell = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
            cell = std::min(cell, mag.size() - 1);
            double cx = double(cell % dw), cy = double(cell / dw);
            double x = (cx + rng.uniform()) * stride;
            double y = (cy + rng.uniform()) * stride;
            double margin = 1e-3;
            pts.push_back({std::clamp(x, margin, W - margin),
                           std::clamp(y, margin, H - margin)});
        }
    }

    // separate coincident samples deterministically
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = 0; j < i; ++j)
            if ((pts[i] - pts[j]).norm() < 1e-6) {
                pts[i].x = std::clamp(pts[i].x + 1e-3 * double(i % 7 + 1), 0.0, W);
                pts[i].y = std::clamp(pts[i].y + 1e-3 * double(i % 5 + 1), 0.0, H);
            }
    return triangulate(std::move(pts), W, H);
}

bool validate_or_remesh(Mesh& mesh) {
    double W = mesh.width, H = mesh.height;
    bool moved = false;
    for (size_t i = 0; i < mesh.positions.size(); ++i) {
        Vec2& p = mesh.positions[i];
        Vec2 q = p;
        q.x = std::clamp(q.x, 0.0, W);
        q.y = std::clamp(q.y, 0.0, H);
        switch (mesh.kinds[i]) {  // border vertices stay on their border
            case VertexKind::Left: q.x = 0.0; break;
            case VertexKind::Right: q.x = W; break;
            case VertexKind::Bottom: q.y = 0.0; break;
            case VertexKind::Top: q.y = H; break;
            case VertexKind::Corner:
                q.x = q.x * 2.0 < W ? 0.0 : W;
                q.y = q.y * 2.0 < H ? 0.0 : H;
                break;
            default: break;
        }
        if (q.x != p.x || q.y != p.y) { p = q; moved = true; }
    }

    bool degenerate = false;
    for (size_t t = 0; t < mesh.triangles.size() && !degenerate; ++t)
        if (mesh.signed_area(int(t)) <= kEpsArea) degenerate = true;
    // hull edges must lie on the rectangle border, else coverage broke
    for (size_t t = 0; t < mesh.triangles.size() && !degenerate; ++t)
        for (int e = 0; e < 3 && !degenerate; ++e) {
            if (mesh.neighbors[t][e] >= 0) continue;
            const Vec2& u = mesh.positions[mesh.triangles[t][(e + 1) % 3]];
            const Vec2& v = mesh.positions[mesh.triangles[t][(e + 2) % 3]];
            bool same_side =
                (u.x == 0.0 && v.x == 0.0) || (u.x == W && v.x == W) ||
                (u.y == 0.0 && v.y == 0.0) || (u.y == H && v.y == H);
            if (!same_side) degenerate = true;
        }

    if (!degenerate) {
        if (moved) mesh.rebuild_tile_grid();
        return false;
    }

    // separate coincident vertices before rebuilding
    for (size_t i = 0; i < mesh.positions.size(); ++i)
        for (size_t j = 0; j < i; ++j)
            if ((mesh.positions[i] - mesh.positions[j]).norm() < 1e-6) {
                Vec2& p = mesh.positions[i];
                p.x = std::clamp(p.x + 1e-3 * double(i % 7 + 1), 0.0, W);
                p.y = std::clamp(p.y + 1e-3 * double(i % 5 + 1), 0.0, H);
                if (mesh.kinds[i] == VertexKind::Left) p.x = 0.0;
                if (mesh.kinds[i] == VertexKind::Right) p.x = W;
                if (mesh.kinds[i] == VertexKind::Bottom) p.y = 0.0;
                if (mesh.kinds[i] == VertexKind::Top) p.y = H;
            }
    Mesh rebuilt = triangulate(mesh.positions, W, H);
    rebuilt.kinds = mesh.kinds;  // keep slide constraints stable across repairs
    mesh = std::move(rebuilt);
    return true;
}

}  // namespace nht
