#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "nht/common.hpp"
#include "nht/image.hpp"

namespace nht {

constexpr double kEpsArea = 1e-6;   // px^2, minimum usable triangle area
constexpr double kEpsCirc = 1e-9;   // relative in-circumcircle tolerance
constexpr double kEpsBary = 1e-7;   // containment slack on barycentrics
constexpr int kTileSize = 16;       // px, locate acceleration grid

enum class VertexKind : uint8_t {
    Interior = 0,
    Left, Right, Bottom, Top,  // slides along one image border
    Corner,                    // frozen
};

struct Locate {
    int triangle = -1;
    std::array<double, 3> bary{};
};

// Delaunay triangulation covering [0,width]x[0,height]. Triangles are CCW.
struct Mesh {
    double width = 0.0, height = 0.0;
    std::vector<Vec2> positions;
    std::vector<std::array<int, 3>> triangles;
    std::vector<std::array<int, 3>> neighbors;  // across edge opposite vertex k; -1 = hull
    std::vector<std::vector<int>> one_ring;     // sorted vertex ids
    std::vector<VertexKind> kinds;

    // tile -> ascending triangle ids whose bbox overlaps the tile
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<int>> tile_grid;

    size_t vertex_count() const { return positions.size(); }
    size_t triangle_count() const { return triangles.size(); }

    double signed_area(int t) const {
        const auto& tri = triangles[t];
        Vec2 a = positions[tri[0]], b = positions[tri[1]], c = positions[tri[2]];
        return 0.5 * (b - a).cross(c - a);
    }

    // Containing triangle + barycentrics (lowest triangle id on ties).
    // Throws if p is outside the image rectangle.
    Locate locate(const Vec2& p) const;
    // Same contract without the tile grid; used to validate the grid.
    Locate locate_exhaustive(const Vec2& p) const;

    void rebuild_tile_grid();
    void rebuild_one_ring();
};

// Delaunay triangulation of the given points (empty-circumcircle up to
// kEpsCirc; co-circular quads keep whichever diagonal insertion produced).
// Vertex order is preserved. Throws if all points are collinear.
Mesh triangulate(std::vector<Vec2> positions, double width, double height);

// Builds adjacency, one-rings, vertex kinds and the tile grid for an
// explicit triangle list (triangles are reoriented CCW).
Mesh assemble_mesh(std::vector<Vec2> positions,
                   std::vector<std::array<int, 3>> triangles, double width,
                   double height);

// Sobel-magnitude importance sampling plus uniform floor; corners and evenly
// spaced border vertices are always included. floor_frac = 1 degenerates to
// uniform sampling.
Mesh init_edge_aware(const HdrImage& img, int n_init, double floor_frac, Rng& rng);

// Repairs degenerate or out-of-domain meshes in place: clamps positions to
// the rectangle, projects border vertices back onto their border, separates
// coincident vertices and re-triangulates when any triangle area falls under
// kEpsArea or the hull no longer matches the rectangle. Returns true if the
// topology was rebuilt.
bool validate_or_remesh(Mesh& mesh);

// > 0 when p lies strictly inside the circumcircle of CCW triangle (a,b,c),
// with a relative kEpsCirc dead zone treated as "on circle".
double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p);
bool incircle_strict(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p);

}  // namespace nht
