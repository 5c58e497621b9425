#pragma once

#include <unordered_map>

#include "sdfc/geometry/mesh.hpp"
#include "sdfc/geometry/sdf_grid.hpp"
#include "sdfc/surface/mc_tables.hpp"

namespace sdfc {

/// Extracts the iso-surface of a sampled SDF as a triangle mesh.
///
/// Cells are the cubes between adjacent cell-centered samples ((R-1)^3 of
/// them); crossing positions are linearly interpolated along cell edges.
/// Vertices are shared between cells through a global edge map, so the output
/// is watertight wherever the sign field is consistent. A grid without any
/// sign change yields an empty mesh. Cells are processed in index order, so
/// the output ordering is deterministic.
inline TriangleMesh marching_cubes(const SdfGrid& grid, float iso = 0.0f) {
    const int r = grid.resolution;
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> faces;
    if (r < 2) return TriangleMesh(std::move(vertices), std::move(faces));

    // Global edge id: owning sample index * 3 + axis.
    std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;

    // Corner offsets in the standard cube ordering.
    static constexpr int kCorner[8][3] = {
        {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
        {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
    };
    // Cube edges as corner pairs.
    static constexpr int kEdge[12][2] = {
        {0, 1}, {1, 2}, {2, 3}, {3, 0},
        {4, 5}, {5, 6}, {6, 7}, {7, 4},
        {0, 4}, {1, 5}, {2, 6}, {3, 7},
    };

    auto sample_id = [r](int x, int y, int z) {
        return static_cast<std::uint64_t>(x) +
               static_cast<std::uint64_t>(r) * (static_cast<std::uint64_t>(y) + static_cast<std::uint64_t>(r) * z);
    };

    float corner_val[8];
    Vec3 corner_pos[8];
    int corner_xyz[8][3];

    for (int z = 0; z + 1 < r; ++z) {
        for (int y = 0; y + 1 < r; ++y) {
            for (int x = 0; x + 1 < r; ++x) {
                int cube_index = 0;
                for (int c = 0; c < 8; ++c) {
                    const int cx = x + kCorner[c][0];
                    const int cy = y + kCorner[c][1];
                    const int cz = z + kCorner[c][2];
                    corner_xyz[c][0] = cx;
                    corner_xyz[c][1] = cy;
                    corner_xyz[c][2] = cz;
                    corner_val[c] = grid.at(cx, cy, cz);
                    corner_pos[c] = grid.position(cx, cy, cz);
                    if (corner_val[c] < iso) cube_index |= 1 << c;
                }
                const std::uint16_t edges = mc::kEdgeTable[cube_index];
                if (edges == 0) continue;

                std::uint32_t edge_vert_id[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(edges & (1u << e))) continue;
                    const int a = kEdge[e][0], b = kEdge[e][1];
                    // Canonical owner: the lower-indexed sample + the axis the
                    // edge runs along.
                    int axis = 0;
                    for (int d = 0; d < 3; ++d)
                        if (corner_xyz[a][d] != corner_xyz[b][d]) axis = d;
                    const bool a_low = corner_xyz[a][axis] < corner_xyz[b][axis];
                    const int lo = a_low ? a : b;
                    const std::uint64_t key =
                        sample_id(corner_xyz[lo][0], corner_xyz[lo][1], corner_xyz[lo][2]) * 3 + axis;

                    auto it = edge_vertex.find(key);
                    if (it != edge_vertex.end()) {
                        edge_vert_id[e] = it->second;
                        continue;
                    }
                    const double va = corner_val[a], vb = corner_val[b];
                    double t = 0.5;
                    if (std::abs(vb - va) > 1e-30) t = (iso - va) / (vb - va);
                    t = std::clamp(t, 0.0, 1.0);
                    const Vec3 p = corner_pos[a] + (corner_pos[b] - corner_pos[a]) * t;
                    const std::uint32_t id = static_cast<std::uint32_t>(vertices.size());
                    vertices.push_back(p);
                    edge_vertex.emplace(key, id);
                    edge_vert_id[e] = id;
                }

                const std::int8_t* tri = mc::kTriTable[cube_index];
                for (int t = 0; tri[t] != -1; t += 3) {
                    // Table winding faces inward for "inside = below iso";
                    // swap to make normals point towards positive SDF.
                    faces.push_back({edge_vert_id[tri[t]], edge_vert_id[tri[t + 2]],
                                     edge_vert_id[tri[t + 1]]});
                }
            }
        }
    }
    return TriangleMesh(std::move(vertices), std::move(faces));
}

}  // namespace sdfc
