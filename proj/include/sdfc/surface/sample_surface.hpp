#pragma once

#include "sdfc/core/rng.hpp"
#include "sdfc/geometry/patch.hpp"

namespace sdfc {

/// Point cloud sampled uniformly by area from a mesh, with the geometric
/// normal of the generating face attached to every point.
struct SampledSurface {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;

    std::size_t size() const { return points.size(); }
};

/// Draws n area-uniform samples. Per-point normals are the (unit) face
/// normals. Seeded through `rng`; n = 0 yields an empty sample set.
inline SampledSurface sample_surface(const TriangleMesh& mesh, std::size_t n, Rng& rng) {
    if (mesh.empty()) throw EmptyMesh("sample_surface: empty mesh");
    SampledSurface out;
    out.points.reserve(n);
    out.normals.reserve(n);

    const SurfaceSampler sampler(mesh);
    // Face normals are reused heavily; precompute.
    std::vector<Vec3> face_normals(mesh.faces.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) face_normals[f] = mesh.face_normal(f);

    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t face = 0;
        out.points.push_back(sampler.sample_point(rng, &face));
        out.normals.push_back(face_normals[face]);
    }
    return out;
}

}  // namespace sdfc
