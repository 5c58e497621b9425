#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "sdfc/geometry/bvh.hpp"
#include "sdfc/geometry/sdf_grid.hpp"

namespace sdfc {

/// Signed-distance evaluator for a watertight mesh. Magnitude is the exact
/// distance to the nearest triangle (BVH accelerated); the sign comes from
/// parity ray casting with majority voting.
///
/// Three fixed, non-axis-aligned primary directions are cast first. If their
/// votes disagree, a second fixed set of three is cast as a tie break; if that
/// set also disagrees internally, the input is treated as non-watertight and
/// SignAmbiguous is thrown.
class SignedDistanceField {
public:
    explicit SignedDistanceField(const TriangleMesh& mesh) : mesh_(&mesh), bvh_(mesh) {}

    const TriangleMesh& mesh() const { return *mesh_; }
    const TriangleBvh& bvh() const { return bvh_; }

    double operator()(const Vec3& p) const {
        const double d = bvh_.closest(p);
        return inside(p) ? -d : d;
    }

    double distance(const Vec3& p) const { return bvh_.closest(p); }

    bool inside(const Vec3& p) const {
        static const Vec3 primary[3] = {
            normalized({0.57315, 0.61713, 0.53924}),
            normalized({-0.29804, 0.83102, -0.47009}),
            normalized({0.14533, -0.40725, 0.90169}),
        };
        static const Vec3 tiebreak[3] = {
            normalized({0.81631, -0.23411, 0.52809}),
            normalized({-0.51327, -0.63554, -0.57670}),
            normalized({-0.11717, 0.96381, 0.23946}),
        };

        int in_votes = 0;
        for (const Vec3& dir : primary)
            in_votes += bvh_.count_crossings(p, dir) & 1;
        if (in_votes == 0 || in_votes == 3) return in_votes == 3;

        int tb_votes = 0;
        for (const Vec3& dir : tiebreak)
            tb_votes += bvh_.count_crossings(p, dir) & 1;
        if (tb_votes == 0 || tb_votes == 3) return tb_votes == 3;

        throw SignAmbiguous("inside/outside test inconclusive at (" + std::to_string(p.x) + ", " +
                            std::to_string(p.y) + ", " + std::to_string(p.z) +
                            "); mesh is likely not watertight");
    }

private:
    const TriangleMesh* mesh_;
    TriangleBvh bvh_;
};

inline double signed_distance(const TriangleMesh& mesh, const Vec3& p) {
    return SignedDistanceField(mesh)(p);
}

/// Samples the SDF of a normalized watertight mesh on a cell-centered grid.
/// Resolution must be divisible by 32 (the patching granularity).
inline SdfGrid sample_sdf_grid(const TriangleMesh& mesh, int resolution) {
    if (resolution <= 0 || resolution % 32 != 0)
        throw UsageError("sample_sdf_grid: resolution must be a positive multiple of 32, got " +
                         std::to_string(resolution));
    if (mesh.empty()) throw DegenerateMesh("sample_sdf_grid: empty mesh");

    const SignedDistanceField sdf(mesh);
    SdfGrid grid(resolution);
    const int r = resolution;
    const std::int64_t total = static_cast<std::int64_t>(r) * r * r;

    // Cells are independent, so any parallel order produces identical output.
    // Exceptions cannot leave an OpenMP region; remember the lowest offending
    // cell index instead and rethrow afterwards (deterministic across thread
    // counts).
    std::int64_t first_ambiguous = total;
#pragma omp parallel for schedule(static) reduction(min : first_ambiguous)
    for (std::int64_t i = 0; i < total; ++i) {
        const int x = static_cast<int>(i % r);
        const int y = static_cast<int>((i / r) % r);
        const int z = static_cast<int>(i / (static_cast<std::int64_t>(r) * r));
        try {
            grid.values[i] = static_cast<float>(sdf(grid.position(x, y, z)));
        } catch (const SignAmbiguous&) {
            first_ambiguous = std::min(first_ambiguous, i);
        }
    }
    if (first_ambiguous < total) {
        const std::int64_t i = first_ambiguous;
        throw SignAmbiguous("sample_sdf_grid: ambiguous sign at sample index " + std::to_string(i) +
                            " (x=" + std::to_string(i % r) + " y=" + std::to_string((i / r) % r) +
                            " z=" + std::to_string(i / (static_cast<std::int64_t>(r) * r)) + ")");
    }
    return grid;
}

}  // namespace sdfc
