#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "sdfc/core/rng.hpp"
#include "sdfc/geometry/signed_distance.hpp"

namespace sdfc {

constexpr int kPatchRes = 32;  // samples per axis in one patch

/// A 32^3 block of SDF samples together with its placement in world space.
/// Samples inside the patch are cell-centered over the cube of side `side`
/// around `center`, x-fastest like SdfGrid.
struct Patch {
    std::vector<float> values;  // 32^3 floats
    double side = 0.0;
    Vec3 center;

    Patch() = default;
    Patch(double side_, const Vec3& center_)
        : values(static_cast<std::size_t>(kPatchRes) * kPatchRes * kPatchRes, 0.0f),
          side(side_),
          center(center_) {}

    static std::size_t value_count() {
        return static_cast<std::size_t>(kPatchRes) * kPatchRes * kPatchRes;
    }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(kPatchRes) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(kPatchRes) * z);
    }

    float at(int x, int y, int z) const { return values[index(x, y, z)]; }
    float& at(int x, int y, int z) { return values[index(x, y, z)]; }

    /// World position of sample (x, y, z).
    Vec3 position(int x, int y, int z) const {
        const double step = side / kPatchRes;
        const double half = side / 2.0;
        return {center.x - half + (x + 0.5) * step,
                center.y - half + (y + 0.5) * step,
                center.z - half + (z + 0.5) * step};
    }
};

/// The G x G x G arrangement of patches covering a full grid (G = R/32, so 64
/// patches for R = 128). Slots may be empty while a shape is only partially
/// known. Slot order is i-fastest: slot(i,j,k) = i + G*(j + G*k).
struct PatchGrid {
    int grid_dim = 0;          // G
    int parent_resolution = 0; // R
    std::vector<std::optional<Patch>> slots;

    PatchGrid() = default;
    PatchGrid(int grid_dim_, int parent_resolution_)
        : grid_dim(grid_dim_),
          parent_resolution(parent_resolution_),
          slots(static_cast<std::size_t>(grid_dim_) * grid_dim_ * grid_dim_) {}

    int slot_count() const { return grid_dim * grid_dim * grid_dim; }

    std::size_t slot_index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(grid_dim) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(grid_dim) * k);
    }

    double patch_side() const { return 2.0 * kPatchRes / parent_resolution; }

    /// World-space center of slot (i, j, k).
    Vec3 slot_center(int i, int j, int k) const {
        const double side = patch_side();
        return {-1.0 + (i + 0.5) * side, -1.0 + (j + 0.5) * side, -1.0 + (k + 0.5) * side};
    }

    int known_count() const {
        int n = 0;
        for (const auto& s : slots) n += s.has_value() ? 1 : 0;
        return n;
    }
};

/// Splits a grid into disjoint 32^3 patches. Patch (i,j,k) covers the voxel
/// block [32i,32i+32) x [32j,32j+32) x [32k,32k+32).
inline PatchGrid partition(const SdfGrid& grid) {
    if (grid.resolution <= 0 || grid.resolution % kPatchRes != 0)
        throw UsageError("partition: resolution must be a positive multiple of 32");
    const int g = grid.resolution / kPatchRes;
    PatchGrid pg(g, grid.resolution);
    for (int k = 0; k < g; ++k) {
        for (int j = 0; j < g; ++j) {
            for (int i = 0; i < g; ++i) {
                Patch patch(pg.patch_side(), pg.slot_center(i, j, k));
                for (int z = 0; z < kPatchRes; ++z)
                    for (int y = 0; y < kPatchRes; ++y)
                        for (int x = 0; x < kPatchRes; ++x)
                            patch.at(x, y, z) =
                                grid.at(i * kPatchRes + x, j * kPatchRes + y, k * kPatchRes + z);
                pg.slots[pg.slot_index(i, j, k)] = std::move(patch);
            }
        }
    }
    return pg;
}

/// Exact inverse of partition. Throws MissingPatch naming the first empty slot.
inline SdfGrid assemble(const PatchGrid& patches) {
    const int g = patches.grid_dim;
    SdfGrid grid(patches.parent_resolution);
    for (int k = 0; k < g; ++k) {
        for (int j = 0; j < g; ++j) {
            for (int i = 0; i < g; ++i) {
                const auto& slot = patches.slots[patches.slot_index(i, j, k)];
                if (!slot)
                    throw MissingPatch("assemble: missing patch (" + std::to_string(i) + ", " +
                                       std::to_string(j) + ", " + std::to_string(k) + ")");
                for (int z = 0; z < kPatchRes; ++z)
                    for (int y = 0; y < kPatchRes; ++y)
                        for (int x = 0; x < kPatchRes; ++x)
                            grid.at(i * kPatchRes + x, j * kPatchRes + y, k * kPatchRes + z) =
                                slot->at(x, y, z);
            }
        }
    }
    return grid;
}

/// Randomized placement of one training patch: an area-uniform surface point,
/// a side length d ~ U[0.1, 1], and a center offset ~ N(0, (d/3)^2) per axis.
struct PatchSampleSpec {
    Vec3 surface_point;
    Vec3 center;
    double side = 0.0;
    std::uint64_t seed = 0;  // reproduces this draw
};

/// Cumulative face-area table for area-weighted surface sampling.
class SurfaceSampler {
public:
    explicit SurfaceSampler(const TriangleMesh& mesh) : mesh_(&mesh) {
        cumulative_.reserve(mesh.faces.size());
        double total = 0.0;
        for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            total += mesh.face_area(f);
            cumulative_.push_back(total);
        }
        if (total <= 0.0) throw EmptyMesh("SurfaceSampler: mesh has no area");
    }

    Vec3 sample_point(Rng& rng, std::uint32_t* face_out = nullptr) const {
        const double r0 = rng.uniform() * cumulative_.back();
        const std::size_t f =
            std::lower_bound(cumulative_.begin(), cumulative_.end(), r0) - cumulative_.begin();
        const std::size_t face = std::min(f, cumulative_.size() - 1);
        const double r1 = rng.uniform(), r2 = rng.uniform();
        const double s = std::sqrt(r1);
        const Vec3 a = mesh_->face_vertex(face, 0);
        const Vec3 b = mesh_->face_vertex(face, 1);
        const Vec3 c = mesh_->face_vertex(face, 2);
        if (face_out) *face_out = static_cast<std::uint32_t>(face);
        return a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
    }

private:
    const TriangleMesh* mesh_;
    std::vector<double> cumulative_;
};

inline PatchSampleSpec draw_patch_spec(const SurfaceSampler& sampler, Rng& rng) {
    PatchSampleSpec spec;
    spec.surface_point = sampler.sample_point(rng);
    spec.side = rng.uniform(0.1, 1.0);
    const double sigma = spec.side / 3.0;
    spec.center = spec.surface_point +
                  Vec3{rng.normal(0.0, sigma), rng.normal(0.0, sigma), rng.normal(0.0, sigma)};
    return spec;
}

/// Fills a 32^3 patch at the location from `spec` with values from `sdf`.
inline Patch fill_patch(const PatchSampleSpec& spec, const std::function<double(const Vec3&)>& sdf) {
    Patch patch(spec.side, spec.center);
    for (int z = 0; z < kPatchRes; ++z)
        for (int y = 0; y < kPatchRes; ++y)
            for (int x = 0; x < kPatchRes; ++x)
                patch.at(x, y, z) = static_cast<float>(sdf(patch.position(x, y, z)));
    return patch;
}

/// Draws one randomized training patch from a normalized watertight mesh.
inline std::pair<PatchSampleSpec, Patch> extract_training_patch(const SignedDistanceField& sdf,
                                                                const SurfaceSampler& sampler,
                                                                Rng& rng) {
    PatchSampleSpec spec = draw_patch_spec(sampler, rng);
    Patch patch = fill_patch(spec, [&](const Vec3& p) { return sdf(p); });
    return {spec, std::move(patch)};
}

inline std::pair<PatchSampleSpec, Patch> extract_training_patch(const TriangleMesh& mesh, Rng& rng) {
    const SignedDistanceField sdf(mesh);
    const SurfaceSampler sampler(mesh);
    return extract_training_patch(sdf, sampler, rng);
}

}  // namespace sdfc
