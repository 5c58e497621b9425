#pragma once

#include <cstdint>
#include <vector>

#include "sdfc/core/error.hpp"
#include "sdfc/core/vec3.hpp"

namespace sdfc {

/// Dense signed-distance samples over the fixed domain [-1,1]^3.
///
/// Samples are cell-centered: the world coordinate of index i along an axis is
/// -1 + (i + 0.5) * (2 / R). Storage is x-fastest: value(x,y,z) lives at
/// x + R*(y + R*z).
struct SdfGrid {
    int resolution = 0;
    std::vector<float> values;

    SdfGrid() = default;
    explicit SdfGrid(int res) : resolution(res) {
        values.assign(static_cast<std::size_t>(res) * res * res, 0.0f);
    }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(resolution) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(resolution) * z);
    }

    float at(int x, int y, int z) const { return values[index(x, y, z)]; }
    float& at(int x, int y, int z) { return values[index(x, y, z)]; }

    double cell_size() const { return 2.0 / resolution; }

    /// World coordinate of sample index i along one axis.
    double coord(int i) const { return -1.0 + (i + 0.5) * cell_size(); }

    Vec3 position(int x, int y, int z) const { return {coord(x), coord(y), coord(z)}; }

    bool operator==(const SdfGrid& o) const {
        return resolution == o.resolution && values == o.values;
    }
};

}  // namespace sdfc
