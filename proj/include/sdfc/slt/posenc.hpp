#pragma once

#include "sdfc/core/vec3.hpp"
#include "sdfc/nn/tensor.hpp"

namespace sdfc::slt {

/// Sinusoidal 3D positional encoding: for each axis coordinate c in [-1,1],
/// sin and cos at frequencies pi * 2^0 .. pi * 2^7, giving 16 values per axis
/// and 48 total. The sin/cos pair at the base frequency already separates all
/// patch centers of a 4^3 grid.
inline constexpr int kPosEncDim = 48;
inline constexpr int kPosEncOctaves = 8;

inline void positional_encoding(const Vec3& center, float* out) {
    constexpr double kPi = 3.14159265358979323846;
    int at = 0;
    for (int axis = 0; axis < 3; ++axis) {
        const double c = center[axis];
        double freq = kPi;
        for (int o = 0; o < kPosEncOctaves; ++o, freq *= 2.0) {
            out[at++] = static_cast<float>(std::sin(freq * c));
            out[at++] = static_cast<float>(std::cos(freq * c));
        }
    }
}

/// [N, 48] encoding matrix for a list of patch centers.
inline nn::Tensor positional_encoding_matrix(const std::vector<Vec3>& positions) {
    nn::Tensor t({static_cast<int>(positions.size()), kPosEncDim});
    for (std::size_t i = 0; i < positions.size(); ++i)
        positional_encoding(positions[i], t.data() + i * kPosEncDim);
    return t;
}

}  // namespace sdfc::slt
