#pragma once

#include <array>
#include <string>
#include <vector>

#include "sdfc/core/error.hpp"
#include "sdfc/core/rng.hpp"

namespace sdfc::slt {

/// Known/masked assignment over the G^3 patch slots (i-fastest slot order).
struct MaskSpec {
    std::vector<bool> masked;

    int count() const {
        int m = 0;
        for (bool b : masked) m += b ? 1 : 0;
        return m;
    }
    int size() const { return static_cast<int>(masked.size()); }
};

enum class MaskStrategy { Random, Octant, Half, Slice };

inline const char* strategy_name(MaskStrategy s) {
    switch (s) {
        case MaskStrategy::Random: return "random";
        case MaskStrategy::Octant: return "octant";
        case MaskStrategy::Half: return "half";
        case MaskStrategy::Slice: return "slice";
    }
    return "?";
}

/// Builds a training mask over a grid_dim^3 slot cube.
///  - Random: every slot masked independently with probability `random_rate`.
///  - Octant: one of the 8 octants is kept, all others masked (M = 56 on 4^3).
///  - Half:   one of the 6 axis-aligned halves is masked (M = 32).
///  - Slice:  one of the 3*G unit-thickness slices is kept (M = 48).
inline MaskSpec make_mask(MaskStrategy strategy, Rng& rng, int grid_dim = 4,
                          double random_rate = 0.4) {
    const int g = grid_dim;
    const int n = g * g * g;
    MaskSpec spec;
    spec.masked.assign(n, false);
    auto slot = [g](int i, int j, int k) { return i + g * (j + g * k); };

    switch (strategy) {
        case MaskStrategy::Random: {
            for (int s = 0; s < n; ++s) spec.masked[s] = rng.uniform() < random_rate;
            break;
        }
        case MaskStrategy::Octant: {
            const int oct = static_cast<int>(rng.uniform_index(8));
            const int oi = oct & 1, oj = (oct >> 1) & 1, ok = (oct >> 2) & 1;
            const int h = g / 2;
            for (int k = 0; k < g; ++k)
                for (int j = 0; j < g; ++j)
                    for (int i = 0; i < g; ++i) {
                        const bool keep = (i / h == oi) && (j / h == oj) && (k / h == ok);
                        spec.masked[slot(i, j, k)] = !keep;
                    }
            break;
        }
        case MaskStrategy::Half: {
            const int pick = static_cast<int>(rng.uniform_index(6));
            const int axis = pick / 2, side = pick % 2;
            const int h = g / 2;
            for (int k = 0; k < g; ++k)
                for (int j = 0; j < g; ++j)
                    for (int i = 0; i < g; ++i) {
                        const int c = axis == 0 ? i : (axis == 1 ? j : k);
                        spec.masked[slot(i, j, k)] = (c / h) == side;
                    }
            break;
        }
        case MaskStrategy::Slice: {
            const int pick = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(3 * g)));
            const int axis = pick / g, pos = pick % g;
            for (int k = 0; k < g; ++k)
                for (int j = 0; j < g; ++j)
                    for (int i = 0; i < g; ++i) {
                        const int c = axis == 0 ? i : (axis == 1 ? j : k);
                        spec.masked[slot(i, j, k)] = c != pos;
                    }
            break;
        }
    }
    return spec;
}

/// Strategy mix from the training recipe: random 35%, the other three 21.7%
/// each; the weights (which total 100.1%) are normalized.
inline MaskStrategy sample_strategy(Rng& rng) {
    static constexpr std::array<double, 4> kWeights = {0.35, 0.217, 0.217, 0.217};
    static const double kTotal = kWeights[0] + kWeights[1] + kWeights[2] + kWeights[3];
    const double r = rng.uniform() * kTotal;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < kWeights.size(); ++i) {
        acc += kWeights[i];
        if (r < acc) return static_cast<MaskStrategy>(i);
    }
    return MaskStrategy::Slice;
}

}  // namespace sdfc::slt
