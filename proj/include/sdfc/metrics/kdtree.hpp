#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "sdfc/core/error.hpp"
#include "sdfc/core/vec3.hpp"

namespace sdfc {

/// Nearest-neighbor result. Ties on distance are broken by the lowest point
/// index so that the KD path and the brute-force path agree exactly.
struct Nearest {
    std::uint32_t index = 0;
    double dist2 = std::numeric_limits<double>::infinity();
};

inline double point_dist2(const Vec3& a, const Vec3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

/// Static KD-tree over 3D points. `brute_force` switches every query to the
/// O(n) scan, which serves as the oracle the tree is tested against.
class KdTree {
public:
    explicit KdTree(const std::vector<Vec3>& points, bool brute_force = false)
        : points_(&points), brute_(brute_force) {
        if (points.empty()) throw EmptySet("KdTree: empty point set");
        order_.resize(points.size());
        std::iota(order_.begin(), order_.end(), std::uint32_t{0});
        if (!brute_) {
            nodes_.reserve(2 * points.size() / kLeafSize + 2);
            nodes_.emplace_back();
            build(0, 0, points.size());
        }
    }

    Nearest nearest(const Vec3& q) const {
        Nearest best;
        if (brute_) {
            for (std::uint32_t i = 0; i < points_->size(); ++i)
                consider(q, i, best);
            return best;
        }
        search(0, q, best);
        return best;
    }

private:
    static constexpr std::size_t kLeafSize = 16;

    struct Node {
        Aabb bounds;
        std::uint32_t first = 0;
        std::uint32_t count = 0;  // > 0 for leaves
    };

    void consider(const Vec3& q, std::uint32_t i, Nearest& best) const {
        const double d2 = point_dist2(q, (*points_)[i]);
        if (d2 < best.dist2 || (d2 == best.dist2 && i < best.index)) {
            best.dist2 = d2;
            best.index = i;
        }
    }

    void build(std::uint32_t node_id, std::size_t begin, std::size_t end) {
        Aabb bounds;
        for (std::size_t i = begin; i < end; ++i) bounds.extend((*points_)[order_[i]]);
        nodes_[node_id].bounds = bounds;
        if (end - begin <= kLeafSize) {
            nodes_[node_id].first = static_cast<std::uint32_t>(begin);
            nodes_[node_id].count = static_cast<std::uint32_t>(end - begin);
            return;
        }
        const Vec3 ext = bounds.extent();
        int axis = 0;
        if (ext.y > ext.x) axis = 1;
        if (ext.z > ext[axis]) axis = 2;
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) {
                             const double ca = (*points_)[a][axis], cb = (*points_)[b][axis];
                             if (ca != cb) return ca < cb;
                             return a < b;
                         });
        const std::uint32_t left = static_cast<std::uint32_t>(nodes_.size());
        nodes_.emplace_back();
        nodes_.emplace_back();
        nodes_[node_id].first = left;
        nodes_[node_id].count = 0;
        build(left, begin, mid);
        build(left + 1, mid, end);
    }

    void search(std::uint32_t node_id, const Vec3& q, Nearest& best) const {
        const Node& node = nodes_[node_id];
        if (node.bounds.dist2(q) > best.dist2) return;
        if (node.count > 0) {
            // Visit leaf entries in index order for deterministic tie-breaks.
            std::uint32_t idx[kLeafSize];
            for (std::uint32_t i = 0; i < node.count; ++i) idx[i] = order_[node.first + i];
            std::sort(idx, idx + node.count);
            for (std::uint32_t i = 0; i < node.count; ++i) consider(q, idx[i], best);
            return;
        }
        const std::uint32_t l = node.first, r = node.first + 1;
        const double dl = nodes_[l].bounds.dist2(q), dr = nodes_[r].bounds.dist2(q);
        if (dl <= dr) {
            search(l, q, best);
            search(r, q, best);
        } else {
            search(r, q, best);
            search(l, q, best);
        }
    }

    const std::vector<Vec3>* points_;
    bool brute_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

}  // namespace sdfc
