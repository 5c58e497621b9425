#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "sdfc/geometry/mesh.hpp"

namespace sdfc {

/// Closest point on triangle (a, b, c) to p. Ericson, Real-Time Collision
/// Detection, 5.1.5.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));

    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

/// Moller-Trumbore. Returns t >= 0 on hit (strictly positive hits only).
inline bool ray_triangle(const Vec3& orig, const Vec3& dir,
                         const Vec3& a, const Vec3& b, const Vec3& c, double& t_out) {
    constexpr double kEps = 1e-12;
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 pv = cross(dir, e2);
    const double det = dot(e1, pv);
    if (std::abs(det) < kEps) return false;
    const double inv = 1.0 / det;
    const Vec3 tv = orig - a;
    const double u = dot(tv, pv) * inv;
    if (u < 0.0 || u > 1.0) return false;
    const Vec3 qv = cross(tv, e1);
    const double v = dot(dir, qv) * inv;
    if (v < 0.0 || u + v > 1.0) return false;
    const double t = dot(e2, qv) * inv;
    if (t <= kEps) return false;
    t_out = t;
    return true;
}

/// Median-split AABB tree over mesh triangles. Supports closest-triangle
/// queries and ray crossing counts (used for inside/outside parity voting).
class TriangleBvh {
public:
    TriangleBvh() = default;

    explicit TriangleBvh(const TriangleMesh& mesh) : mesh_(&mesh) {
        const std::size_t n = mesh.faces.size();
        tri_index_.resize(n);
        std::iota(tri_index_.begin(), tri_index_.end(), std::uint32_t{0});
        centroids_.resize(n);
        tri_bounds_.resize(n);
        for (std::size_t f = 0; f < n; ++f) {
            Aabb b;
            b.extend(mesh.face_vertex(f, 0));
            b.extend(mesh.face_vertex(f, 1));
            b.extend(mesh.face_vertex(f, 2));
            tri_bounds_[f] = b;
            centroids_[f] = b.center();
        }
        if (n > 0) {
            nodes_.reserve(2 * n);
            nodes_.emplace_back();
            build_into(0, 0, n);
        }
    }

    bool valid() const { return mesh_ != nullptr && !nodes_.empty(); }

    /// Distance to the nearest triangle plus the closest surface point.
    double closest(const Vec3& p, Vec3* point_out = nullptr, std::uint32_t* face_out = nullptr) const {
        double best = std::numeric_limits<double>::infinity();
        Vec3 best_point;
        std::uint32_t best_face = 0;
        std::uint32_t stack[64];
        int top = 0;
        stack[top++] = 0;
        while (top > 0) {
            const Node& node = nodes_[stack[--top]];
            if (node.bounds.dist2(p) >= best * best) continue;
            if (node.count > 0) {
                for (std::uint32_t i = 0; i < node.count; ++i) {
                    const std::uint32_t f = tri_index_[node.first + i];
                    const Vec3 q = closest_point_on_triangle(
                        p, mesh_->face_vertex(f, 0), mesh_->face_vertex(f, 1), mesh_->face_vertex(f, 2));
                    const double d = norm(q - p);
                    if (d < best) {
                        best = d;
                        best_point = q;
                        best_face = f;
                    }
                }
            } else {
                // visit the closer child first
                const std::uint32_t l = node.first, r = node.first + 1;
                const double dl = nodes_[l].bounds.dist2(p), dr = nodes_[r].bounds.dist2(p);
                if (dl < dr) {
                    stack[top++] = r;
                    stack[top++] = l;
                } else {
                    stack[top++] = l;
                    stack[top++] = r;
                }
            }
        }
        if (point_out) *point_out = best_point;
        if (face_out) *face_out = best_face;
        return best;
    }

    /// Number of strictly-positive ray/triangle crossings.
    int count_crossings(const Vec3& orig, const Vec3& dir) const {
        int count = 0;
        std::uint32_t stack[64];
        int top = 0;
        stack[top++] = 0;
        while (top > 0) {
            const Node& node = nodes_[stack[--top]];
            if (!ray_hits_box(orig, dir, node.bounds)) continue;
            if (node.count > 0) {
                for (std::uint32_t i = 0; i < node.count; ++i) {
                    const std::uint32_t f = tri_index_[node.first + i];
                    double t;
                    if (ray_triangle(orig, dir, mesh_->face_vertex(f, 0), mesh_->face_vertex(f, 1),
                                     mesh_->face_vertex(f, 2), t))
                        ++count;
                }
            } else {
                stack[top++] = node.first;
                stack[top++] = node.first + 1;
            }
        }
        return count;
    }

private:
    struct Node {
        Aabb bounds;
        std::uint32_t first = 0;  // leaf: offset into tri_index_; inner: left child
        std::uint32_t count = 0;  // 0 for inner nodes
    };

    static bool ray_hits_box(const Vec3& o, const Vec3& d, const Aabb& b) {
        double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 3; ++i) {
            if (d[i] == 0.0) {
                if (o[i] < b.lo[i] || o[i] > b.hi[i]) return false;
                continue;
            }
            const double inv = 1.0 / d[i];
            double t0 = (b.lo[i] - o[i]) * inv;
            double t1 = (b.hi[i] - o[i]) * inv;
            if (t0 > t1) std::swap(t0, t1);
            tmin = std::max(tmin, t0);
            tmax = std::min(tmax, t1);
            if (tmin > tmax) return false;
        }
        return true;
    }

    // Children of an inner node occupy slots (first, first + 1).
    void build_into(std::uint32_t node_id, std::size_t begin, std::size_t end) {
        Aabb bounds;
        for (std::size_t i = begin; i < end; ++i) bounds.extend(tri_bounds_[tri_index_[i]]);
        nodes_[node_id].bounds = bounds;

        const std::size_t count = end - begin;
        if (count <= 4) {
            nodes_[node_id].first = static_cast<std::uint32_t>(begin);
            nodes_[node_id].count = static_cast<std::uint32_t>(count);
            return;
        }

        Aabb cb;
        for (std::size_t i = begin; i < end; ++i) cb.extend(centroids_[tri_index_[i]]);
        const Vec3 ext = cb.extent();
        int axis = 0;
        if (ext.y > ext.x) axis = 1;
        if (ext.z > ext[axis]) axis = 2;

        const std::size_t mid = begin + count / 2;
        std::nth_element(tri_index_.begin() + begin, tri_index_.begin() + mid, tri_index_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) {
                             if (centroids_[a][axis] != centroids_[b][axis])
                                 return centroids_[a][axis] < centroids_[b][axis];
                             return a < b;
                         });

        const std::uint32_t left = static_cast<std::uint32_t>(nodes_.size());
        nodes_.emplace_back();
        nodes_.emplace_back();
        nodes_[node_id].first = left;
        nodes_[node_id].count = 0;
        build_into(left, begin, mid);
        build_into(left + 1, mid, end);
    }

    const TriangleMesh* mesh_ = nullptr;
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> tri_index_;
    std::vector<Vec3> centroids_;
    std::vector<Aabb> tri_bounds_;
};

}  // namespace sdfc
