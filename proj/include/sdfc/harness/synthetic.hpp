#pragma once

#include <map>

#include "sdfc/geometry/patch.hpp"

namespace sdfc::harness {

struct Mat3 {
    Vec3 rows[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

    Vec3 apply(const Vec3& p) const { return {dot(rows[0], p), dot(rows[1], p), dot(rows[2], p)}; }
    Vec3 apply_transposed(const Vec3& p) const {
        return {rows[0].x * p.x + rows[1].x * p.y + rows[2].x * p.z,
                rows[0].y * p.x + rows[1].y * p.y + rows[2].y * p.z,
                rows[0].z * p.x + rows[1].z * p.y + rows[2].z * p.z};
    }

    static Mat3 random_rotation(Rng& rng) {
        // uniform rotation from a normalized quaternion
        double q[4];
        double n2 = 0.0;
        for (double& v : q) {
            v = rng.normal();
            n2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(n2);
        const double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;
        Mat3 m;
        m.rows[0] = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)};
        m.rows[1] = {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)};
        m.rows[2] = {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
        return m;
    }
};

/// One solid primitive with an exact signed distance and a watertight mesh.
struct Primitive {
    enum class Kind { Sphere, Box, Capsule };

    Kind kind = Kind::Sphere;
    Vec3 center;            // sphere / box center
    double radius = 0.5;    // sphere / capsule
    Vec3 half_extent;       // box (local frame)
    Mat3 rotation;          // box local->world
    Vec3 cap_a, cap_b;      // capsule endpoints (world)

    double sdf(const Vec3& p) const {
        switch (kind) {
            case Kind::Sphere:
                return norm(p - center) - radius;
            case Kind::Box: {
                const Vec3 local = rotation.apply_transposed(p - center);
                const Vec3 q{std::abs(local.x) - half_extent.x, std::abs(local.y) - half_extent.y,
                             std::abs(local.z) - half_extent.z};
                const Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
                return norm(qp) + std::min(std::max({q.x, q.y, q.z}), 0.0);
            }
            case Kind::Capsule: {
                const Vec3 ab = cap_b - cap_a;
                const double t = std::clamp(dot(p - cap_a, ab) / std::max(norm2(ab), 1e-30), 0.0, 1.0);
                return norm(p - (cap_a + ab * t)) - radius;
            }
        }
        return 0.0;
    }

    Aabb bounds() const {
        Aabb b;
        switch (kind) {
            case Kind::Sphere:
                b.extend(center - Vec3{radius, radius, radius});
                b.extend(center + Vec3{radius, radius, radius});
                break;
            case Kind::Box: {
                // extent of the rotated box: |R| h
                Vec3 e;
                for (int i = 0; i < 3; ++i)
                    e[i] = std::abs(rotation.rows[i].x) * half_extent.x +
                           std::abs(rotation.rows[i].y) * half_extent.y +
                           std::abs(rotation.rows[i].z) * half_extent.z;
                b.extend(center - e);
                b.extend(center + e);
                break;
            }
            case Kind::Capsule:
                b.extend(min(cap_a, cap_b) - Vec3{radius, radius, radius});
                b.extend(max(cap_a, cap_b) + Vec3{radius, radius, radius});
                break;
        }
        return b;
    }

    double bounding_radius() const {
        const Aabb b = bounds();
        return 0.5 * norm(b.extent());
    }
    Vec3 bounding_center() const { return bounds().center(); }

    /// Rescale in place: p -> (p + t) * s (uniform s keeps the SDF exact).
    void remap(const Vec3& t, double s) {
        center = (center + t) * s;
        radius *= s;
        half_extent *= s;
        cap_a = (cap_a + t) * s;
        cap_b = (cap_b + t) * s;
    }

    TriangleMesh mesh(int detail = 3) const;
};

namespace detail {

inline TriangleMesh icosphere(const Vec3& center, double radius, int subdiv) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    for (Vec3& v : verts) v = normalized(v);
    std::vector<std::array<std::uint32_t, 3>> faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    for (int s = 0; s < subdiv; ++s) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
        auto mid = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const std::uint32_t id = static_cast<std::uint32_t>(verts.size());
            verts.push_back(normalized((verts[a] + verts[b]) * 0.5));
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<std::array<std::uint32_t, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const std::uint32_t m01 = mid(f[0], f[1]), m12 = mid(f[1], f[2]), m20 = mid(f[2], f[0]);
            next.push_back({f[0], m01, m20});
            next.push_back({f[1], m12, m01});
            next.push_back({f[2], m20, m12});
            next.push_back({m01, m12, m20});
        }
        faces = std::move(next);
    }
    for (Vec3& v : verts) v = center + v * radius;
    return TriangleMesh(std::move(verts), std::move(faces));
}

/// Capsule around segment (a, b): two UV-hemisphere caps plus a cylinder band.
inline TriangleMesh capsule_mesh(const Vec3& a, const Vec3& b, double radius, int segments = 24,
                                 int rings = 8) {
    const Vec3 axis = normalized(b - a);
    Vec3 u = std::abs(axis.x) < 0.9 ? cross(axis, {1, 0, 0}) : cross(axis, {0, 1, 0});
    u = normalized(u);
    const Vec3 v = cross(axis, u);

    std::vector<Vec3> verts;
    std::vector<std::array<std::uint32_t, 3>> faces;
    constexpr double kTau = 6.283185307179586476925286766559;

    // vertex rows: bottom pole, bottom hemisphere rings (pole -> equator,
    // centered on a), top hemisphere rings (equator -> pole, centered on b),
    // top pole; the band between the two equator rings is the cylinder wall
    verts.push_back(a - axis * radius);
    std::vector<std::vector<std::uint32_t>> rows;
    constexpr double kHalfPi = 0.5 * 3.14159265358979323846;
    auto add_ring = [&](const Vec3& apex, double axial, double lateral) {
        std::vector<std::uint32_t> row;
        row.reserve(segments);
        for (int sgm = 0; sgm < segments; ++sgm) {
            const double ang = kTau * sgm / segments;
            const Vec3 dir = u * (std::cos(ang) * lateral) + v * (std::sin(ang) * lateral) +
                             axis * axial;
            row.push_back(static_cast<std::uint32_t>(verts.size()));
            verts.push_back(apex + dir * radius);
        }
        rows.push_back(std::move(row));
    };
    for (int r = 1; r <= rings; ++r) {
        const double theta = kHalfPi * r / rings;  // polar angle from the -axis pole
        add_ring(a, -std::cos(theta), std::sin(theta));
    }
    for (int r = 0; r < rings; ++r) {
        const double theta = kHalfPi * (rings - r) / rings;  // polar angle from +axis pole
        add_ring(b, std::cos(theta), std::sin(theta));
    }
    verts.push_back(b + axis * radius);
    const std::uint32_t bottom_pole = 0;
    const std::uint32_t top_pole = static_cast<std::uint32_t>(verts.size() - 1);

    // bottom fan
    for (int sgm = 0; sgm < segments; ++sgm) {
        const std::uint32_t c = rows.front()[sgm];
        const std::uint32_t d = rows.front()[(sgm + 1) % segments];
        faces.push_back({bottom_pole, d, c});
    }
    // bands
    for (std::size_t r = 0; r + 1 < rows.size(); ++r) {
        for (int sgm = 0; sgm < segments; ++sgm) {
            const std::uint32_t c0 = rows[r][sgm];
            const std::uint32_t c1 = rows[r][(sgm + 1) % segments];
            const std::uint32_t n0 = rows[r + 1][sgm];
            const std::uint32_t n1 = rows[r + 1][(sgm + 1) % segments];
            faces.push_back({c0, c1, n1});
            faces.push_back({c0, n1, n0});
        }
    }
    // top fan
    for (int sgm = 0; sgm < segments; ++sgm) {
        const std::uint32_t c = rows.back()[sgm];
        const std::uint32_t d = rows.back()[(sgm + 1) % segments];
        faces.push_back({top_pole, c, d});
    }
    return TriangleMesh(std::move(verts), std::move(faces));
}

}  // namespace detail

inline TriangleMesh Primitive::mesh(int detail_level) const {
    switch (kind) {
        case Kind::Sphere:
            return detail::icosphere(center, radius, detail_level);
        case Kind::Box: {
            std::vector<Vec3> verts;
            verts.reserve(8);
            for (int i = 0; i < 8; ++i) {
                const Vec3 local{(i & 1 ? 1.0 : -1.0) * half_extent.x,
                                 (i & 2 ? 1.0 : -1.0) * half_extent.y,
                                 (i & 4 ? 1.0 : -1.0) * half_extent.z};
                verts.push_back(center + rotation.apply(local));
            }
            std::vector<std::array<std::uint32_t, 3>> faces = {
                {0, 2, 3}, {0, 3, 1},  // -z ... indices chosen for outward winding
                {4, 5, 7}, {4, 7, 6},
                {0, 1, 5}, {0, 5, 4},
                {2, 6, 7}, {2, 7, 3},
                {1, 3, 7}, {1, 7, 5},
                {0, 4, 6}, {0, 6, 2},
            };
            return TriangleMesh(std::move(verts), std::move(faces));
        }
        case Kind::Capsule:
            return detail::capsule_mesh(cap_a, cap_b, radius, 8 * detail_level, 3 * detail_level);
    }
    return {};
}

/// Union of pairwise-disjoint solid primitives. Disjointness makes the
/// min-combined SDF exact everywhere and keeps ray-parity sign tests valid on
/// the concatenated mesh.
struct SyntheticShape {
    std::vector<Primitive> parts;

    double sdf(const Vec3& p) const {
        double best = std::numeric_limits<double>::infinity();
        for (const Primitive& prim : parts) best = std::min(best, prim.sdf(p));
        return best;
    }

    Aabb bounds() const {
        Aabb b;
        for (const Primitive& prim : parts) b.extend(prim.bounds());
        return b;
    }

    TriangleMesh mesh(int detail_level = 3) const {
        std::vector<Vec3> verts;
        std::vector<std::array<std::uint32_t, 3>> faces;
        for (const Primitive& prim : parts) {
            TriangleMesh m = prim.mesh(detail_level);
            const std::uint32_t base = static_cast<std::uint32_t>(verts.size());
            verts.insert(verts.end(), m.vertices.begin(), m.vertices.end());
            for (auto f : m.faces) {
                f[0] += base;
                f[1] += base;
                f[2] += base;
                faces.push_back(f);
            }
        }
        return TriangleMesh(std::move(verts), std::move(faces));
    }

    SdfGrid grid(int resolution) const {
        SdfGrid g(resolution);
        const int r = resolution;
        const std::int64_t total = static_cast<std::int64_t>(r) * r * r;
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < total; ++i) {
            const int x = static_cast<int>(i % r);
            const int y = static_cast<int>((i / r) % r);
            const int z = static_cast<int>(i / (static_cast<std::int64_t>(r) * r));
            g.values[i] = static_cast<float>(sdf(g.position(x, y, z)));
        }
        return g;
    }

    /// Worst deviation of the tessellation from the analytic surface, probed
    /// at face centroids and edge midpoints.
    double chord_error(int detail_level = 3) const {
        const TriangleMesh m = mesh(detail_level);
        double worst = 0.0;
        for (std::size_t f = 0; f < m.faces.size(); ++f) {
            const Vec3 a = m.face_vertex(f, 0), b = m.face_vertex(f, 1), c = m.face_vertex(f, 2);
            worst = std::max(worst, std::abs(sdf((a + b + c) / 3.0)));
            worst = std::max(worst, std::abs(sdf((a + b) * 0.5)));
            worst = std::max(worst, std::abs(sdf((b + c) * 0.5)));
            worst = std::max(worst, std::abs(sdf((a + c) * 0.5)));
        }
        return worst;
    }

    /// Centers the joint bounding box and scales the longest axis to [-1, 1]
    /// (same convention as mesh normalization).
    void normalize() {
        const Aabb b = bounds();
        const Vec3 ext = b.extent();
        const double longest = std::max({ext.x, ext.y, ext.z});
        const Vec3 t = -b.center();
        const double s = 2.0 / longest;
        for (Primitive& prim : parts) prim.remap(t, s);
    }
};

enum class ShapeKind { Sphere, Box, Capsule, Compound };

inline const char* shape_kind_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::Box: return "box";
        case ShapeKind::Capsule: return "capsule";
        case ShapeKind::Compound: return "compound";
    }
    return "?";
}

inline ShapeKind shape_kind_from_name(const std::string& s) {
    if (s == "sphere") return ShapeKind::Sphere;
    if (s == "box") return ShapeKind::Box;
    if (s == "capsule") return ShapeKind::Capsule;
    if (s == "compound") return ShapeKind::Compound;
    throw UsageError("unknown shape kind: " + s);
}

namespace detail {

inline Primitive random_primitive(Rng& rng, ShapeKind kind, double size_scale = 1.0) {
    Primitive p;
    switch (kind) {
        case ShapeKind::Sphere:
            p.kind = Primitive::Kind::Sphere;
            p.radius = rng.uniform(0.25, 0.6) * size_scale;
            break;
        case ShapeKind::Box:
            p.kind = Primitive::Kind::Box;
            p.half_extent = {rng.uniform(0.2, 0.6) * size_scale, rng.uniform(0.2, 0.6) * size_scale,
                             rng.uniform(0.2, 0.6) * size_scale};
            p.rotation = Mat3::random_rotation(rng);
            break;
        case ShapeKind::Capsule: {
            p.kind = Primitive::Kind::Capsule;
            p.radius = rng.uniform(0.12, 0.3) * size_scale;
            const Vec3 dir = normalized({rng.normal(), rng.normal(), rng.normal()});
            const double half_len = rng.uniform(0.25, 0.6) * size_scale;
            p.cap_a = -dir * half_len;
            p.cap_b = dir * half_len;
            break;
        }
        case ShapeKind::Compound:
            throw UsageError("random_primitive: compound is not a primitive");
    }
    return p;
}

}  // namespace detail

/// Seeded random shape. Compounds are 2-4 primitives with pairwise-disjoint
/// bounding spheres (rejection sampled), then everything is normalized into
/// [-1,1]^3.
inline SyntheticShape random_shape(ShapeKind kind, Rng& rng) {
    SyntheticShape shape;
    if (kind != ShapeKind::Compound) {
        shape.parts.push_back(detail::random_primitive(rng, kind));
    } else {
        const int count = 2 + static_cast<int>(rng.uniform_index(3));
        const ShapeKind menu[3] = {ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Capsule};
        int guard = 0;
        while (static_cast<int>(shape.parts.size()) < count && guard < 1000) {
            ++guard;
            Primitive cand =
                detail::random_primitive(rng, menu[rng.uniform_index(3)], 0.55);
            const Vec3 offset{rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7),
                              rng.uniform(-0.7, 0.7)};
            cand.remap(offset, 1.0);
            const Vec3 cc = cand.bounding_center();
            const double cr = cand.bounding_radius();
            bool ok = true;
            for (const Primitive& other : shape.parts) {
                if (norm(cc - other.bounding_center()) <= cr + other.bounding_radius() + 0.02) {
                    ok = false;
                    break;
                }
            }
            if (ok) shape.parts.push_back(std::move(cand));
        }
        if (shape.parts.empty())
            shape.parts.push_back(detail::random_primitive(rng, ShapeKind::Sphere));
    }
    shape.normalize();
    return shape;
}

}  // namespace sdfc::harness
