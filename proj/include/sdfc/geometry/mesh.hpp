#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdfc/core/error.hpp"
#include "sdfc/core/vec3.hpp"

namespace sdfc {

/// Indexed triangle mesh. Faces with (numerically) zero area are dropped at
/// construction time so face normals are always well defined.
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> faces;

    TriangleMesh() = default;
    TriangleMesh(std::vector<Vec3> verts, std::vector<std::array<std::uint32_t, 3>> f)
        : vertices(std::move(verts)), faces(std::move(f)) {
        clean();
    }

    bool empty() const { return faces.empty(); }

    Vec3 face_vertex(std::size_t f, int corner) const { return vertices[faces[f][corner]]; }

    Vec3 face_normal(std::size_t f) const {
        const Vec3 a = face_vertex(f, 0);
        return normalized(cross(face_vertex(f, 1) - a, face_vertex(f, 2) - a));
    }

    double face_area(std::size_t f) const {
        const Vec3 a = face_vertex(f, 0);
        return 0.5 * norm(cross(face_vertex(f, 1) - a, face_vertex(f, 2) - a));
    }

    double total_area() const {
        double s = 0.0;
        for (std::size_t f = 0; f < faces.size(); ++f) s += face_area(f);
        return s;
    }

    Aabb bounds() const {
        Aabb b;
        for (const Vec3& v : vertices) b.extend(v);
        return b;
    }

    /// Drops faces that reference out-of-range vertices or have zero area.
    void clean() {
        std::vector<std::array<std::uint32_t, 3>> kept;
        kept.reserve(faces.size());
        const std::uint32_t nv = static_cast<std::uint32_t>(vertices.size());
        for (const auto& f : faces) {
            if (f[0] >= nv || f[1] >= nv || f[2] >= nv) continue;
            const Vec3 a = vertices[f[0]];
            const Vec3 n = cross(vertices[f[1]] - a, vertices[f[2]] - a);
            if (norm2(n) <= 0.0) continue;
            kept.push_back(f);
        }
        faces = std::move(kept);
    }
};

/// Uniform scale + translation applied by normalize_mesh. world = (p - center) * scale.
struct MeshTransform {
    Vec3 center;
    double scale = 1.0;

    Vec3 apply(const Vec3& p) const { return (p - center) * scale; }
    Vec3 invert(const Vec3& p) const { return p / scale + center; }
};

/// Centers the bounding box at the origin and uniformly scales so the longest
/// axis spans exactly [-1, 1]. Throws DegenerateMesh when every vertex
/// coincides (no extent on any axis).
inline std::pair<TriangleMesh, MeshTransform> normalize_mesh(const TriangleMesh& mesh) {
    if (mesh.vertices.empty()) throw DegenerateMesh("normalize_mesh: empty mesh");
    const Aabb b = mesh.bounds();
    const Vec3 ext = b.extent();
    const double longest = std::max({ext.x, ext.y, ext.z});
    if (longest <= 0.0) throw DegenerateMesh("normalize_mesh: zero extent on every axis");

    MeshTransform t;
    t.center = b.center();
    t.scale = 2.0 / longest;

    TriangleMesh out = mesh;
    for (Vec3& v : out.vertices) v = t.apply(v);
    return {std::move(out), t};
}

// ---------------------------------------------------------------------------
// File ingestion: OBJ and STL (ASCII + binary), triangles only.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t parse_obj_index(const std::string& tok, std::size_t vertex_count) {
    // "7", "7/2", "7//3", "7/2/3" all refer to vertex 7 (1-based)
    long idx = std::strtol(tok.c_str(), nullptr, 10);
    if (idx < 0) idx = static_cast<long>(vertex_count) + idx + 1;
    if (idx < 1 || static_cast<std::size_t>(idx) > vertex_count)
        throw FormatError("OBJ: face index out of range: " + tok);
    return static_cast<std::uint32_t>(idx - 1);
}

inline TriangleMesh load_obj(std::istream& is) {
    std::vector<Vec3> verts;
    std::vector<std::array<std::uint32_t, 3>> faces;
    std::string line;
    while (std::getline(is, line)) {
        if (line.size() < 2) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v;
            ls >> v.x >> v.y >> v.z;
            if (!ls) throw FormatError("OBJ: malformed vertex line: " + line);
            verts.push_back(v);
        } else if (tag == "f") {
            std::vector<std::uint32_t> poly;
            std::string tok;
            while (ls >> tok) poly.push_back(parse_obj_index(tok, verts.size()));
            if (poly.size() < 3) throw FormatError("OBJ: face with fewer than 3 vertices");
            for (std::size_t i = 2; i < poly.size(); ++i)
                faces.push_back({poly[0], poly[i - 1], poly[i]});
        }
    }
    return TriangleMesh(std::move(verts), std::move(faces));
}

struct VertexKey {
    float x, y, z;
    bool operator==(const VertexKey& o) const { return x == o.x && y == o.y && z == o.z; }
};
struct VertexKeyHash {
    std::size_t operator()(const VertexKey& k) const {
        std::uint32_t a, b, c;
        std::memcpy(&a, &k.x, 4);
        std::memcpy(&b, &k.y, 4);
        std::memcpy(&c, &k.z, 4);
        std::uint64_t h = a;
        h = h * 0x100000001b3ull ^ b;
        h = h * 0x100000001b3ull ^ c;
        return static_cast<std::size_t>(h);
    }
};

/// Welds the STL vertex soup into an indexed mesh (exact bit-match welding).
class VertexWelder {
public:
    std::uint32_t add(float x, float y, float z) {
        VertexKey key{x, y, z};
        auto it = map_.find(key);
        if (it != map_.end()) return it->second;
        std::uint32_t idx = static_cast<std::uint32_t>(verts_.size());
        verts_.push_back(Vec3{x, y, z});
        map_.emplace(key, idx);
        return idx;
    }
    std::vector<Vec3> take() { return std::move(verts_); }

private:
    std::vector<Vec3> verts_;
    std::unordered_map<VertexKey, std::uint32_t, VertexKeyHash> map_;
};

inline TriangleMesh load_stl_binary(std::istream& is) {
    char header[80];
    is.read(header, 80);
    std::uint32_t count = 0;
    is.read(reinterpret_cast<char*>(&count), 4);
    if (!is) throw FormatError("STL: truncated binary header");

    VertexWelder welder;
    std::vector<std::array<std::uint32_t, 3>> faces;
    faces.reserve(count);
    for (std::uint32_t f = 0; f < count; ++f) {
        float rec[12];
        is.read(reinterpret_cast<char*>(rec), 48);
        char attr[2];
        is.read(attr, 2);
        if (!is) throw FormatError("STL: truncated facet record");
        std::array<std::uint32_t, 3> face;
        for (int c = 0; c < 3; ++c)
            face[c] = welder.add(rec[3 + 3 * c], rec[4 + 3 * c], rec[5 + 3 * c]);
        faces.push_back(face);
    }
    return TriangleMesh(welder.take(), std::move(faces));
}

inline TriangleMesh load_stl_ascii(std::istream& is) {
    VertexWelder welder;
    std::vector<std::array<std::uint32_t, 3>> faces;
    std::string tok;
    std::vector<std::uint32_t> current;
    while (is >> tok) {
        if (tok == "vertex") {
            float x, y, z;
            is >> x >> y >> z;
            if (!is) throw FormatError("STL: malformed vertex");
            current.push_back(welder.add(x, y, z));
            if (current.size() == 3) {
                faces.push_back({current[0], current[1], current[2]});
                current.clear();
            }
        }
    }
    if (!current.empty()) throw FormatError("STL: dangling vertices");
    return TriangleMesh(welder.take(), std::move(faces));
}

}  // namespace detail

/// Loads a mesh by extension (.obj, .stl). STL flavor is sniffed from content.
inline TriangleMesh load_mesh(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open mesh file: " + path);
    if (path.size() >= 4 && (path.substr(path.size() - 4) == ".obj" || path.substr(path.size() - 4) == ".OBJ"))
        return detail::load_obj(is);
    if (path.size() >= 4 && (path.substr(path.size() - 4) == ".stl" || path.substr(path.size() - 4) == ".STL")) {
        // ASCII STL begins with "solid" and contains "facet"; binary may also
        // start with "solid", so look a bit deeper.
        char head[512] = {};
        is.read(head, sizeof(head));
        is.clear();
        is.seekg(0);
        std::string h(head, head + sizeof(head));
        const bool ascii = h.rfind("solid", 0) == 0 && h.find("facet") != std::string::npos;
        return ascii ? detail::load_stl_ascii(is) : detail::load_stl_binary(is);
    }
    throw UsageError("unsupported mesh format (need .obj or .stl): " + path);
}

inline void save_obj(const TriangleMesh& mesh, std::ostream& os) {
    os << "# " << mesh.vertices.size() << " vertices, " << mesh.faces.size() << " faces\n";
    char buf[128];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
        os << buf;
    }
    for (const auto& f : mesh.faces)
        os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

inline void save_stl_binary(const TriangleMesh& mesh, std::ostream& os) {
    char header[80] = "binary stl";
    os.write(header, 80);
    std::uint32_t count = static_cast<std::uint32_t>(mesh.faces.size());
    os.write(reinterpret_cast<const char*>(&count), 4);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Vec3 n = mesh.face_normal(f);
        float rec[12] = {static_cast<float>(n.x), static_cast<float>(n.y), static_cast<float>(n.z)};
        for (int c = 0; c < 3; ++c) {
            const Vec3 v = mesh.face_vertex(f, c);
            rec[3 + 3 * c] = static_cast<float>(v.x);
            rec[4 + 3 * c] = static_cast<float>(v.y);
            rec[5 + 3 * c] = static_cast<float>(v.z);
        }
        os.write(reinterpret_cast<const char*>(rec), 48);
        char attr[2] = {0, 0};
        os.write(attr, 2);
    }
}

}  // namespace sdfc
