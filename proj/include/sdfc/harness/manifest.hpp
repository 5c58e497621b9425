#pragma once

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "sdfc/core/error.hpp"
#include "sdfc/io/sdf_file.hpp"

namespace sdfc::harness {

using nlohmann::json;

/// One corpus entry. Paths are relative to the manifest directory; sdf_path
/// may be empty when grids are regenerated on the fly from generator params.
struct ManifestObject {
    std::string id;
    std::string mesh_path;
    std::string sdf_path;
    std::string split;  // train | val | test
    json generator;     // synthetic provenance (kind + seed), or null
};

struct DatasetManifest {
    int resolution = 128;
    json provenance;
    std::vector<ManifestObject> objects;

    std::vector<const ManifestObject*> split_objects(const std::string& split) const {
        std::vector<const ManifestObject*> out;
        for (const auto& o : objects)
            if (o.split == split) out.push_back(&o);
        return out;
    }

    void validate() const {
        std::set<std::string> ids;
        for (const auto& o : objects) {
            if (!ids.insert(o.id).second) throw DataError("manifest: duplicate object id " + o.id);
            if (o.split != "train" && o.split != "val" && o.split != "test")
                throw DataError("manifest: object " + o.id + " has unknown split '" + o.split + "'");
        }
    }
};

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    json j;
    j["magic"] = "MANI";
    j["version"] = 1;
    j["resolution"] = m.resolution;
    j["provenance"] = m.provenance;
    j["objects"] = json::array();
    for (const auto& o : m.objects) {
        json e;
        e["id"] = o.id;
        e["mesh"] = o.mesh_path;
        e["sdf"] = o.sdf_path;
        e["split"] = o.split;
        e["generator"] = o.generator;
        j["objects"].push_back(std::move(e));
    }
    io::AtomicFileWriter w(path);
    w.stream() << j.dump(2) << "\n";
    w.commit();
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw FormatError("manifest: invalid JSON: " + std::string(e.what()));
    }
    if (j.value("magic", "") != "MANI") throw FormatError("manifest: bad magic");
    if (j.value("version", 0) != 1) throw FormatError("manifest: unsupported version");

    DatasetManifest m;
    m.resolution = j.value("resolution", 128);
    m.provenance = j.value("provenance", json());
    for (const auto& e : j.value("objects", json::array())) {
        ManifestObject o;
        o.id = e.value("id", "");
        o.mesh_path = e.value("mesh", "");
        o.sdf_path = e.value("sdf", "");
        o.split = e.value("split", "train");
        o.generator = e.value("generator", json());
        m.objects.push_back(std::move(o));
    }
    m.validate();
    return m;
}

/// Deterministic train/val/test split assignment by index.
inline std::string split_for_index(std::size_t index, std::size_t total, double val_frac = 0.1,
                                   double test_frac = 0.1) {
    const auto n_test = static_cast<std::size_t>(static_cast<double>(total) * test_frac);
    const auto n_val = static_cast<std::size_t>(static_cast<double>(total) * val_frac);
    if (index < total - n_val - n_test) return "train";
    if (index < total - n_test) return "val";
    return "test";
}

}  // namespace sdfc::harness
