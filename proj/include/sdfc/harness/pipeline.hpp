#pragma once

#include <filesystem>
#include <iostream>

#include "sdfc/harness/config.hpp"
#include "sdfc/harness/manifest.hpp"
#include "sdfc/harness/synthetic.hpp"
#include "sdfc/io/shards.hpp"
#include "sdfc/slt/complete.hpp"
#include "sdfc/surface/marching_cubes.hpp"

namespace sdfc::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

struct SyntheticOptions {
    int count = 100;
    std::vector<ShapeKind> kinds = {ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Capsule,
                                    ShapeKind::Compound};
    std::uint64_t seed = 1;
    int resolution = 128;
    int mesh_detail = 3;
    bool write_grids = true;   // analytic SDF grid files per object
    bool write_meshes = true;  // OBJ files per object
    double val_frac = 0.1;
    double test_frac = 0.1;
};

/// Rebuilds the shape recorded in a manifest generator entry.
inline SyntheticShape shape_from_generator(const json& generator) {
    if (generator.is_null() || !generator.contains("kind"))
        throw DataError("manifest object has no synthetic generator record");
    const ShapeKind kind = shape_kind_from_name(generator.at("kind").get<std::string>());
    Rng rng(generator.at("seed").get<std::uint64_t>());
    return random_shape(kind, rng);
}

/// Generates `count` watertight shapes with analytic SDFs, writes meshes,
/// grids and the manifest into out_dir, and returns the manifest.
inline DatasetManifest make_synthetic(const SyntheticOptions& opts, const std::string& out_dir) {
    if (opts.count <= 0) throw UsageError("make-synthetic: count must be positive");
    fs::create_directories(fs::path(out_dir) / "meshes");
    if (opts.write_grids) fs::create_directories(fs::path(out_dir) / "sdf");

    DatasetManifest manifest;
    manifest.resolution = opts.resolution;
    {
        json prov;
        prov["source"] = "synthetic";
        prov["seed"] = opts.seed;
        prov["count"] = opts.count;
        json kinds = json::array();
        for (ShapeKind k : opts.kinds) kinds.push_back(shape_kind_name(k));
        prov["kinds"] = kinds;
        manifest.provenance = std::move(prov);
    }

    Rng master(opts.seed);
    for (int i = 0; i < opts.count; ++i) {
        const ShapeKind kind = opts.kinds[master.uniform_index(opts.kinds.size())];
        const std::uint64_t shape_seed = master.next_u64();

        Rng shape_rng(shape_seed);
        const SyntheticShape shape = random_shape(kind, shape_rng);

        char id[32];
        std::snprintf(id, sizeof(id), "obj_%05d", i);

        ManifestObject obj;
        obj.id = id;
        obj.split = split_for_index(static_cast<std::size_t>(i), opts.count, opts.val_frac,
                                    opts.test_frac);
        obj.generator = {{"kind", shape_kind_name(kind)}, {"seed", shape_seed}};

        if (opts.write_meshes) {
            obj.mesh_path = std::string("meshes/") + id + ".obj";
            io::AtomicFileWriter w((fs::path(out_dir) / obj.mesh_path).string());
            save_obj(shape.mesh(opts.mesh_detail), w.stream());
            w.commit();
        }
        if (opts.write_grids) {
            obj.sdf_path = std::string("sdf/") + id + ".sdf";
            io::save_sdf(shape.grid(opts.resolution), (fs::path(out_dir) / obj.sdf_path).string());
        }
        manifest.objects.push_back(std::move(obj));
    }
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

// ---------------------------------------------------------------------------
// Mesh-directory ingestion
// ---------------------------------------------------------------------------

struct DataprepStats {
    int converted = 0;
    int skipped = 0;
    std::vector<std::string> skipped_ids;
};

/// Normalizes every readable mesh in mesh_dir into [-1,1]^3, samples its SDF
/// grid, and writes meshes/grids/manifest into out_dir. Non-watertight meshes
/// (ambiguous sign) are logged and skipped.
inline DatasetManifest dataprep(const std::string& mesh_dir, const std::string& out_dir,
                                int resolution, DataprepStats* stats = nullptr,
                                std::ostream& log = std::cerr) {
    std::vector<fs::path> inputs;
    if (fs::is_directory(mesh_dir)) {
        for (const auto& e : fs::directory_iterator(mesh_dir)) {
            const std::string ext = e.path().extension().string();
            if (ext == ".obj" || ext == ".stl" || ext == ".OBJ" || ext == ".STL")
                inputs.push_back(e.path());
        }
    }
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) throw NoInputs("dataprep: no .obj/.stl files in " + mesh_dir);

    fs::create_directories(fs::path(out_dir) / "meshes");
    fs::create_directories(fs::path(out_dir) / "sdf");

    DatasetManifest manifest;
    manifest.resolution = resolution;
    manifest.provenance = {{"source", "dataprep"}, {"input_dir", mesh_dir}};

    DataprepStats local;
    DataprepStats& st = stats ? *stats : local;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::string id = inputs[i].stem().string();
        try {
            const TriangleMesh raw = load_mesh(inputs[i].string());
            auto [normalized_mesh, transform] = normalize_mesh(raw);
            const SdfGrid grid = sample_sdf_grid(normalized_mesh, resolution);

            ManifestObject obj;
            obj.id = id;
            obj.mesh_path = "meshes/" + id + ".obj";
            obj.sdf_path = "sdf/" + id + ".sdf";
            obj.split = split_for_index(i, inputs.size());
            {
                io::AtomicFileWriter w((fs::path(out_dir) / obj.mesh_path).string());
                save_obj(normalized_mesh, w.stream());
                w.commit();
            }
            io::save_sdf(grid, (fs::path(out_dir) / obj.sdf_path).string());
            manifest.objects.push_back(std::move(obj));
            ++st.converted;
        } catch (const SignAmbiguous& e) {
            log << "skip " << id << ": " << e.what() << "\n";
            st.skipped_ids.push_back(id);
            ++st.skipped;
        } catch (const DegenerateMesh& e) {
            log << "skip " << id << ": " << e.what() << "\n";
            st.skipped_ids.push_back(id);
            ++st.skipped;
        }
    }
    log << "dataprep: converted " << st.converted << ", skipped " << st.skipped << "\n";
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

// ---------------------------------------------------------------------------
// Training datasets
// ---------------------------------------------------------------------------

/// Draws `count` randomized training patches across the manifest objects of
/// one split. Patch placement follows the surface-point + side + offset
/// distributions; values come from the object's analytic SDF when the
/// manifest records a generator, otherwise from the mesh.
inline std::vector<Patch> build_patch_dataset(const DatasetManifest& manifest,
                                              const std::string& manifest_dir,
                                              const std::string& split, int count, Rng& rng,
                                              int mesh_detail = 3) {
    const auto objects = manifest.split_objects(split);
    if (objects.empty()) throw DatasetEmpty("build_patch_dataset: no objects in split " + split);

    std::vector<Patch> out;
    out.reserve(count);
    // round-robin over objects so every shape contributes
    for (int i = 0; i < count; ++i) {
        const ManifestObject& obj = *objects[i % objects.size()];
        if (!obj.generator.is_null() && obj.generator.contains("kind")) {
            const SyntheticShape shape = shape_from_generator(obj.generator);
            const TriangleMesh mesh = shape.mesh(mesh_detail);
            const SurfaceSampler sampler(mesh);
            const PatchSampleSpec spec = draw_patch_spec(sampler, rng);
            out.push_back(fill_patch(spec, [&](const Vec3& p) { return shape.sdf(p); }));
        } else {
            const TriangleMesh mesh = load_mesh((fs::path(manifest_dir) / obj.mesh_path).string());
            auto [spec, patch] = extract_training_patch(mesh, rng);
            out.push_back(std::move(patch));
        }
    }
    return out;
}

/// Faster variant for synthetic corpora: shapes and their samplers are built
/// once and patches are drawn round-robin.
inline std::vector<Patch> build_patch_dataset_synthetic(const DatasetManifest& manifest,
                                                        const std::string& split, int count,
                                                        Rng& rng, int mesh_detail = 3) {
    const auto objects = manifest.split_objects(split);
    if (objects.empty()) throw DatasetEmpty("build_patch_dataset: no objects in split " + split);

    struct Prepared {
        SyntheticShape shape;
        TriangleMesh mesh;
        std::unique_ptr<SurfaceSampler> sampler;
    };
    std::vector<Prepared> prepared(objects.size());
    for (std::size_t i = 0; i < objects.size(); ++i) {
        prepared[i].shape = shape_from_generator(objects[i]->generator);
        prepared[i].mesh = prepared[i].shape.mesh(mesh_detail);
        prepared[i].sampler = std::make_unique<SurfaceSampler>(prepared[i].mesh);
    }

    std::vector<Patch> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Prepared& p = prepared[i % prepared.size()];
        const PatchSampleSpec spec = draw_patch_spec(*p.sampler, rng);
        out.push_back(fill_patch(spec, [&](const Vec3& q) { return p.shape.sdf(q); }));
    }
    return out;
}

/// Encodes a full object grid into its latent sequence with a trained VAE.
inline slt::LatentSequence encode_grid(const SdfGrid& grid, const pvae::PvaeModel& vae,
                                       int chunk = 16) {
    const PatchGrid pg = partition(grid);
    const int n = pg.slot_count();
    slt::LatentSequence seq;
    seq.n = n;
    seq.d = vae.latent_dim();
    seq.codes.resize(static_cast<std::size_t>(n) * seq.d);
    seq.positions.resize(n);
    const int g = pg.grid_dim;
    for (int k = 0; k < g; ++k)
        for (int j = 0; j < g; ++j)
            for (int i = 0; i < g; ++i)
                seq.positions[pg.slot_index(i, j, k)] = pg.slot_center(i, j, k);

    for (int at = 0; at < n; at += chunk) {
        const int cnt = std::min(chunk, n - at);
        std::vector<Patch> patches;
        patches.reserve(cnt);
        for (int i = 0; i < cnt; ++i) patches.push_back(*pg.slots[at + i]);
        const auto latents = vae.encode_batch(patches);
        for (int i = 0; i < cnt; ++i)
            std::copy_n(latents[i].mu.data(), seq.d, seq.code(at + i));
    }
    return seq;
}

/// Builds (or loads from cache_dir) the latent sequences of a manifest split.
inline std::vector<slt::LatentSequence> build_latent_dataset(
    const DatasetManifest& manifest, const std::string& manifest_dir, const std::string& split,
    const pvae::PvaeModel& vae, int resolution, const std::string& cache_dir = {},
    std::ostream* progress = nullptr) {
    const auto objects = manifest.split_objects(split);
    if (objects.empty()) throw DatasetEmpty("build_latent_dataset: no objects in split " + split);
    if (!cache_dir.empty()) fs::create_directories(cache_dir);

    std::vector<slt::LatentSequence> out;
    out.reserve(objects.size());
    int done = 0;
    for (const ManifestObject* obj : objects) {
        const std::string cache_path =
            cache_dir.empty() ? "" : (fs::path(cache_dir) / (obj->id + ".lat")).string();
        if (!cache_path.empty() && fs::exists(cache_path)) {
            out.push_back(io::load_latent_sequence(cache_path));
        } else {
            SdfGrid grid;
            if (!obj->generator.is_null() && obj->generator.contains("kind"))
                grid = shape_from_generator(obj->generator).grid(resolution);
            else
                grid = io::load_sdf((fs::path(manifest_dir) / obj->sdf_path).string());
            slt::LatentSequence seq = encode_grid(grid, vae);
            if (!cache_path.empty()) io::save_latent_sequence(seq, cache_path);
            out.push_back(std::move(seq));
        }
        if (progress && (++done % 50 == 0))
            *progress << "  encoded " << done << "/" << objects.size() << "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Completion task masks
// ---------------------------------------------------------------------------

/// Builds the known-slot set for a named completion task over a G^3 grid.
///   half: keep the bottom half along the gravity axis
///   oct:  keep the bottom-right octant (x >= mid, bottom along gravity, z < mid)
///   r25/r50/r75: keep exactly that percentage of slots, chosen uniformly
inline std::vector<bool> task_known_slots(const std::string& task, int grid_dim, int gravity_axis,
                                          std::uint64_t seed) {
    const int g = grid_dim;
    const int n = g * g * g;
    std::vector<bool> known(n, false);
    auto slot = [g](int i, int j, int k) { return i + g * (j + g * k); };

    if (task == "half") {
        for (int k = 0; k < g; ++k)
            for (int j = 0; j < g; ++j)
                for (int i = 0; i < g; ++i) {
                    const int c = gravity_axis == 0 ? i : (gravity_axis == 1 ? j : k);
                    known[slot(i, j, k)] = c < g / 2;
                }
    } else if (task == "oct") {
        for (int k = 0; k < g; ++k)
            for (int j = 0; j < g; ++j)
                for (int i = 0; i < g; ++i) {
                    const int gravity = gravity_axis == 0 ? i : (gravity_axis == 1 ? j : k);
                    const int right = gravity_axis == 0 ? j : i;
                    known[slot(i, j, k)] = gravity < g / 2 && right >= g / 2 && k < g / 2;
                }
    } else if (task == "r25" || task == "r50" || task == "r75") {
        const int pct = std::stoi(task.substr(1));
        const int keep = n * pct / 100;
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(seed);
        shuffle(idx, rng);
        for (int i = 0; i < keep; ++i) known[idx[i]] = true;
    } else {
        throw UsageError("unknown task '" + task + "' (want half|oct|r25|r50|r75)");
    }
    return known;
}

/// Reads an explicit mask file: G^3 characters '0'/'1' ('1' = known), slot
/// order i-fastest; whitespace is ignored.
inline std::vector<bool> load_mask_file(const std::string& path, int grid_dim) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open mask file: " + path);
    std::vector<bool> known;
    char c;
    while (is.get(c)) {
        if (c == '0') known.push_back(false);
        else if (c == '1') known.push_back(true);
        else if (!std::isspace(static_cast<unsigned char>(c)))
            throw FormatError("mask file: unexpected character '" + std::string(1, c) + "'");
    }
    const int n = grid_dim * grid_dim * grid_dim;
    if (static_cast<int>(known.size()) != n)
        throw FormatError("mask file: expected " + std::to_string(n) + " entries, got " +
                          std::to_string(known.size()));
    return known;
}

/// Drops the unknown slots of a full patch grid.
inline PatchGrid apply_known_slots(const PatchGrid& full, const std::vector<bool>& known) {
    if (static_cast<int>(known.size()) != full.slot_count())
        throw ShapeMismatch("apply_known_slots: mask size mismatch");
    PatchGrid partial = full;
    for (int s = 0; s < full.slot_count(); ++s)
        if (!known[s]) partial.slots[s].reset();
    return partial;
}

// ---------------------------------------------------------------------------
// Plots and series logs
// ---------------------------------------------------------------------------

/// Minimal SVG line plot for logged training series.
inline void write_svg_plot(const std::vector<std::pair<double, double>>& series,
                           const std::string& title, const std::string& path) {
    const int width = 640, height = 400, margin = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& [x, y] : series) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    if (series.empty()) { xmin = 0; xmax = 1; ymin = 0; ymax = 1; }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;

    auto px = [&](double x) {
        return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin);
    };
    auto py = [&](double y) {
        return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin);
    };

    io::AtomicFileWriter w(path);
    std::ostream& os = w.stream();
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
       << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << width / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
       << "</text>\n";
    os << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
       << "' y2='" << height - margin << "' stroke='black'/>\n";
    os << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
       << height - margin << "' stroke='black'/>\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", ymin);
    os << "<text x='4' y='" << height - margin << "' font-size='10'>" << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.4g", ymax);
    os << "<text x='4' y='" << margin << "' font-size='10'>" << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.4g", xmax);
    os << "<text x='" << width - margin << "' y='" << height - margin + 14
       << "' text-anchor='end' font-size='10'>" << buf << "</text>\n";
    if (!series.empty()) {
        os << "<polyline fill='none' stroke='steelblue' stroke-width='1.5' points='";
        for (const auto& [x, y] : series) os << px(x) << "," << py(y) << " ";
        os << "'/>\n";
    }
    os << "</svg>\n";
    w.commit();
}

/// Plain-text numeric series, one "x,y" pair per line (byte-stable format).
inline void write_series_csv(const std::vector<std::pair<double, double>>& series,
                             const std::string& header, const std::string& path) {
    io::AtomicFileWriter w(path);
    std::ostream& os = w.stream();
    os << header << "\n";
    char buf[80];
    for (const auto& [x, y] : series) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", x, y);
        os << buf;
    }
    w.commit();
}

}  // namespace sdfc::harness
