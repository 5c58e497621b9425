#pragma once

#include "sdfc/geometry/patch.hpp"
#include "sdfc/io/sdf_file.hpp"
#include "sdfc/slt/model.hpp"

namespace sdfc::io {

// Patch shard: magic "PSHD", version, count u32, then per patch
// f32 side, 3x f32 center, 32^3 f32 values.
inline constexpr char kPatchMagic[4] = {'P', 'S', 'H', 'D'};
inline constexpr std::uint32_t kPatchVersion = 1;

inline void save_patches(const std::vector<Patch>& patches, const std::string& path) {
    AtomicFileWriter w(path);
    std::ostream& os = w.stream();
    os.write(kPatchMagic, 4);
    detail::write_pod(os, kPatchVersion);
    detail::write_pod(os, static_cast<std::uint32_t>(patches.size()));
    for (const Patch& p : patches) {
        detail::write_pod(os, static_cast<float>(p.side));
        detail::write_pod(os, static_cast<float>(p.center.x));
        detail::write_pod(os, static_cast<float>(p.center.y));
        detail::write_pod(os, static_cast<float>(p.center.z));
        os.write(reinterpret_cast<const char*>(p.values.data()),
                 static_cast<std::streamsize>(p.values.size() * sizeof(float)));
    }
    w.commit();
}

inline std::vector<Patch> load_patches(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open patch shard: " + path);
    detail::expect_magic(is, kPatchMagic, kPatchVersion, "patch shard");
    std::uint32_t count = 0;
    detail::read_pod(is, count);
    std::vector<Patch> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        float side = 0, cx = 0, cy = 0, cz = 0;
        detail::read_pod(is, side);
        detail::read_pod(is, cx);
        detail::read_pod(is, cy);
        detail::read_pod(is, cz);
        Patch p(side, Vec3{cx, cy, cz});
        is.read(reinterpret_cast<char*>(p.values.data()),
                static_cast<std::streamsize>(p.values.size() * sizeof(float)));
        if (!is) throw FormatError("patch shard: truncated");
        out.push_back(std::move(p));
    }
    return out;
}

// Latent shard (one object): magic "LSHD", version, N u32, D u32,
// N*D f32 codes, N*3 f32 positions.
inline constexpr char kLatentMagic[4] = {'L', 'S', 'H', 'D'};
inline constexpr std::uint32_t kLatentVersion = 1;

inline void save_latent_sequence(const slt::LatentSequence& seq, const std::string& path) {
    AtomicFileWriter w(path);
    std::ostream& os = w.stream();
    os.write(kLatentMagic, 4);
    detail::write_pod(os, kLatentVersion);
    detail::write_pod(os, static_cast<std::uint32_t>(seq.n));
    detail::write_pod(os, static_cast<std::uint32_t>(seq.d));
    os.write(reinterpret_cast<const char*>(seq.codes.data()),
             static_cast<std::streamsize>(seq.codes.size() * sizeof(float)));
    for (const Vec3& p : seq.positions) {
        detail::write_pod(os, static_cast<float>(p.x));
        detail::write_pod(os, static_cast<float>(p.y));
        detail::write_pod(os, static_cast<float>(p.z));
    }
    w.commit();
}

inline slt::LatentSequence load_latent_sequence(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open latent shard: " + path);
    detail::expect_magic(is, kLatentMagic, kLatentVersion, "latent shard");
    std::uint32_t n = 0, d = 0;
    detail::read_pod(is, n);
    detail::read_pod(is, d);
    if (n == 0 || d == 0 || n > (1u << 16) || d > (1u << 20))
        throw FormatError("latent shard: implausible dimensions");
    slt::LatentSequence seq;
    seq.n = static_cast<int>(n);
    seq.d = static_cast<int>(d);
    seq.codes.resize(static_cast<std::size_t>(n) * d);
    is.read(reinterpret_cast<char*>(seq.codes.data()),
            static_cast<std::streamsize>(seq.codes.size() * sizeof(float)));
    seq.positions.resize(n);
    for (Vec3& p : seq.positions) {
        float x = 0, y = 0, z = 0;
        detail::read_pod(is, x);
        detail::read_pod(is, y);
        detail::read_pod(is, z);
        p = {x, y, z};
    }
    if (!is) throw FormatError("latent shard: truncated");
    return seq;
}

}  // namespace sdfc::io
