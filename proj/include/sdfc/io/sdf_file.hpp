#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "sdfc/core/error.hpp"
#include "sdfc/geometry/sdf_grid.hpp"

namespace sdfc::io {

// SDF grid file: little-endian, magic "SDFG", version u32, resolution u32,
// then R^3 f32 values in x-fastest order.
inline constexpr char kSdfMagic[4] = {'S', 'D', 'F', 'G'};
inline constexpr std::uint32_t kSdfVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("unexpected end of file");
}

inline void expect_magic(std::istream& is, const char (&magic)[4], std::uint32_t expected_version,
                         const char* what) {
    char m[4];
    is.read(m, 4);
    if (!is || std::memcmp(m, magic, 4) != 0)
        throw FormatError(std::string(what) + ": bad magic");
    std::uint32_t version = 0;
    read_pod(is, version);
    if (version != expected_version)
        throw FormatError(std::string(what) + ": unsupported format version " +
                          std::to_string(version));
}

}  // namespace detail

/// Writes atomically: the data lands in a temp file that is renamed over the
/// destination only after a successful flush.
class AtomicFileWriter {
public:
    explicit AtomicFileWriter(const std::string& path)
        : path_(path), tmp_(path + ".tmp"), os_(tmp_, std::ios::binary | std::ios::trunc) {
        if (!os_) throw DataError("cannot open for writing: " + tmp_);
    }

    ~AtomicFileWriter() {
        if (!committed_) {
            os_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }

    std::ostream& stream() { return os_; }

    void commit() {
        os_.flush();
        if (!os_) throw DataError("write failed: " + tmp_);
        os_.close();
        std::filesystem::rename(tmp_, path_);
        committed_ = true;
    }

private:
    std::string path_, tmp_;
    std::ofstream os_;
    bool committed_ = false;
};

inline void save_sdf(const SdfGrid& grid, const std::string& path) {
    AtomicFileWriter w(path);
    w.stream().write(kSdfMagic, 4);
    detail::write_pod(w.stream(), kSdfVersion);
    detail::write_pod(w.stream(), static_cast<std::uint32_t>(grid.resolution));
    w.stream().write(reinterpret_cast<const char*>(grid.values.data()),
                     static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
    w.commit();
}

inline SdfGrid load_sdf(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open SDF file: " + path);
    detail::expect_magic(is, kSdfMagic, kSdfVersion, "SDF grid");
    std::uint32_t res = 0;
    detail::read_pod(is, res);
    if (res == 0 || res > 4096) throw FormatError("SDF grid: implausible resolution");
    SdfGrid grid(static_cast<int>(res));
    is.read(reinterpret_cast<char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
    if (!is) throw FormatError("SDF grid: truncated value block");
    return grid;
}

}  // namespace sdfc::io
