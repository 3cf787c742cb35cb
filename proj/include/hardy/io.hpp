#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hardy/errors.hpp"
#include "hardy/graph.hpp"
#include "hardy/tensor.hpp"

namespace hardy {

// On-disk formats. All integers are little-endian u32; matrix payloads are
// 32-bit floats, checkpoint payloads are 64-bit floats.
//   HMF1: magic "HMF1" | version | rows | dim | f32 row-major data
//   HML1: magic "HML1" | count | u32 class ids
//   HMC1: magic "HMC1" | version | block count | named f64 tensor blocks
inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw IntegrityError("truncated file while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

inline float get_f32(std::istream& is, const std::string& what) {
    std::uint32_t bits = get_u32(is, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u32(os, static_cast<std::uint32_t>(bits));
    put_u32(os, static_cast<std::uint32_t>(bits >> 32));
}

inline double get_f64(std::istream& is, const std::string& what) {
    std::uint64_t lo = get_u32(is, what);
    std::uint64_t hi = get_u32(is, what);
    std::uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void check_magic(std::istream& is, const char* magic, const std::string& path) {
    char buf[4];
    if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
        throw FormatError("bad magic in " + path + " (expected " + magic + ")");
}

inline std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw FormatError("cannot open " + p.string());
    return is;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot create " + p.string());
    return os;
}

}  // namespace detail

// ---- HMF1 feature matrix ------------------------------------------------

inline void write_matrix(const std::filesystem::path& path, const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("write_matrix: rank-2 tensor required");
    auto os = detail::open_out(path);
    os.write("HMF1", 4);
    detail::put_u32(os, kFormatVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data) detail::put_f32(os, static_cast<float>(v));
    if (!os) throw FormatError("write failed for " + path.string());
}

// Payload is widened from 32-bit to 64-bit on load.
inline Tensor read_matrix(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    detail::check_magic(is, "HMF1", path.string());
    const std::uint32_t version = detail::get_u32(is, "version");
    if (version != kFormatVersion)
        throw FormatError("unsupported HMF1 version " + std::to_string(version) + " in " + path.string());
    const std::uint32_t rows = detail::get_u32(is, "rows");
    const std::uint32_t dim = detail::get_u32(is, "dim");
    Tensor m = Tensor::zeros({rows, dim});
    for (double& v : m.data) v = static_cast<double>(detail::get_f32(is, path.string()));
    return m;
}

// ---- HML1 label file ----------------------------------------------------

inline void write_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
    auto os = detail::open_out(path);
    os.write("HML1", 4);
    detail::put_u32(os, static_cast<std::uint32_t>(labels.size()));
    for (int v : labels) detail::put_u32(os, static_cast<std::uint32_t>(v));
    if (!os) throw FormatError("write failed for " + path.string());
}

inline std::vector<int> read_labels(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    detail::check_magic(is, "HML1", path.string());
    const std::uint32_t count = detail::get_u32(is, "count");
    std::vector<int> labels(count);
    for (int& v : labels) v = static_cast<int>(detail::get_u32(is, path.string()));
    return labels;
}

// ---- plain-text key=value manifest --------------------------------------

inline void write_manifest(const std::filesystem::path& path,
                           const std::map<std::string, std::string>& kv) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot create " + path.string());
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
}

inline std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed manifest line '" + line + "' in " + path.string());
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

// ---- HMC1 checkpoint ----------------------------------------------------

inline void write_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
    auto os = detail::open_out(path);
    os.write("HMC1", 4);
    detail::put_u32(os, kFormatVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
        for (double v : t.data) detail::put_f64(os, v);
    }
    if (!os) throw FormatError("write failed for " + path.string());
}

inline ParamSet read_checkpoint(const std::filesystem::path& path) {
    auto is = detail::open_in(path);
    detail::check_magic(is, "HMC1", path.string());
    const std::uint32_t version = detail::get_u32(is, "version");
    if (version != kFormatVersion)
        throw FormatError("unsupported HMC1 version " + std::to_string(version) + " in " + path.string());
    const std::uint32_t count = detail::get_u32(is, "block count");
    ParamSet out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = detail::get_u32(is, "block name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw IntegrityError("truncated block name in " + path.string());
        const std::uint32_t rank = detail::get_u32(is, "block rank");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = detail::get_u32(is, "block dims");
        Tensor t = Tensor::zeros(shape);
        for (double& v : t.data) v = detail::get_f64(is, path.string());
        out[name] = std::move(t);
    }
    return out;
}

}  // namespace hardy
