// SPDX-License-Identifier: Apache-2.0
#include "core/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "core/error.hpp"

namespace relgen::core {

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_tensor(std::ostream& out, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
}

std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    require(in.good(), "archive: truncated file");
    return v;
}

double get_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    require(in.good(), "archive: truncated file");
    return v;
}

std::string get_string(std::istream& in) {
    std::uint32_t n = get_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    require(in.good(), "archive: truncated file");
    return s;
}

Tensor get_tensor(std::istream& in) {
    std::uint32_t ndims = get_u32(in);
    if (ndims == 0) return Tensor();
    std::vector<std::size_t> shape(ndims);
    for (auto& d : shape) d = get_u32(in);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    require(in.good(), "archive: truncated tensor data");
    return t;
}

}  // namespace

void save_archive(const WeightArchive& ar, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "archive: cannot open for write: " + path);
    out.write("RGWT", 4);
    put_u32(out, 1);
    put_string(out, ar.meta_json);
    put_u32(out, static_cast<std::uint32_t>(ar.entries.size()));
    for (const auto& [key, e] : ar.entries) {
        put_string(out, key);
        put_u32(out, e.rank);
        put_f64(out, e.scale);
        put_tensor(out, e.a);
        put_tensor(out, e.b);
    }
    require(out.good(), "archive: write failed: " + path);
}

WeightArchive load_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "archive: cannot open: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    require(in.good() && std::memcmp(magic, "RGWT", 4) == 0,
            "archive: bad magic in " + path);
    std::uint32_t version = get_u32(in);
    require(version == 1, "archive: unsupported version");
    WeightArchive ar;
    ar.meta_json = get_string(in);
    std::uint32_t count = get_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string key = get_string(in);
        ArchiveEntry e;
        e.rank = get_u32(in);
        e.scale = get_f64(in);
        e.a = get_tensor(in);
        e.b = get_tensor(in);
        ar.entries.emplace(std::move(key), std::move(e));
    }
    return ar;
}

}  // namespace relgen::core
