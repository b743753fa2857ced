#pragma once

#include "pclnet/common.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace pclnet::ckpt {

using nlohmann::json;
// FNV-1a over bytes; used for config hashes and blob content hashes
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// named matrices serialized as one flat little-endian float64 blob
class Blob {
public:
    void add(const std::string& name, const Mat& m) { entries_.push_back({name, m}); }

    json manifest_shapes() const {
        json shapes = json::array();
        for (const auto& [name, m] : entries_)
            shapes.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
        return shapes;
    }

    void write(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot write blob: " + path);
        for (const auto& [name, m] : entries_)
            f.write(reinterpret_cast<const char*>(m.data()),
                    static_cast<std::streamsize>(sizeof(double) * m.size()));
    }

    std::uint64_t content_hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& [name, m] : entries_) {
            h = fnv1a(name.data(), name.size(), h);
            h = fnv1a(m.data(), sizeof(double) * m.size(), h);
        }
        return h;
    }

    static Blob read(const std::string& path, const json& shapes) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot read blob: " + path);
        Blob b;
        for (const auto& s : shapes) {
            Mat m(s.at("rows").get<long>(), s.at("cols").get<long>());
            f.read(reinterpret_cast<char*>(m.data()),
                   static_cast<std::streamsize>(sizeof(double) * m.size()));
            if (!f) throw DataError("blob shorter than its manifest: " + path);
            b.entries_.push_back({s.at("name").get<std::string>(), std::move(m)});
        }
        return b;
    }

    const Mat& get(const std::string& name) const {
        for (const auto& [n, m] : entries_)
            if (n == name) return m;
        throw DataError("blob entry missing: " + name);
    }

    const std::vector<std::pair<std::string, Mat>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, Mat>> entries_;
};

// write manifest + blob; returns the blob content hash
inline std::uint64_t write_checkpoint(const std::string& base_path, json manifest, const Blob& blob) {
    manifest["shapes"] = blob.manifest_shapes();
    manifest["blob_file"] = base_path.substr(base_path.find_last_of('/') + 1) + ".bin";
    std::uint64_t h = blob.content_hash();
    manifest["content_hash"] = hash_hex(h);
    std::ofstream f(base_path + ".json", std::ios::binary);
    if (!f) throw DataError("cannot write manifest: " + base_path + ".json");
    f << manifest.dump(2) << "\n";
    blob.write(base_path + ".bin");
    return h;
}

inline std::pair<json, Blob> read_checkpoint(const std::string& base_path) {
    std::ifstream f(base_path + ".json");
    if (!f) throw DataError("cannot read manifest: " + base_path + ".json");
    json manifest = json::parse(f);
    Blob blob = Blob::read(base_path + ".bin", manifest.at("shapes"));
    return {manifest, blob};
}

} // namespace pclnet::ckpt
