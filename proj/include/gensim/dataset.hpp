#pragma once

// Generated datasets on disk: magic, u64 header length, JSON header, then
// little-endian f64 arrays in header order. Cached by generator hash.

#include <bit>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "gensim/error.hpp"
#include "gensim/report.hpp"

namespace gensim {

inline constexpr char kDatasetMagic[16] = {'G', 'E', 'N', 'S', 'I', 'M', '-', 'D',
                                           'A', 'T', 'A', '-', 'v', '1', '\0', '\0'};

struct Dataset {
    Json header = Json::object();  // generator description and non-numeric payload
    std::map<std::string, Eigen::MatrixXd> arrays;

    const Eigen::MatrixXd& array(const std::string& name) const {
        const auto it = arrays.find(name);
        if (it == arrays.end()) throw IoError("dataset has no array '" + name + "'");
        return it->second;
    }
};

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
    static_assert(std::endian::native == std::endian::little, "dataset writer assumes a little-endian host");
    Json head = ds.header;
    Json shapes = Json::array();
    for (const auto& [name, m] : ds.arrays) shapes.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    head["arrays"] = shapes;
    const std::string text = head.dump();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write to a sibling and rename so a crashed run never leaves a torn cache entry.
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
        const std::uint64_t n = text.size();
        f.write(kDatasetMagic, 16);
        f.write(reinterpret_cast<const char*>(&n), 8);
        f.write(text.data(), static_cast<std::streamsize>(n));
        for (const auto& [name, m] : ds.arrays)
            f.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!f) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    auto get = [&](void* p, std::size_t n) {
        f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!f) throw IoError("truncated dataset: " + path.string());
    };
    char magic[16];
    get(magic, 16);
    if (std::memcmp(magic, kDatasetMagic, 16) != 0) throw IoError("not a dataset file: " + path.string());
    std::uint64_t n = 0;
    get(&n, 8);
    if (n > (1ull << 32)) throw IoError("corrupt dataset header: " + path.string());
    std::string text(n, '\0');
    get(text.data(), n);
    Dataset ds;
    try {
        ds.header = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    if (!ds.header.contains("arrays") || !ds.header["arrays"].is_array())
        throw IoError("dataset header lacks an array table: " + path.string());
    for (const auto& a : ds.header["arrays"]) {
        Eigen::MatrixXd m(a.at("rows").get<Eigen::Index>(), a.at("cols").get<Eigen::Index>());
        get(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
        ds.arrays[a.at("name").get<std::string>()] = std::move(m);
    }
    ds.header.erase("arrays");
    if (f.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in dataset: " + path.string());
    return ds;
}

/// GENSIM_CACHE_DIR when set, otherwise `fallback`.
inline std::filesystem::path dataset_cache_dir(const std::filesystem::path& fallback) {
    if (const char* env = std::getenv("GENSIM_CACHE_DIR"); env && *env) return env;
    return fallback;
}

/// Loads `<dir>/<key>.gsd` if present and matching, otherwise generates and stores it.
template <class Generate>
Dataset cached_dataset(const std::filesystem::path& dir, const Json& generator, Generate&& generate,
                       bool* reused = nullptr) {
    const std::string key = json_hash(generator);
    const std::filesystem::path path = dir / (key + ".gsd");
    if (std::filesystem::exists(path)) {
        Dataset ds = load_dataset(path);
        if (ds.header.value("generator", Json()) == canonical(generator)) {
            if (reused) *reused = true;
            return ds;
        }
    }
    Dataset ds = generate();
    ds.header["generator"] = canonical(generator);
    save_dataset(path, ds);
    if (reused) *reused = false;
    return ds;
}

}  // namespace gensim
