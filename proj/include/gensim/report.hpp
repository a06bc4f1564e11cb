#pragma once

// Byte-stable JSON and CSV output: sorted keys, floats rounded to 9
// significant digits.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gensim/error.hpp"
#include "gensim/rng.hpp"

namespace gensim {

using Json = nlohmann::json;

inline double round_sig9(double x) {
    if (!std::isfinite(x)) throw NumericFailure("report: non-finite value");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return std::strtod(buf, nullptr);
}

/// Copy of `j` with every float rounded to 9 significant digits.
inline Json canonical(const Json& j) {
    if (j.is_number_float()) return round_sig9(j.get<double>());
    if (j.is_object()) {
        Json out = Json::object();
        for (const auto& [k, v] : j.items()) out[k] = canonical(v);
        return out;
    }
    if (j.is_array()) {
        Json out = Json::array();
        for (const auto& v : j) out.push_back(canonical(v));
        return out;
    }
    return j;
}

inline std::string dump_canonical(const Json& j) { return canonical(j).dump(2) + "\n"; }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw IoError("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, dump_canonical(j)); }

inline Json read_json(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

inline std::string format_sig9(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

/// Rows of already-formatted cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) {
        if (row.size() != header.size()) throw std::invalid_argument("CsvTable: row width mismatch");
        rows.push_back(std::move(row));
    }

    std::string str() const {
        std::string s;
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
            s += "\n";
        };
        line(header);
        for (const auto& r : rows) line(r);
        return s;
    }
};

inline void write_csv(const std::filesystem::path& path, const CsvTable& t) { write_text(path, t.str()); }

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Hash of the canonical serialization.
inline std::string json_hash(const Json& j) { return hex64(fnv1a(canonical(j).dump())); }

}  // namespace gensim
