#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gensim/error.hpp"

namespace gensim {

/// Square grayscale image, row-major, values in [0, 1] (ink = 1).
class Raster {
public:
    Raster() = default;
    explicit Raster(int size, double fill = 0.0) : size_(size), pixels_(checked_area(size), fill) {}
    Raster(int size, std::vector<double> pixels) : size_(size), pixels_(std::move(pixels)) {
        if (pixels_.size() != checked_area(size)) throw std::invalid_argument("Raster: pixel count mismatch");
    }

    int size() const noexcept { return size_; }
    double& at(int row, int col) { return pixels_[static_cast<std::size_t>(row) * size_ + col]; }
    double at(int row, int col) const { return pixels_[static_cast<std::size_t>(row) * size_ + col]; }
    std::span<const double> pixels() const noexcept { return pixels_; }
    std::vector<double>& data() noexcept { return pixels_; }
    const std::vector<double>& data() const noexcept { return pixels_; }

    void clamp() {
        for (double& p : pixels_) p = std::clamp(p, 0.0, 1.0);
    }

    std::size_t count_nonzero() const {
        return static_cast<std::size_t>(std::count_if(pixels_.begin(), pixels_.end(), [](double p) { return p != 0.0; }));
    }

    bool operator==(const Raster&) const = default;

private:
    static std::size_t checked_area(int size) {
        if (size <= 0) throw std::invalid_argument("Raster: size must be positive");
        return static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
    }

    int size_ = 0;
    std::vector<double> pixels_;
};

inline double mean_grey(const Raster& r) {
    if (r.size() == 0) throw std::invalid_argument("mean_grey: empty raster");
    double s = 0;
    for (double p : r.pixels()) s += p;
    return s / static_cast<double>(r.pixels().size());
}

/// Binary PGM (P5), maxval 255.
inline std::string to_pgm(const Raster& r) {
    std::ostringstream out;
    out << "P5\n" << r.size() << ' ' << r.size() << "\n255\n";
    std::string body(r.pixels().size(), '\0');
    for (std::size_t i = 0; i < body.size(); ++i)
        body[i] = static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(r.pixels()[i], 0.0, 1.0) * 255.0)));
    out << body;
    return out.str();
}

inline void write_pgm(const Raster& r, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    const std::string bytes = to_pgm(r);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

/// Reads a square P5 image written by write_pgm; pixels scaled to [0, 1].
inline Raster read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    f.get();
    if (magic != "P5" || w != h || w <= 0 || maxval != 255) throw IoError("unsupported PGM: " + path.string());
    std::vector<char> buf(static_cast<std::size_t>(w) * h);
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("truncated PGM: " + path.string());
    std::vector<double> px(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) px[i] = static_cast<std::uint8_t>(buf[i]) / 255.0;
    return Raster(w, std::move(px));
}

/// Continuous image coordinate -> pixel index. Mirror-symmetric about the
/// image center, so point sets symmetric about the center light up
/// symmetric pixels.
inline int pixel_index(double u, int size) {
    const double half = 0.5 * size;
    const int i = u < half ? static_cast<int>(std::floor(u)) : static_cast<int>(std::ceil(u)) - 1;
    return std::clamp(i, 0, size - 1);
}

/// Marks every pixel touched by the segment (u0,v0)-(u1,v1), sampled at
/// quarter-pixel steps. Coordinates are (column, row) in pixel units.
inline void draw_segment(Raster& r, double u0, double v0, double u1, double v1, double ink = 1.0) {
    const double len = std::hypot(u1 - u0, v1 - v0);
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 4.0)));
    for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        const int col = pixel_index(u0 + t * (u1 - u0), r.size());
        const int row = pixel_index(v0 + t * (v1 - v0), r.size());
        r.at(row, col) = std::max(r.at(row, col), ink);
    }
}

}  // namespace gensim
