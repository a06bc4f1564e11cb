#pragma once

// SimCLR-style image augmentation: random resized square crop, horizontal
// flip, Gaussian blur.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gensim/raster.hpp"
#include "gensim/rng.hpp"
#include "gensim/stats.hpp"

namespace gensim {

inline double uniform_or_point(Rng& rng, const Interval& r) { return r.lo == r.hi ? r.lo : uniform(rng, r.lo, r.hi); }

struct AugmentSpec {
    /// Fraction of the image area kept by the crop.
    Interval crop_scale{0.5, 1.0};
    double flip_prob = 0.5;
    Interval blur_sigma{0.0, 1.0};

    void validate() const {
        if (!(crop_scale.lo > 0) || crop_scale.hi > 1 || crop_scale.lo > crop_scale.hi)
            throw std::invalid_argument("AugmentSpec: crop_scale must be an ordered interval in (0, 1]");
        if (!(flip_prob >= 0 && flip_prob <= 1)) throw std::invalid_argument("AugmentSpec: flip_prob must be in [0, 1]");
        if (!(blur_sigma.lo >= 0) || blur_sigma.lo > blur_sigma.hi)
            throw std::invalid_argument("AugmentSpec: blur_sigma must be an ordered interval >= 0");
    }

    static AugmentSpec identity() { return {{1.0, 1.0}, 0.0, {0.0, 0.0}}; }
};

/// Square crop of side `crop` (pixels) at (top, left), resized to the full
/// image by bilinear interpolation at pixel centers.
inline Raster crop_resize(const Raster& in, double top, double left, double crop) {
    const int n = in.size();
    Raster out(n);
    const double step = crop / n;
    auto px = [&](int i, int j) {
        i = std::clamp(i, 0, n - 1);
        j = std::clamp(j, 0, n - 1);
        return in.at(i, j);
    };
    for (int i = 0; i < n; ++i) {
        const double y = top + (i + 0.5) * step - 0.5;
        const int y0 = static_cast<int>(std::floor(y));
        const double fy = y - y0;
        for (int j = 0; j < n; ++j) {
            const double x = left + (j + 0.5) * step - 0.5;
            const int x0 = static_cast<int>(std::floor(x));
            const double fx = x - x0;
            out.at(i, j) = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                           fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
        }
    }
    return out;
}

inline Raster flip_horizontal(const Raster& in) {
    const int n = in.size();
    Raster out(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = in.at(i, n - 1 - j);
    return out;
}

/// Separable Gaussian blur, kernel radius ceil(3 sigma), zero padding.
inline Raster gaussian_blur(const Raster& in, double sigma) {
    if (!(sigma > 0)) return in;
    const int n = in.size(), radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    std::vector<double> k(2 * static_cast<std::size_t>(radius) + 1);
    double total = 0;
    for (int t = -radius; t <= radius; ++t) total += k[static_cast<std::size_t>(t + radius)] = std::exp(-0.5 * t * t / (sigma * sigma));
    for (double& w : k) w /= total;
    Raster tmp(n), out(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int t = -radius; t <= radius; ++t)
                if (j + t >= 0 && j + t < n) s += k[static_cast<std::size_t>(t + radius)] * in.at(i, j + t);
            tmp.at(i, j) = s;
        }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int t = -radius; t <= radius; ++t)
                if (i + t >= 0 && i + t < n) s += k[static_cast<std::size_t>(t + radius)] * tmp.at(i + t, j);
            out.at(i, j) = s;
        }
    return out;
}

inline Raster augment(const Raster& in, const AugmentSpec& spec, Rng& rng) {
    spec.validate();
    const int n = in.size();
    const double area = uniform_or_point(rng, spec.crop_scale);
    const double crop = n * std::sqrt(area);
    const double top = crop < n ? uniform(rng, 0, n - crop) : 0.0;
    const double left = crop < n ? uniform(rng, 0, n - crop) : 0.0;
    Raster out = crop_resize(in, top, left, crop);
    if (spec.flip_prob > 0 && uniform(rng, 0, 1) < spec.flip_prob) out = flip_horizontal(out);
    const double sigma = uniform_or_point(rng, spec.blur_sigma);
    out = gaussian_blur(out, sigma);
    out.clamp();
    return out;
}

}  // namespace gensim
