#pragma once

// Embedding networks with hand-written backprop: a ReLU MLP for vector
// inputs and a conv net (3x3 conv, ReLU, 2x2 max-pool blocks, then a linear
// map) for square single-channel rasters.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gensim/error.hpp"
#include "gensim/rng.hpp"

namespace gensim {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class NetKind { mlp, conv };

struct NetSpec {
    NetKind kind = NetKind::mlp;
    /// mlp: input, hidden..., output.
    std::vector<int> widths;
    /// conv: input side (square, one channel), block count, filters per block, embedding width.
    int input_size = 64;
    int blocks = 4;
    int filters = 8;
    int embed_dim = 256;

    static NetSpec mlp(std::vector<int> widths) {
        NetSpec s;
        s.kind = NetKind::mlp;
        s.widths = std::move(widths);
        return s;
    }
    static NetSpec conv(int input_size, int blocks, int filters, int embed_dim) {
        NetSpec s;
        s.kind = NetKind::conv;
        s.input_size = input_size;
        s.blocks = blocks;
        s.filters = filters;
        s.embed_dim = embed_dim;
        return s;
    }

    int input_dim() const { return kind == NetKind::mlp ? widths.front() : input_size * input_size; }
    int output_dim() const { return kind == NetKind::mlp ? widths.back() : embed_dim; }
    int final_side() const { return input_size >> blocks; }

    void validate() const {
        if (kind == NetKind::mlp) {
            if (widths.size() < 2) throw std::invalid_argument("NetSpec: mlp needs input and output widths");
            for (int w : widths)
                if (w < 1) throw std::invalid_argument("NetSpec: widths must be >= 1");
            return;
        }
        if (blocks < 1 || filters < 1 || embed_dim < 1 || input_size < 1)
            throw std::invalid_argument("NetSpec: conv sizes must be >= 1");
        if (blocks > 20 || input_size % (1 << blocks) != 0)
            throw std::invalid_argument("NetSpec: input side must be divisible by 2^blocks");
    }

    /// Stable text form, used for hashing.
    std::string describe() const {
        std::string s;
        if (kind == NetKind::mlp) {
            s = "mlp";
            for (int w : widths) s += ":" + std::to_string(w);
        } else {
            s = "conv:" + std::to_string(input_size) + ":" + std::to_string(blocks) + ":" + std::to_string(filters) +
                ":" + std::to_string(embed_dim);
        }
        return s;
    }

    std::uint64_t hash() const { return fnv1a(describe()); }
};

/// One weight matrix (rows x cols, column-major) followed by its bias (rows).
struct LayerSlice {
    std::size_t offset;
    int rows;
    int cols;
    std::size_t weight_size() const { return static_cast<std::size_t>(rows) * cols; }
    std::size_t bias_offset() const { return offset + weight_size(); }
    std::size_t end() const { return bias_offset() + rows; }
};

/// MLP: one slice per linear layer. Conv: one slice per block (filters x
/// in_channels*9), then the final linear map.
inline std::vector<LayerSlice> layout(const NetSpec& spec) {
    spec.validate();
    std::vector<LayerSlice> out;
    std::size_t off = 0;
    auto add = [&](int rows, int cols) {
        out.push_back({off, rows, cols});
        off = out.back().end();
    };
    if (spec.kind == NetKind::mlp) {
        for (std::size_t l = 1; l < spec.widths.size(); ++l) add(spec.widths[l], spec.widths[l - 1]);
    } else {
        int channels = 1;
        for (int b = 0; b < spec.blocks; ++b) {
            add(spec.filters, channels * 9);
            channels = spec.filters;
        }
        add(spec.embed_dim, spec.filters * spec.final_side() * spec.final_side());
    }
    return out;
}

inline std::size_t param_count(const NetSpec& spec) { return layout(spec).back().end(); }

struct ParamVector {
    VectorXd values;
    std::vector<LayerSlice> slices;

    Eigen::Map<const MatrixXd> weight(std::size_t l) const {
        const auto& s = slices.at(l);
        return {values.data() + s.offset, s.rows, s.cols};
    }
    Eigen::Map<MatrixXd> weight(std::size_t l) {
        const auto& s = slices.at(l);
        return {values.data() + s.offset, s.rows, s.cols};
    }
    Eigen::Map<const VectorXd> bias(std::size_t l) const {
        const auto& s = slices.at(l);
        return {values.data() + s.bias_offset(), s.rows};
    }
    Eigen::Map<VectorXd> bias(std::size_t l) {
        const auto& s = slices.at(l);
        return {values.data() + s.bias_offset(), s.rows};
    }
};

inline ParamVector zero_params(const NetSpec& spec) {
    ParamVector p;
    p.slices = layout(spec);
    p.values = VectorXd::Zero(static_cast<Eigen::Index>(p.slices.back().end()));
    return p;
}

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
inline ParamVector init_params(const NetSpec& spec, Rng& rng) {
    ParamVector p = zero_params(spec);
    for (std::size_t l = 0; l < p.slices.size(); ++l) {
        const double bound = std::sqrt(6.0 / p.slices[l].cols);
        auto w = p.weight(l);
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = uniform(rng, -bound, bound);
    }
    return p;
}

inline std::uint64_t checksum(const VectorXd& v) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Eigen::Index i = 0; i < v.size(); ++i) h = mix64(h ^ std::bit_cast<std::uint64_t>(v[i]));
    return h;
}

/// Activations kept by forward for backward.
struct ForwardCache {
    std::uint64_t spec_hash = 0;
    std::uint64_t param_sum = 0;
    int batch = 0;
    // mlp: inputs to each layer (post-ReLU); conv: im2col of each block input.
    std::vector<MatrixXd> layer_inputs;
    std::vector<RowMat> cols;
    std::vector<RowMat> relu_out;
    std::vector<std::vector<std::int32_t>> pool_arg;
    MatrixXd flat;
};

namespace detail {

/// (C x B*S*S) planes -> (C*9 x B*S*S), zero padding.
inline void im2col(const RowMat& in, int side, int batch, RowMat& col) {
    const int C = static_cast<int>(in.rows());
    const Eigen::Index P = static_cast<Eigen::Index>(batch) * side * side;
    col.resize(C * 9, P);
    for (int c = 0; c < C; ++c)
        for (int di = 0; di < 3; ++di)
            for (int dj = 0; dj < 3; ++dj) {
                double* dst = col.row(c * 9 + di * 3 + dj).data();
                const double* src = in.row(c).data();
                for (int b = 0; b < batch; ++b) {
                    const std::size_t base = static_cast<std::size_t>(b) * side * side;
                    for (int i = 0; i < side; ++i) {
                        const int si = i + di - 1;
                        double* d = dst + base + static_cast<std::size_t>(i) * side;
                        if (si < 0 || si >= side) {
                            std::fill(d, d + side, 0.0);
                            continue;
                        }
                        const double* s = src + base + static_cast<std::size_t>(si) * side;
                        for (int j = 0; j < side; ++j) {
                            const int sj = j + dj - 1;
                            d[j] = (sj < 0 || sj >= side) ? 0.0 : s[sj];
                        }
                    }
                }
            }
}

/// Adjoint of im2col.
inline void col2im(const RowMat& col, int channels, int side, int batch, RowMat& out) {
    out.setZero(channels, static_cast<Eigen::Index>(batch) * side * side);
    for (int c = 0; c < channels; ++c)
        for (int di = 0; di < 3; ++di)
            for (int dj = 0; dj < 3; ++dj) {
                const double* src = col.row(c * 9 + di * 3 + dj).data();
                double* dst = out.row(c).data();
                for (int b = 0; b < batch; ++b) {
                    const std::size_t base = static_cast<std::size_t>(b) * side * side;
                    for (int i = 0; i < side; ++i) {
                        const int si = i + di - 1;
                        if (si < 0 || si >= side) continue;
                        const double* s = src + base + static_cast<std::size_t>(i) * side;
                        double* d = dst + base + static_cast<std::size_t>(si) * side;
                        for (int j = 0; j < side; ++j) {
                            const int sj = j + dj - 1;
                            if (sj >= 0 && sj < side) d[sj] += s[j];
                        }
                    }
                }
            }
}

/// 2x2 max-pool; records the flat input index of each winner (first max wins).
inline void maxpool(const RowMat& in, int side, int batch, RowMat& out, std::vector<std::int32_t>& arg) {
    const int C = static_cast<int>(in.rows()), h = side / 2;
    out.resize(C, static_cast<Eigen::Index>(batch) * h * h);
    arg.resize(static_cast<std::size_t>(out.size()));
    for (int c = 0; c < C; ++c) {
        const double* s = in.row(c).data();
        double* d = out.row(c).data();
        std::int32_t* a = arg.data() + static_cast<std::size_t>(c) * out.cols();
        for (int b = 0; b < batch; ++b)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < h; ++j) {
                    const std::int32_t p0 = b * side * side + 2 * i * side + 2 * j;
                    std::int32_t best = p0;
                    for (std::int32_t q : {p0 + 1, p0 + side, p0 + side + 1})
                        if (s[q] > s[best]) best = q;
                    const std::size_t o = static_cast<std::size_t>(b) * h * h + static_cast<std::size_t>(i) * h + j;
                    d[o] = s[best];
                    a[o] = best;
                }
    }
}

}  // namespace detail

/// Embeds each column of `inputs` (input_dim x batch). For conv specs a
/// column is a row-major image. Returns output_dim x batch.
inline MatrixXd forward(const NetSpec& spec, const ParamVector& params, const MatrixXd& inputs,
                        ForwardCache* cache = nullptr) {
    if (inputs.rows() != spec.input_dim())
        throw std::invalid_argument("forward: input has " + std::to_string(inputs.rows()) + " rows, spec expects " +
                                    std::to_string(spec.input_dim()));
    if (static_cast<std::size_t>(params.values.size()) != param_count(spec))
        throw std::invalid_argument("forward: parameter vector does not match spec");
    const int batch = static_cast<int>(inputs.cols());
    if (cache) {
        *cache = ForwardCache{};
        cache->spec_hash = spec.hash();
        cache->param_sum = checksum(params.values);
        cache->batch = batch;
    }
    const std::size_t L = params.slices.size();
    if (spec.kind == NetKind::mlp) {
        MatrixXd a = inputs;
        for (std::size_t l = 0; l < L; ++l) {
            if (cache) cache->layer_inputs.push_back(a);
            MatrixXd z = params.weight(l) * a;
            z.colwise() += params.bias(l);
            a = (l + 1 < L) ? MatrixXd(z.cwiseMax(0.0)) : z;
        }
        return a;
    }
    RowMat act = Eigen::Map<const RowMat>(inputs.data(), 1, inputs.size());
    int side = spec.input_size;
    RowMat col, z, pooled;
    std::vector<std::int32_t> arg;
    for (int blk = 0; blk < spec.blocks; ++blk) {
        detail::im2col(act, side, batch, col);
        z.noalias() = params.weight(static_cast<std::size_t>(blk)) * col;
        z.colwise() += params.bias(static_cast<std::size_t>(blk));
        z = z.cwiseMax(0.0);
        detail::maxpool(z, side, batch, pooled, arg);
        if (cache) {
            cache->cols.push_back(std::move(col));
            cache->relu_out.push_back(std::move(z));
            cache->pool_arg.push_back(std::move(arg));
        }
        act.swap(pooled);
        side /= 2;
    }
    const int F = spec.filters, area = side * side;
    MatrixXd flat(F * area, batch);
    for (int b = 0; b < batch; ++b)
        for (int f = 0; f < F; ++f)
            for (int p = 0; p < area; ++p) flat(f * area + p, b) = act(f, b * area + p);
    MatrixXd out = params.weight(L - 1) * flat;
    out.colwise() += params.bias(L - 1);
    if (cache) cache->flat = std::move(flat);
    return out;
}

/// Gradient of sum(output .* output_grad) with respect to the parameters.
inline VectorXd backward(const NetSpec& spec, const ParamVector& params, const ForwardCache& cache,
                         const MatrixXd& output_grad) {
    if (cache.spec_hash != spec.hash() || cache.param_sum != checksum(params.values))
        throw std::invalid_argument("backward: stale cache (spec or parameters changed since forward)");
    if (output_grad.rows() != spec.output_dim() || output_grad.cols() != cache.batch)
        throw std::invalid_argument("backward: output_grad shape mismatch");
    ParamVector g = zero_params(spec);
    const std::size_t L = params.slices.size();
    if (spec.kind == NetKind::mlp) {
        MatrixXd d = output_grad;
        for (std::size_t l = L; l-- > 0;) {
            const MatrixXd& a = cache.layer_inputs[l];
            g.weight(l).noalias() = d * a.transpose();
            g.bias(l) = d.rowwise().sum();
            if (l == 0) break;
            MatrixXd da = params.weight(l).transpose() * d;
            d = (a.array() > 0.0).select(da, 0.0);
        }
        return std::move(g.values);
    }
    const int batch = cache.batch, F = spec.filters;
    int side = spec.final_side();
    const int area = side * side;
    g.weight(L - 1).noalias() = output_grad * cache.flat.transpose();
    g.bias(L - 1) = output_grad.rowwise().sum();
    const MatrixXd dflat = params.weight(L - 1).transpose() * output_grad;
    RowMat dpooled(F, static_cast<Eigen::Index>(batch) * area);
    for (int b = 0; b < batch; ++b)
        for (int f = 0; f < F; ++f)
            for (int p = 0; p < area; ++p) dpooled(f, b * area + p) = dflat(f * area + p, b);
    RowMat dz, dcol, din;
    for (int blk = spec.blocks; blk-- > 0;) {
        side *= 2;
        const RowMat& relu = cache.relu_out[static_cast<std::size_t>(blk)];
        const auto& arg = cache.pool_arg[static_cast<std::size_t>(blk)];
        dz.setZero(relu.rows(), relu.cols());
        for (Eigen::Index c = 0; c < dz.rows(); ++c) {
            double* d = dz.row(c).data();
            const double* r = relu.row(c).data();
            const double* up = dpooled.row(c).data();
            const std::int32_t* a = arg.data() + static_cast<std::size_t>(c) * dpooled.cols();
            for (Eigen::Index o = 0; o < dpooled.cols(); ++o)
                if (r[a[o]] > 0.0) d[a[o]] += up[o];
        }
        const auto bl = static_cast<std::size_t>(blk);
        const RowMat& col = cache.cols[bl];
        g.weight(bl).noalias() = dz * col.transpose();
        g.bias(bl) = dz.rowwise().sum();
        if (blk == 0) break;
        dcol.noalias() = params.weight(bl).transpose() * dz;
        detail::col2im(dcol, F, side, batch, din);
        dpooled.swap(din);
    }
    return std::move(g.values);
}

/// Loss of a batch of outputs and its gradient with respect to them.
using OutputLoss = std::function<double(const MatrixXd& outputs, MatrixXd* grad)>;

/// Central differences on `n_coords` random coordinates against backward.
/// Returns the max of |a - b| / max(|a|, |b|, 1e-8), where |a - b| is first
/// reduced by the rounding error of the difference quotient itself
/// (64 ulp of the loss over eps); otherwise coordinates whose true gradient
/// is zero would report pure rounding noise as error.
inline double finite_diff_check(const NetSpec& spec, const ParamVector& params, const MatrixXd& inputs,
                                const OutputLoss& loss, double eps, Rng& rng, int n_coords = 100) {
    if (eps < 1e-7 || eps > 1e-3) throw std::invalid_argument("finite_diff_check: eps must be in [1e-7, 1e-3]");
    ForwardCache cache;
    const MatrixXd out = forward(spec, params, inputs, &cache);
    MatrixXd dout = MatrixXd::Zero(out.rows(), out.cols());
    loss(out, &dout);
    const VectorXd grad = backward(spec, params, cache, dout);
    ParamVector probe = params;
    double worst = 0.0;
    const auto n = static_cast<std::size_t>(params.values.size());
    for (int k = 0; k < n_coords; ++k) {
        const auto i = static_cast<Eigen::Index>(uniform_index(rng, n));
        const double keep = probe.values[i];
        probe.values[i] = keep + eps;
        const double up = loss(forward(spec, probe, inputs), nullptr);
        probe.values[i] = keep - eps;
        const double down = loss(forward(spec, probe, inputs), nullptr);
        probe.values[i] = keep;
        const double fd = (up - down) / (2 * eps), an = grad[i];
        const double rounding = 64 * std::numeric_limits<double>::epsilon() * std::max(std::fabs(up), std::fabs(down)) / eps;
        const double diff = std::max(0.0, std::fabs(fd - an) - rounding);
        worst = std::max(worst, diff / std::max({std::fabs(fd), std::fabs(an), 1e-8}));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints: 16-byte magic, spec hash, slice table, little-endian f64 values.

inline constexpr char kCheckpointMagic[16] = {'G', 'E', 'N', 'S', 'I', 'M', '-', 'C',
                                              'K', 'P', 'T', '-', 'v', '1', '\0', '\0'};

inline void save_checkpoint(const std::filesystem::path& path, const NetSpec& spec, const ParamVector& params) {
    static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    auto put = [&](const void* p, std::size_t n) { f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
    const std::uint64_t h = spec.hash(), n_slices = params.slices.size(),
                        n_values = static_cast<std::uint64_t>(params.values.size());
    put(kCheckpointMagic, 16);
    put(&h, 8);
    put(&n_slices, 8);
    for (const LayerSlice& s : params.slices) {
        const std::uint64_t rec[3] = {s.offset, static_cast<std::uint64_t>(s.rows), static_cast<std::uint64_t>(s.cols)};
        put(rec, sizeof rec);
    }
    put(&n_values, 8);
    put(params.values.data(), params.values.size() * sizeof(double));
    if (!f) throw IoError("write failed: " + path.string());
}

inline ParamVector load_checkpoint(const std::filesystem::path& path, const NetSpec& spec) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    auto get = [&](void* p, std::size_t n) {
        f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!f) throw IoError("truncated checkpoint: " + path.string());
    };
    char magic[16];
    get(magic, 16);
    if (std::memcmp(magic, kCheckpointMagic, 16) != 0) throw IoError("not a checkpoint: " + path.string());
    std::uint64_t h = 0, n_slices = 0, n_values = 0;
    get(&h, 8);
    if (h != spec.hash()) throw IoError("checkpoint " + path.string() + " was written for a different network spec");
    ParamVector p = zero_params(spec);
    get(&n_slices, 8);
    if (n_slices != p.slices.size()) throw IoError("checkpoint layout mismatch: " + path.string());
    for (const LayerSlice& s : p.slices) {
        std::uint64_t rec[3];
        get(rec, sizeof rec);
        if (rec[0] != s.offset || rec[1] != static_cast<std::uint64_t>(s.rows) ||
            rec[2] != static_cast<std::uint64_t>(s.cols))
            throw IoError("checkpoint layout mismatch: " + path.string());
    }
    get(&n_values, 8);
    if (n_values != static_cast<std::uint64_t>(p.values.size())) throw IoError("checkpoint size mismatch: " + path.string());
    get(p.values.data(), p.values.size() * sizeof(double));
    return p;
}

}  // namespace gensim
