#pragma once

// Dense H x W x C grids and the handful of spatial operators the quantizer
// needs: area downsampling, align-corners bilinear upsampling, a depthwise
// 3x3 convolution, plus the exact adjoint of each for backpropagation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "imagefolder/error.hpp"

namespace imagefolder {

struct Grid {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;  // row-major: (y * width + x) * channels + c

    Grid() = default;
    Grid(int h, int w, int c, double fill = 0.0) : height(h), width(w), channels(c) {
        detail::require_arg(h > 0 && w > 0 && c > 0, "grid dimensions must be positive");
        data.assign(static_cast<std::size_t>(h) * w * c, fill);
    }

    static Grid square(int k, int c, double fill = 0.0) { return Grid(k, k, c, fill); }

    std::size_t cells() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }
    bool is_square() const { return height == width; }

    std::size_t offset(int y, int x, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int y, int x, int c) { return data[offset(y, x, c)]; }
    double at(int y, int x, int c) const { return data[offset(y, x, c)]; }

    std::span<double> cell(int y, int x) { return {data.data() + offset(y, x), static_cast<std::size_t>(channels)}; }
    std::span<const double> cell(int y, int x) const {
        return {data.data() + offset(y, x), static_cast<std::size_t>(channels)};
    }
    std::span<const double> cell(std::size_t flat) const {
        return {data.data() + flat * channels, static_cast<std::size_t>(channels)};
    }
    std::span<double> cell(std::size_t flat) { return {data.data() + flat * channels, static_cast<std::size_t>(channels)}; }

    bool same_shape(const Grid& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
    }

    Grid& operator+=(const Grid& o) {
        detail::require_arg(same_shape(o), "grid shape mismatch in +=");
        for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }
    Grid& operator-=(const Grid& o) {
        detail::require_arg(same_shape(o), "grid shape mismatch in -=");
        for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
        return *this;
    }
    Grid& operator*=(double s) {
        for (double& v : data) v *= s;
        return *this;
    }

    friend bool operator==(const Grid&, const Grid&) = default;
};

inline Grid operator+(Grid a, const Grid& b) { return a += b; }
inline Grid operator-(Grid a, const Grid& b) { return a -= b; }
inline Grid operator*(double s, Grid a) { return a *= s; }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Concatenates two grids of equal spatial size along the channel axis (a first).
inline Grid concat_channels(const Grid& a, const Grid& b) {
    detail::require_arg(a.height == b.height && a.width == b.width, "concat: spatial size mismatch");
    Grid out(a.height, a.width, a.channels + b.channels);
    for (std::size_t i = 0; i < a.cells(); ++i) {
        auto dst = out.cell(i);
        auto sa = a.cell(i);
        auto sb = b.cell(i);
        std::copy(sa.begin(), sa.end(), dst.begin());
        std::copy(sb.begin(), sb.end(), dst.begin() + a.channels);
    }
    return out;
}

/// Extracts channels [first, first + count).
inline Grid slice_channels(const Grid& g, int first, int count) {
    detail::require_arg(first >= 0 && count > 0 && first + count <= g.channels, "slice_channels: bad range");
    Grid out(g.height, g.width, count);
    for (std::size_t i = 0; i < g.cells(); ++i) {
        auto src = g.cell(i);
        std::copy(src.begin() + first, src.begin() + first + count, out.cell(i).begin());
    }
    return out;
}

/// Per-channel mean over all cells.
inline std::vector<double> mean_pool(const Grid& g) {
    std::vector<double> out(g.channels, 0.0);
    for (std::size_t i = 0; i < g.cells(); ++i) {
        auto c = g.cell(i);
        for (int k = 0; k < g.channels; ++k) out[k] += c[k];
    }
    for (double& v : out) v /= static_cast<double>(g.cells());
    return out;
}

namespace detail {

// Adaptive average pooling bins: output index i covers [floor(i*n/k), ceil((i+1)*n/k)).
inline int pool_begin(int i, int n, int k) { return (i * n) / k; }
inline int pool_end(int i, int n, int k) { return ((i + 1) * n + k - 1) / k; }

}  // namespace detail

/// Area-average downsampling of a square grid to k x k. Bins follow adaptive
/// average pooling, so they partition exactly when k divides the size and
/// overlap by at most one row/column otherwise.
inline Grid downsample(const Grid& g, int k) {
    detail::require_arg(g.is_square(), "downsample: grid must be square");
    detail::require_arg(k > 0 && k <= g.height, "downsample: need 0 < k <= size");
    if (k == g.height) return g;
    const int n = g.height;
    Grid out = Grid::square(k, g.channels);
    for (int oy = 0; oy < k; ++oy) {
        const int y0 = detail::pool_begin(oy, n, k), y1 = detail::pool_end(oy, n, k);
        for (int ox = 0; ox < k; ++ox) {
            const int x0 = detail::pool_begin(ox, n, k), x1 = detail::pool_end(ox, n, k);
            const double inv = 1.0 / static_cast<double>((y1 - y0) * (x1 - x0));
            auto dst = out.cell(oy, ox);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    auto src = g.cell(y, x);
                    for (int c = 0; c < g.channels; ++c) dst[c] += src[c];
                }
            for (double& v : dst) v *= inv;
        }
    }
    return out;
}

/// Adjoint of downsample: maps a gradient on the k x k output back to n x n.
inline Grid downsample_backward(const Grid& grad_out, int n) {
    const int k = grad_out.height;
    detail::require_arg(grad_out.is_square() && k <= n, "downsample_backward: bad shapes");
    if (k == n) return grad_out;
    Grid out = Grid::square(n, grad_out.channels);
    for (int oy = 0; oy < k; ++oy) {
        const int y0 = detail::pool_begin(oy, n, k), y1 = detail::pool_end(oy, n, k);
        for (int ox = 0; ox < k; ++ox) {
            const int x0 = detail::pool_begin(ox, n, k), x1 = detail::pool_end(ox, n, k);
            const double inv = 1.0 / static_cast<double>((y1 - y0) * (x1 - x0));
            auto src = grad_out.cell(oy, ox);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    auto dst = out.cell(y, x);
                    for (int c = 0; c < out.channels; ++c) dst[c] += src[c] * inv;
                }
        }
    }
    return out;
}

namespace detail {

struct Tap {
    int lo;
    int hi;
    double frac;  // weight of hi; lo gets 1 - frac
};

// align_corners = true: output i samples input coordinate i * (n - 1) / (k - 1).
inline std::vector<Tap> bilinear_taps(int n, int k) {
    std::vector<Tap> taps(k);
    for (int i = 0; i < k; ++i) {
        if (n == 1 || k == 1) {
            taps[i] = {0, 0, 0.0};
            continue;
        }
        const double src = static_cast<double>(i) * (n - 1) / (k - 1);
        int lo = static_cast<int>(std::floor(src));
        lo = std::min(lo, n - 2);
        taps[i] = {lo, lo + 1, src - lo};
    }
    return taps;
}

}  // namespace detail

/// Bilinear upsampling of a square grid to k x k with align-corners
/// semantics: the four corner cells of input and output coincide.
inline Grid upsample(const Grid& g, int k) {
    detail::require_arg(g.is_square(), "upsample: grid must be square");
    detail::require_arg(k >= g.height, "upsample: need k >= size");
    if (k == g.height) return g;
    const auto taps = detail::bilinear_taps(g.height, k);
    Grid out = Grid::square(k, g.channels);
    for (int oy = 0; oy < k; ++oy) {
        const auto& ty = taps[oy];
        for (int ox = 0; ox < k; ++ox) {
            const auto& tx = taps[ox];
            auto dst = out.cell(oy, ox);
            const double w00 = (1 - ty.frac) * (1 - tx.frac), w01 = (1 - ty.frac) * tx.frac;
            const double w10 = ty.frac * (1 - tx.frac), w11 = ty.frac * tx.frac;
            auto a = g.cell(ty.lo, tx.lo), b = g.cell(ty.lo, tx.hi);
            auto c = g.cell(ty.hi, tx.lo), d = g.cell(ty.hi, tx.hi);
            for (int ch = 0; ch < g.channels; ++ch)
                dst[ch] = w00 * a[ch] + w01 * b[ch] + w10 * c[ch] + w11 * d[ch];
        }
    }
    return out;
}

/// Adjoint of upsample: scatters a k x k gradient back onto the n x n input.
inline Grid upsample_backward(const Grid& grad_out, int n) {
    const int k = grad_out.height;
    detail::require_arg(grad_out.is_square() && k >= n, "upsample_backward: bad shapes");
    if (k == n) return grad_out;
    const auto taps = detail::bilinear_taps(n, k);
    Grid out = Grid::square(n, grad_out.channels);
    for (int oy = 0; oy < k; ++oy) {
        const auto& ty = taps[oy];
        for (int ox = 0; ox < k; ++ox) {
            const auto& tx = taps[ox];
            auto src = grad_out.cell(oy, ox);
            const double w00 = (1 - ty.frac) * (1 - tx.frac), w01 = (1 - ty.frac) * tx.frac;
            const double w10 = ty.frac * (1 - tx.frac), w11 = ty.frac * tx.frac;
            auto a = out.cell(ty.lo, tx.lo), b = out.cell(ty.lo, tx.hi);
            auto c = out.cell(ty.hi, tx.lo), d = out.cell(ty.hi, tx.hi);
            for (int ch = 0; ch < out.channels; ++ch) {
                const double v = src[ch];
                a[ch] += w00 * v;
                b[ch] += w01 * v;
                c[ch] += w10 * v;
                d[ch] += w11 * v;
            }
        }
    }
    return out;
}

/// One 3x3 filter per channel. Weight (c, dy, dx) lives at c*9 + (dy+1)*3 + (dx+1).
struct DepthwiseKernel {
    int channels = 0;
    std::vector<double> weights;

    DepthwiseKernel() = default;
    explicit DepthwiseKernel(int c, double fill = 0.0) : channels(c), weights(static_cast<std::size_t>(c) * 9, fill) {}

    static DepthwiseKernel identity(int c) {
        DepthwiseKernel k(c);
        for (int ch = 0; ch < c; ++ch) k.weights[ch * 9 + 4] = 1.0;
        return k;
    }

    double& at(int c, int dy, int dx) { return weights[c * 9 + (dy + 1) * 3 + (dx + 1)]; }
    double at(int c, int dy, int dx) const { return weights[c * 9 + (dy + 1) * 3 + (dx + 1)]; }

    friend bool operator==(const DepthwiseKernel&, const DepthwiseKernel&) = default;
};

/// Depthwise 3x3 convolution (cross-correlation) with zero padding.
inline Grid conv3x3(const Grid& g, const DepthwiseKernel& kernel) {
    detail::require_arg(kernel.channels == g.channels &&
                            kernel.weights.size() == static_cast<std::size_t>(g.channels) * 9,
                        "conv3x3: kernel needs one 3x3 filter per channel");
    Grid out(g.height, g.width, g.channels);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            auto dst = out.cell(y, x);
            for (int dy = -1; dy <= 1; ++dy) {
                const int sy = y + dy;
                if (sy < 0 || sy >= g.height) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int sx = x + dx;
                    if (sx < 0 || sx >= g.width) continue;
                    auto src = g.cell(sy, sx);
                    for (int c = 0; c < g.channels; ++c) dst[c] += kernel.at(c, dy, dx) * src[c];
                }
            }
        }
    return out;
}

/// Gradients of conv3x3 w.r.t. its input (returned) and kernel (accumulated).
inline Grid conv3x3_backward(const Grid& input, const DepthwiseKernel& kernel, const Grid& grad_out,
                             DepthwiseKernel* grad_kernel) {
    detail::require_arg(input.same_shape(grad_out), "conv3x3_backward: shape mismatch");
    detail::require_arg(kernel.channels == input.channels, "conv3x3_backward: kernel mismatch");
    Grid grad_in(input.height, input.width, input.channels);
    for (int y = 0; y < input.height; ++y)
        for (int x = 0; x < input.width; ++x) {
            auto go = grad_out.cell(y, x);
            for (int dy = -1; dy <= 1; ++dy) {
                const int sy = y + dy;
                if (sy < 0 || sy >= input.height) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int sx = x + dx;
                    if (sx < 0 || sx >= input.width) continue;
                    auto src = input.cell(sy, sx);
                    auto gi = grad_in.cell(sy, sx);
                    for (int c = 0; c < input.channels; ++c) {
                        gi[c] += kernel.at(c, dy, dx) * go[c];
                        if (grad_kernel) grad_kernel->at(c, dy, dx) += src[c] * go[c];
                    }
                }
            }
        }
    return grad_in;
}

/// Numerically stable softmax (max subtraction).
inline std::vector<double> softmax(std::span<const double> v) {
    detail::require_arg(!v.empty(), "softmax of empty vector");
    const double m = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double z = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        z += out[i];
    }
    for (double& p : out) p /= z;
    return out;
}

/// log(sum(exp(v))) with max subtraction.
inline double log_sum_exp(std::span<const double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    double z = 0.0;
    for (double x : v) z += std::exp(x - m);
    return m + std::log(z);
}

}  // namespace imagefolder
