#pragma once

// Multi-scale residual quantization with quantizer dropout, and the
// product quantizer that runs one residual pyramid per branch and joins
// the branch outputs channel-wise.

#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "imagefolder/codebook.hpp"
#include "imagefolder/error.hpp"
#include "imagefolder/grid.hpp"
#include "imagefolder/rng.hpp"

namespace imagefolder {

struct QuantizerConfig {
    std::vector<int> scales{1, 2, 4};
    int n_start = 2;
    double dropout_p = 0.1;
    double gamma = 0.5;
    int branches = 2;

    int steps() const { return static_cast<int>(scales.size()); }
    int resolution() const { return scales.back(); }

    std::size_t positions() const {
        std::size_t n = 0;
        for (int k : scales) n += static_cast<std::size_t>(k) * k;
        return n;
    }

    void validate() const {
        detail::require_arg(!scales.empty(), "quantizer: empty scale schedule");
        for (std::size_t i = 0; i < scales.size(); ++i) {
            detail::require_arg(scales[i] > 0, "quantizer: scales must be positive");
            if (i > 0) detail::require_arg(scales[i] >= scales[i - 1], "quantizer: scales must be non-decreasing");
        }
        detail::require_arg(n_start >= 1 && n_start <= steps(), "quantizer: need 1 <= n_start <= N");
        detail::require_arg(dropout_p >= 0.0 && dropout_p <= 1.0, "quantizer: dropout ratio must be in [0,1]");
        detail::require_arg(gamma >= 0.0 && gamma <= 1.0, "quantizer: gamma must be in [0,1]");
        detail::require_arg(branches >= 1, "quantizer: need at least one branch");
    }

    /// 16x16 desk preset: 4x4 working grid, three residual steps.
    static QuantizerConfig desk() { return {}; }

    /// Ten-step schedule with an 11x11 working grid (286 positions).
    static QuantizerConfig full() { return {{1, 1, 2, 3, 3, 4, 5, 6, 8, 11}, 3, 0.1, 0.5, 2}; }

    /// Single-branch 16x16 next-scale schedule (680 positions).
    static QuantizerConfig var_baseline() { return {{1, 2, 3, 4, 5, 6, 8, 10, 13, 16}, 3, 0.0, 0.5, 1}; }
};

/// Per-scale token maps of one branch. `scales` is the full schedule;
/// `grids` holds only the executed steps.
struct TokenPyramid {
    std::vector<int> scales;
    std::vector<IndexGrid> grids;

    int kept() const { return static_cast<int>(grids.size()); }

    friend bool operator==(const TokenPyramid&, const TokenPyramid&) = default;
};

struct BranchOutput {
    Grid quantized;               // z' = sum of per-step contributions, K x K x C
    TokenPyramid pyramid;
    std::vector<Grid> inputs;     // downsampled residual fed to lookup at step i (K_i x K_i)
    std::vector<Grid> steps;      // z'_i at K x K
    std::vector<Grid> upsampled;  // codeword map of step i upsampled to K x K (pre-blend)
};

/// Number of residual steps to execute for one sample: N with probability
/// 1 - p, otherwise uniform on {n_start, ..., N}.
inline int sample_kept_steps(const QuantizerConfig& cfg, Rng& rng) {
    const int n = cfg.steps();
    if (cfg.dropout_p <= 0.0) return n;
    if (rng.uniform() >= cfg.dropout_p) return n;
    return cfg.n_start + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - cfg.n_start + 1)));
}

/// gamma * conv(up) + (1 - gamma) * up
inline Grid blend_step(const Grid& up, const DepthwiseKernel& kernel, double gamma) {
    Grid out = conv3x3(up, kernel);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = gamma * out.data[i] + (1.0 - gamma) * up.data[i];
    return out;
}

namespace detail {

inline BranchOutput msrq_impl(const Grid& z, const Codebook& cb, const QuantizerConfig& cfg, int n,
                              const DepthwiseKernel& kernel, std::vector<std::uint64_t>* usage) {
    cfg.validate();
    const int K = cfg.resolution();
    require_arg(z.height == K && z.width == K, "msrq_quantize: input must be K x K for K = last scale");
    require_arg(z.channels == cb.dim(), "msrq_quantize: channel count must equal codebook dim");
    require_arg(n >= cfg.n_start && n <= cfg.steps(), "msrq_quantize: need n_start <= n <= N");

    BranchOutput out;
    out.quantized = Grid::square(K, z.channels);
    out.pyramid.scales = cfg.scales;
    Grid residual = z;
    for (int i = 0; i < n; ++i) {
        Grid low = downsample(residual, cfg.scales[i]);
        auto looked = quantize_cells(cb, low, usage);
        Grid up = upsample(looked.quantized, K);
        Grid step = blend_step(up, kernel, cfg.gamma);
        residual -= step;
        out.quantized += step;
        out.pyramid.grids.push_back(std::move(looked.indices));
        out.inputs.push_back(std::move(low));
        out.steps.push_back(std::move(step));
        out.upsampled.push_back(std::move(up));
    }
    return out;
}

}  // namespace detail

/// Residual loop over the first n scales. The blended contribution z'_i
/// (not the raw codeword map) is subtracted from the residual, which keeps
/// index-only replay exact. Counts codebook usage.
inline BranchOutput msrq_quantize(const Grid& z, Codebook& cb, const QuantizerConfig& cfg, int n,
                                  const DepthwiseKernel& kernel) {
    return detail::msrq_impl(z, cb, cfg, n, kernel, &cb.usage_counts());
}

/// Same as msrq_quantize but leaves usage statistics untouched.
inline BranchOutput msrq_quantize_frozen(const Grid& z, const Codebook& cb, const QuantizerConfig& cfg, int n,
                                         const DepthwiseKernel& kernel) {
    return detail::msrq_impl(z, cb, cfg, n, kernel, nullptr);
}

/// Backward of the quantized output w.r.t. codewords and the blend kernel.
/// The index selection is piecewise constant and contributes no gradient.
inline void msrq_backward(const BranchOutput& fwd, const Grid& grad_quantized, Codebook& cb,
                          const DepthwiseKernel& kernel, DepthwiseKernel& grad_kernel, double gamma) {
    DepthwiseKernel gk(kernel.channels);
    for (std::size_t i = 0; i < fwd.steps.size(); ++i) {
        // d step_i / d up = gamma * conv^T + (1 - gamma) * I
        Grid d_up = conv3x3_backward(fwd.upsampled[i], kernel, grad_quantized, &gk);
        for (std::size_t t = 0; t < d_up.size(); ++t)
            d_up.data[t] = gamma * d_up.data[t] + (1.0 - gamma) * grad_quantized.data[t];
        const auto& idx = fwd.pyramid.grids[i];
        Grid d_low = upsample_backward(d_up, idx.size);
        for (std::size_t c = 0; c < idx.indices.size(); ++c) {
            auto g = cb.codeword_grad(idx.indices[c]);
            auto src = d_low.cell(c);
            for (int ch = 0; ch < cb.dim(); ++ch) g[ch] += src[ch];
        }
    }
    for (std::size_t t = 0; t < gk.weights.size(); ++t) grad_kernel.weights[t] += gamma * gk.weights[t];
}

/// Rebuilds one branch's quantized grid from its token pyramid by replaying
/// the forward accumulation; the first `max_steps` (all if negative) steps are used.
inline Grid dequantize_branch(const TokenPyramid& pyr, const Codebook& cb, const QuantizerConfig& cfg,
                              const DepthwiseKernel& kernel, int max_steps = -1) {
    const int K = cfg.resolution();
    detail::require_arg(pyr.scales == cfg.scales, "dequantize: pyramid schedule does not match quantizer schedule");
    detail::require_arg(pyr.kept() <= cfg.steps(), "dequantize: pyramid has more steps than the schedule");
    const int n = max_steps < 0 ? pyr.kept() : std::min(max_steps, pyr.kept());
    Grid acc = Grid::square(K, cb.dim());
    for (int i = 0; i < n; ++i) {
        const auto& idx = pyr.grids[i];
        if (idx.size != cfg.scales[i]) throw Error(ErrorCode::corrupt_token, "token grid size does not match scale");
        acc += blend_step(upsample(gather_codewords(cb, idx), K), kernel, cfg.gamma);
    }
    return acc;
}

/// Branch tokens -> concatenated K x K x 2C features (semantic channels first).
inline Grid dequantize(const TokenPyramid& pyr_s, const TokenPyramid& pyr_d, const Codebook& cb_s,
                       const Codebook& cb_d, const QuantizerConfig& cfg, const DepthwiseKernel& kernel_s,
                       const DepthwiseKernel& kernel_d, int max_steps = -1) {
    return concat_channels(dequantize_branch(pyr_s, cb_s, cfg, kernel_s, max_steps),
                           dequantize_branch(pyr_d, cb_d, cfg, kernel_d, max_steps));
}

struct ProductOutput {
    Grid concat;  // channels [0, C) semantic, [C, 2C) detail
    BranchOutput semantic;
    BranchOutput detail;
    int kept = 0;
};

/// Two-branch product quantization with one dropout draw shared by both branches.
inline ProductOutput product_quantize(const Grid& z_s, const Grid& z_d, Codebook& cb_s, Codebook& cb_d,
                                      const QuantizerConfig& cfg, const DepthwiseKernel& kernel_s,
                                      const DepthwiseKernel& kernel_d, Rng& rng) {
    detail::require_arg(z_s.same_shape(z_d), "product_quantize: branch grids must have the same shape");
    detail::require_arg(cfg.branches == 2, "product_quantize: two-branch form requires branches = 2");
    const int n = sample_kept_steps(cfg, rng);
    ProductOutput out;
    out.kept = n;
    out.semantic = msrq_quantize(z_s, cb_s, cfg, n, kernel_s);
    out.detail = msrq_quantize(z_d, cb_d, cfg, n, kernel_d);
    out.concat = concat_channels(out.semantic.quantized, out.detail.quantized);
    return out;
}

/// General P-branch form: `z` is split into P equal channel groups, each
/// quantized with its own codebook and kernel, outputs re-concatenated.
inline Grid product_quantize_split(const Grid& z, std::span<Codebook> codebooks, const QuantizerConfig& cfg,
                                   std::span<const DepthwiseKernel> kernels, Rng& rng,
                                   std::vector<TokenPyramid>* pyramids = nullptr) {
    const int P = cfg.branches;
    detail::require_arg(static_cast<int>(codebooks.size()) == P && static_cast<int>(kernels.size()) == P,
                        "product_quantize_split: need one codebook and kernel per branch");
    detail::require_arg(z.channels % P == 0, "product_quantize_split: channels not divisible by branch count");
    const int c = z.channels / P;
    const int n = sample_kept_steps(cfg, rng);
    Grid out;
    for (int p = 0; p < P; ++p) {
        auto branch = msrq_quantize(slice_channels(z, p * c, c), codebooks[p], cfg, n, kernels[p]);
        out = p == 0 ? branch.quantized : concat_channels(out, branch.quantized);
        if (pyramids) pyramids->push_back(std::move(branch.pyramid));
    }
    return out;
}

}  // namespace imagefolder
