#pragma once

// Toy dual-branch tokenizer: a shared per-patch embedding feeds two linear
// heads (semantic, detail) that produce spatially aligned K x K x C grids;
// each grid is residual-quantized with its own codebook; a per-cell MLP
// decodes the concatenated 2C-channel grid back into image patches.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imagefolder/codebook.hpp"
#include "imagefolder/dataset.hpp"
#include "imagefolder/error.hpp"
#include "imagefolder/grid.hpp"
#include "imagefolder/losses.hpp"
#include "imagefolder/nn.hpp"
#include "imagefolder/quantizer.hpp"
#include "imagefolder/rng.hpp"

namespace imagefolder {

enum class Branch { semantic, detail };

struct TokenizerShape {
    int image_size = 16;
    int image_channels = 1;
    int patch = 4;
    int channels = 8;  // C per branch
    int encoder_hidden = 64;
    int decoder_hidden = 64;
    int codebook_semantic = 64;
    int codebook_detail = 64;

    int grid() const { return image_size / patch; }
    int patch_dim() const { return patch * patch * image_channels; }

    void validate() const {
        detail::require_arg(image_size > 0 && patch > 0 && image_size % patch == 0,
                            "tokenizer: image size must be divisible by patch size");
        detail::require_arg(image_channels > 0 && channels > 0 && encoder_hidden > 0 && decoder_hidden > 0,
                            "tokenizer: dimensions must be positive");
        detail::require_arg(codebook_semantic > 0 && codebook_detail > 0, "tokenizer: codebook sizes must be positive");
    }
};

struct TokenizerModel {
    TokenizerShape shape;
    QuantizerConfig quant;
    LinearLayer patch_embed;     // patch pixels -> encoder hidden, then ReLU
    LinearLayer head_semantic;   // encoder hidden -> C
    LinearLayer head_detail;
    std::vector<double> level_semantic, level_detail;
    std::vector<double> grad_level_semantic, grad_level_detail;
    Codebook codebook_semantic, codebook_detail;
    DepthwiseKernel conv_semantic, conv_detail;
    DepthwiseKernel grad_conv_semantic, grad_conv_detail;
    Mlp decoder;                 // 2C -> decoder hidden -> patch pixels

    static TokenizerModel create(const TokenizerShape& shape, const QuantizerConfig& quant, Rng& rng,
                                 double init_std = 0.02) {
        shape.validate();
        quant.validate();
        detail::require_arg(quant.resolution() == shape.grid(),
                            "tokenizer: last quantizer scale must equal image_size / patch");
        detail::require_arg(quant.branches == 2, "tokenizer: the dual-branch model needs branches = 2");
        const int C = shape.channels;
        TokenizerModel m;
        m.shape = shape;
        m.quant = quant;
        m.patch_embed = LinearLayer(shape.patch_dim(), shape.encoder_hidden);
        m.head_semantic = LinearLayer(shape.encoder_hidden, C);
        m.head_detail = LinearLayer(shape.encoder_hidden, C);
        m.level_semantic.assign(C, 0.0);
        m.level_detail.assign(C, 0.0);
        m.grad_level_semantic.assign(C, 0.0);
        m.grad_level_detail.assign(C, 0.0);
        m.codebook_semantic = Codebook(shape.codebook_semantic, C);
        m.codebook_detail = Codebook(shape.codebook_detail, C);
        m.conv_semantic = DepthwiseKernel::identity(C);
        m.conv_detail = DepthwiseKernel::identity(C);
        m.grad_conv_semantic = DepthwiseKernel(C);
        m.grad_conv_detail = DepthwiseKernel(C);
        m.decoder = Mlp(2 * C, shape.decoder_hidden, shape.patch_dim());
        m.patch_embed.init_gaussian(rng, init_std);
        m.head_semantic.init_gaussian(rng, init_std);
        m.head_detail.init_gaussian(rng, init_std);
        m.decoder.init_gaussian(rng, init_std);
        for (double& v : m.codebook_semantic.codewords()) v = rng.normal(0.0, init_std);
        for (double& v : m.codebook_detail.codewords()) v = rng.normal(0.0, init_std);
        return m;
    }

    /// All trainable tensors in a fixed order (used by Adam and checkpoints).
    ParamList parameters() {
        ParamList ps;
        patch_embed.append_params(ps, "encoder.patch_embed");
        head_semantic.append_params(ps, "encoder.head_semantic");
        head_detail.append_params(ps, "encoder.head_detail");
        ps.push_back({"encoder.level_semantic", level_semantic, grad_level_semantic});
        ps.push_back({"encoder.level_detail", level_detail, grad_level_detail});
        codebook_semantic.append_params(ps, "quantizer.codebook_semantic");
        codebook_detail.append_params(ps, "quantizer.codebook_detail");
        ps.push_back({"quantizer.conv_semantic", conv_semantic.weights, grad_conv_semantic.weights});
        ps.push_back({"quantizer.conv_detail", conv_detail.weights, grad_conv_detail.weights});
        decoder.append_params(ps, "decoder");
        return ps;
    }
};

struct EncoderTrace {
    std::vector<std::vector<double>> patches;
    std::vector<std::vector<double>> hidden_pre;
    std::vector<std::vector<double>> hidden;
};

struct EncodeResult {
    Grid semantic;
    Grid detail;
};

namespace detail {

inline std::vector<double> extract_patch(const Grid& img, int py, int px, int L) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(L) * L * img.channels);
    for (int dy = 0; dy < L; ++dy)
        for (int dx = 0; dx < L; ++dx)
            for (int c = 0; c < img.channels; ++c) v.push_back(img.at(py * L + dy, px * L + dx, c));
    return v;
}

inline void place_patch(Grid& img, int py, int px, int L, std::span<const double> v) {
    std::size_t t = 0;
    for (int dy = 0; dy < L; ++dy)
        for (int dx = 0; dx < L; ++dx)
            for (int c = 0; c < img.channels; ++c) img.at(py * L + dy, px * L + dx, c) = v[t++];
}

inline void check_image(const TokenizerShape& s, const Grid& image) {
    require_arg(image.height == s.image_size && image.width == s.image_size && image.channels == s.image_channels,
                "image size does not match tokenizer configuration");
}

}  // namespace detail

/// Image -> (z_s, z_d), each K x K x C with the branch level embedding added.
inline EncodeResult encode(const TokenizerModel& m, const Grid& image, EncoderTrace* trace = nullptr) {
    detail::check_image(m.shape, image);
    const int K = m.shape.grid(), L = m.shape.patch, C = m.shape.channels;
    EncodeResult out{Grid::square(K, C), Grid::square(K, C)};
    if (trace) *trace = {};
    for (int py = 0; py < K; ++py)
        for (int px = 0; px < K; ++px) {
            auto patch = detail::extract_patch(image, py, px, L);
            auto pre = linear_forward(m.patch_embed, patch);
            auto h = relu(pre);
            auto s = linear_forward(m.head_semantic, h);
            auto d = linear_forward(m.head_detail, h);
            auto cs = out.semantic.cell(py, px), cd = out.detail.cell(py, px);
            for (int c = 0; c < C; ++c) {
                cs[c] = s[c] + m.level_semantic[c];
                cd[c] = d[c] + m.level_detail[c];
            }
            if (trace) {
                trace->patches.push_back(std::move(patch));
                trace->hidden_pre.push_back(std::move(pre));
                trace->hidden.push_back(std::move(h));
            }
        }
    return out;
}

/// Accumulates encoder parameter gradients for upstream grads on both branch grids.
inline void encode_backward(TokenizerModel& m, const EncoderTrace& trace, const Grid& grad_semantic,
                            const Grid& grad_detail) {
    detail::require(!trace.patches.empty(), ErrorCode::invalid_state, "encode_backward without a recorded forward");
    const int C = m.shape.channels;
    for (std::size_t p = 0; p < trace.patches.size(); ++p) {
        auto gs = grad_semantic.cell(p), gd = grad_detail.cell(p);
        for (int c = 0; c < C; ++c) {
            m.grad_level_semantic[c] += gs[c];
            m.grad_level_detail[c] += gd[c];
        }
        auto dh = linear_backward(m.head_semantic, trace.hidden[p], gs);
        auto dh2 = linear_backward(m.head_detail, trace.hidden[p], gd);
        for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dh2[i];
        linear_backward(m.patch_embed, trace.patches[p], relu_backward(trace.hidden_pre[p], dh));
    }
}

struct DecoderTrace {
    std::vector<MlpTrace> cells;
};

/// K x K x 2C features -> image.
inline Grid decode(const TokenizerModel& m, const Grid& concat, DecoderTrace* trace = nullptr) {
    const int K = m.shape.grid(), L = m.shape.patch;
    detail::require_arg(concat.height == K && concat.width == K && concat.channels == 2 * m.shape.channels,
                        "decode: features must be K x K x 2C");
    Grid img(m.shape.image_size, m.shape.image_size, m.shape.image_channels);
    if (trace) trace->cells.assign(concat.cells(), {});
    for (int py = 0; py < K; ++py)
        for (int px = 0; px < K; ++px) {
            const std::size_t flat = static_cast<std::size_t>(py) * K + px;
            auto out = trace ? m.decoder.forward(concat.cell(py, px), trace->cells[flat])
                             : m.decoder.forward(concat.cell(py, px));
            detail::place_patch(img, py, px, L, out);
        }
    return img;
}

/// Accumulates decoder gradients; returns d/d(concat).
inline Grid decode_backward(TokenizerModel& m, const DecoderTrace& trace, const Grid& grad_image) {
    detail::require(!trace.cells.empty(), ErrorCode::invalid_state, "decode_backward without a recorded forward");
    const int K = m.shape.grid(), L = m.shape.patch;
    Grid grad = Grid::square(K, 2 * m.shape.channels);
    for (int py = 0; py < K; ++py)
        for (int px = 0; px < K; ++px) {
            const std::size_t flat = static_cast<std::size_t>(py) * K + px;
            auto dy = detail::extract_patch(grad_image, py, px, L);
            auto dx = m.decoder.backward(trace.cells[flat], dy);
            std::copy(dx.begin(), dx.end(), grad.cell(flat).begin());
        }
    return grad;
}

struct TokenizerLossConfig {
    LossWeights weights;
    double beta = 0.25;  // commitment
    double tau = 0.07;   // contrastive temperature
    LossHooks hooks;
};

enum class QuantizerMode {
    product,   // normal training path
    identity,  // z' = z; used for end-to-end gradient checks
};

struct StepReport {
    LossParts parts;
    double total = 0.0;
    std::vector<int> kept;  // residual steps kept per sample
    std::vector<std::vector<double>> semantic_inputs;  // lookup inputs of this batch (for revival)
    std::vector<std::vector<double>> detail_inputs;
};

/// Forward pass over a batch plus (optionally) the full straight-through
/// backward into every parameter gradient. Gradients are accumulated, not
/// zeroed. Loss terms are batch means; the contrastive term covers the
/// samples that kept all residual steps.
inline StepReport tokenizer_forward_backward(TokenizerModel& m, std::span<const Grid> images,
                                             std::span<const std::vector<double>> teachers,
                                             const TokenizerLossConfig& lc, Rng& rng, bool backward,
                                             QuantizerMode mode = QuantizerMode::product) {
    detail::require_arg(!images.empty(), "train_step: empty batch");
    detail::require_arg(teachers.size() == images.size(), "train_step: teachers must align with the batch");
    const std::size_t B = images.size();
    const int N = m.quant.steps();
    const int C = m.shape.channels;
    const int K = m.shape.grid();

    struct Sample {
        EncoderTrace enc;
        EncodeResult z;
        ProductOutput pq;
        DecoderTrace dec;
        Grid grad_image;
    };
    std::vector<Sample> samples(B);
    StepReport report;
    std::vector<std::vector<double>> pooled(B);
    std::vector<bool> mask(B);
    double recon = 0.0, vq = 0.0, adv = 0.0, perc = 0.0;

    for (std::size_t b = 0; b < B; ++b) {
        auto& s = samples[b];
        s.z = encode(m, images[b], &s.enc);
        if (mode == QuantizerMode::product) {
            s.pq = product_quantize(s.z.semantic, s.z.detail, m.codebook_semantic, m.codebook_detail, m.quant,
                                    m.conv_semantic, m.conv_detail, rng);
        } else {
            s.pq.kept = N;
            s.pq.semantic.quantized = s.z.semantic;
            s.pq.detail.quantized = s.z.detail;
            s.pq.concat = concat_channels(s.z.semantic, s.z.detail);
        }
        report.kept.push_back(s.pq.kept);
        mask[b] = s.pq.kept == N;
        pooled[b] = mean_pool(s.pq.semantic.quantized);

        const Grid x_hat = decode(m, s.pq.concat, &s.dec);
        recon += recon_loss(images[b], x_hat, &s.grad_image);
        s.grad_image *= lc.weights.recon;
        if (lc.hooks.adversarial) {
            Grid g(x_hat.height, x_hat.width, x_hat.channels);
            adv += lc.hooks.adversarial(images[b], x_hat, &g);
            for (std::size_t i = 0; i < g.size(); ++i) s.grad_image.data[i] += lc.weights.adversarial * g.data[i];
        }
        if (lc.hooks.perceptual) {
            Grid g(x_hat.height, x_hat.width, x_hat.channels);
            perc += lc.hooks.perceptual(images[b], x_hat, &g);
            for (std::size_t i = 0; i < g.size(); ++i) s.grad_image.data[i] += lc.weights.perceptual * g.data[i];
        }
        if (mode == QuantizerMode::product) {
            vq += vq_loss(s.z.semantic, s.pq.semantic.quantized, lc.beta) +
                  vq_loss(s.z.detail, s.pq.detail.quantized, lc.beta);
            for (const auto& g : s.pq.semantic.inputs)
                for (std::size_t c = 0; c < g.cells(); ++c)
                    report.semantic_inputs.emplace_back(g.cell(c).begin(), g.cell(c).end());
            for (const auto& g : s.pq.detail.inputs)
                for (std::size_t c = 0; c < g.cells(); ++c)
                    report.detail_inputs.emplace_back(g.cell(c).begin(), g.cell(c).end());
        }
    }
    const double inv_b = 1.0 / static_cast<double>(B);
    std::vector<std::vector<double>> grad_pooled;
    report.parts.recon = recon * inv_b;
    report.parts.vq = vq * inv_b;
    report.parts.adversarial = adv * inv_b;
    report.parts.perceptual = perc * inv_b;
    report.parts.clip = contrastive_loss(pooled, teachers, lc.tau, mask, backward ? &grad_pooled : nullptr);
    report.total = composite_loss(report.parts, lc.weights);
    if (!backward) return report;

    const double inv_cells = 1.0 / static_cast<double>(K * K);
    for (std::size_t b = 0; b < B; ++b) {
        auto& s = samples[b];
        s.grad_image *= inv_b;
        const Grid g_concat = decode_backward(m, s.dec, s.grad_image);
        // Straight-through: d/dz' is passed unchanged to the encoder output.
        Grid g_s = slice_channels(g_concat, 0, C);
        Grid g_d = slice_channels(g_concat, C, C);
        const double wc = lc.weights.clip;
        if (wc != 0.0)
            for (std::size_t cell = 0; cell < g_s.cells(); ++cell) {
                auto dst = g_s.cell(cell);
                for (int c = 0; c < C; ++c) dst[c] += wc * grad_pooled[b][c] * inv_cells;
            }
        if (mode == QuantizerMode::product && lc.weights.vq != 0.0) {
            const double wv = lc.weights.vq * inv_b;
            VqLossGrads vs, vd;
            vq_loss(s.z.semantic, s.pq.semantic.quantized, lc.beta, &vs);
            vq_loss(s.z.detail, s.pq.detail.quantized, lc.beta, &vd);
            vs.encoder *= wv;
            vd.encoder *= wv;
            vs.codebook *= wv;
            vd.codebook *= wv;
            g_s += vs.encoder;
            g_d += vd.encoder;
            msrq_backward(s.pq.semantic, vs.codebook, m.codebook_semantic, m.conv_semantic, m.grad_conv_semantic,
                          m.quant.gamma);
            msrq_backward(s.pq.detail, vd.codebook, m.codebook_detail, m.conv_detail, m.grad_conv_detail,
                          m.quant.gamma);
        }
        encode_backward(m, s.enc, g_s, g_d);
    }
    return report;
}

/// One optimizer step: zero grads, forward + backward, Adam update.
inline StepReport train_step(TokenizerModel& m, std::span<const Grid> images,
                             std::span<const std::vector<double>> teachers, const TokenizerLossConfig& lc,
                             AdamState& adam, Rng& rng) {
    auto params = m.parameters();
    zero_grads(params);
    auto report = tokenizer_forward_backward(m, images, teachers, lc, rng, true);
    if (!std::isfinite(report.total)) throw Error(ErrorCode::training_diverged, "non-finite tokenizer loss");
    adam_step(params, adam);
    return report;
}

/// Deterministic inference-time quantization with n residual steps (no
/// dropout draw, usage untouched).
inline ProductOutput quantize_frozen(const TokenizerModel& m, const EncodeResult& z, int n) {
    ProductOutput out;
    out.kept = n;
    out.semantic = msrq_quantize_frozen(z.semantic, m.codebook_semantic, m.quant, n, m.conv_semantic);
    out.detail = msrq_quantize_frozen(z.detail, m.codebook_detail, m.quant, n, m.conv_detail);
    out.concat = concat_channels(out.semantic.quantized, out.detail.quantized);
    return out;
}

/// Full-depth tokenization of one image.
inline ProductOutput tokenize(const TokenizerModel& m, const Grid& image) {
    return quantize_frozen(m, encode(m, image), m.quant.steps());
}

inline Grid reconstruct(const TokenizerModel& m, const Grid& image) { return decode(m, tokenize(m, image).concat); }

/// Decode using only the first m residual steps of both pyramids.
inline Grid reconstruct_at_depth(const TokenizerModel& m, const Grid& image, int depth) {
    detail::require_arg(depth >= m.quant.n_start && depth <= m.quant.steps(),
                        "reconstruct_at_depth: need n_start <= m <= N");
    return decode(m, quantize_frozen(m, encode(m, image), depth).concat);
}

/// Decode with the named branch's half of the features zeroed (none: full reconstruction).
inline Grid zero_branch_reconstruct(const TokenizerModel& m, const Grid& image, std::optional<Branch> zeroed,
                                    bool zero_both = false) {
    Grid feats = tokenize(m, image).concat;
    const int C = m.shape.channels;
    for (std::size_t cell = 0; cell < feats.cells(); ++cell) {
        auto v = feats.cell(cell);
        if (zero_both || zeroed == Branch::semantic)
            for (int c = 0; c < C; ++c) v[c] = 0.0;
        if (zero_both || zeroed == Branch::detail)
            for (int c = C; c < 2 * C; ++c) v[c] = 0.0;
    }
    return decode(m, feats);
}

}  // namespace imagefolder
