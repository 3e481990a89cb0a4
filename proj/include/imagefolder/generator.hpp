#pragma once

// Next-scale autoregressive generator over folded token pairs. Each position
// carries one (semantic, detail) pair; a per-position MLP trunk maps the
// scale context to J_s + J_d logits that are split into two independent
// softmax heads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "imagefolder/codebook.hpp"
#include "imagefolder/error.hpp"
#include "imagefolder/grid.hpp"
#include "imagefolder/nn.hpp"
#include "imagefolder/quantizer.hpp"
#include "imagefolder/rng.hpp"
#include "imagefolder/tokenizer.hpp"

namespace imagefolder {

/// Frozen dequantization path shared with the tokenizer: the schedule, both
/// codebooks (the generator's token embedding tables) and blend kernels.
struct TokenSpace {
    QuantizerConfig quant;
    Codebook semantic;
    Codebook detail;
    DepthwiseKernel conv_semantic;
    DepthwiseKernel conv_detail;

    int channels() const { return semantic.dim(); }
    int resolution() const { return quant.resolution(); }

    static TokenSpace from_tokenizer(const TokenizerModel& m) {
        return {m.quant, m.codebook_semantic, m.codebook_detail, m.conv_semantic, m.conv_detail};
    }

    /// Random codebooks and identity kernels; for tests and synthetic targets.
    static TokenSpace random(const QuantizerConfig& quant, int channels, int j_semantic, int j_detail, Rng& rng) {
        TokenSpace ts{quant, Codebook(j_semantic, channels), Codebook(j_detail, channels),
                      DepthwiseKernel::identity(channels), DepthwiseKernel::identity(channels)};
        for (double& v : ts.semantic.codewords()) v = rng.normal();
        for (double& v : ts.detail.codewords()) v = rng.normal();
        return ts;
    }
};

struct TokenPair {
    std::uint16_t semantic = 0;
    std::uint16_t detail = 0;
    friend bool operator==(const TokenPair&, const TokenPair&) = default;
};

/// Position-aligned token pairs, scale-major and row-major within a scale.
struct FoldedSequence {
    std::vector<int> scales;
    std::uint32_t class_label = 0;
    std::uint32_t codebook_semantic = 0;
    std::uint32_t codebook_detail = 0;
    std::vector<TokenPair> pairs;

    std::size_t positions() const { return pairs.size(); }
    std::size_t tokens() const { return 2 * pairs.size(); }

    friend bool operator==(const FoldedSequence&, const FoldedSequence&) = default;
};

inline std::vector<std::size_t> scale_offsets(const std::vector<int>& scales) {
    std::vector<std::size_t> off(scales.size() + 1, 0);
    for (std::size_t i = 0; i < scales.size(); ++i) off[i + 1] = off[i] + static_cast<std::size_t>(scales[i]) * scales[i];
    return off;
}

inline FoldedSequence fold(const TokenPyramid& semantic, const TokenPyramid& detail, std::uint32_t label,
                           int j_semantic, int j_detail) {
    detail::require_arg(semantic.scales == detail.scales, "fold: branch schedules differ");
    detail::require_arg(semantic.kept() == static_cast<int>(semantic.scales.size()) && detail.kept() == semantic.kept(),
                        "fold: pyramids must cover the whole schedule");
    detail::require_arg(j_semantic <= 65536 && j_detail <= 65536, "fold: codebooks larger than 16-bit ids");
    FoldedSequence seq{semantic.scales, label, static_cast<std::uint32_t>(j_semantic),
                       static_cast<std::uint32_t>(j_detail), {}};
    for (std::size_t i = 0; i < semantic.grids.size(); ++i) {
        const auto& gs = semantic.grids[i].indices;
        const auto& gd = detail.grids[i].indices;
        for (std::size_t p = 0; p < gs.size(); ++p) {
            if (gs[p] < 0 || gs[p] >= j_semantic || gd[p] < 0 || gd[p] >= j_detail)
                throw Error(ErrorCode::corrupt_token, "fold: token index out of codebook range");
            seq.pairs.push_back({static_cast<std::uint16_t>(gs[p]), static_cast<std::uint16_t>(gd[p])});
        }
    }
    return seq;
}

inline std::pair<TokenPyramid, TokenPyramid> unfold(const FoldedSequence& seq) {
    const auto off = scale_offsets(seq.scales);
    detail::require(off.back() == seq.pairs.size(), ErrorCode::corrupt_token, "unfold: position count mismatch");
    TokenPyramid s{seq.scales, {}}, d{seq.scales, {}};
    for (std::size_t i = 0; i < seq.scales.size(); ++i) {
        IndexGrid gs(seq.scales[i]), gd(seq.scales[i]);
        for (std::size_t p = off[i]; p < off[i + 1]; ++p) {
            gs.indices[p - off[i]] = seq.pairs[p].semantic;
            gd.indices[p - off[i]] = seq.pairs[p].detail;
        }
        s.grids.push_back(std::move(gs));
        d.grids.push_back(std::move(gd));
    }
    return {std::move(s), std::move(d)};
}

struct ArModel {
    TokenSpace space;
    int classes = 1;
    std::vector<std::vector<double>> scale_embedding;  // per scale: K_i * K_i * 2C (per-position)
    std::vector<std::vector<double>> grad_scale_embedding;
    std::vector<double> class_embedding;  // (classes + 1) x 2C, last row is the null class
    std::vector<double> grad_class_embedding;
    Mlp trunk;  // 2C -> hidden -> J_s + J_d

    int context_dim() const { return 2 * space.channels(); }
    int j_semantic() const { return space.semantic.size(); }
    int j_detail() const { return space.detail.size(); }
    int null_class() const { return classes; }

    static ArModel create(TokenSpace space, int classes, int hidden, Rng& rng, double init_std = 0.02) {
        space.quant.validate();
        detail::require_arg(classes >= 1, "ArModel: need at least one class");
        detail::require_arg(hidden >= 1, "ArModel: hidden width must be positive");
        detail::require_arg(space.semantic.dim() == space.detail.dim(), "ArModel: branch dims differ");
        ArModel m;
        m.space = std::move(space);
        m.classes = classes;
        const int D = m.context_dim();
        for (int k : m.space.quant.scales) {
            std::vector<double> e(static_cast<std::size_t>(k) * k * D);
            for (double& v : e) v = rng.normal(0.0, init_std);
            m.grad_scale_embedding.emplace_back(e.size(), 0.0);
            m.scale_embedding.push_back(std::move(e));
        }
        m.class_embedding.resize(static_cast<std::size_t>(classes + 1) * D);
        for (double& v : m.class_embedding) v = rng.normal(0.0, init_std);
        m.grad_class_embedding.assign(m.class_embedding.size(), 0.0);
        m.trunk = Mlp(D, hidden, m.j_semantic() + m.j_detail());
        m.trunk.init_gaussian(rng, init_std);
        return m;
    }

    ParamList parameters() {
        ParamList ps;
        for (std::size_t i = 0; i < scale_embedding.size(); ++i)
            ps.push_back({"ar.scale_embedding." + std::to_string(i), scale_embedding[i], grad_scale_embedding[i]});
        ps.push_back({"ar.class_embedding", class_embedding, grad_class_embedding});
        trunk.append_params(ps, "ar.trunk");
        return ps;
    }
};

/// Dequantized prefix of scales < i (1-based), resampled to K_i x K_i,
/// concatenated semantic then detail. Zero for i = 1.
inline Grid prefix_features(const TokenSpace& ts, const TokenPyramid& semantic, const TokenPyramid& detail, int scale) {
    const auto& q = ts.quant;
    detail::require_arg(scale >= 1 && scale <= q.steps(), "build_context: scale index out of range");
    if (semantic.kept() < scale - 1 || detail.kept() < scale - 1)
        throw Error(ErrorCode::invalid_state, "build_context: previous scales are incomplete");
    const int k = q.scales[scale - 1];
    if (scale == 1) return Grid::square(k, 2 * ts.channels());
    const Grid full = dequantize(semantic, detail, ts.semantic, ts.detail, q, ts.conv_semantic, ts.conv_detail,
                                 scale - 1);
    return downsample(full, k);
}

/// Per-position context for scale i (1-based): prefix features plus the
/// scale's positional embedding plus the class embedding.
inline Grid build_context(const ArModel& m, const TokenPyramid& semantic, const TokenPyramid& detail, int label,
                          int scale) {
    detail::require_arg(label >= 0 && label <= m.null_class(), "build_context: class out of range");
    Grid ctx = prefix_features(m.space, semantic, detail, scale);
    const auto& se = m.scale_embedding[scale - 1];
    const int D = m.context_dim();
    const double* ce = m.class_embedding.data() + static_cast<std::size_t>(label) * D;
    for (std::size_t i = 0; i < ctx.size(); ++i) ctx.data[i] += se[i] + ce[i % D];
    return ctx;
}

struct HeadLogits {
    std::vector<double> semantic;
    std::vector<double> detail;
};

inline HeadLogits split_heads(const ArModel& m, std::span<const double> logits) {
    const auto js = static_cast<std::size_t>(m.j_semantic());
    return {std::vector<double>(logits.begin(), logits.begin() + js), std::vector<double>(logits.begin() + js, logits.end())};
}

/// Trunk applied to every context cell; one (J_s, J_d) logit pair per position.
inline std::vector<HeadLogits> forward_logits(const ArModel& m, const Grid& context) {
    detail::require_arg(context.channels == m.context_dim(), "forward_logits: context width does not match trunk");
    std::vector<HeadLogits> out;
    out.reserve(context.cells());
    for (std::size_t p = 0; p < context.cells(); ++p) out.push_back(split_heads(m, m.trunk.forward(context.cell(p))));
    return out;
}

struct SamplerConfig {
    int top_k = 0;  // 0 or >= J: no top-k truncation
    double top_p = 1.0;
    double temperature = 1.0;
    double guidance = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require_arg(top_k >= 0, "sampler: top_k must be non-negative");
        detail::require_arg(top_p > 0.0 && top_p <= 1.0, "sampler: top_p must be in (0, 1]");
        detail::require_arg(temperature > 0.0, "sampler: temperature must be positive");
        detail::require_arg(guidance >= 0.0, "sampler: guidance scale must be non-negative");
    }
};

/// Truncated distribution used by the sampler: (index, probability) pairs in
/// descending probability order, renormalized after top-k then top-p.
inline std::vector<std::pair<int, double>> truncated_distribution(std::span<const double> logits,
                                                                  const SamplerConfig& cfg) {
    cfg.validate();
    detail::require_arg(!logits.empty(), "sampler: empty logits");
    const int J = static_cast<int>(logits.size());
    std::vector<int> order;
    for (int j = 0; j < J; ++j)
        if (logits[j] > -std::numeric_limits<double>::infinity()) order.push_back(j);
    detail::require_arg(!order.empty(), "sampler: all logits are -inf");
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return logits[a] > logits[b]; });
    const int k = cfg.top_k <= 0 ? J : std::min(cfg.top_k, J);
    if (static_cast<int>(order.size()) > k) order.resize(k);

    std::vector<double> scaled(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) scaled[i] = logits[order[i]] / cfg.temperature;
    auto probs = softmax(scaled);
    std::size_t keep = probs.size();
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (cum >= cfg.top_p) {
            keep = i + 1;
            break;
        }
    }
    double z = 0.0;
    for (std::size_t i = 0; i < keep; ++i) z += probs[i];
    std::vector<std::pair<int, double>> out(keep);
    for (std::size_t i = 0; i < keep; ++i) out[i] = {order[i], probs[i] / z};
    return out;
}

/// Inverse-CDF draw from the truncated distribution with a given uniform in [0, 1).
inline int sample_with_uniform(std::span<const double> logits, const SamplerConfig& cfg, double u) {
    const auto dist = truncated_distribution(logits, cfg);
    double cum = 0.0;
    for (const auto& [idx, p] : dist) {
        cum += p;
        if (u < cum) return idx;
    }
    return dist.back().first;
}

inline int topk_topp_sample(std::span<const double> logits, const SamplerConfig& cfg, Rng& rng) {
    return sample_with_uniform(logits, cfg, rng.uniform());
}

struct ArTrainConfig {
    int steps = 200;
    int batch_size = 0;  // 0: full batch
    double learning_rate = 3e-3;
    double label_dropout = 0.1;
    std::uint64_t seed = 0;
};

/// A training sequence with its frozen prefix features precomputed.
struct PreparedSequence {
    std::vector<double> prefix;  // positions x 2C
    std::vector<TokenPair> targets;
    int label = 0;
};

inline PreparedSequence prepare_sequence(const ArModel& m, const FoldedSequence& seq) {
    const auto& q = m.space.quant;
    detail::require_arg(seq.scales == q.scales, "train_ar: sequence schedule does not match the model schedule");
    detail::require_arg(seq.codebook_semantic == static_cast<std::uint32_t>(m.j_semantic()) &&
                            seq.codebook_detail == static_cast<std::uint32_t>(m.j_detail()),
                        "train_ar: sequence codebook sizes do not match the model");
    detail::require_arg(static_cast<int>(seq.class_label) < m.classes, "train_ar: class label out of range");
    auto [ps, pd] = unfold(seq);
    PreparedSequence out;
    out.targets = seq.pairs;
    out.label = static_cast<int>(seq.class_label);
    for (int i = 1; i <= q.steps(); ++i) {
        const Grid f = prefix_features(m.space, ps, pd, i);
        out.prefix.insert(out.prefix.end(), f.data.begin(), f.data.end());
    }
    return out;
}

/// Mean over positions of CE(semantic) + CE(detail) and, when `backward`,
/// accumulated parameter gradients of that mean.
inline double ar_loss(ArModel& m, std::span<const PreparedSequence> batch, std::span<const std::uint8_t> null_label,
                      bool backward) {
    const auto off = scale_offsets(m.space.quant.scales);
    const int D = m.context_dim();
    const int js = m.j_semantic();
    std::size_t total_positions = 0;
    for (const auto& s : batch) total_positions += s.targets.size();
    const double inv = 1.0 / static_cast<double>(total_positions);
    double loss = 0.0;
    std::vector<double> ctx(D);
    MlpTrace trace;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& s = batch[b];
        const int label = null_label[b] ? m.null_class() : s.label;
        const double* ce = m.class_embedding.data() + static_cast<std::size_t>(label) * D;
        for (std::size_t scale = 0; scale + 1 < off.size(); ++scale) {
            const auto& se = m.scale_embedding[scale];
            for (std::size_t p = off[scale]; p < off[scale + 1]; ++p) {
                const std::size_t local = p - off[scale];
                for (int d = 0; d < D; ++d) ctx[d] = s.prefix[p * D + d] + se[local * D + d] + ce[d];
                auto logits = m.trunk.forward(ctx, trace);
                std::span<const double> ls(logits.data(), js), ld(logits.data() + js, logits.size() - js);
                const TokenPair t = s.targets[p];
                loss += (log_sum_exp(ls) - ls[t.semantic]) + (log_sum_exp(ld) - ld[t.detail]);
                if (!backward) continue;
                auto g = softmax(ls);
                auto gd = softmax(ld);
                g[t.semantic] -= 1.0;
                gd[t.detail] -= 1.0;
                g.insert(g.end(), gd.begin(), gd.end());
                for (double& v : g) v *= inv;
                const auto dctx = m.trunk.backward(trace, g);
                auto& gse = m.grad_scale_embedding[scale];
                double* gce = m.grad_class_embedding.data() + static_cast<std::size_t>(label) * D;
                for (int d = 0; d < D; ++d) {
                    gse[local * D + d] += dctx[d];
                    gce[d] += dctx[d];
                }
            }
        }
    }
    return loss * inv;
}

/// Null-label assignment for classifier-free guidance: each sequence is
/// drawn once from the seed, so the objective is the same function every step.
inline std::vector<std::uint8_t> null_label_mask(std::size_t count, double rate, std::uint64_t seed) {
    const Rng r = Rng(seed).split(0x6e756c6c);
    std::vector<std::uint8_t> mask(count);
    for (std::size_t i = 0; i < count; ++i) mask[i] = r.uniform_at(i) < rate;
    return mask;
}

/// Teacher-forced next-scale training with Adam. Returns the loss at every step
/// (evaluated before that step's update).
inline std::vector<double> train_ar(ArModel& m, std::span<const FoldedSequence> dataset, const ArTrainConfig& cfg,
                                    AdamState& adam, Rng& rng) {
    detail::require_arg(!dataset.empty(), "train_ar: empty dataset");
    std::vector<PreparedSequence> prepared;
    prepared.reserve(dataset.size());
    for (const auto& s : dataset) prepared.push_back(prepare_sequence(m, s));
    const auto nulls = null_label_mask(prepared.size(), cfg.label_dropout, cfg.seed);
    auto params = m.parameters();
    std::vector<double> curve;
    const bool full = cfg.batch_size <= 0 || static_cast<std::size_t>(cfg.batch_size) >= prepared.size();
    std::vector<PreparedSequence> batch;
    std::vector<std::uint8_t> batch_nulls;
    for (int step = 0; step < cfg.steps; ++step) {
        zero_grads(params);
        double loss = 0.0;
        if (full) {
            loss = ar_loss(m, prepared, nulls, true);
        } else {
            batch.clear();
            batch_nulls.clear();
            for (int i = 0; i < cfg.batch_size; ++i) {
                const auto j = rng.below(prepared.size());
                batch.push_back(prepared[j]);
                batch_nulls.push_back(nulls[j]);
            }
            loss = ar_loss(m, batch, batch_nulls, true);
        }
        if (!std::isfinite(loss)) throw Error(ErrorCode::training_diverged, "non-finite AR loss");
        adam_step(params, adam);
        curve.push_back(loss);
    }
    return curve;
}

namespace detail {

inline std::vector<double> guided_logits(const ArModel& m, std::span<const double> cond_ctx,
                                         std::span<const double> null_ctx, double t) {
    auto cond = m.trunk.forward(cond_ctx);
    if (t == 0.0) return cond;
    const auto uncond = m.trunk.forward(null_ctx);
    for (std::size_t i = 0; i < cond.size(); ++i) cond[i] = (1.0 + t) * cond[i] - t * uncond[i];
    return cond;
}

inline FoldedSequence generate_impl(const ArModel& m, int label, const SamplerConfig& cfg, Rng& rng,
                                    const TokenPyramid* forced_semantic, const TokenPyramid* forced_detail) {
    cfg.validate();
    require_arg(label >= 0 && label < m.classes, "generate: class out of range");
    const auto& q = m.space.quant;
    for (const TokenPyramid* f : {forced_semantic, forced_detail})
        if (f)
            require_arg(f->scales == q.scales && f->kept() == q.steps(),
                        "generate: forced pyramid does not match the schedule");
    // One key per generation; every draw is addressed by (position, head), so
    // draw order does not depend on execution order or on forcing.
    const Rng draws(rng.next_u64());
    const auto off = scale_offsets(q.scales);
    TokenPyramid ps{q.scales, {}}, pd{q.scales, {}};
    for (int i = 1; i <= q.steps(); ++i) {
        const Grid ctx = build_context(m, ps, pd, label, i);
        const Grid null_ctx = cfg.guidance > 0.0 ? build_context(m, ps, pd, m.null_class(), i) : Grid();
        const int k = q.scales[i - 1];
        IndexGrid gs(k), gd(k);
        for (std::size_t p = 0; p < ctx.cells(); ++p) {
            const std::uint64_t pos = off[i - 1] + p;
            const auto logits = guided_logits(m, ctx.cell(p), cfg.guidance > 0.0 ? null_ctx.cell(p) : ctx.cell(p),
                                              cfg.guidance);
            const auto heads = split_heads(m, logits);
            gs.indices[p] = forced_semantic ? forced_semantic->grids[i - 1].indices[p]
                                            : sample_with_uniform(heads.semantic, cfg, draws.uniform_at(pos, 0));
            gd.indices[p] = forced_detail ? forced_detail->grids[i - 1].indices[p]
                                          : sample_with_uniform(heads.detail, cfg, draws.uniform_at(pos, 1));
        }
        ps.grids.push_back(std::move(gs));
        pd.grids.push_back(std::move(gd));
    }
    return fold(ps, pd, static_cast<std::uint32_t>(label), m.j_semantic(), m.j_detail());
}

}  // namespace detail

/// Scale-by-scale sampling; positions within a scale are independent given
/// the prefix and the two heads are sampled independently.
inline FoldedSequence generate(const ArModel& m, int label, const SamplerConfig& cfg, Rng& rng) {
    return detail::generate_impl(m, label, cfg, rng, nullptr, nullptr);
}

/// Like generate, but the detail head's outputs are replaced by `forced_detail`
/// at every scale (and the semantic head's by `forced_semantic`, if given).
inline FoldedSequence generate_teacher_forced(const ArModel& m, int label, const TokenPyramid& forced_detail,
                                              const SamplerConfig& cfg, Rng& rng,
                                              const TokenPyramid* forced_semantic = nullptr) {
    return detail::generate_impl(m, label, cfg, rng, forced_semantic, &forced_detail);
}

}  // namespace imagefolder
