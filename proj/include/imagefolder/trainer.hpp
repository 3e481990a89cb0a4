#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "imagefolder/codebook.hpp"
#include "imagefolder/dataset.hpp"
#include "imagefolder/tokenizer.hpp"

namespace imagefolder {

struct TokenizerTrainConfig {
    TokenizerShape shape;
    QuantizerConfig quant;
    TokenizerLossConfig loss;
    int epochs = 16;
    int max_steps = 0;  // 0: no cap, run all epochs
    int batch_size = 16;
    double learning_rate = 3e-3;
    std::uint64_t seed = 7;
    double init_std = 0.02;
    int kmeans_iterations = 50;
    bool revive = true;
    double revive_noise = 1e-3;

    void validate() const {
        shape.validate();
        quant.validate();
        loss.weights.validate();
        detail::require_arg(epochs >= 0 && max_steps >= 0, "train: epochs and max_steps must be non-negative");
        detail::require_arg(batch_size > 0, "train: batch size must be positive");
        detail::require_arg(learning_rate > 0.0, "train: learning rate must be positive");
        detail::require_arg(loss.tau > 0.0, "train: temperature must be positive");
    }
};

/// Everything needed to continue a run bit-exactly.
struct TokenizerTrainState {
    TokenizerModel model;
    AdamState adam;
    Rng rng;
    std::uint64_t step = 0;
    int epoch = 0;
};

struct EpochSummary {
    int epoch = 0;
    double utilization_semantic = 0.0;
    double utilization_detail = 0.0;
    int revived_semantic = 0;
    int revived_detail = 0;
    std::vector<std::uint64_t> kept_histogram;  // index n - 1
};

using StepCallback = std::function<void(std::uint64_t step, const StepReport&)>;
using EpochCallback = std::function<void(const EpochSummary&)>;

namespace detail {

inline void check_training_data(const TokenizerTrainConfig& cfg, const Dataset& data, const TeacherFeatures& teachers) {
    require_arg(data.size() > 0, "train: dataset is empty");
    require_arg(teachers.size() == data.size(), "train: teacher features must align with the dataset");
    require_arg(teachers.dim == cfg.shape.channels, "train: teacher dim must equal the per-branch channel count");
    require_arg(data.height == cfg.shape.image_size && data.width == cfg.shape.image_size &&
                    data.channels == cfg.shape.image_channels,
                "train: dataset image size does not match the tokenizer configuration");
}

inline void append_scale_features(const TokenizerModel& m, const Grid& z, std::vector<std::vector<double>>& out) {
    for (int k : m.quant.scales) {
        const Grid low = downsample(z, k);
        for (std::size_t c = 0; c < low.cells(); ++c) out.emplace_back(low.cell(c).begin(), low.cell(c).end());
    }
}

}  // namespace detail

/// Builds the model from the seed and initializes both codebooks by k-means
/// on the first batch's encoder outputs, pooled at every scale of the schedule.
inline TokenizerTrainState init_tokenizer_training(const TokenizerTrainConfig& cfg, const Dataset& data,
                                                   const TeacherFeatures& teachers) {
    cfg.validate();
    detail::check_training_data(cfg, data, teachers);
    TokenizerTrainState st{.model = {}, .adam = AdamState(cfg.learning_rate), .rng = Rng(cfg.seed)};
    Rng init_rng = st.rng.split(0);
    st.model = TokenizerModel::create(cfg.shape, cfg.quant, init_rng, cfg.init_std);
    std::vector<std::vector<double>> fs, fd;
    const std::size_t first = std::min<std::size_t>(cfg.batch_size, data.size());
    for (std::size_t i = 0; i < first; ++i) {
        const auto z = encode(st.model, data.images[i]);
        detail::append_scale_features(st.model, z.semantic, fs);
        detail::append_scale_features(st.model, z.detail, fd);
    }
    kmeans_init(st.model.codebook_semantic, fs, init_rng, cfg.kmeans_iterations);
    kmeans_init(st.model.codebook_detail, fd, init_rng, cfg.kmeans_iterations);
    st.model.codebook_semantic.reset_usage();
    st.model.codebook_detail.reset_usage();
    return st;
}

inline bool training_finished(const TokenizerTrainConfig& cfg, const TokenizerTrainState& st) {
    return st.epoch >= cfg.epochs || (cfg.max_steps > 0 && st.step >= static_cast<std::uint64_t>(cfg.max_steps));
}

/// Counts usage with a frozen full-depth pass over `images` and revives the
/// codes it leaves unused from that pass's residual inputs. Returns the number
/// revived per branch.
inline std::pair<int, int> refresh_dead_codes(TokenizerModel& m, std::span<const Grid> images, Rng& rng,
                                              double noise) {
    auto& cs = m.codebook_semantic;
    auto& cd = m.codebook_detail;
    cs.reset_usage();
    cd.reset_usage();
    std::vector<std::vector<double>> fs, fd;
    const int n = m.quant.steps();
    for (const auto& img : images) {
        const auto z = encode(m, img);
        const auto bs = msrq_quantize(z.semantic, cs, m.quant, n, m.conv_semantic);
        const auto bd = msrq_quantize(z.detail, cd, m.quant, n, m.conv_detail);
        for (const auto& g : bs.inputs)
            for (std::size_t c = 0; c < g.cells(); ++c) fs.emplace_back(g.cell(c).begin(), g.cell(c).end());
        for (const auto& g : bd.inputs)
            for (std::size_t c = 0; c < g.cells(); ++c) fd.emplace_back(g.cell(c).begin(), g.cell(c).end());
    }
    std::pair<int, int> out{0, 0};
    if (!fs.empty()) {
        out.first = revive_dead_codes(cs, fs, rng, noise);
        out.second = revive_dead_codes(cd, fd, rng, noise);
    }
    cs.reset_usage();
    cd.reset_usage();
    return out;
}

/// Runs one epoch (or up to the step cap). Usage counts cover the epoch and
/// dead codes are revived from the last batch at its end. After the final
/// epoch the revival uses a frozen pass over the whole dataset instead.
inline EpochSummary run_tokenizer_epoch(TokenizerTrainState& st, const TokenizerTrainConfig& cfg, const Dataset& data,
                                        const TeacherFeatures& teachers, const StepCallback& on_step = {}) {
    auto& m = st.model;
    m.codebook_semantic.reset_usage();
    m.codebook_detail.reset_usage();
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[st.rng.below(i)]);

    EpochSummary summary;
    summary.epoch = st.epoch;
    summary.kept_histogram.assign(cfg.quant.steps(), 0);
    StepReport last;
    std::vector<Grid> images;
    std::vector<std::vector<double>> targets;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        if (cfg.max_steps > 0 && st.step >= static_cast<std::uint64_t>(cfg.max_steps)) break;
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        images.clear();
        targets.clear();
        for (std::size_t i = start; i < end; ++i) {
            images.push_back(data.images[order[i]]);
            targets.push_back(teachers.features[order[i]]);
        }
        last = train_step(m, images, targets, cfg.loss, st.adam, st.rng);
        ++st.step;
        for (int n : last.kept) ++summary.kept_histogram[n - 1];
        if (on_step) on_step(st.step, last);
    }
    summary.utilization_semantic = utilization(m.codebook_semantic);
    summary.utilization_detail = utilization(m.codebook_detail);
    ++st.epoch;
    if (cfg.revive && training_finished(cfg, st)) {
        const auto r = refresh_dead_codes(m, data.images, st.rng, cfg.revive_noise);
        summary.revived_semantic = r.first;
        summary.revived_detail = r.second;
    } else if (cfg.revive && !last.semantic_inputs.empty()) {
        summary.revived_semantic = revive_dead_codes(m.codebook_semantic, last.semantic_inputs, st.rng, cfg.revive_noise);
        summary.revived_detail = revive_dead_codes(m.codebook_detail, last.detail_inputs, st.rng, cfg.revive_noise);
    }
    m.codebook_semantic.reset_usage();
    m.codebook_detail.reset_usage();
    return summary;
}

inline void run_tokenizer_training(TokenizerTrainState& st, const TokenizerTrainConfig& cfg, const Dataset& data,
                                   const TeacherFeatures& teachers, const StepCallback& on_step = {},
                                   const EpochCallback& on_epoch = {}) {
    detail::check_training_data(cfg, data, teachers);
    while (!training_finished(cfg, st)) {
        auto summary = run_tokenizer_epoch(st, cfg, data, teachers, on_step);
        if (on_epoch) on_epoch(summary);
    }
}

inline TokenizerModel train_tokenizer(const TokenizerTrainConfig& cfg, const Dataset& data,
                                      const TeacherFeatures& teachers, const StepCallback& on_step = {},
                                      const EpochCallback& on_epoch = {}) {
    auto st = init_tokenizer_training(cfg, data, teachers);
    run_tokenizer_training(st, cfg, data, teachers, on_step, on_epoch);
    return std::move(st.model);
}

struct UtilizationReport {
    double semantic = 0.0;
    double detail = 0.0;
};

/// Codebook utilization over one full-depth pass of `images`.
inline UtilizationReport measure_utilization(const TokenizerModel& m, std::span<const Grid> images) {
    Codebook cs = m.codebook_semantic, cd = m.codebook_detail;
    cs.reset_usage();
    cd.reset_usage();
    const int n = m.quant.steps();
    for (const auto& img : images) {
        const auto z = encode(m, img);
        msrq_quantize(z.semantic, cs, m.quant, n, m.conv_semantic);
        msrq_quantize(z.detail, cd, m.quant, n, m.conv_detail);
    }
    return {utilization(cs), utilization(cd)};
}

}  // namespace imagefolder
