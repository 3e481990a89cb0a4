#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "imagefolder/error.hpp"
#include "imagefolder/grid.hpp"

namespace imagefolder {

struct LossWeights {
    double recon = 1.0;
    double vq = 1.0;
    double adversarial = 0.5;
    double perceptual = 1.0;
    double clip = 0.1;

    void validate() const {
        for (double w : {recon, vq, adversarial, perceptual, clip})
            detail::require_arg(std::isfinite(w) && w >= 0.0, "loss weights must be finite and non-negative");
    }
};

struct LossParts {
    double recon = 0.0;
    double vq = 0.0;
    double adversarial = 0.0;
    double perceptual = 0.0;
    double clip = 0.0;
};

/// Optional image-space loss terms. An unset hook contributes zero. When set,
/// the hook returns its value and may add d(term)/d(x_hat) into `grad`.
struct LossHooks {
    using Term = std::function<double(const Grid& x, const Grid& x_hat, Grid* grad)>;
    Term adversarial;
    Term perceptual;
};

/// Weighted sum of the five terms; throws training-diverged on a NaN part.
inline double composite_loss(const LossParts& parts, const LossWeights& w) {
    for (double v : {parts.recon, parts.vq, parts.adversarial, parts.perceptual, parts.clip})
        if (std::isnan(v)) throw Error(ErrorCode::training_diverged, "NaN loss term");
    return w.recon * parts.recon + w.vq * parts.vq + w.adversarial * parts.adversarial +
           w.perceptual * parts.perceptual + w.clip * parts.clip;
}

/// Mean squared error over all cells and channels. If `grad` is given it
/// receives d/dx_hat.
inline double recon_loss(const Grid& x, const Grid& x_hat, Grid* grad = nullptr) {
    detail::require_arg(x.same_shape(x_hat), "recon_loss: shape mismatch");
    const double inv = 1.0 / static_cast<double>(x.size());
    double s = 0.0;
    if (grad) *grad = Grid(x.height, x.width, x.channels);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x_hat.data[i] - x.data[i];
        s += d * d;
        if (grad) grad->data[i] = 2.0 * d * inv;
    }
    return s * inv;
}

/// Symmetric InfoNCE between L2-normalized pooled vectors and unit teacher
/// vectors, with logits cos / tau. Only samples with mask[b] set take part
/// (as positives and as negatives). Fewer than two eligible samples give 0.
/// If `grads` is given it is resized to B and receives d/d pooled[b]
/// (zero for ineligible samples).
inline double contrastive_loss(std::span<const std::vector<double>> pooled,
                               std::span<const std::vector<double>> teachers, double tau,
                               const std::vector<bool>& mask,
                               std::vector<std::vector<double>>* grads = nullptr) {
    detail::require_arg(tau > 0.0, "contrastive_loss: temperature must be positive");
    detail::require_arg(pooled.size() == teachers.size() && pooled.size() == mask.size() && !pooled.empty(),
                        "contrastive_loss: pooled, teachers and mask must have the same non-zero length");
    const std::size_t B = pooled.size();
    if (grads) {
        grads->assign(B, {});
        for (std::size_t b = 0; b < B; ++b) (*grads)[b].assign(pooled[b].size(), 0.0);
    }
    std::vector<std::size_t> ids;
    for (std::size_t b = 0; b < B; ++b)
        if (mask[b]) ids.push_back(b);
    const std::size_t n = ids.size();
    if (n < 2) return 0.0;

    const std::size_t D = pooled[ids[0]].size();
    std::vector<std::vector<double>> unit(n);
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& u = pooled[ids[i]];
        detail::require_arg(u.size() == D && teachers[ids[i]].size() == D,
                            "contrastive_loss: pooled and teacher dimensions must agree");
        double s = 0.0;
        for (double v : u) s += v * v;
        norms[i] = std::max(std::sqrt(s), 1e-12);
        unit[i].resize(D);
        for (std::size_t d = 0; d < D; ++d) unit[i][d] = u[d] / norms[i];
    }
    std::vector<double> logits(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const auto& t = teachers[ids[j]];
            double s = 0.0;
            for (std::size_t d = 0; d < D; ++d) s += unit[i][d] * t[d];
            logits[i * n + j] = s / tau;
        }

    // Rows: pooled -> teacher; columns: teacher -> pooled. Each direction is a
    // mean cross-entropy with the diagonal as target; the loss averages both.
    std::vector<double> dlogits(n * n, 0.0);
    double loss = 0.0;
    const double scale = 0.5 / static_cast<double>(n);
    std::vector<double> buf(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) buf[j] = logits[i * n + j];
        const auto p = softmax(buf);
        loss += -std::log(p[i]);
        for (std::size_t j = 0; j < n; ++j) dlogits[i * n + j] += scale * (p[j] - (i == j ? 1.0 : 0.0));
    }
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) buf[i] = logits[i * n + j];
        const auto p = softmax(buf);
        loss += -std::log(p[j]);
        for (std::size_t i = 0; i < n; ++i) dlogits[i * n + j] += scale * (p[i] - (i == j ? 1.0 : 0.0));
    }
    loss *= scale;

    if (grads) {
        for (std::size_t i = 0; i < n; ++i) {
            // d/d unit_i, then through the normalization: (I - u u^T) / |x|
            std::vector<double> du(D, 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                const double g = dlogits[i * n + j] / tau;
                const auto& t = teachers[ids[j]];
                for (std::size_t d = 0; d < D; ++d) du[d] += g * t[d];
            }
            double dot = 0.0;
            for (std::size_t d = 0; d < D; ++d) dot += du[d] * unit[i][d];
            auto& out = (*grads)[ids[i]];
            for (std::size_t d = 0; d < D; ++d) out[d] = (du[d] - dot * unit[i][d]) / norms[i];
        }
    }
    return loss;
}

}  // namespace imagefolder
