#pragma once

// Random finite-difference instances for every differentiable operation.
// Each function returns the worst relative gradient error over `instances`.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "imagefolder/dataset.hpp"
#include "imagefolder/generator.hpp"
#include "imagefolder/losses.hpp"
#include "imagefolder/nn.hpp"
#include "imagefolder/quantizer.hpp"
#include "imagefolder/tokenizer.hpp"
#include "support.hpp"

namespace imagefolder::testing {

inline int dim_in(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(hi - lo + 1)); }

inline double worst_linear(int instances, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
        LinearLayer layer(dim_in(rng, 1, 6), dim_in(rng, 1, 6));
        layer.init_gaussian(rng, 1.0);
        for (double& b : layer.bias) b = rng.normal();
        auto x = random_vector(rng, layer.in_dim);
        const auto r = random_vector(rng, layer.out_dim);
        auto loss = [&] { return dot(r, linear_forward(layer, x)); };
        std::fill(layer.grad_weights.begin(), layer.grad_weights.end(), 0.0);
        std::fill(layer.grad_bias.begin(), layer.grad_bias.end(), 0.0);
        auto analytic = linear_backward(layer, x, r);
        analytic.insert(analytic.end(), layer.grad_weights.begin(), layer.grad_weights.end());
        analytic.insert(analytic.end(), layer.grad_bias.begin(), layer.grad_bias.end());
        auto numeric = numeric_gradient(x, loss);
        const auto gw = numeric_gradient(layer.weights, loss);
        const auto gb = numeric_gradient(layer.bias, loss);
        numeric.insert(numeric.end(), gw.begin(), gw.end());
        numeric.insert(numeric.end(), gb.begin(), gb.end());
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    return worst;
}

inline double worst_relu(int instances, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
        auto x = random_vector(rng, dim_in(rng, 1, 12));
        for (double& v : x)  // keep clear of the kink so differences are one-sided-safe
            if (std::abs(v) < 1e-2) v = v < 0 ? -0.5 : 0.5;
        const auto r = random_vector(rng, x.size());
        auto loss = [&] { return dot(r, relu(x)); };
        worst = std::max(worst, relative_error(relu_backward(x, r), numeric_gradient(x, loss)));
    }
    return worst;
}

inline double worst_mlp(int instances, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
        Mlp mlp(dim_in(rng, 1, 5), dim_in(rng, 1, 6), dim_in(rng, 1, 4));
        mlp.init_gaussian(rng, 0.8);
        auto x = random_vector(rng, mlp.in_dim());
        const auto r = random_vector(rng, mlp.out_dim());
        ParamList ps;
        mlp.append_params(ps, "mlp");
        zero_grads(ps);
        MlpTrace trace;
        mlp.forward(x, trace);
        auto analytic = mlp.backward(trace, r);
        auto loss = [&] { return dot(r, mlp.forward(x)); };
        auto numeric = numeric_gradient(x, loss);
        for (auto& p : ps) {
            analytic.insert(analytic.end(), p.grad.begin(), p.grad.end());
            const auto g = numeric_gradient(p.value, loss);
            numeric.insert(numeric.end(), g.begin(), g.end());
        }
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    return worst;
}

inline double worst_conv3x3(int instances, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
        const int h = dim_in(rng, 1, 5), w = dim_in(rng, 1, 5), c = dim_in(rng, 1, 3);
        Grid g = random_grid(rng, h, w, c);
        DepthwiseKernel k(c);
        for (double& v : k.weights) v = rng.normal();
        const Grid r = random_grid(rng, h, w, c);
        auto loss = [&] { return dot(r.data, conv3x3(g, k).data); };
        DepthwiseKernel gk(c);
        auto analytic = conv3x3_backward(g, k, r, &gk).data;
        analytic.insert(analytic.end(), gk.weights.begin(), gk.weights.end());
        auto numeric = numeric_gradient(g.data, loss);
        const auto nk = numeric_gradient(k.weights, loss);
        numeric.insert(numeric.end(), nk.begin(), nk.end());
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    return worst;
}

inline double worst_resample(int instances, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
        const int n = dim_in(rng, 1, 6), c = dim_in(rng, 1, 3);
        const int small = dim_in(rng, 1, n), big = dim_in(rng, n, 8);
        Grid g = random_grid(rng, n, n, c);
        const Grid rd = random_grid(rng, small, small, c), ru = random_grid(rng, big, big, c);
        auto loss = [&] { return dot(rd.data, downsample(g, small).data) + dot(ru.data, upsample(g, big).data); };
        Grid analytic = downsample_backward(rd, n);
        analytic += upsample_backward(ru, n);
        worst = std::max(worst, relative_error(analytic.data, numeric_gradient(g.data, loss)));
    }
    return worst;
}

inline double worst_recon(int instances, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
        const int h = dim_in(rng, 1, 5), w = dim_in(rng, 1, 5), c = dim_in(rng, 1, 2);
        const Grid x = random_grid(rng, h, w, c);
        Grid xh = random_grid(rng, h, w, c);
        Grid grad;
        recon_loss(x, xh, &grad);
        auto loss = [&] { return recon_loss(x, xh); };
        worst = std::max(worst, relative_error(grad.data, numeric_gradient(xh.data, loss)));
    }
    return worst;
}

inline double worst_contrastive(int instances, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
        const std::size_t B = dim_in(rng, 2, 8);
        const int D = dim_in(rng, 2, 6);
        const double tau = 0.07 + rng.uniform() * 0.9;
        std::vector<std::vector<double>> pooled(B), teachers(B);
        std::vector<bool> mask(B);
        for (std::size_t b = 0; b < B; ++b) {
            pooled[b] = random_vector(rng, D);
            teachers[b] = random_vector(rng, D);
            normalize_in_place(teachers[b]);
            mask[b] = rng.uniform() < 0.8;
        }
        std::vector<std::vector<double>> grads;
        contrastive_loss(pooled, teachers, tau, mask, &grads);
        std::vector<double> analytic, numeric;
        auto loss = [&] { return contrastive_loss(pooled, teachers, tau, mask); };
        for (std::size_t b = 0; b < B; ++b) {
            analytic.insert(analytic.end(), grads[b].begin(), grads[b].end());
            const auto g = numeric_gradient(pooled[b], loss);
            numeric.insert(numeric.end(), g.begin(), g.end());
        }
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    return worst;
}

/// Codebook-term gradient of a fixed linear readout of z' with respect to the
/// codewords and the blend kernel (token choices held fixed).
inline double worst_msrq_codebook(int instances, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
        QuantizerConfig q;
        q.scales = {1, 2, 3};
        q.n_start = 1;
        q.gamma = rng.uniform();
        const int C = dim_in(rng, 1, 3);
        Codebook cb(dim_in(rng, 2, 6), C);
        for (double& v : cb.codewords()) v = rng.normal();
        DepthwiseKernel k(C);
        for (double& v : k.weights) v = rng.normal(0.0, 0.5);
        const Grid z = random_grid(rng, 3, 3, C);
        const Grid r = random_grid(rng, 3, 3, C);
        const auto fwd = msrq_quantize_frozen(z, cb, q, 3, k);
        // Replay with the recorded tokens so the readout is smooth in the parameters.
        auto loss = [&] { return dot(r.data, dequantize_branch(fwd.pyramid, cb, q, k).data); };
        for (double& g : cb.grads()) g = 0.0;
        DepthwiseKernel gk(C);
        msrq_backward(fwd, r, cb, k, gk, q.gamma);
        std::vector<double> analytic(cb.grads().begin(), cb.grads().end());
        analytic.insert(analytic.end(), gk.weights.begin(), gk.weights.end());
        auto numeric = numeric_gradient(cb.codewords(), loss);
        const auto nk = numeric_gradient(k.weights, loss);
        numeric.insert(numeric.end(), nk.begin(), nk.end());
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    return worst;
}

/// Whole tokenizer with the quantizer replaced by the identity map.
inline double worst_tokenizer_identity(int instances, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
        TokenizerShape shape;
        shape.image_size = 4;
        shape.patch = 2;
        shape.channels = dim_in(rng, 2, 3);
        shape.encoder_hidden = dim_in(rng, 2, 5);
        shape.decoder_hidden = dim_in(rng, 2, 5);
        shape.codebook_semantic = 4;
        shape.codebook_detail = 4;
        QuantizerConfig q;
        q.scales = {1, 2};
        q.n_start = 1;
        auto m = TokenizerModel::create(shape, q, rng, 0.5);
        for (double& v : m.level_semantic) v = rng.normal(0.0, 0.3);
        for (double& v : m.level_detail) v = rng.normal(0.0, 0.3);
        const std::size_t B = dim_in(rng, 1, 3);
        std::vector<Grid> images;
        std::vector<std::vector<double>> teachers;
        for (std::size_t b = 0; b < B; ++b) {
            images.push_back(random_grid(rng, 4, 4, 1));
            teachers.push_back(random_vector(rng, shape.channels));
            normalize_in_place(teachers.back());
        }
        TokenizerLossConfig lc;
        lc.tau = 0.5;
        lc.weights.clip = 0.1 + rng.uniform();
        auto params = m.parameters();
        zero_grads(params);
        Rng unused(0);
        tokenizer_forward_backward(m, images, teachers, lc, unused, true, QuantizerMode::identity);
        auto loss = [&] {
            Rng r(0);
            return tokenizer_forward_backward(m, images, teachers, lc, r, false, QuantizerMode::identity).total;
        };
        std::vector<double> analytic, numeric;
        for (auto& p : params) {
            if (p.name.rfind("quantizer.", 0) == 0) continue;  // unused under the identity map
            analytic.insert(analytic.end(), p.grad.begin(), p.grad.end());
            const auto g = numeric_gradient(p.value, loss);
            numeric.insert(numeric.end(), g.begin(), g.end());
        }
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    return worst;
}

/// AR cross-entropy with respect to every generator parameter, on random
/// sequences over small schedules.
inline double worst_ar_loss(int instances, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) {
        QuantizerConfig q;
        q.scales = rng.uniform() < 0.5 ? std::vector<int>{1, 2} : std::vector<int>{1, 1, 2};
        q.n_start = 1;
        const int js = dim_in(rng, 2, 5), jd = dim_in(rng, 2, 5), classes = dim_in(rng, 1, 3);
        auto ts = TokenSpace::random(q, dim_in(rng, 1, 3), js, jd, rng);
        auto m = ArModel::create(ts, classes, dim_in(rng, 2, 6), rng, 0.7);
        std::vector<PreparedSequence> batch;
        const std::size_t B = 1 + rng.below(3);
        for (std::size_t b = 0; b < B; ++b) {
            FoldedSequence s{q.scales, static_cast<std::uint32_t>(rng.below(classes)), static_cast<std::uint32_t>(js),
                             static_cast<std::uint32_t>(jd), {}};
            for (std::size_t p = 0; p < q.positions(); ++p)
                s.pairs.push_back({static_cast<std::uint16_t>(rng.below(js)), static_cast<std::uint16_t>(rng.below(jd))});
            batch.push_back(prepare_sequence(m, s));
        }
        std::vector<std::uint8_t> nulls(B);
        for (auto& n : nulls) n = rng.uniform() < 0.3;
        auto params = m.parameters();
        zero_grads(params);
        ar_loss(m, batch, nulls, true);
        auto loss = [&] { return ar_loss(m, batch, nulls, false); };
        std::vector<double> analytic, numeric;
        for (auto& p : params) {
            analytic.insert(analytic.end(), p.grad.begin(), p.grad.end());
            const auto g = numeric_gradient(p.value, loss);
            numeric.insert(numeric.end(), g.begin(), g.end());
        }
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    return worst;
}

}  // namespace imagefolder::testing
