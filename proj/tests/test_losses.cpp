#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "imagefolder/losses.hpp"
#include "gradient_cases.hpp"
#include "support.hpp"

using namespace imagefolder;
using namespace imagefolder::testing;

TEST(Recon, EqualIsZero) {
    Rng rng(1);
    const auto x = random_grid(rng, 3, 3, 2);
    EXPECT_EQ(recon_loss(x, x), 0.0);
}

TEST(Recon, ZerosVersusOnes) {
    const Grid x(4, 4, 1), xh(4, 4, 1, 1.0);
    EXPECT_DOUBLE_EQ(recon_loss(x, xh), 1.0);
}

TEST(Recon, HandArithmetic) {
    Grid x(1, 2, 1), xh(1, 2, 1);
    x.data = {0.0, 2.0};
    xh.data = {1.0, 1.0};
    EXPECT_DOUBLE_EQ(recon_loss(x, xh), 1.0);
}

TEST(Recon, ShapeMismatch) {
    EXPECT_ERROR_CODE(ErrorCode::invalid_argument, recon_loss(Grid(2, 2, 1), Grid(2, 3, 1)));
}

TEST(Contrastive, SingleSampleHasNoNegatives) {
    const std::vector<std::vector<double>> p{{1.0, 2.0}}, t{{0.6, 0.8}};
    EXPECT_EQ(contrastive_loss(p, t, 0.07, {true}), 0.0);
}

TEST(Contrastive, AllMaskedIsZero) {
    Rng rng(2);
    std::vector<std::vector<double>> p, t;
    for (int i = 0; i < 4; ++i) {
        p.push_back(random_vector(rng, 3));
        t.push_back(random_vector(rng, 3));
        normalize_in_place(t.back());
    }
    std::vector<std::vector<double>> g;
    EXPECT_EQ(contrastive_loss(p, t, 0.07, std::vector<bool>(4, false), &g), 0.0);
    for (const auto& v : g)
        for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST(Contrastive, OrthogonalPairClosedForm) {
    const std::vector<std::vector<double>> t{{1.0, 0.0}, {0.0, 1.0}};
    EXPECT_NEAR(contrastive_loss(t, t, 1.0, {true, true}), std::log1p(std::exp(-1.0)), 1e-12);
    EXPECT_NEAR(std::log1p(std::exp(-1.0)), 0.3133, 5e-5);
}

TEST(Contrastive, MaskedSamplesAreIgnored) {
    Rng rng(3);
    std::vector<std::vector<double>> p, t;
    for (int i = 0; i < 5; ++i) {
        p.push_back(random_vector(rng, 3));
        t.push_back(random_vector(rng, 3));
        normalize_in_place(t.back());
    }
    const std::vector<bool> mask{true, false, true, true, false};
    std::vector<std::vector<double>> p2{p[0], p[2], p[3]}, t2{t[0], t[2], t[3]};
    EXPECT_NEAR(contrastive_loss(p, t, 0.2, mask), contrastive_loss(p2, t2, 0.2, {true, true, true}), 1e-12);
}

TEST(Contrastive, PermutationEquivariant) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t B = 2 + rng.below(7);
        std::vector<std::vector<double>> p, t;
        std::vector<bool> m;
        for (std::size_t i = 0; i < B; ++i) {
            p.push_back(random_vector(rng, 4));
            t.push_back(random_vector(rng, 4));
            normalize_in_place(t.back());
            m.push_back(rng.uniform() < 0.7);
        }
        std::vector<std::size_t> perm(B);
        for (std::size_t i = 0; i < B; ++i) perm[i] = i;
        for (std::size_t i = B; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
        std::vector<std::vector<double>> pp, tp;
        std::vector<bool> mp;
        for (auto i : perm) {
            pp.push_back(p[i]);
            tp.push_back(t[i]);
            mp.push_back(m[i]);
        }
        EXPECT_NEAR(contrastive_loss(p, t, 0.07, m), contrastive_loss(pp, tp, 0.07, mp), 1e-9);
    }
}

TEST(Contrastive, ScaleInvariant) {
    Rng rng(5);
    std::vector<std::vector<double>> p, t;
    for (int i = 0; i < 6; ++i) {
        p.push_back(random_vector(rng, 3));
        t.push_back(random_vector(rng, 3));
        normalize_in_place(t.back());
    }
    const std::vector<bool> m(6, true);
    const double base = contrastive_loss(p, t, 0.07, m);
    for (double c : {1e-3, 0.5, 7.0, 1e4}) {
        auto q = p;
        for (double& v : q[2]) v *= c;
        EXPECT_LT(std::abs(contrastive_loss(q, t, 0.07, m) - base), 1e-9);
    }
}

TEST(Contrastive, NonPositiveTemperature) {
    const std::vector<std::vector<double>> t{{1.0, 0.0}, {0.0, 1.0}};
    EXPECT_ERROR_CODE(ErrorCode::invalid_argument, contrastive_loss(t, t, 0.0, {true, true}));
}

TEST(Composite, ZeroWeightsGiveZero) {
    LossParts parts{2.0, 1.0, 5.0, 4.0, 3.0};
    EXPECT_EQ(composite_loss(parts, LossWeights{0, 0, 0, 0, 0}), 0.0);
}

TEST(Composite, Defaults) {
    const LossWeights w;
    EXPECT_EQ(w.recon, 1.0);
    EXPECT_EQ(w.vq, 1.0);
    EXPECT_EQ(w.adversarial, 0.5);
    EXPECT_EQ(w.perceptual, 1.0);
    EXPECT_EQ(w.clip, 0.1);
}

TEST(Composite, HandArithmetic) {
    LossParts parts;
    parts.recon = 2.0;
    parts.vq = 1.0;
    parts.clip = 3.0;
    EXPECT_NEAR(composite_loss(parts, LossWeights{}), 3.3, 1e-12);
}

TEST(Composite, LinearInEachPart) {
    Rng rng(6);
    const LossWeights w{0.3, 1.7, 0.5, 2.0, 0.1};
    for (int t = 0; t < 20; ++t) {
        LossParts a{rng.normal(), rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        LossParts b = a;
        const double d = rng.normal();
        b.vq += d;
        EXPECT_NEAR(composite_loss(b, w) - composite_loss(a, w), w.vq * d, 1e-12);
    }
}

TEST(Composite, NanPartDiverges) {
    LossParts parts;
    parts.clip = std::numeric_limits<double>::quiet_NaN();
    EXPECT_ERROR_CODE(ErrorCode::training_diverged, composite_loss(parts, LossWeights{}));
}

TEST(Gradients, Recon) { EXPECT_LT(worst_recon(100, 10), 1e-3); }
TEST(Gradients, Contrastive) { EXPECT_LT(worst_contrastive(100, 11), 1e-3); }
