#include <gtest/gtest.h>

#include <map>

#include "imagefolder/dataset.hpp"
#include "imagefolder/eval.hpp"
#include "imagefolder/tokenizer.hpp"
#include "imagefolder/trainer.hpp"
#include "gradient_cases.hpp"
#include "support.hpp"

using namespace imagefolder;
using namespace imagefolder::testing;

namespace {

TokenizerModel untrained(std::uint64_t seed = 1) {
    Rng rng(seed);
    return TokenizerModel::create(TokenizerShape{}, QuantizerConfig{}, rng, 0.2);
}

void zero_all(TokenizerModel& m) {
    for (auto& p : m.parameters()) std::fill(p.value.begin(), p.value.end(), 0.0);
}

const SyntheticData& desk_data() {
    static const SyntheticData d = [] {
        SyntheticSpec s;
        s.seed = 7;
        return make_synthetic(s);
    }();
    return d;
}

TokenizerTrainConfig desk_config(double p, int steps) {
    TokenizerTrainConfig cfg;
    cfg.seed = 7;
    cfg.quant.dropout_p = p;
    cfg.max_steps = steps;
    cfg.epochs = 1000;
    return cfg;
}

/// Desk models trained for 500 steps, cached per dropout ratio.
const TokenizerModel& trained(double p) {
    static std::map<double, TokenizerModel> cache;
    auto it = cache.find(p);
    if (it == cache.end())
        it = cache.emplace(p, train_tokenizer(desk_config(p, 500), desk_data().dataset, desk_data().teachers)).first;
    return it->second;
}

double mean_mse(const TokenizerModel& m, std::span<const Grid> images, int depth) {
    double s = 0.0;
    for (const auto& img : images) s += recon_loss(img, reconstruct_at_depth(m, img, depth));
    return s / images.size();
}

}  // namespace

TEST(Encode, ZeroModelGivesLevelEmbedding) {
    auto m = untrained();
    zero_all(m);
    for (int c = 0; c < m.shape.channels; ++c) {
        m.level_semantic[c] = 0.1 * c;
        m.level_detail[c] = -0.2 * c;
    }
    const auto z = encode(m, Grid(16, 16, 1));
    for (int py = 0; py < 4; ++py)
        for (int px = 0; px < 4; ++px)
            for (int c = 0; c < m.shape.channels; ++c) {
                EXPECT_EQ(z.semantic.at(py, px, c), 0.1 * c);
                EXPECT_EQ(z.detail.at(py, px, c), -0.2 * c);
            }
}

TEST(Encode, DeterministicAndShaped) {
    const auto m = untrained();
    Rng rng(2);
    const auto img = random_grid(rng, 16, 16, 1);
    const auto a = encode(m, img), b = encode(m, img);
    EXPECT_EQ(a.semantic, b.semantic);
    EXPECT_EQ(a.detail, b.detail);
    EXPECT_EQ(a.semantic.height, 4);
    EXPECT_EQ(a.semantic.width, 4);
    EXPECT_EQ(a.semantic.channels, 8);
    EXPECT_EQ(a.detail.channels, 8);
}

TEST(Encode, SizeMismatch) {
    const auto m = untrained();
    EXPECT_ERROR_CODE(ErrorCode::invalid_argument, encode(m, Grid(12, 12, 1)));
}

TEST(Decode, ZeroDecoderGivesZeroImage) {
    auto m = untrained();
    zero_all(m);
    const auto img = decode(m, Grid(4, 4, 16));
    EXPECT_EQ(img.height, 16);
    for (double v : img.data) EXPECT_EQ(v, 0.0);
}

TEST(Decode, DeterministicAndChecksChannels) {
    const auto m = untrained();
    Rng rng(3);
    const auto f = random_grid(rng, 4, 4, 16);
    EXPECT_EQ(decode(m, f), decode(m, f));
    EXPECT_ERROR_CODE(ErrorCode::invalid_argument, decode(m, Grid(4, 4, 8)));
}

TEST(TrainStep, ZeroWeightsLeaveParametersUnchanged) {
    auto m = untrained();
    const auto& d = desk_data();
    std::vector<Grid> imgs(d.dataset.images.begin(), d.dataset.images.begin() + 4);
    std::vector<std::vector<double>> ts(d.teachers.features.begin(), d.teachers.features.begin() + 4);
    TokenizerLossConfig lc;
    lc.weights = {0, 0, 0, 0, 0};
    AdamState adam(0.01);
    Rng rng(4);
    std::vector<std::vector<double>> before;
    for (auto& p : m.parameters()) before.emplace_back(p.value.begin(), p.value.end());
    train_step(m, imgs, ts, lc, adam, rng);
    std::size_t i = 0;
    for (auto& p : m.parameters()) EXPECT_TRUE(std::equal(p.value.begin(), p.value.end(), before[i++].begin()));
}

TEST(TrainStep, NoDropoutKeepsEverySampleEligible) {
    Rng rng(5);
    QuantizerConfig q;
    q.dropout_p = 0.0;
    auto m = TokenizerModel::create(TokenizerShape{}, q, rng, 0.2);
    const auto& d = desk_data();
    std::vector<Grid> imgs(d.dataset.images.begin(), d.dataset.images.begin() + 16);
    std::vector<std::vector<double>> ts(d.teachers.features.begin(), d.teachers.features.begin() + 16);
    AdamState adam(0.01);
    const auto r = train_step(m, imgs, ts, TokenizerLossConfig{}, adam, rng);
    for (int n : r.kept) EXPECT_EQ(n, q.steps());
    EXPECT_GT(r.parts.clip, 0.0);
}

TEST(TrainStep, RejectsMisalignedTeachers) {
    auto m = untrained();
    std::vector<Grid> imgs(2, Grid(16, 16, 1));
    std::vector<std::vector<double>> ts(1, std::vector<double>(8, 0.0));
    AdamState adam(0.01);
    Rng rng(6);
    EXPECT_ERROR_CODE(ErrorCode::invalid_argument, train_step(m, imgs, ts, TokenizerLossConfig{}, adam, rng));
}

TEST(Training, ReconHalvesWithin200Steps) {
    const auto& d = desk_data();
    double first = 0.0, at200 = 0.0;
    train_tokenizer(desk_config(0.1, 200), d.dataset, d.teachers, [&](std::uint64_t step, const StepReport& r) {
        if (step == 1) first = r.parts.recon;
        if (step == 200) at200 = r.parts.recon;
    });
    ASSERT_GT(first, 0.0);
    EXPECT_LE(at200, 0.5 * first);
}

TEST(Training, BitIdenticalReruns) {
    const auto& d = desk_data();
    auto a = train_tokenizer(desk_config(0.1, 40), d.dataset, d.teachers);
    auto b = train_tokenizer(desk_config(0.1, 40), d.dataset, d.teachers);
    auto pa = a.parameters(), pb = b.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(std::ranges::equal(pa[i].value, pb[i].value)) << pa[i].name;
}

TEST(Training, ContinuingACopiedStateMatchesUninterruptedRun) {
    const auto& d = desk_data();
    auto cfg = desk_config(0.1, 0);
    cfg.epochs = 3;
    auto full = init_tokenizer_training(cfg, d.dataset, d.teachers);
    run_tokenizer_training(full, cfg, d.dataset, d.teachers);

    auto st = init_tokenizer_training(cfg, d.dataset, d.teachers);
    run_tokenizer_epoch(st, cfg, d.dataset, d.teachers);
    run_tokenizer_epoch(st, cfg, d.dataset, d.teachers);
    auto resumed = st;  // snapshot between epochs, then continue
    run_tokenizer_training(resumed, cfg, d.dataset, d.teachers);
    EXPECT_EQ(resumed.step, full.step);
    EXPECT_EQ(resumed.rng.state(), full.rng.state());
    auto pa = full.model.parameters(), pb = resumed.model.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(std::ranges::equal(pa[i].value, pb[i].value)) << pa[i].name;
}

TEST(Training, HeldOutReconstructionImproves) {
    SyntheticSpec s;
    s.seed = 99;
    s.count = 64;
    const auto held = make_synthetic(s);
    const auto before = untrained(7);
    EXPECT_LT(mean_mse(trained(0.1), held.dataset.images, 3), mean_mse(before, held.dataset.images, 3));
}

TEST(Depth, FullDepthEqualsReconstruct) {
    const auto& m = trained(0.1);
    const auto& img = desk_data().dataset.images[3];
    EXPECT_EQ(reconstruct_at_depth(m, img, 3), reconstruct(m, img));
}

TEST(Depth, ShallowIsWorse) {
    const auto& m = trained(0.1);
    std::span<const Grid> imgs(desk_data().dataset.images.data(), 128);
    EXPECT_GT(mean_mse(m, imgs, 2), mean_mse(m, imgs, 3));
}

TEST(Depth, NonIncreasingWithinTolerance) {
    const auto sweep = depth_sweep(trained(0.1), desk_data().dataset.images);
    for (std::size_t i = 1; i < sweep.size(); ++i) EXPECT_LE(sweep[i].mse, 1.05 * sweep[i - 1].mse);
}

TEST(Depth, OutOfRange) {
    const auto& m = trained(0.1);
    const Grid img(16, 16, 1);
    EXPECT_ERROR_CODE(ErrorCode::invalid_argument, reconstruct_at_depth(m, img, 1));
    EXPECT_ERROR_CODE(ErrorCode::invalid_argument, reconstruct_at_depth(m, img, 4));
}

TEST(Depth, DropoutHelpsShallowestDepth) {
    std::span<const Grid> imgs = desk_data().dataset.images;
    const int m = QuantizerConfig{}.n_start;
    EXPECT_LT(mean_mse(trained(0.1), imgs, m), mean_mse(trained(0.0), imgs, m));
}

TEST(Depth, DropoutHelpsOneStepPastStart) {
    std::span<const Grid> imgs = desk_data().dataset.images;
    const int m = QuantizerConfig{}.n_start + 1;
    EXPECT_LT(mean_mse(trained(0.1), imgs, m), mean_mse(trained(0.0), imgs, m));
}

TEST(ZeroBranch, BothZeroedIsDecodeOfZero) {
    const auto& m = trained(0.1);
    const auto& img = desk_data().dataset.images[0];
    EXPECT_EQ(zero_branch_reconstruct(m, img, std::nullopt, true), decode(m, Grid(4, 4, 16)));
}

TEST(ZeroBranch, NoneZeroedIsFullReconstruction) {
    const auto& m = trained(0.1);
    const auto& img = desk_data().dataset.images[0];
    EXPECT_EQ(zero_branch_reconstruct(m, img, std::nullopt), reconstruct(m, img));
}

TEST(ZeroBranch, BranchesCarryDifferentContent) {
    const auto& m = trained(0.1);
    const auto& img = desk_data().dataset.images[0];
    const auto a = zero_branch_reconstruct(m, img, Branch::semantic);
    const auto b = zero_branch_reconstruct(m, img, Branch::detail);
    EXPECT_GT(squared_distance(a.data, b.data), 0.0);
}

TEST(StraightThrough, EncoderGradientIsDecoderInputGradient) {
    // With only the reconstruction term, the encoder receives exactly dL/dz'.
    Rng rng(8);
    QuantizerConfig q;
    q.dropout_p = 0.0;
    auto m = TokenizerModel::create(TokenizerShape{}, q, rng, 0.3);
    const auto& img = desk_data().dataset.images[5];
    const std::vector<Grid> batch{img};
    const std::vector<std::vector<double>> teach{desk_data().teachers.features[5]};
    TokenizerLossConfig lc;
    lc.weights = {1, 0, 0, 0, 0};
    auto ps = m.parameters();
    zero_grads(ps);
    tokenizer_forward_backward(m, batch, teach, lc, rng, true);
    const auto got_embed = m.patch_embed.grad_weights;
    const auto got_head = m.head_detail.grad_weights;

    zero_grads(ps);
    EncoderTrace et;
    const auto z = encode(m, img, &et);
    const auto pq = quantize_frozen(m, z, q.steps());
    DecoderTrace dt;
    const auto xh = decode(m, pq.concat, &dt);
    Grid g;
    recon_loss(img, xh, &g);
    const auto gz = decode_backward(m, dt, g);
    encode_backward(m, et, slice_channels(gz, 0, 8), slice_channels(gz, 8, 8));
    EXPECT_LT(relative_error(got_embed, m.patch_embed.grad_weights), 1e-12);
    EXPECT_LT(relative_error(got_head, m.head_detail.grad_weights), 1e-12);
}

TEST(Gradients, TokenizerWithIdentityQuantizer) { EXPECT_LT(worst_tokenizer_identity(100, 30), 1e-3); }

TEST(Utilization, DeskTrainingEndsFullyUsed) {
    const auto u = measure_utilization(trained(0.1), desk_data().dataset.images);
    EXPECT_EQ(u.semantic, 1.0);
    EXPECT_EQ(u.detail, 1.0);
}
