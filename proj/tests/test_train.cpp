// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "duplexsim/train.hpp"

namespace {

using namespace duplexsim;
using namespace duplexsim::train;

DuDnnSpec separable_spec(Variant v = Variant::DuDNN) {
    DuDnnSpec s;
    s.variant = v;
    s.blocks = 2;
    s.in_channels = 1;
    s.height = 8;
    s.width = 8;
    s.num_classes = 2;
    s.backbone_channels = 4;
    s.branch_channels = 4;
    return s;
}

DatasetConfig separable_data() {
    DatasetConfig c;
    c.kind = DatasetKind::Separable;
    c.train_size = 200;
    c.val_size = 200;
    return c;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("duplexsim_test_" + name)).string();
}

TEST(Dataset, ShapesAndLabelRange) {
    DatasetConfig c;
    c.train_size = 120;
    c.val_size = 30;
    const auto s = make_dataset(c, 1);
    EXPECT_EQ(s.train.x.shape(), (Shape4{120, 2, 8, 8}));
    EXPECT_EQ(s.val.size(), 30u);
    std::vector<int> hist(6, 0);
    for (int y : s.train.y) {
        ASSERT_GE(y, 0);
        ASSERT_LT(y, 6);
        ++hist[static_cast<std::size_t>(y)];
    }
    for (int h : hist) EXPECT_GT(h, 5);
    EXPECT_EQ(c.num_classes(), 6u);
    EXPECT_EQ(c.channels(), 2u);
}

TEST(Dataset, DeterministicInSeed) {
    DatasetConfig c;
    c.train_size = 20;
    c.val_size = 10;
    EXPECT_EQ(make_dataset(c, 5).train.x, make_dataset(c, 5).train.x);
    EXPECT_FALSE(make_dataset(c, 5).train.x == make_dataset(c, 6).train.x);
}

TEST(Dataset, EvenPoolingErasesTheTexture) {
    DatasetConfig c;
    c.noise = 0.0;
    std::mt19937_64 rng(2);
    const auto d = make_texture_tone(30, c, rng);
    const auto pooled = kernels::avg_pool(d.x, 2);
    for (std::size_t n = 0; n < 30; ++n)
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(pooled.at(n, 0, i, j), 0.0, 1e-12);
    // the tone survives pooling with the sign of its label bit
    for (std::size_t n = 0; n < 30; ++n) {
        const double centre = pooled.at(n, 1, 1, 1);
        EXPECT_EQ(centre > 0, d.y[n] % 2 == 1) << n;
    }
}

TEST(Dataset, TextureOnlyHasNoTone) {
    DatasetConfig c;
    c.kind = DatasetKind::TextureOnly;
    c.train_size = 10;
    const auto s = make_dataset(c, 3);
    for (std::size_t n = 0; n < 10; ++n) {
        EXPECT_LT(s.train.y[n], 3);
        for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(s.train.x.at(n, 1, i / 8, i % 8), 0.0);
    }
}

TEST(Dataset, RejectsBadConfigs) {
    DatasetConfig c;
    c.height = 1;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(parse_dataset_kind("mnist"), ConfigError);
}

TEST(Sgd, OneStepByHand) {
    Tensor w(Shape4{1, 1, 1, 2}, std::vector<double>{1.0, -2.0});
    const Tensor g(Shape4{1, 1, 1, 2}, std::vector<double>{0.5, 0.5});
    Sgd opt{0.1, 0.9, 0.01, {}};
    opt.step({&w}, {&g});
    // v = g + wd w = {0.51, 0.48}
    EXPECT_DOUBLE_EQ(w[0], 1.0 - 0.1 * 0.51);
    EXPECT_DOUBLE_EQ(w[1], -2.0 - 0.1 * 0.48);
    const double w0 = w[0];
    opt.step({&w}, {&g});
    EXPECT_DOUBLE_EQ(w[0], w0 - 0.1 * (0.9 * 0.51 + 0.5 + 0.01 * w0));
}

TEST(Pretrain, SourceOnlyChannelsAndFoldedNorm) {
    DuDnnSpec spec;
    spec.blocks = 2;
    spec.in_channels = 2;
    spec.height = 8;
    spec.width = 8;
    spec.num_classes = 6;
    spec.backbone_channels = 4;
    PretrainConfig pc;
    pc.epochs = 1;
    pc.samples = 64;
    const auto bb = pretrain_backbone(spec, DatasetConfig{}, pc, 1);
    ASSERT_EQ(bb.size(), 2u);
    for (std::size_t o = 0; o < 4; ++o)
        for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(bb[0].weight.at(o, 1, i / 3, i % 3), 0.0);
    for (const auto& g : bb) {
        ASSERT_EQ(g.norm_scale.size(), 4u);
        for (double s : g.norm_scale) EXPECT_GT(s, 0.0);
    }
    const auto again = pretrain_backbone(spec, DatasetConfig{}, pc, 1);
    EXPECT_EQ(again[1].weight, bb[1].weight);
}

TEST(Train, SeparableReachesNinetyNinePercent) {
    const auto data = make_dataset(separable_data(), 1);
    const auto spec = separable_spec();
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.lr = 0.05;
    const auto r = train::train(init_model(spec, 2), cfg, data);
    EXPECT_FALSE(r.diverged);
    EXPECT_GE(r.final_accuracy(), 0.99);
    EXPECT_EQ(r.trajectory.size(), 6u);
    EXPECT_EQ(r.steps, 6u * (200u / 16u + 1u));
}

TEST(Train, SeparableUnderBlockFloatingPoint) {
    const auto data = make_dataset(separable_data(), 1);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.lr = 0.05;
    cfg.use_bfp = true;
    const auto r = train::train(init_model(separable_spec(Variant::FI), 2), cfg, data);
    EXPECT_GE(r.final_accuracy(), 0.99);
    // learnable parameters stay on the BFP grid
    const auto num = cfg.numerics();
    for (const auto* t : std::as_const(r.model).learnable()) EXPECT_EQ(num.quantized(*t), *t);
}

TEST(Train, DeterministicForAFixedSeed) {
    const auto data = make_dataset(separable_data(), 4);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 9;
    cfg.faults.enabled = true;
    cfg.faults.yield = 0.99;
    const auto a = train::train(init_model(separable_spec(), 3), cfg, data);
    const auto b = train::train(init_model(separable_spec(), 3), cfg, data);
    ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
    for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
        EXPECT_EQ(a.trajectory[i].train_loss, b.trajectory[i].train_loss);
        EXPECT_EQ(a.trajectory[i].val_accuracy, b.trajectory[i].val_accuracy);
    }
    EXPECT_EQ(a.corrupted_values, b.corrupted_values);
    EXPECT_GT(a.corrupted_values, 0u);
    EXPECT_EQ(a.model.head_weight, b.model.head_weight);
}

TEST(Train, EarlyStopFromCallback) {
    const auto data = make_dataset(separable_data(), 1);
    TrainConfig cfg;
    cfg.epochs = 10;
    const auto r = train::train(init_model(separable_spec(), 2), cfg, data, [](const EpochRecord& e) {
        return e.epoch < 3;
    });
    EXPECT_EQ(r.trajectory.size(), 3u);
}

TEST(Train, RejectsClassMismatchAndBadConfig) {
    const auto data = make_dataset(separable_data(), 1);
    auto spec = separable_spec();
    spec.num_classes = 3;
    EXPECT_THROW(train::train(init_model(spec, 1), TrainConfig{}, data), ConfigError);
    TrainConfig cfg;
    cfg.lr = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.momentum = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Checkpoint, RoundTrip) {
    const auto m = init_model(separable_spec(), 11);
    const auto path = temp_path("ckpt.bin");
    save_checkpoint(m, path);
    auto fresh = init_model(separable_spec(), 12);
    ASSERT_FALSE(fresh.head_weight == m.head_weight);
    load_checkpoint(fresh, path);
    const auto a = named_tensors(m), b = named_tensors(fresh);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].first, b[i].first);
        EXPECT_EQ(a[i].second, b[i].second) << a[i].first;
    }
    std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptAndMismatchedFiles) {
    const auto path = temp_path("bad.bin");
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE";
    }
    auto m = init_model(separable_spec(), 1);
    EXPECT_THROW(load_checkpoint(m, path), RunError);
    save_checkpoint(init_model(separable_spec(Variant::BO), 1), path);
    EXPECT_THROW(load_checkpoint(m, path), RunError);
    // truncated payload
    save_checkpoint(m, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9);
    EXPECT_THROW(read_checkpoint(path), RunError);
    std::filesystem::remove(path);
}

} // namespace
