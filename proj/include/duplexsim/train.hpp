// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale training: synthetic datasets, backbone pretraining on a source
// task, SGD over the branch, optional stored-read fault injection, and a
// flat binary checkpoint format.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "duplexsim/duplex.hpp"
#include "duplexsim/error.hpp"
#include "duplexsim/memory.hpp"
#include "duplexsim/tensor.hpp"

namespace duplexsim::train {

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
    Tensor x; // (N, C, H, W)
    std::vector<int> y;
    std::size_t num_classes = 0;

    [[nodiscard]] std::size_t size() const { return y.size(); }

    /// Rows `idx` gathered into one batch.
    [[nodiscard]] std::pair<Tensor, std::vector<int>> batch(std::span<const std::size_t> idx) const {
        const auto& s = x.shape();
        const std::size_t per = s.c * s.h * s.w;
        Tensor b(Shape4{idx.size(), s.c, s.h, s.w});
        std::vector<int> labels;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                        b.values().begin() + static_cast<std::ptrdiff_t>(i * per));
            labels.push_back(y[idx[i]]);
        }
        return {std::move(b), std::move(labels)};
    }
};

enum class DatasetKind { TextureTone, Separable, TextureOnly };

inline std::string_view to_string(DatasetKind k) {
    switch (k) {
    case DatasetKind::TextureTone: return "texture_tone";
    case DatasetKind::Separable: return "separable";
    case DatasetKind::TextureOnly: return "texture_only";
    }
    return "?";
}

inline DatasetKind parse_dataset_kind(std::string_view s) {
    if (s == "texture_tone") return DatasetKind::TextureTone;
    if (s == "separable") return DatasetKind::Separable;
    if (s == "texture_only") return DatasetKind::TextureOnly;
    throw ConfigError("unknown dataset '" + std::string(s) + "'");
}

struct DatasetConfig {
    DatasetKind kind = DatasetKind::TextureTone;
    std::size_t train_size = 600;
    std::size_t val_size = 300;
    std::size_t height = 8;
    std::size_t width = 8;
    double noise = 0.5;
    double texture_amplitude = 1.0;
    double tone_amplitude = 1.0;

    void validate() const {
        if (train_size < 1 || val_size < 1) throw ConfigError("dataset: sizes must be >= 1");
        if (height < 2 || width < 2) throw ConfigError("dataset: images must be at least 2x2");
        if (noise < 0) throw ConfigError("dataset: noise must be >= 0");
    }
    [[nodiscard]] std::size_t channels() const { return kind == DatasetKind::Separable ? 1 : 2; }
    [[nodiscard]] std::size_t num_classes() const {
        switch (kind) {
        case DatasetKind::TextureTone: return 6;
        case DatasetKind::Separable: return 2;
        case DatasetKind::TextureOnly: return 3;
        }
        return 0;
    }
};

/// Period-2 texture in channel 0 (horizontal stripes, vertical stripes or
/// checkerboard, random phase) and a coarse tone in channel 1 (a smooth
/// bump that is either positive or negative), both under Gaussian noise.
/// Label = 2 * texture + tone. Average pooling by an even factor erases the
/// texture; a backbone that was trained on channel 0 alone never sees the tone.
inline Dataset make_texture_tone(std::size_t n, const DatasetConfig& cfg, std::mt19937_64& rng,
                                   bool texture_only = false) {
    const std::size_t H = cfg.height, W = cfg.width;
    Dataset d;
    d.num_classes = texture_only ? 3 : 6;
    d.x = Tensor(Shape4{n, 2, H, W});
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> tex(0, 2), bit(0, 1);
    const double ci = (static_cast<double>(H) - 1) / 2, cj = (static_cast<double>(W) - 1) / 2;
    const double r2 = std::max(ci * ci + cj * cj, 1.0);
    for (std::size_t s = 0; s < n; ++s) {
        const int t = tex(rng);
        const int tone = texture_only ? 0 : bit(rng);
        const double phase = bit(rng) ? 1.0 : -1.0;
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                const std::size_t k = t == 0 ? i : t == 1 ? j : i + j;
                d.x.at(s, 0, i, j) = (k % 2 == 0 ? 1.0 : -1.0) * phase * cfg.texture_amplitude + cfg.noise * gauss(rng);
                if (texture_only) continue;
                const double di = static_cast<double>(i) - ci, dj = static_cast<double>(j) - cj;
                const double bump = 1.0 - 0.5 * (di * di + dj * dj) / r2;
                d.x.at(s, 1, i, j) = (tone ? 1.0 : -1.0) * cfg.tone_amplitude * bump + cfg.noise * gauss(rng);
            }
        d.y.push_back(texture_only ? t : 2 * t + tone);
    }
    return d;
}

/// Two classes whose mean intensity differs in sign.
inline Dataset make_separable(std::size_t n, const DatasetConfig& cfg, std::mt19937_64& rng) {
    Dataset d;
    d.num_classes = 2;
    d.x = Tensor(Shape4{n, 1, cfg.height, cfg.width});
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> bit(0, 1);
    for (std::size_t s = 0; s < n; ++s) {
        const int c = bit(rng);
        for (std::size_t i = 0; i < cfg.height * cfg.width; ++i)
            d.x.values()[s * cfg.height * cfg.width + i] = (c ? 1.0 : -1.0) + cfg.noise * gauss(rng);
        d.y.push_back(c);
    }
    return d;
}

struct Split {
    Dataset train, val;
};

inline Split make_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed ^ 0x5eedda7aULL);
    switch (cfg.kind) {
    case DatasetKind::Separable: {
        Dataset tr = make_separable(cfg.train_size, cfg, rng);
        return {std::move(tr), make_separable(cfg.val_size, cfg, rng)};
    }
    case DatasetKind::TextureOnly: {
        Dataset tr = make_texture_tone(cfg.train_size, cfg, rng, true);
        return {std::move(tr), make_texture_tone(cfg.val_size, cfg, rng, true)};
    }
    case DatasetKind::TextureTone: {
        Dataset tr = make_texture_tone(cfg.train_size, cfg, rng);
        return {std::move(tr), make_texture_tone(cfg.val_size, cfg, rng)};
    }
    }
    throw ConfigError("dataset: unhandled kind");
}

// ---------------------------------------------------------------------------
// Optimizer

/// Momentum SGD with L2 weight decay:
///   v <- mu v + (g + wd w),   w <- w + eta * (-v)
struct Sgd {
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<Tensor> velocity;

    void step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads) {
        if (params.size() != grads.size()) throw ShapeError("sgd: parameter/gradient count mismatch");
        if (velocity.empty())
            for (auto* p : params) velocity.emplace_back(p->shape());
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& w = params[i]->values();
            const auto& g = grads[i]->values();
            auto& v = velocity[i].values();
            if (g.size() != w.size()) throw ShapeError("sgd: gradient shape mismatch");
            for (std::size_t k = 0; k < w.size(); ++k) {
                v[k] = momentum * v[k] + (g[k] + weight_decay * w[k]);
                w[k] += lr * -v[k];
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Backbone pretraining (storing backprop on a source task)

struct PretrainConfig {
    std::size_t epochs = 4;
    std::size_t batch = 16;
    double lr = 0.05;
    std::size_t source_channels = 1; // channels present in the source data
    std::size_t samples = 480;
};

namespace detail {

inline Tensor backbone_preact(const Tensor& w, const Tensor& h) { return kernels::conv2d(h, w); }

} // namespace detail

/// Trains conv weights of the backbone plus a throwaway linear head on the
/// texture-only source task, then folds a per-channel normalization into the
/// frozen layers (scale 1/std of the pre-activation, compensated in the next
/// layer's input weights so the function is unchanged).
inline std::vector<ResidualFuncParams> pretrain_backbone(const DuDnnSpec& spec, const DatasetConfig& data,
                                                         const PretrainConfig& pc, std::uint64_t seed) {
    spec.validate();
    const std::size_t L = spec.blocks, cg = spec.backbone_channels, k = spec.kernel;
    std::mt19937_64 rng(seed ^ 0xbac4b0e5ULL);
    std::vector<Tensor> w;
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t cin = l == 0 ? spec.in_channels : cg;
        Tensor t = he_init(Shape4{cg, cin, k, k}, rng);
        if (l == 0)
            for (std::size_t o = 0; o < cg; ++o)
                for (std::size_t c = pc.source_channels; c < cin; ++c)
                    for (std::size_t i = 0; i < k * k; ++i) t.at(o, c, i / k, i % k) = 0.0;
        w.push_back(std::move(t));
    }
    Tensor head = random_normal(Shape4{3, cg, 1, 1}, rng, 0.1);
    Tensor head_b(Shape4{3, 1, 1, 1});

    DatasetConfig src = data;
    src.kind = DatasetKind::TextureOnly;
    std::mt19937_64 drng(seed ^ 0x50bce7a5ULL);
    Dataset ds = make_texture_tone(pc.samples, src, drng, true);
    if (ds.x.shape().c != spec.in_channels) {
        // source data carries the texture channel; pad or crop to the model input width
        Tensor x(Shape4{ds.size(), spec.in_channels, ds.x.shape().h, ds.x.shape().w});
        for (std::size_t n = 0; n < ds.size(); ++n)
            for (std::size_t c = 0; c < std::min(spec.in_channels, ds.x.shape().c); ++c)
                for (std::size_t i = 0; i < ds.x.shape().h; ++i)
                    for (std::size_t j = 0; j < ds.x.shape().w; ++j) x.at(n, c, i, j) = ds.x.at(n, c, i, j);
        ds.x = std::move(x);
    }

    Sgd opt{pc.lr, 0.9, 5e-4, {}};
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t ep = 0; ep < pc.epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b0 = 0; b0 < order.size(); b0 += pc.batch) {
            const std::size_t b1 = std::min(order.size(), b0 + pc.batch);
            auto [x, labels] = ds.batch(std::span<const std::size_t>(order.data() + b0, b1 - b0));
            std::vector<Tensor> hs{x};
            for (std::size_t l = 0; l < L; ++l) {
                Tensor a = detail::backbone_preact(w[l], hs.back());
                kernels::relu_inplace(a);
                hs.push_back(std::move(a));
            }
            const Tensor feat = kernels::global_avg_pool(hs.back());
            Tensor logits(Shape4{x.shape().n, 3, 1, 1});
            for (std::size_t n = 0; n < x.shape().n; ++n)
                for (std::size_t c = 0; c < 3; ++c) {
                    double acc = head_b[c];
                    for (std::size_t f = 0; f < cg; ++f) acc += head.at(c, f, 0, 0) * feat.at(n, f, 0, 0);
                    logits.at(n, c, 0, 0) = acc;
                }
            auto [loss, dl] = softmax_cross_entropy(logits, labels);
            Tensor dhead(head.shape()), dhead_b(head_b.shape()), dfeat(feat.shape());
            for (std::size_t n = 0; n < x.shape().n; ++n)
                for (std::size_t c = 0; c < 3; ++c) {
                    dhead_b[c] += dl.at(n, c, 0, 0);
                    for (std::size_t f = 0; f < cg; ++f) {
                        dhead.at(c, f, 0, 0) += dl.at(n, c, 0, 0) * feat.at(n, f, 0, 0);
                        dfeat.at(n, f, 0, 0) += dl.at(n, c, 0, 0) * head.at(c, f, 0, 0);
                    }
                }
            Tensor dh = kernels::global_avg_pool_grad(dfeat, hs.back().shape().h, hs.back().shape().w);
            std::vector<Tensor> dw(L);
            for (std::size_t l = L; l-- > 0;) {
                const Tensor da = kernels::relu_mask(dh, hs[l + 1]);
                dw[l] = kernels::conv2d_weight_grad(hs[l], da, k);
                if (l > 0) dh = kernels::conv2d_input_grad(da, w[l], w[l].shape().c);
            }
            std::vector<Tensor*> params;
            std::vector<const Tensor*> grads;
            for (std::size_t l = 0; l < L; ++l) {
                params.push_back(&w[l]);
                grads.push_back(&dw[l]);
            }
            params.push_back(&head);
            grads.push_back(&dhead);
            params.push_back(&head_b);
            grads.push_back(&dhead_b);
            opt.step(params, grads);
            if (!std::isfinite(loss)) throw RunError("backbone pretraining diverged");
        }
    }
    // pre-activation statistics on the source data
    std::vector<std::vector<double>> sum(L, std::vector<double>(cg, 0.0)), sq(L, std::vector<double>(cg, 0.0));
    double count = 0;
    {
        Tensor h = ds.x;
        for (std::size_t l = 0; l < L; ++l) {
            Tensor a = detail::backbone_preact(w[l], h);
            const auto& s = a.shape();
            for (std::size_t n = 0; n < s.n; ++n)
                for (std::size_t c = 0; c < s.c; ++c)
                    for (std::size_t i = 0; i < s.h * s.w; ++i) {
                        const double v = a.at(n, c, i / s.w, i % s.w);
                        sum[l][c] += v;
                        sq[l][c] += v * v;
                    }
            if (l == 0) count = static_cast<double>(s.n * s.h * s.w);
            kernels::relu_inplace(a);
            h = std::move(a);
        }
    }
    std::vector<ResidualFuncParams> out(L);
    std::vector<double> prev_std;
    for (std::size_t l = 0; l < L; ++l) {
        std::vector<double> sd(cg);
        for (std::size_t c = 0; c < cg; ++c) {
            const double mean = sum[l][c] / count;
            const double var = std::max(0.0, sq[l][c] / count - mean * mean);
            sd[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
        }
        Tensor wl = w[l];
        if (l > 0)
            for (std::size_t o = 0; o < cg; ++o)
                for (std::size_t c = 0; c < cg; ++c)
                    for (std::size_t i = 0; i < k * k; ++i) wl.at(o, c, i / k, i % k) *= prev_std[c];
        out[l].weight = std::move(wl);
        out[l].norm_scale.resize(cg);
        out[l].norm_shift.assign(cg, 0.0);
        for (std::size_t c = 0; c < cg; ++c) out[l].norm_scale[c] = 1.0 / sd[c];
        prev_std = sd;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

struct FaultConfig {
    bool enabled = false;
    double yield = 0.999;
    bool expired = false; // every stored read has outlived retention without refresh
    std::uint64_t seed = 1;
};

struct TrainConfig {
    double lr = 0.02;
    std::size_t batch = 16;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    bool use_bfp = false;
    bfp::BfpConfig bfp;
    FaultConfig faults;

    void validate() const {
        if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
        if (batch < 1 || epochs < 1) throw ConfigError("train: batch and epochs must be >= 1");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0, 1)");
        if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
        if (use_bfp) bfp.validate();
        if (faults.enabled && !(faults.yield > 0.0 && faults.yield <= 1.0))
            throw ConfigError("train: fault yield must be in (0, 1]");
    }
    [[nodiscard]] Numerics numerics() const { return use_bfp ? Numerics::block_fp(bfp) : Numerics::exact(); }
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::uint64_t steps = 0; // optimizer steps completed
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> trajectory;
    std::uint64_t steps = 0;
    double initial_accuracy = 0.0; // before the first update
    bool diverged = false;
    std::uint64_t corrupted_values = 0;
    DuDnnModel model;

    [[nodiscard]] double final_accuracy() const { return trajectory.empty() ? 0.0 : trajectory.back().val_accuracy; }
};

inline double accuracy(const DuDnnModel& m, const Dataset& d, const Numerics& num = {}, std::size_t batch = 64) {
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t b0 = 0; b0 < d.size(); b0 += batch) {
        idx.clear();
        for (std::size_t i = b0; i < std::min(d.size(), b0 + batch); ++i) idx.push_back(i);
        auto [x, labels] = d.batch(idx);
        Tensor logits;
        try {
            logits = dudnn_forward(m, x, num).logits;
        } catch (const EncodingError&) {
            continue; // non-finite activations: count as wrong
        }
        for (std::size_t n = 0; n < labels.size(); ++n) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < m.spec.num_classes; ++c)
                if (logits.at(n, c, 0, 0) > logits.at(n, best, 0, 0)) best = c;
            if (static_cast<int>(best) == labels[n] && std::isfinite(logits.at(n, best, 0, 0))) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(d.size());
}

/// Model with fresh branch/head parameters and the given frozen backbone.
inline DuDnnModel build_model(const DuDnnSpec& spec, const std::vector<ResidualFuncParams>& backbone,
                              std::uint64_t seed) {
    DuDnnModel m = init_model(spec, seed);
    if (has_backbone(spec.variant)) {
        if (backbone.size() != spec.blocks) throw ConfigError("train: backbone depth does not match spec");
        m.backbone = backbone;
    }
    return m;
}

/// Mini-batch SGD over the branch and head. Called after every epoch with
/// the record; returning false stops training early.
template <class OnEpoch>
TrainResult train(DuDnnModel model, const TrainConfig& cfg, const Split& data, OnEpoch&& on_epoch) {
    cfg.validate();
    if (data.train.num_classes != model.spec.num_classes) throw ConfigError("train: dataset classes do not match model");
    const Numerics num = cfg.numerics();
    // frozen parameters are quantized once, learnable ones after every update
    if (num.use_bfp) {
        for (auto& g : model.backbone) num.quantize(g.weight);
        num.quantize(model.stem_proj1);
        num.quantize(model.stem_proj2);
        for (auto& p : model.injection_proj) num.quantize(p);
    }
    std::vector<Tensor> master;
    for (const auto* p : std::as_const(model).learnable()) master.push_back(*p);
    auto sync = [&] {
        auto ps = model.learnable();
        for (std::size_t i = 0; i < ps.size(); ++i) *ps[i] = num.quantized(master[i]);
    };
    sync();

    Sgd opt{cfg.lr, cfg.momentum, cfg.weight_decay, {}};
    std::mt19937_64 rng(cfg.seed);
    std::mt19937_64 fault_rng(cfg.faults.seed ^ (cfg.seed * 0x9e3779b97f4a7c15ULL));
    mem::FaultModel fm;
    fm.yield = cfg.faults.yield;
    if (num.use_bfp) fm.noise_range = cfg.bfp.max_magnitude();
    TrainResult res;
    StoredReadHook hook;
    if (cfg.faults.enabled) {
        const auto cond = cfg.faults.expired ? mem::ReadCondition::Expired : mem::ReadCondition::Fresh;
        hook = [&, cond](Tensor& t) { res.corrupted_values += mem::read_with_faults(t, fm, cond, fault_rng); };
    }

    res.initial_accuracy = accuracy(model, data.val, num);
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t ep = 1; ep <= cfg.epochs && !res.diverged; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
            const std::size_t b1 = std::min(order.size(), b0 + cfg.batch);
            auto [x, labels] = data.train.batch(std::span<const std::size_t>(order.data() + b0, b1 - b0));
            try {
                ForwardResult fr = dudnn_forward(model, x, num);
                auto [loss, dl] = softmax_cross_entropy(fr.logits, labels);
                if (!std::isfinite(loss)) throw EncodingError("non-finite loss");
                const ModelGradients g = dudnn_backward(model, fr.state, dl, num, hook);
                for (const auto* t : g.flat())
                    if (!t->all_finite()) throw EncodingError("non-finite gradient");
                opt.step([&] {
                    std::vector<Tensor*> v;
                    for (auto& t : master) v.push_back(&t);
                    return v;
                }(), g.flat());
                sync();
                loss_sum += loss;
                ++batches;
                ++res.steps;
            } catch (const EncodingError&) {
                res.diverged = true;
                break;
            }
        }
        EpochRecord rec;
        rec.epoch = ep;
        rec.steps = res.steps;
        rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : std::numeric_limits<double>::quiet_NaN();
        rec.val_accuracy = accuracy(model, data.val, num);
        res.trajectory.push_back(rec);
        if (!on_epoch(rec)) break;
    }
    res.model = std::move(model);
    return res;
}

inline TrainResult train(DuDnnModel model, const TrainConfig& cfg, const Split& data) {
    return train(std::move(model), cfg, data, [](const EpochRecord&) { return true; });
}

// ---------------------------------------------------------------------------
// Checkpoints: "DSCK" | u32 version | u32 count | per tensor:
//   u32 name_len | name bytes | u64 n,c,h,w | n*c*h*w little-endian f64

inline std::vector<std::pair<std::string, Tensor>> named_tensors(const DuDnnModel& m) {
    std::vector<std::pair<std::string, Tensor>> out;
    auto vec = [](const std::vector<double>& v) {
        return Tensor(Shape4{v.size(), 1, 1, 1}, v);
    };
    for (std::size_t l = 0; l < m.backbone.size(); ++l) {
        const auto p = "backbone." + std::to_string(l + 1);
        out.emplace_back(p + ".weight", m.backbone[l].weight);
        out.emplace_back(p + ".norm_scale", vec(m.backbone[l].norm_scale));
        out.emplace_back(p + ".norm_shift", vec(m.backbone[l].norm_shift));
    }
    for (std::size_t l = 0; l < m.branch.size(); ++l) {
        const auto p = "branch." + std::to_string(l + 1);
        out.emplace_back(p + ".f1", m.branch[l].f1.weight);
        out.emplace_back(p + ".f2", m.branch[l].f2.weight);
    }
    out.emplace_back("stem.1", m.stem_proj1);
    out.emplace_back("stem.2", m.stem_proj2);
    for (std::size_t l = 0; l < m.injection_proj.size(); ++l)
        out.emplace_back("inject." + std::to_string(l + 1), m.injection_proj[l]);
    out.emplace_back("head.weight", m.head_weight);
    out.emplace_back("head.bias", m.head_bias);
    return out;
}

inline void save_checkpoint(const DuDnnModel& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw RunError("checkpoint: cannot open '" + path + "' for writing");
    auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
    auto u64 = [&](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
    const auto tensors = named_tensors(m);
    os.write("DSCK", 4);
    u32(1);
    u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        u32(static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const auto& s = t.shape();
        for (auto d : {s.n, s.c, s.h, s.w}) u64(d);
        os.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw RunError("checkpoint: write failed for '" + path + "'");
}

inline std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw RunError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DSCK", 4) != 0) throw RunError("checkpoint: bad magic in '" + path + "'");
    auto u32 = [&] {
        std::uint32_t v = 0;
        is.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    };
    auto u64 = [&] {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    };
    if (u32() != 1) throw RunError("checkpoint: unsupported version");
    const std::uint32_t count = u32();
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(u32(), '\0');
        is.read(name.data(), static_cast<std::streamsize>(name.size()));
        Shape4 s;
        s.n = u64();
        s.c = u64();
        s.h = u64();
        s.w = u64();
        if (!is || s.size() > (1u << 28)) throw RunError("checkpoint: truncated or corrupt header");
        std::vector<double> v(s.size());
        is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
        if (!is) throw RunError("checkpoint: truncated tensor '" + name + "'");
        out.emplace_back(std::move(name), Tensor(s, std::move(v)));
    }
    return out;
}

/// Overwrites the tensors of `m` from a checkpoint; names and shapes must match.
inline void load_checkpoint(DuDnnModel& m, const std::string& path) {
    const auto stored = read_checkpoint(path);
    const auto expected = named_tensors(m);
    if (stored.size() != expected.size()) throw RunError("checkpoint: tensor count does not match model");
    for (std::size_t i = 0; i < stored.size(); ++i)
        if (stored[i].first != expected[i].first || !(stored[i].second.shape() == expected[i].second.shape()))
            throw RunError("checkpoint: tensor '" + stored[i].first + "' does not match model");
    std::size_t i = 0;
    auto vec = [&](std::vector<double>& v) { v = stored[i++].second.values(); };
    for (auto& g : m.backbone) {
        g.weight = stored[i++].second;
        vec(g.norm_scale);
        vec(g.norm_shift);
    }
    for (auto& b : m.branch) {
        b.f1.weight = stored[i++].second;
        b.f2.weight = stored[i++].second;
    }
    m.stem_proj1 = stored[i++].second;
    m.stem_proj2 = stored[i++].second;
    for (auto& p : m.injection_proj) p = stored[i++].second;
    m.head_weight = stored[i++].second;
    m.head_bias = stored[i++].second;
}

} // namespace duplexsim::train
