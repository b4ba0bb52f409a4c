// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Duplex networks: a frozen backbone whose pooled intermediate outputs are
// injected into a trainable branch of reversible blocks
//
//     y2 = x2 + F1(x1),   y1 = x1 + F2(y2)
//     x1 = y1 - F2(y2),   x2 = y2 - F1(x1)
//
// The branch backward pass recomputes block inputs from block outputs, so
// only the final branch outputs are kept between the passes. The FI, CA and
// BO baselines share the same learnable layers.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "duplexsim/bfp.hpp"
#include "duplexsim/error.hpp"
#include "duplexsim/tensor.hpp"

namespace duplexsim {

/// Quantization policy. In BFP mode every producer output goes through
/// encode/decode along the channel axis; accumulation stays exact.
struct Numerics {
    bool use_bfp = false;
    bfp::BfpConfig bfp;

    static Numerics exact() { return {}; }
    static Numerics block_fp(bfp::BfpConfig cfg = {}) { return {true, cfg}; }

    void quantize(Tensor& t) const {
        if (!use_bfp || t.empty()) return;
        const auto& s = t.shape();
        bfp::fake_quantize(t.data(), {s.n, s.c, s.h, s.w}, 1, bfp);
    }
    [[nodiscard]] Tensor quantized(Tensor t) const {
        quantize(t);
        return t;
    }
};

// ---------------------------------------------------------------------------
// Residual functions and reversible blocks

struct ResidualFuncParams {
    Tensor weight;                   // (Cout, Cin, k, k)
    std::vector<double> norm_scale;  // folded normalization; empty on branch functions
    std::vector<double> norm_shift;

    [[nodiscard]] std::size_t in_channels() const { return weight.shape().c; }
    [[nodiscard]] std::size_t out_channels() const { return weight.shape().n; }
    [[nodiscard]] std::size_t kernel() const { return weight.shape().h; }
    [[nodiscard]] bool has_norm() const { return !norm_scale.empty(); }
};

/// relu(norm(conv(x)))
inline Tensor apply_residual_func(const ResidualFuncParams& p, const Tensor& x, const Numerics& num = {}) {
    Tensor y = kernels::conv2d(x, p.weight);
    if (p.has_norm()) kernels::channel_affine_inplace(y, p.norm_scale, p.norm_shift);
    kernels::relu_inplace(y);
    num.quantize(y);
    return y;
}

/// Input gradient U^a: grad wrt x given grad g wrt F(x) and F's output f (for the ReLU mask).
inline Tensor residual_input_grad(const ResidualFuncParams& p, const Tensor& g, const Tensor& f) {
    if (p.has_norm()) throw ShapeError("residual_input_grad: normalized functions are frozen");
    return kernels::conv2d_input_grad(kernels::relu_mask(g, f), p.weight, p.in_channels());
}

/// Weight gradient U^w: activation (x) against masked output gradient.
inline Tensor residual_weight_grad(const ResidualFuncParams& p, const Tensor& x, const Tensor& g, const Tensor& f) {
    return kernels::conv2d_weight_grad(x, kernels::relu_mask(g, f), p.kernel());
}

struct ReversibleBlockParams {
    ResidualFuncParams f1;
    ResidualFuncParams f2;
};

inline void check_block_shapes(const Tensor& a, const Tensor& b, const ReversibleBlockParams& p) {
    a.require_same(b, "reversible block");
    const auto c = a.shape().c;
    if (p.f1.in_channels() != c || p.f1.out_channels() != c || p.f2.in_channels() != c || p.f2.out_channels() != c)
        throw ShapeError("reversible block: F1/F2 channels must equal the stream width " + std::to_string(c));
    if (p.f1.has_norm() || p.f2.has_norm()) throw ShapeError("reversible block: branch functions carry no normalization");
}

inline std::pair<Tensor, Tensor> forward_block(const Tensor& x1, const Tensor& x2, const ReversibleBlockParams& p,
                                               const Numerics& num = {}) {
    check_block_shapes(x1, x2, p);
    Tensor y2 = x2 + apply_residual_func(p.f1, x1, num);
    num.quantize(y2);
    Tensor y1 = x1 + apply_residual_func(p.f2, y2, num);
    num.quantize(y1);
    return {std::move(y1), std::move(y2)};
}

inline std::pair<Tensor, Tensor> invert_block(const Tensor& y1, const Tensor& y2, const ReversibleBlockParams& p,
                                              const Numerics& num = {}) {
    check_block_shapes(y1, y2, p);
    Tensor x1 = y1 - apply_residual_func(p.f2, y2, num);
    num.quantize(x1);
    Tensor x2 = y2 - apply_residual_func(p.f1, x1, num);
    num.quantize(x2);
    return {std::move(x1), std::move(x2)};
}

struct GradientBundle {
    Tensor s;  // grad wrt x1
    Tensor m;  // grad wrt x2 (= total grad wrt y2)
    Tensor q1; // grad wrt F1 weights
    Tensor q2; // grad wrt F2 weights
};

struct BlockBackward {
    GradientBundle grad;
    Tensor x1; // recomputed block inputs
    Tensor x2;
};

/// Backward through one reversible block from its outputs alone.
/// g1, g2 are the loss gradients wrt y1, y2.
inline BlockBackward backward_block(const Tensor& g1, const Tensor& g2, const Tensor& y1, const Tensor& y2,
                                    const ReversibleBlockParams& p, const Numerics& num = {}) {
    check_block_shapes(y1, y2, p);
    g1.require_same(y1, "backward_block g1");
    g2.require_same(y2, "backward_block g2");
    BlockBackward out;
    const Tensor f2 = apply_residual_func(p.f2, y2, num);
    out.x1 = num.quantized(y1 - f2);
    out.grad.m = g2 + residual_input_grad(p.f2, g1, f2);
    num.quantize(out.grad.m);
    out.grad.q2 = num.quantized(residual_weight_grad(p.f2, y2, g1, f2));
    const Tensor f1 = apply_residual_func(p.f1, out.x1, num);
    out.x2 = num.quantized(y2 - f1);
    out.grad.s = g1 + residual_input_grad(p.f1, out.grad.m, f1);
    num.quantize(out.grad.s);
    out.grad.q1 = num.quantized(residual_weight_grad(p.f1, out.x1, out.grad.m, f1));
    return out;
}

// Irreversible counterpart used by the FI baseline: same learnable layers, but
// the ReLU after each residual sum destroys invertibility.
//     y2 = relu(x2 + F1(x1)),   y1 = relu(x1 + F2(y2))

struct IrreversibleStored {
    Tensor x1, f1, y2, f2, y1;
};

inline IrreversibleStored irreversible_forward_block(const Tensor& x1, const Tensor& x2, const ReversibleBlockParams& p,
                                                     const Numerics& num = {}) {
    check_block_shapes(x1, x2, p);
    IrreversibleStored s;
    s.x1 = x1;
    s.f1 = apply_residual_func(p.f1, x1, num);
    s.y2 = x2 + s.f1;
    kernels::relu_inplace(s.y2);
    num.quantize(s.y2);
    s.f2 = apply_residual_func(p.f2, s.y2, num);
    s.y1 = x1 + s.f2;
    kernels::relu_inplace(s.y1);
    num.quantize(s.y1);
    return s;
}

inline GradientBundle irreversible_backward_block(const Tensor& g1, const Tensor& g2, const IrreversibleStored& st,
                                                  const ReversibleBlockParams& p, const Numerics& num = {}) {
    GradientBundle out;
    const Tensor ga1 = kernels::relu_mask(g1, st.y1);
    Tensor d2 = g2 + residual_input_grad(p.f2, ga1, st.f2);
    out.q2 = num.quantized(residual_weight_grad(p.f2, st.y2, ga1, st.f2));
    out.m = num.quantized(kernels::relu_mask(d2, st.y2));
    out.s = ga1 + residual_input_grad(p.f1, out.m, st.f1);
    num.quantize(out.s);
    out.q1 = num.quantized(residual_weight_grad(p.f1, st.x1, out.m, st.f1));
    return out;
}

// ---------------------------------------------------------------------------
// Network description

enum class Variant { DuDNN, FI, CA, BO };

inline std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::DuDNN: return "DuDNN";
    case Variant::FI: return "FI";
    case Variant::CA: return "CA";
    case Variant::BO: return "BO";
    }
    return "?";
}

inline Variant parse_variant(std::string_view s) {
    if (s == "DuDNN") return Variant::DuDNN;
    if (s == "FI") return Variant::FI;
    if (s == "CA") return Variant::CA;
    if (s == "BO") return Variant::BO;
    throw ConfigError("unknown variant '" + std::string(s) + "'");
}

inline bool has_backbone(Variant v) { return v != Variant::BO; }
/// One pooled connection per block (DuDNN, FI) vs a single final one (CA).
inline bool has_block_injections(Variant v) { return v == Variant::DuDNN || v == Variant::FI; }
inline bool is_reversible(Variant v) { return v != Variant::FI; }

struct DuDnnSpec {
    Variant variant = Variant::DuDNN;
    std::size_t blocks = 2;
    std::size_t in_channels = 1;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t num_classes = 2;
    std::size_t backbone_channels = 8;
    std::size_t branch_channels = 4;
    std::size_t kernel = 3;
    std::size_t pool_factor = 2; // per-axis divisor from backbone/input resolution to branch resolution

    void validate() const {
        if (blocks < 1) throw ConfigError("model: blocks must be >= 1");
        if (in_channels < 1 || height < 1 || width < 1) throw ConfigError("model: input dims must be >= 1");
        if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
        if (backbone_channels < 1 || branch_channels < 1) throw ConfigError("model: channel counts must be >= 1");
        if (kernel < 1 || kernel % 2 == 0) throw ConfigError("model: kernel must be odd");
        if (pool_factor < 1) throw ConfigError("model: pool_factor must be >= 1");
    }

    [[nodiscard]] std::size_t branch_height() const { return kernels::ceil_div(height, pool_factor); }
    [[nodiscard]] std::size_t branch_width() const { return kernels::ceil_div(width, pool_factor); }
    /// Channels feeding the branch stem projection.
    [[nodiscard]] std::size_t stem_source_channels() const {
        return variant == Variant::CA ? backbone_channels : in_channels;
    }
    /// Number of backbone-to-branch connections.
    [[nodiscard]] std::size_t connection_count() const {
        switch (variant) {
        case Variant::DuDNN:
        case Variant::FI: return blocks;
        case Variant::CA: return 1;
        case Variant::BO: return 0;
        }
        return 0;
    }
    /// Learnable parameters in each branch block (F1 + F2 weights).
    [[nodiscard]] std::size_t block_parameter_count() const {
        return 2 * branch_channels * branch_channels * kernel * kernel;
    }
    [[nodiscard]] std::size_t head_parameter_count() const { return num_classes * (2 * branch_channels + 1); }
    [[nodiscard]] std::size_t learnable_parameter_count() const {
        return blocks * block_parameter_count() + head_parameter_count();
    }

    friend bool operator==(const DuDnnSpec&, const DuDnnSpec&) = default;
};

/// Same layer shapes, different wiring: FI swaps in irreversible blocks, CA
/// feeds the branch from the backbone's final output only, BO drops the backbone.
inline DuDnnSpec build_variant(const DuDnnSpec& base, Variant v) {
    base.validate();
    DuDnnSpec s = base;
    s.variant = v;
    return s;
}

// ---------------------------------------------------------------------------
// Parameters

struct DuDnnModel {
    DuDnnSpec spec;
    std::vector<ResidualFuncParams> backbone;        // frozen, normalization folded
    std::vector<ReversibleBlockParams> branch;       // learnable
    Tensor stem_proj1, stem_proj2;                   // frozen 1x1 maps into the two branch streams
    std::vector<Tensor> injection_proj;              // frozen 1x1 maps, backbone -> branch width
    Tensor head_weight;                              // (classes, 2*Cb, 1, 1)
    Tensor head_bias;                                // (classes, 1, 1, 1)

    /// Learnable tensors in a fixed order: F1_1, F2_1, ..., F1_L, F2_L, head W, head b.
    std::vector<Tensor*> learnable() {
        std::vector<Tensor*> out;
        for (auto& b : branch) {
            out.push_back(&b.f1.weight);
            out.push_back(&b.f2.weight);
        }
        out.push_back(&head_weight);
        out.push_back(&head_bias);
        return out;
    }
    std::vector<const Tensor*> learnable() const {
        std::vector<const Tensor*> out;
        for (const auto& b : branch) {
            out.push_back(&b.f1.weight);
            out.push_back(&b.f2.weight);
        }
        out.push_back(&head_weight);
        out.push_back(&head_bias);
        return out;
    }
    [[nodiscard]] std::size_t learnable_count() const {
        std::size_t n = 0;
        for (const auto* t : learnable()) n += t->size();
        return n;
    }
};

template <class Rng>
Tensor he_init(Shape4 s, Rng& rng, double gain = 1.0) {
    const double fan_in = static_cast<double>(s.c * s.h * s.w);
    return random_normal(s, rng, gain * std::sqrt(2.0 / fan_in));
}

/// Fresh parameters: branch and head random, backbone random (to be replaced by
/// pretraining), projections random and fixed.
inline DuDnnModel init_model(const DuDnnSpec& spec, std::uint64_t seed, double branch_gain = 0.5) {
    spec.validate();
    std::mt19937_64 rng(seed);
    DuDnnModel m;
    m.spec = spec;
    const std::size_t k = spec.kernel, cb = spec.branch_channels, cg = spec.backbone_channels;
    if (has_backbone(spec.variant)) {
        for (std::size_t l = 0; l < spec.blocks; ++l) {
            ResidualFuncParams g;
            g.weight = he_init(Shape4{cg, l == 0 ? spec.in_channels : cg, k, k}, rng);
            g.norm_scale.assign(cg, 1.0);
            g.norm_shift.assign(cg, 0.0);
            m.backbone.push_back(std::move(g));
        }
    }
    for (std::size_t l = 0; l < spec.blocks; ++l) {
        ReversibleBlockParams b;
        b.f1.weight = he_init(Shape4{cb, cb, k, k}, rng, branch_gain);
        b.f2.weight = he_init(Shape4{cb, cb, k, k}, rng, branch_gain);
        m.branch.push_back(std::move(b));
    }
    const std::size_t src = spec.stem_source_channels();
    m.stem_proj1 = he_init(Shape4{cb, src, 1, 1}, rng, 0.7);
    m.stem_proj2 = he_init(Shape4{cb, src, 1, 1}, rng, 0.7);
    if (has_block_injections(spec.variant))
        for (std::size_t l = 0; l < spec.blocks; ++l) m.injection_proj.push_back(he_init(Shape4{cb, cg, 1, 1}, rng, 0.7));
    m.head_weight = random_normal(Shape4{spec.num_classes, 2 * cb, 1, 1}, rng, 0.01);
    m.head_bias = Tensor(Shape4{spec.num_classes, 1, 1, 1});
    return m;
}

/// Copies the frozen backbone (and matching projections) of `src` into `dst`.
inline void transplant_backbone(const DuDnnModel& src, DuDnnModel& dst) {
    if (!has_backbone(dst.spec.variant)) return;
    if (src.backbone.size() != dst.backbone.size()) throw ShapeError("transplant: backbone depth mismatch");
    dst.backbone = src.backbone;
}

// ---------------------------------------------------------------------------
// Network passes

/// Applied to every tensor the backward pass reads back from transient
/// storage (fault injection hook); identity when empty.
using StoredReadHook = std::function<void(Tensor&)>;

struct RetainedState {
    Variant variant = Variant::DuDNN;
    Tensor y1, y2;                          // final branch outputs
    std::vector<Tensor> injections;         // pooled backbone features (static storage)
    Tensor features;                        // classifier input, (N, 2Cb, 1, 1)
    std::vector<IrreversibleStored> stored; // FI only: per-block activations

    /// Transient activation tensors held between the passes.
    [[nodiscard]] std::size_t transient_tensor_count() const {
        std::size_t n = 3; // y1, y2, features
        if (!stored.empty()) n += 1 + 4 * stored.size(); // x1 of block 1 + (f1, y2, f2, y1) per block
        return n;
    }
    [[nodiscard]] std::size_t static_tensor_count() const { return injections.size(); }
};

struct ForwardResult {
    Tensor logits; // (N, classes, 1, 1)
    RetainedState state;
};

inline Tensor head_forward(const DuDnnModel& m, const Tensor& features) {
    const auto& fs = features.shape();
    const std::size_t classes = m.spec.num_classes;
    Tensor logits(Shape4{fs.n, classes, 1, 1});
    for (std::size_t n = 0; n < fs.n; ++n)
        for (std::size_t k = 0; k < classes; ++k) {
            double acc = m.head_bias[k];
            for (std::size_t c = 0; c < fs.c; ++c) acc += m.head_weight.at(k, c, 0, 0) * features.at(n, c, 0, 0);
            logits.at(n, k, 0, 0) = acc;
        }
    return logits;
}

inline Tensor backbone_layer(const DuDnnModel& m, std::size_t l, const Tensor& h, const Numerics& num) {
    return apply_residual_func(m.backbone[l], h, num);
}

/// Pool to branch resolution, then 1x1 projection to branch width.
inline Tensor pool_project(const Tensor& src, const Tensor& proj, std::size_t factor, const Numerics& num) {
    Tensor t = kernels::conv2d(kernels::avg_pool(src, factor), proj);
    num.quantize(t);
    return t;
}

inline void check_batch(const DuDnnModel& m, const Tensor& x) {
    const auto& s = x.shape();
    const auto& sp = m.spec;
    if (s.c != sp.in_channels || s.h != sp.height || s.w != sp.width || s.n == 0)
        throw ShapeError("forward: batch " + s.str() + " does not match model input (" + std::to_string(sp.in_channels) +
                         "," + std::to_string(sp.height) + "," + std::to_string(sp.width) + ")");
    if (m.branch.size() != sp.blocks) throw ShapeError("forward: branch depth does not match spec");
    if (has_backbone(sp.variant) && m.backbone.size() != sp.blocks) throw ShapeError("forward: backbone depth does not match spec");
    if (has_block_injections(sp.variant) && m.injection_proj.size() != sp.blocks)
        throw ShapeError("forward: injection projections do not match spec");
}

inline ForwardResult dudnn_forward(const DuDnnModel& m, const Tensor& batch, const Numerics& num = {}) {
    check_batch(m, batch);
    const auto& sp = m.spec;
    ForwardResult r;
    r.state.variant = sp.variant;
    const Tensor input = num.quantized(batch);

    Tensor x1, x2;
    Tensor h = input;
    if (sp.variant == Variant::CA) {
        for (std::size_t l = 0; l < sp.blocks; ++l) h = backbone_layer(m, l, h, num);
        x1 = pool_project(h, m.stem_proj1, sp.pool_factor, num);
        x2 = pool_project(h, m.stem_proj2, sp.pool_factor, num);
    } else {
        x1 = pool_project(input, m.stem_proj1, sp.pool_factor, num);
        x2 = pool_project(input, m.stem_proj2, sp.pool_factor, num);
    }

    for (std::size_t l = 0; l < sp.blocks; ++l) {
        if (has_block_injections(sp.variant)) {
            h = backbone_layer(m, l, h, num);
            Tensor u = pool_project(h, m.injection_proj[l], sp.pool_factor, num);
            x2 += u;
            num.quantize(x2);
            r.state.injections.push_back(std::move(u));
        }
        if (sp.variant == Variant::FI) {
            IrreversibleStored st = irreversible_forward_block(x1, x2, m.branch[l], num);
            x1 = st.y1;
            x2 = st.y2;
            r.state.stored.push_back(std::move(st));
        } else {
            auto [y1, y2] = forward_block(x1, x2, m.branch[l], num);
            x1 = std::move(y1);
            x2 = std::move(y2);
        }
    }
    r.state.features = num.quantized(kernels::global_avg_pool(kernels::concat_channels(x1, x2)));
    r.state.y1 = std::move(x1);
    r.state.y2 = std::move(x2);
    r.logits = head_forward(m, r.state.features);
    return r;
}

struct ModelGradients {
    std::vector<Tensor> f1, f2; // per block
    Tensor head_weight;
    Tensor head_bias;

    /// Same order as DuDnnModel::learnable().
    std::vector<const Tensor*> flat() const {
        std::vector<const Tensor*> out;
        for (std::size_t l = 0; l < f1.size(); ++l) {
            out.push_back(&f1[l]);
            out.push_back(&f2[l]);
        }
        out.push_back(&head_weight);
        out.push_back(&head_bias);
        return out;
    }
};

/// Mean softmax cross-entropy over the batch; returns (loss, dlogits).
inline std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    const auto& s = logits.shape();
    if (labels.size() != s.n) throw ShapeError("loss: label count does not match batch");
    Tensor grad(s);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(s.n);
    for (std::size_t n = 0; n < s.n; ++n) {
        double mx = logits.at(n, 0, 0, 0);
        for (std::size_t k = 1; k < s.c; ++k) mx = std::max(mx, logits.at(n, k, 0, 0));
        double z = 0.0;
        for (std::size_t k = 0; k < s.c; ++k) z += std::exp(logits.at(n, k, 0, 0) - mx);
        const auto y = static_cast<std::size_t>(labels[n]);
        if (y >= s.c) throw ShapeError("loss: label out of range");
        loss -= (logits.at(n, y, 0, 0) - mx - std::log(z)) * inv_n;
        for (std::size_t k = 0; k < s.c; ++k) {
            const double p = std::exp(logits.at(n, k, 0, 0) - mx) / z;
            grad.at(n, k, 0, 0) = (p - (k == y ? 1.0 : 0.0)) * inv_n;
        }
    }
    return {loss, std::move(grad)};
}

/// Branch-only backward pass. The backbone gets no gradients.
inline ModelGradients dudnn_backward(const DuDnnModel& m, const RetainedState& state, const Tensor& loss_grad,
                                     const Numerics& num = {}, const StoredReadHook& on_read = {}) {
    const auto& sp = m.spec;
    if (state.variant != sp.variant) throw ShapeError("backward: retained state comes from a different variant");
    if (state.y1.empty() || state.features.empty()) throw ShapeError("backward: empty retained state");
    if (has_block_injections(sp.variant) && state.injections.size() != sp.blocks)
        throw ShapeError("backward: retained injections do not match spec");
    if (sp.variant == Variant::FI && state.stored.size() != sp.blocks)
        throw ShapeError("backward: FI state does not hold every block");
    const auto& ls = loss_grad.shape();
    const auto& fs = state.features.shape();
    if (ls.n != fs.n || ls.c != sp.num_classes) throw ShapeError("backward: loss gradient shape mismatch");

    ModelGradients grads;
    grads.f1.resize(sp.blocks);
    grads.f2.resize(sp.blocks);
    grads.head_weight = Tensor(m.head_weight.shape());
    grads.head_bias = Tensor(m.head_bias.shape());

    // classifier head
    Tensor feat = state.features;
    if (on_read) on_read(feat);
    Tensor dfeat(fs);
    for (std::size_t n = 0; n < fs.n; ++n)
        for (std::size_t k = 0; k < sp.num_classes; ++k) {
            const double g = loss_grad.at(n, k, 0, 0);
            grads.head_bias[k] += g;
            for (std::size_t c = 0; c < fs.c; ++c) {
                grads.head_weight.at(k, c, 0, 0) += g * feat.at(n, c, 0, 0);
                dfeat.at(n, c, 0, 0) += g * m.head_weight.at(k, c, 0, 0);
            }
        }
    num.quantize(grads.head_weight);
    num.quantize(grads.head_bias);
    const auto& ys = state.y1.shape();
    Tensor dy = num.quantized(kernels::global_avg_pool_grad(dfeat, ys.h, ys.w));
    auto [g1, g2] = kernels::split_channels(dy, ys.c);

    if (sp.variant == Variant::FI) {
        for (std::size_t i = sp.blocks; i-- > 0;) {
            IrreversibleStored st = state.stored[i];
            if (on_read) {
                on_read(st.x1);
                on_read(st.f1);
                on_read(st.y2);
                on_read(st.f2);
                on_read(st.y1);
            }
            GradientBundle gb = irreversible_backward_block(g1, g2, st, m.branch[i], num);
            grads.f1[i] = std::move(gb.q1);
            grads.f2[i] = std::move(gb.q2);
            g1 = std::move(gb.s);
            g2 = std::move(gb.m);
        }
        return grads;
    }

    Tensor y1 = state.y1, y2 = state.y2;
    if (on_read) {
        on_read(y1);
        on_read(y2);
    }
    for (std::size_t i = sp.blocks; i-- > 0;) {
        BlockBackward bb = backward_block(g1, g2, y1, y2, m.branch[i], num);
        grads.f1[i] = std::move(bb.grad.q1);
        grads.f2[i] = std::move(bb.grad.q2);
        if (i == 0) break;
        g1 = std::move(bb.grad.s);
        g2 = std::move(bb.grad.m);
        y1 = std::move(bb.x1);
        y2 = std::move(bb.x2);
        if (has_block_injections(sp.variant)) {
            y2 -= state.injections[i];
            num.quantize(y2);
        }
    }
    return grads;
}

} // namespace duplexsim
