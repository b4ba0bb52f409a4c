// Copyright 2026 The duplexsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense NCHW tensors in double precision and the handful of kernels the
// duplex engine needs: same-padded stride-1 convolution with its two
// gradients, ReLU, average pooling, global average pooling.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "duplexsim/error.hpp"

namespace duplexsim {

struct Shape4 {
    std::size_t n = 0, c = 0, h = 0, w = 0;

    [[nodiscard]] std::size_t size() const { return n * c * h * w; }
    [[nodiscard]] std::string str() const {
        std::ostringstream os;
        os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
        return os.str();
    }
    friend bool operator==(const Shape4&, const Shape4&) = default;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape4 s, double fill = 0.0) : shape_(s), data_(s.size(), fill) {}
    Tensor(Shape4 s, std::vector<double> data) : shape_(s), data_(std::move(data)) {
        if (data_.size() != shape_.size()) throw ShapeError("tensor: data size does not match shape " + s.str());
    }

    [[nodiscard]] const Shape4& shape() const { return shape_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }
    [[nodiscard]] std::span<double> data() { return data_; }
    [[nodiscard]] std::span<const double> data() const { return data_; }
    [[nodiscard]] std::vector<double>& values() { return data_; }
    [[nodiscard]] const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }
    [[nodiscard]] const double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }

    Tensor& operator+=(const Tensor& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }
    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }

    void require_same(const Tensor& o, const char* what) const {
        if (!(shape_ == o.shape_))
            throw ShapeError(std::string("tensor ") + what + ": shape mismatch " + shape_.str() + " vs " + o.shape_.str());
    }

    [[nodiscard]] bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape4 shape_;
    std::vector<double> data_;
};

inline double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, std::fabs(v));
    return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    a.require_same(b, "diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

/// max |a-b| / max(|b|, floor) over all elements; relative error of a vs reference b.
inline double max_rel_diff(const Tensor& a, const Tensor& b, double floor = 1e-300) {
    const double scale = std::max(max_abs(b), floor);
    return max_abs_diff(a, b) / scale;
}

template <class Rng>
Tensor random_normal(Shape4 s, Rng& rng, double stddev = 1.0) {
    std::normal_distribution<double> d(0.0, stddev);
    Tensor t(s);
    for (double& v : t.values()) v = d(rng);
    return t;
}

// ---------------------------------------------------------------------------
// Convolution (stride 1, zero padding k/2, odd k). Weight layout (Cout, Cin, k, k)
// stored as Shape4{Cout, Cin, k, k}.

namespace kernels {

inline void check_conv(const Shape4& x, const Shape4& w) {
    if (w.h != w.w || w.h % 2 == 0) throw ShapeError("conv: kernel must be square and odd, got " + w.str());
    if (x.c != w.c) throw ShapeError("conv: input channels " + std::to_string(x.c) + " vs weight " + w.str());
}

/// y = conv(x, w)
inline Tensor conv2d(const Tensor& x, const Tensor& w) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    check_conv(xs, ws);
    const std::size_t k = ws.h;
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(xs.h);
    const auto W = static_cast<std::ptrdiff_t>(xs.w);
    Tensor y(Shape4{xs.n, ws.n, xs.h, xs.w});
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t co = 0; co < ws.n; ++co)
            for (std::size_t ci = 0; ci < xs.c; ++ci)
                for (std::size_t kh = 0; kh < k; ++kh)
                    for (std::size_t kw = 0; kw < k; ++kw) {
                        const double wv = w.at(co, ci, kh, kw);
                        if (wv == 0.0) continue;
                        const std::ptrdiff_t dh = static_cast<std::ptrdiff_t>(kh) - pad;
                        const std::ptrdiff_t dw = static_cast<std::ptrdiff_t>(kw) - pad;
                        const std::ptrdiff_t h0 = std::max<std::ptrdiff_t>(0, -dh), h1 = std::min(H, H - dh);
                        const std::ptrdiff_t w0 = std::max<std::ptrdiff_t>(0, -dw), w1 = std::min(W, W - dw);
                        for (std::ptrdiff_t h = h0; h < h1; ++h) {
                            double* yr = &y.at(n, co, static_cast<std::size_t>(h), 0);
                            const double* xr = &x.at(n, ci, static_cast<std::size_t>(h + dh), 0);
                            for (std::ptrdiff_t ww = w0; ww < w1; ++ww) yr[ww] += wv * xr[ww + dw];
                        }
                    }
    return y;
}

/// Input gradient: dx = conv_transpose(dy, w).
inline Tensor conv2d_input_grad(const Tensor& dy, const Tensor& w, std::size_t in_channels) {
    const auto& ys = dy.shape();
    const auto& ws = w.shape();
    if (ws.n != ys.c || ws.c != in_channels) throw ShapeError("conv input grad: shape mismatch " + ys.str() + " vs " + ws.str());
    const std::size_t k = ws.h;
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(ys.h);
    const auto W = static_cast<std::ptrdiff_t>(ys.w);
    Tensor dx(Shape4{ys.n, in_channels, ys.h, ys.w});
    for (std::size_t n = 0; n < ys.n; ++n)
        for (std::size_t ci = 0; ci < in_channels; ++ci)
            for (std::size_t co = 0; co < ys.c; ++co)
                for (std::size_t kh = 0; kh < k; ++kh)
                    for (std::size_t kw = 0; kw < k; ++kw) {
                        const double wv = w.at(co, ci, kh, kw);
                        if (wv == 0.0) continue;
                        const std::ptrdiff_t dh = static_cast<std::ptrdiff_t>(kh) - pad;
                        const std::ptrdiff_t dw = static_cast<std::ptrdiff_t>(kw) - pad;
                        // y[h][w] += wv * x[h+dh][w+dw]  =>  dx[h'][w'] += wv * dy[h'-dh][w'-dw]
                        const std::ptrdiff_t h0 = std::max<std::ptrdiff_t>(0, dh), h1 = std::min(H, H + dh);
                        const std::ptrdiff_t w0 = std::max<std::ptrdiff_t>(0, dw), w1 = std::min(W, W + dw);
                        for (std::ptrdiff_t h = h0; h < h1; ++h) {
                            double* xr = &dx.at(n, ci, static_cast<std::size_t>(h), 0);
                            const double* yr = &dy.at(n, co, static_cast<std::size_t>(h - dh), 0);
                            for (std::ptrdiff_t ww = w0; ww < w1; ++ww) xr[ww] += wv * yr[ww - dw];
                        }
                    }
    return dx;
}

/// Weight gradient: dw[co][ci][kh][kw] = sum dy[n][co][h][w] * x[n][ci][h+dh][w+dw].
inline Tensor conv2d_weight_grad(const Tensor& x, const Tensor& dy, std::size_t k) {
    const auto& xs = x.shape();
    const auto& ys = dy.shape();
    if (xs.n != ys.n || xs.h != ys.h || xs.w != ys.w) throw ShapeError("conv weight grad: shape mismatch " + xs.str() + " vs " + ys.str());
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(xs.h);
    const auto W = static_cast<std::ptrdiff_t>(xs.w);
    Tensor dw(Shape4{ys.c, xs.c, k, k});
    for (std::size_t co = 0; co < ys.c; ++co)
        for (std::size_t ci = 0; ci < xs.c; ++ci)
            for (std::size_t kh = 0; kh < k; ++kh)
                for (std::size_t kw = 0; kw < k; ++kw) {
                    const std::ptrdiff_t dh = static_cast<std::ptrdiff_t>(kh) - pad;
                    const std::ptrdiff_t dwi = static_cast<std::ptrdiff_t>(kw) - pad;
                    const std::ptrdiff_t h0 = std::max<std::ptrdiff_t>(0, -dh), h1 = std::min(H, H - dh);
                    const std::ptrdiff_t w0 = std::max<std::ptrdiff_t>(0, -dwi), w1 = std::min(W, W - dwi);
                    double acc = 0.0;
                    for (std::size_t n = 0; n < xs.n; ++n)
                        for (std::ptrdiff_t h = h0; h < h1; ++h) {
                            const double* yr = &dy.at(n, co, static_cast<std::size_t>(h), 0);
                            const double* xr = &x.at(n, ci, static_cast<std::size_t>(h + dh), 0);
                            for (std::ptrdiff_t ww = w0; ww < w1; ++ww) acc += yr[ww] * xr[ww + dwi];
                        }
                    dw.at(co, ci, kh, kw) = acc;
                }
    return dw;
}

inline void relu_inplace(Tensor& t) {
    for (double& v : t.values()) v = v > 0.0 ? v : 0.0;
}

/// g masked by (ref > 0); ref is a ReLU output or pre-activation.
inline Tensor relu_mask(const Tensor& g, const Tensor& ref) {
    g.require_same(ref, "relu_mask");
    Tensor out = g;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!(ref[i] > 0.0)) out[i] = 0.0;
    return out;
}

/// Per-channel affine y = scale[c] * x + shift[c].
inline void channel_affine_inplace(Tensor& t, std::span<const double> scale, std::span<const double> shift) {
    const auto& s = t.shape();
    if (scale.size() != s.c || shift.size() != s.c) throw ShapeError("affine: channel count mismatch");
    const std::size_t hw = s.h * s.w;
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            double* p = &t.at(n, c, 0, 0);
            for (std::size_t i = 0; i < hw; ++i) p[i] = scale[c] * p[i] + shift[c];
        }
}

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

/// Average pooling with window = stride = f; spatial dims are zero-padded up
/// to a multiple of f, and every window divides by f*f.
inline Tensor avg_pool(const Tensor& x, std::size_t f) {
    if (f == 0) throw ShapeError("pool: factor must be >= 1");
    const auto& s = x.shape();
    if (f == 1) return x;
    Tensor y(Shape4{s.n, s.c, ceil_div(s.h, f), ceil_div(s.w, f)});
    const double inv = 1.0 / static_cast<double>(f * f);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t h = 0; h < s.h; ++h)
                for (std::size_t w = 0; w < s.w; ++w) y.at(n, c, h / f, w / f) += inv * x.at(n, c, h, w);
    return y;
}

/// (N,C,H,W) -> (N,C,1,1)
inline Tensor global_avg_pool(const Tensor& x) {
    const auto& s = x.shape();
    Tensor y(Shape4{s.n, s.c, 1, 1});
    const double inv = 1.0 / static_cast<double>(s.h * s.w);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const double* p = &x.at(n, c, 0, 0);
            const double acc = std::accumulate(p, p + s.h * s.w, 0.0);
            y.at(n, c, 0, 0) = acc * inv;
        }
    return y;
}

/// Gradient of global_avg_pool, broadcast back over (h, w).
inline Tensor global_avg_pool_grad(const Tensor& dy, std::size_t h, std::size_t w) {
    const auto& s = dy.shape();
    Tensor dx(Shape4{s.n, s.c, h, w});
    const double inv = 1.0 / static_cast<double>(h * w);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const double g = dy.at(n, c, 0, 0) * inv;
            double* p = &dx.at(n, c, 0, 0);
            for (std::size_t i = 0; i < h * w; ++i) p[i] = g;
        }
    return dx;
}

/// Concatenates along channels.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) throw ShapeError("concat: shape mismatch");
    Tensor out(Shape4{sa.n, sa.c + sb.c, sa.h, sa.w});
    const std::size_t hw = sa.h * sa.w;
    for (std::size_t n = 0; n < sa.n; ++n) {
        std::copy_n(&a.at(n, 0, 0, 0), sa.c * hw, &out.at(n, 0, 0, 0));
        std::copy_n(&b.at(n, 0, 0, 0), sb.c * hw, &out.at(n, sa.c, 0, 0));
    }
    return out;
}

inline std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t first) {
    const auto& s = t.shape();
    if (first > s.c) throw ShapeError("split: channel index out of range");
    Tensor a(Shape4{s.n, first, s.h, s.w});
    Tensor b(Shape4{s.n, s.c - first, s.h, s.w});
    const std::size_t hw = s.h * s.w;
    for (std::size_t n = 0; n < s.n; ++n) {
        std::copy_n(&t.at(n, 0, 0, 0), first * hw, &a.at(n, 0, 0, 0));
        std::copy_n(&t.at(n, first, 0, 0), (s.c - first) * hw, &b.at(n, 0, 0, 0));
    }
    return {std::move(a), std::move(b)};
}

} // namespace kernels
} // namespace duplexsim
