#pragma once

// Differentiable operations. Sequence activations are laid out [batch x channels x length],
// dense activations [batch x features].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "deforma/common/error.hpp"
#include "deforma/nn/graph.hpp"
#include "deforma/nn/tensor.hpp"

namespace deforma::nn {

enum class Padding { Same, Valid };

struct ConvGeometry {
    std::size_t out_length = 0;
    std::size_t pad_left = 0;
};

// Same: output length ceil(L / stride), zeros split evenly with the odd one on the right.
// Valid: no padding, output length floor((L - K) / stride) + 1.
inline ConvGeometry conv_geometry(std::size_t length, std::size_t kernel, std::size_t stride, Padding padding)
{
    if (stride < 1) throw ShapeError("conv: stride must be >= 1");
    if (kernel < 1) throw ShapeError("conv: kernel must be >= 1");
    if (padding == Padding::Valid) {
        if (kernel > length) throw ShapeError("conv: kernel longer than the input");
        return {(length - kernel) / stride + 1, 0};
    }
    const std::size_t out = (length + stride - 1) / stride;
    const std::size_t needed = (out - 1) * stride + kernel;
    const std::size_t total = needed > length ? needed - length : 0;
    return {out, total / 2};
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMatrix = Eigen::MatrixXd;

inline Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

// cols(c*K + k, b*Lout + t) = x[b, c, t*stride + k - pad]
inline ColMatrix im2col(const Tensor& x, std::size_t kernel, std::size_t stride, const ConvGeometry& g)
{
    const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), Lo = g.out_length;
    ColMatrix cols = ColMatrix::Zero(ix(C * kernel), ix(B * Lo));
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < Lo; ++t) {
            double* col = cols.data() + (b * Lo + t) * C * kernel;
            const auto start = static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(g.pad_left);
            for (std::size_t c = 0; c < C; ++c) {
                const double* row = x.raw() + (b * C + c) * L;
                for (std::size_t k = 0; k < kernel; ++k) {
                    const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(k);
                    if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(L)) col[c * kernel + k] = row[pos];
                }
            }
        }
    return cols;
}

inline void col2im_add(const ColMatrix& cols, Tensor& gx, std::size_t kernel, std::size_t stride, const ConvGeometry& g)
{
    const std::size_t B = gx.dim(0), C = gx.dim(1), L = gx.dim(2), Lo = g.out_length;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < Lo; ++t) {
            const double* col = cols.data() + (b * Lo + t) * C * kernel;
            const auto start = static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(g.pad_left);
            for (std::size_t c = 0; c < C; ++c) {
                double* row = gx.raw() + (b * C + c) * L;
                for (std::size_t k = 0; k < kernel; ++k) {
                    const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(k);
                    if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(L)) row[pos] += col[c * kernel + k];
                }
            }
        }
}

inline std::uint64_t fnv(std::uint64_t h, std::uint64_t v) { return (h ^ v) * 0x100000001b3ULL; }

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline void require_rank(const Tensor& t, std::size_t rank, const char* op)
{
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(t.shape()));
}

} // namespace detail

// Cross-correlation: y[b, f, t] = sum_{c,k} w[f, c, k] * x[b, c, t*stride + k - pad] (+ bias[f]).
// With kernel [1, -1] and Valid padding, [3, 5, 9] maps to [-2, -4].
inline Var conv1d(Var x, Var w, std::optional<Var> bias, std::size_t stride, Padding padding)
{
    using namespace detail;
    Graph& g = *x.graph;
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (xv.rank() != 3 || wv.rank() != 3 || wv.dim(1) != xv.dim(1))
        throw ShapeError("conv1d: input " + shape_string(xv.shape()) + " incompatible with weights " +
                         shape_string(wv.shape()));
    if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != wv.dim(0)))
        throw ShapeError("conv1d: bias must have one entry per filter");
    const std::size_t B = xv.dim(0), F = wv.dim(0), C = wv.dim(1), K = wv.dim(2);
    const ConvGeometry geo = conv_geometry(xv.dim(2), K, stride, padding);
    const std::size_t Lo = geo.out_length;

    const ColMatrix cols = im2col(xv, K, stride, geo);
    Eigen::Map<const RowMatrix> W(wv.raw(), ix(F), ix(C * K));
    const ColMatrix Y = W * cols;

    Tensor out({B, F, Lo});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f) {
            const double bf = bias ? bias->value()[f] : 0.0;
            double* dst = out.raw() + (b * F + f) * Lo;
            for (std::size_t t = 0; t < Lo; ++t) dst[t] = Y(ix(f), ix(b * Lo + t)) + bf;
        }

    std::vector<Var> parents{x, w};
    if (bias) parents.push_back(*bias);
    return g.record(std::move(out), parents, [=](Graph& gr, Var self) {
        const Tensor& go = gr.grad(self);
        ColMatrix dY(ix(F), ix(B * Lo));
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t f = 0; f < F; ++f) {
                const double* src = go.raw() + (b * F + f) * Lo;
                for (std::size_t t = 0; t < Lo; ++t) dY(ix(f), ix(b * Lo + t)) = src[t];
            }
        if (bias && gr.requires_grad(*bias)) {
            Tensor& gb = gr.grad(*bias);
            for (std::size_t f = 0; f < F; ++f) gb[f] += dY.row(ix(f)).sum();
        }
        const bool need_w = gr.requires_grad(w), need_x = gr.requires_grad(x);
        if (need_w) {
            const ColMatrix cols_again = im2col(x.value(), K, stride, geo);
            Eigen::Map<RowMatrix> GW(gr.grad(w).raw(), ix(F), ix(C * K));
            GW.noalias() += dY * cols_again.transpose();
        }
        if (need_x) {
            Eigen::Map<const RowMatrix> Wm(w.value().raw(), ix(F), ix(C * K));
            const ColMatrix dcols = Wm.transpose() * dY;
            col2im_add(dcols, gr.grad(x), K, stride, geo);
        }
    });
}

// y = x W^T + b with x [B x D], W [O x D], b [O].
inline Var dense(Var x, Var w, std::optional<Var> bias)
{
    using namespace detail;
    Graph& g = *x.graph;
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (xv.rank() != 2 || wv.rank() != 2 || wv.dim(1) != xv.dim(1))
        throw ShapeError("dense: input " + shape_string(xv.shape()) + " incompatible with weights " +
                         shape_string(wv.shape()));
    const std::size_t B = xv.dim(0), D = xv.dim(1), O = wv.dim(0);
    if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != O))
        throw ShapeError("dense: bias must have one entry per output");

    Tensor out({B, O});
    Eigen::Map<const RowMatrix> X(xv.raw(), ix(B), ix(D));
    Eigen::Map<const RowMatrix> W(wv.raw(), ix(O), ix(D));
    Eigen::Map<RowMatrix> Y(out.raw(), ix(B), ix(O));
    Y.noalias() = X * W.transpose();
    if (bias)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < O; ++o) out.at(b, o) += bias->value()[o];

    std::vector<Var> parents{x, w};
    if (bias) parents.push_back(*bias);
    return g.record(std::move(out), parents, [=](Graph& gr, Var self) {
        Eigen::Map<const RowMatrix> dY(gr.grad(self).raw(), ix(B), ix(O));
        if (gr.requires_grad(w)) {
            Eigen::Map<const RowMatrix> Xv(x.value().raw(), ix(B), ix(D));
            Eigen::Map<RowMatrix> GW(gr.grad(w).raw(), ix(O), ix(D));
            GW.noalias() += dY.transpose() * Xv;
        }
        if (bias && gr.requires_grad(*bias)) {
            Tensor& gb = gr.grad(*bias);
            for (std::size_t o = 0; o < O; ++o) gb[o] += dY.col(ix(o)).sum();
        }
        if (gr.requires_grad(x)) {
            Eigen::Map<const RowMatrix> Wv(w.value().raw(), ix(O), ix(D));
            Eigen::Map<RowMatrix> GX(gr.grad(x).raw(), ix(B), ix(D));
            GX.noalias() += dY * Wv;
        }
    });
}

inline Var relu(Var x)
{
    Graph& g = *x.graph;
    Tensor out = x.value();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool on = out[i] > 0.0;
        if (!on) out[i] = 0.0;
        if (g.tracking_patterns()) h = detail::fnv(h, on ? i * 2 + 1 : i * 2);
    }
    if (g.tracking_patterns()) g.note_pattern(h);
    return g.record(std::move(out), {x}, [x](Graph& gr, Var self) {
        const Tensor& go = gr.grad(self);
        const Tensor& xv = x.value();
        Tensor& gx = gr.grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (xv[i] > 0.0) gx[i] += go[i];
    });
}

inline Var add(Var a, Var b)
{
    if (a.shape() != b.shape())
        throw ShapeError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Tensor out = a.value();
    out += b.value();
    return a.graph->record(std::move(out), {a, b}, [a, b](Graph& gr, Var self) {
        const Tensor& go = gr.grad(self);
        if (gr.requires_grad(a)) gr.grad(a) += go;
        if (gr.requires_grad(b)) gr.grad(b) += go;
    });
}

inline Var scale(Var x, double c)
{
    Tensor out = x.value();
    for (double& v : out.data()) v *= c;
    return x.graph->record(std::move(out), {x}, [x, c](Graph& gr, Var self) {
        const Tensor& go = gr.grad(self);
        Tensor& gx = gr.grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c * go[i];
    });
}

inline Var sum(Var x)
{
    double acc = 0.0;
    for (double v : x.value().data()) acc += v;
    return x.graph->record(Tensor::scalar(acc), {x}, [x](Graph& gr, Var self) {
        const double go = gr.grad(self)[0];
        for (double& v : gr.grad(x).data()) v += go;
    });
}

// Normalizes across channels at every (batch, time) position, then applies per-channel gain/offset.
inline Var layer_norm(Var x, Var gain, Var offset, double eps = 1e-5)
{
    const Tensor& xv = x.value();
    detail::require_rank(xv, 3, "layer_norm");
    const std::size_t B = xv.dim(0), C = xv.dim(1), L = xv.dim(2);
    if (gain.value().size() != C || offset.value().size() != C)
        throw ShapeError("layer_norm: gain/offset must have one entry per channel");

    Tensor xhat({B, C, L});
    Tensor inv_std({B, L});
    Tensor out({B, C, L});
    std::vector<double> mean(L), var(L);
    for (std::size_t b = 0; b < B; ++b) {
        std::fill(mean.begin(), mean.end(), 0.0);
        std::fill(var.begin(), var.end(), 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            const double* row = xv.raw() + (b * C + c) * L;
            for (std::size_t t = 0; t < L; ++t) mean[t] += row[t];
        }
        for (double& m : mean) m /= static_cast<double>(C);
        for (std::size_t c = 0; c < C; ++c) {
            const double* row = xv.raw() + (b * C + c) * L;
            for (std::size_t t = 0; t < L; ++t) var[t] += (row[t] - mean[t]) * (row[t] - mean[t]);
        }
        for (std::size_t t = 0; t < L; ++t) inv_std.at(b, t) = 1.0 / std::sqrt(var[t] / static_cast<double>(C) + eps);
        for (std::size_t c = 0; c < C; ++c) {
            const double* row = xv.raw() + (b * C + c) * L;
            double* xh = xhat.raw() + (b * C + c) * L;
            double* o = out.raw() + (b * C + c) * L;
            const double gc = gain.value()[c], oc = offset.value()[c];
            for (std::size_t t = 0; t < L; ++t) {
                xh[t] = (row[t] - mean[t]) * inv_std.at(b, t);
                o[t] = gc * xh[t] + oc;
            }
        }
    }

    return x.graph->record(std::move(out), {x, gain, offset},
                           [x, gain, offset, xhat = std::move(xhat), inv_std = std::move(inv_std), B, C, L](Graph& gr, Var self) {
        const Tensor& go = gr.grad(self);
        if (gr.requires_grad(gain) || gr.requires_grad(offset)) {
            Tensor& gg = gr.grad(gain);
            Tensor& gof = gr.grad(offset);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    const double* d = go.raw() + (b * C + c) * L;
                    const double* xh = xhat.raw() + (b * C + c) * L;
                    for (std::size_t t = 0; t < L; ++t) {
                        gg[c] += d[t] * xh[t];
                        gof[c] += d[t];
                    }
                }
        }
        if (!gr.requires_grad(x)) return;
        Tensor& gx = gr.grad(x);
        std::vector<double> m1(L), m2(L);
        for (std::size_t b = 0; b < B; ++b) {
            std::fill(m1.begin(), m1.end(), 0.0);
            std::fill(m2.begin(), m2.end(), 0.0);
            for (std::size_t c = 0; c < C; ++c) {
                const double gc = gain.value()[c];
                const double* d = go.raw() + (b * C + c) * L;
                const double* xh = xhat.raw() + (b * C + c) * L;
                for (std::size_t t = 0; t < L; ++t) {
                    m1[t] += gc * d[t];
                    m2[t] += gc * d[t] * xh[t];
                }
            }
            for (std::size_t t = 0; t < L; ++t) {
                m1[t] /= static_cast<double>(C);
                m2[t] /= static_cast<double>(C);
            }
            for (std::size_t c = 0; c < C; ++c) {
                const double gc = gain.value()[c];
                const double* d = go.raw() + (b * C + c) * L;
                const double* xh = xhat.raw() + (b * C + c) * L;
                double* dx = gx.raw() + (b * C + c) * L;
                for (std::size_t t = 0; t < L; ++t) dx[t] += inv_std.at(b, t) * (gc * d[t] - m1[t] - xh[t] * m2[t]);
            }
        }
    });
}

// Zeroes whole channels with probability `rate` and rescales survivors by 1 / (1 - rate) when the
// graph is in training mode; identity otherwise. Rank-2 inputs [B x C] drop single units.
inline Var spatial_dropout(Var x, double rate)
{
    if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout: rate must lie in [0, 1)");
    Graph& g = *x.graph;
    if (!g.training() || rate == 0.0) return x;
    const Tensor& xv = x.value();
    if (xv.rank() != 2 && xv.rank() != 3) throw ShapeError("dropout: expected rank 2 or 3");
    const std::size_t units = xv.dim(0) * xv.dim(1);
    const std::size_t span = xv.rank() == 3 ? xv.dim(2) : 1;
    std::vector<double> mask(units);
    for (auto& m : mask) m = detail::uniform01(g.rng()) < rate ? 0.0 : 1.0 / (1.0 - rate);
    Tensor out = xv;
    for (std::size_t u = 0; u < units; ++u)
        for (std::size_t t = 0; t < span; ++t) out[u * span + t] *= mask[u];
    return g.record(std::move(out), {x}, [x, mask = std::move(mask), span](Graph& gr, Var self) {
        const Tensor& go = gr.grad(self);
        Tensor& gx = gr.grad(x);
        for (std::size_t u = 0; u < mask.size(); ++u)
            for (std::size_t t = 0; t < span; ++t) gx[u * span + t] += mask[u] * go[u * span + t];
    });
}

// Max over windows of `kernel` with Same geometry; padded positions never win. Gradient goes to the
// first maximal position of each window.
inline Var max_pool1d(Var x, std::size_t kernel, std::size_t stride)
{
    Graph& g = *x.graph;
    const Tensor& xv = x.value();
    detail::require_rank(xv, 3, "max_pool1d");
    const std::size_t B = xv.dim(0), C = xv.dim(1), L = xv.dim(2);
    const ConvGeometry geo = conv_geometry(L, kernel, stride, Padding::Same);
    const std::size_t Lo = geo.out_length;
    Tensor out({B, C, Lo});
    std::vector<std::size_t> argmax(B * C * Lo);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t r = 0; r < B * C; ++r) {
        const double* row = xv.raw() + r * L;
        for (std::size_t t = 0; t < Lo; ++t) {
            const auto start = static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(geo.pad_left);
            std::size_t best = 0;
            double best_v = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < kernel; ++k) {
                const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(k);
                if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(L)) continue;
                if (row[pos] > best_v) {
                    best_v = row[pos];
                    best = static_cast<std::size_t>(pos);
                }
            }
            out[r * Lo + t] = best_v;
            argmax[r * Lo + t] = best;
            if (g.tracking_patterns()) h = detail::fnv(h, best);
        }
    }
    if (g.tracking_patterns()) g.note_pattern(h);
    return g.record(std::move(out), {x}, [x, argmax = std::move(argmax), L, Lo](Graph& gr, Var self) {
        const Tensor& go = gr.grad(self);
        Tensor& gx = gr.grad(x);
        for (std::size_t i = 0; i < argmax.size(); ++i) gx[(i / Lo) * L + argmax[i]] += go[i];
    });
}

// [B x C x L] -> [B x C], maximum over time.
inline Var global_max_pool(Var x)
{
    Graph& g = *x.graph;
    const Tensor& xv = x.value();
    detail::require_rank(xv, 3, "global_max_pool");
    const std::size_t B = xv.dim(0), C = xv.dim(1), L = xv.dim(2);
    Tensor out({B, C});
    std::vector<std::size_t> argmax(B * C);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t r = 0; r < B * C; ++r) {
        const double* row = xv.raw() + r * L;
        const std::size_t best = static_cast<std::size_t>(std::max_element(row, row + L) - row);
        out[r] = row[best];
        argmax[r] = best;
        if (g.tracking_patterns()) h = detail::fnv(h, best);
    }
    if (g.tracking_patterns()) g.note_pattern(h);
    return g.record(std::move(out), {x}, [x, argmax = std::move(argmax), L](Graph& gr, Var self) {
        const Tensor& go = gr.grad(self);
        Tensor& gx = gr.grad(x);
        for (std::size_t r = 0; r < argmax.size(); ++r) gx[r * L + argmax[r]] += go[r];
    });
}

// Stacks [B x Ca x L] and [B x Cb x L] into [B x (Ca + Cb) x L].
inline Var concat_channels(Var a, Var b)
{
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    detail::require_rank(av, 3, "concat_channels");
    detail::require_rank(bv, 3, "concat_channels");
    if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2))
        throw ShapeError("concat_channels: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    const std::size_t B = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), L = av.dim(2);
    Tensor out({B, Ca + Cb, L});
    for (std::size_t s = 0; s < B; ++s) {
        std::copy_n(av.raw() + s * Ca * L, Ca * L, out.raw() + s * (Ca + Cb) * L);
        std::copy_n(bv.raw() + s * Cb * L, Cb * L, out.raw() + s * (Ca + Cb) * L + Ca * L);
    }
    return a.graph->record(std::move(out), {a, b}, [a, b, B, Ca, Cb, L](Graph& gr, Var self) {
        const Tensor& go = gr.grad(self);
        for (std::size_t s = 0; s < B; ++s) {
            const double* src = go.raw() + s * (Ca + Cb) * L;
            if (gr.requires_grad(a)) {
                double* dst = gr.grad(a).raw() + s * Ca * L;
                for (std::size_t i = 0; i < Ca * L; ++i) dst[i] += src[i];
            }
            if (gr.requires_grad(b)) {
                double* dst = gr.grad(b).raw() + s * Cb * L;
                for (std::size_t i = 0; i < Cb * L; ++i) dst[i] += src[Ca * L + i];
            }
        }
    });
}

// Row-wise softmax of [B x K].
inline Var softmax(Var x)
{
    const Tensor& xv = x.value();
    detail::require_rank(xv, 2, "softmax");
    const std::size_t B = xv.dim(0), K = xv.dim(1);
    Tensor out({B, K});
    for (std::size_t b = 0; b < B; ++b) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, xv.at(b, k));
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += (out.at(b, k) = std::exp(xv.at(b, k) - mx));
        for (std::size_t k = 0; k < K; ++k) out.at(b, k) /= z;
    }
    return x.graph->record(std::move(out), {x}, [x, B, K](Graph& gr, Var self) {
        const Tensor& y = self.value();
        const Tensor& go = gr.grad(self);
        Tensor& gx = gr.grad(x);
        for (std::size_t b = 0; b < B; ++b) {
            double dot = 0.0;
            for (std::size_t k = 0; k < K; ++k) dot += go.at(b, k) * y.at(b, k);
            for (std::size_t k = 0; k < K; ++k) gx.at(b, k) += y.at(b, k) * (go.at(b, k) - dot);
        }
    });
}

// Mean over the batch of sum_i w[b, i] * errors[b, i].
inline Var weighted_error_loss(Var weights, const Tensor& errors)
{
    const Tensor& wv = weights.value();
    detail::require_rank(wv, 2, "weighted_error_loss");
    if (errors.shape() != wv.shape())
        throw ShapeError("weighted_error_loss: weights " + shape_string(wv.shape()) + " vs errors " +
                         shape_string(errors.shape()));
    for (double e : errors.data())
        if (!(e >= 0.0) || !std::isfinite(e)) throw ValidationError("weighted_error_loss: error entries must be finite and >= 0");
    const double inv_b = 1.0 / static_cast<double>(wv.dim(0));
    double acc = 0.0;
    for (std::size_t i = 0; i < wv.size(); ++i) acc += wv[i] * errors[i];
    return weights.graph->record(Tensor::scalar(acc * inv_b), {weights}, [weights, errors, inv_b](Graph& gr, Var self) {
        const double go = gr.grad(self)[0];
        Tensor& gw = gr.grad(weights);
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += go * inv_b * errors[i];
    });
}

// Mean negative log-likelihood of `targets` under softmax(logits), computed stably.
inline Var softmax_cross_entropy(Var logits, std::span<const int> targets)
{
    const Tensor& xv = logits.value();
    detail::require_rank(xv, 2, "softmax_cross_entropy");
    const std::size_t B = xv.dim(0), K = xv.dim(1);
    if (targets.size() != B) throw ShapeError("softmax_cross_entropy: one target per row required");
    Tensor probs({B, K});
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        if (targets[b] < 0 || static_cast<std::size_t>(targets[b]) >= K)
            throw ArgumentError("softmax_cross_entropy: target out of range");
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, xv.at(b, k));
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += (probs.at(b, k) = std::exp(xv.at(b, k) - mx));
        for (std::size_t k = 0; k < K; ++k) probs.at(b, k) /= z;
        loss -= xv.at(b, static_cast<std::size_t>(targets[b])) - mx - std::log(z);
    }
    std::vector<int> tg(targets.begin(), targets.end());
    return logits.graph->record(Tensor::scalar(loss / static_cast<double>(B)), {logits},
                                [logits, probs = std::move(probs), tg = std::move(tg), B, K](Graph& gr, Var self) {
        const double go = gr.grad(self)[0] / static_cast<double>(B);
        Tensor& gx = gr.grad(logits);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t k = 0; k < K; ++k)
                gx.at(b, k) += go * (probs.at(b, k) - (static_cast<int>(k) == tg[b] ? 1.0 : 0.0));
    });
}

} // namespace deforma::nn
