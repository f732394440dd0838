// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// NCHW convolution kernels. Dense convs go through im2col and a small GEMM;
// depthwise convs use direct per-plane loops over precomputed valid ranges.

#include <algorithm>

#include "a2d/autodiff/ops.hpp"

namespace a2d::ad {

namespace {

struct ConvGeom {
    long n, c_in, h, w;  // input
    long c_out, k;       // kernel (c_out == c_in for depthwise)
    long stride, pad;
    long ho, wo;
    // valid [lo, hi) output columns per kernel column, and rows per kernel row
    std::vector<long> col_lo, col_hi, row_lo, row_hi;
};

void valid_range(long in, long out, long k, long stride, long pad, std::vector<long>& lo, std::vector<long>& hi) {
    lo.assign(static_cast<std::size_t>(k), 0);
    hi.assign(static_cast<std::size_t>(k), 0);
    for (long t = 0; t < k; ++t) {
        // input index = o*stride + t - pad must be in [0, in)
        long first = 0;
        if (pad > t) first = (pad - t + stride - 1) / stride;
        long last_excl = 0;
        if (in - 1 + pad - t >= 0) last_excl = (in - 1 + pad - t) / stride + 1;
        lo[static_cast<std::size_t>(t)] = std::min(first, out);
        hi[static_cast<std::size_t>(t)] = std::max(std::min(last_excl, out), lo[static_cast<std::size_t>(t)]);
    }
}

ConvGeom make_geom(const Tensor& x, std::size_t c_out, std::size_t k, std::size_t stride, std::size_t pad) {
    ConvGeom g;
    g.n = static_cast<long>(x.dim(0));
    g.c_in = static_cast<long>(x.dim(1));
    g.h = static_cast<long>(x.dim(2));
    g.w = static_cast<long>(x.dim(3));
    g.c_out = static_cast<long>(c_out);
    g.k = static_cast<long>(k);
    g.stride = static_cast<long>(stride);
    g.pad = static_cast<long>(pad);
    g.ho = static_cast<long>(conv_out_size(x.dim(2), k, stride, pad));
    g.wo = static_cast<long>(conv_out_size(x.dim(3), k, stride, pad));
    valid_range(g.h, g.ho, g.k, g.stride, g.pad, g.row_lo, g.row_hi);
    valid_range(g.w, g.wo, g.k, g.stride, g.pad, g.col_lo, g.col_hi);
    return g;
}

// Accumulates one (input plane, kernel plane) correlation into an output plane.
inline void plane_forward(const ConvGeom& g, const double* xp, const double* wp, double* op) {
    for (long ky = 0; ky < g.k; ++ky) {
        for (long kx = 0; kx < g.k; ++kx) {
            const double wv = wp[ky * g.k + kx];
            const long c0 = g.col_lo[kx], c1 = g.col_hi[kx];
            for (long oy = g.row_lo[ky]; oy < g.row_hi[ky]; ++oy) {
                const double* xrow = xp + (oy * g.stride + ky - g.pad) * g.w + kx - g.pad;
                double* orow = op + oy * g.wo;
                for (long ox = c0; ox < c1; ++ox) orow[ox] += wv * xrow[ox * g.stride];
            }
        }
    }
}

inline void plane_backward(const ConvGeom& g, const double* xp, const double* wp, const double* gp, double* gx,
                           double* gw) {
    for (long ky = 0; ky < g.k; ++ky) {
        for (long kx = 0; kx < g.k; ++kx) {
            const double wv = wp[ky * g.k + kx];
            const long c0 = g.col_lo[kx], c1 = g.col_hi[kx];
            double acc = 0.0;
            for (long oy = g.row_lo[ky]; oy < g.row_hi[ky]; ++oy) {
                const long off = (oy * g.stride + ky - g.pad) * g.w + kx - g.pad;
                const double* grow = gp + oy * g.wo;
                if (gx) {
                    double* gxrow = gx + off;
                    for (long ox = c0; ox < c1; ++ox) gxrow[ox * g.stride] += wv * grow[ox];
                }
                if (gw) {
                    const double* xrow = xp + off;
                    for (long ox = c0; ox < c1; ++ox) acc += grow[ox] * xrow[ox * g.stride];
                }
            }
            if (gw) gw[ky * g.k + kx] += acc;
        }
    }
}

void check_bias(const char* op, const Tensor& bias, std::size_t channels) {
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels)) {
        throw ShapeError(op, Shape{channels}, bias.shape());
    }
}

// Unfolds one sample into a [c_in*k*k, ho*wo] column matrix (zero padded).
void im2col(const ConvGeom& g, const double* xs, double* col) {
    const long plane_in = g.h * g.w, plane_out = g.ho * g.wo;
    for (long c = 0; c < g.c_in; ++c) {
        for (long ky = 0; ky < g.k; ++ky) {
            for (long kx = 0; kx < g.k; ++kx) {
                double* dst = col + ((c * g.k + ky) * g.k + kx) * plane_out;
                std::fill(dst, dst + plane_out, 0.0);
                const double* xp = xs + c * plane_in;
                const long c0 = g.col_lo[kx], c1 = g.col_hi[kx];
                for (long oy = g.row_lo[ky]; oy < g.row_hi[ky]; ++oy) {
                    const double* xrow = xp + (oy * g.stride + ky - g.pad) * g.w + kx - g.pad;
                    double* drow = dst + oy * g.wo;
                    for (long ox = c0; ox < c1; ++ox) drow[ox] = xrow[ox * g.stride];
                }
            }
        }
    }
}

void col2im_add(const ConvGeom& g, const double* col, double* gxs) {
    const long plane_in = g.h * g.w, plane_out = g.ho * g.wo;
    for (long c = 0; c < g.c_in; ++c) {
        for (long ky = 0; ky < g.k; ++ky) {
            for (long kx = 0; kx < g.k; ++kx) {
                const double* src = col + ((c * g.k + ky) * g.k + kx) * plane_out;
                double* gp = gxs + c * plane_in;
                const long c0 = g.col_lo[kx], c1 = g.col_hi[kx];
                for (long oy = g.row_lo[ky]; oy < g.row_hi[ky]; ++oy) {
                    double* grow = gp + (oy * g.stride + ky - g.pad) * g.w + kx - g.pad;
                    const double* srow = src + oy * g.wo;
                    for (long ox = c0; ox < c1; ++ox) grow[ox * g.stride] += srow[ox];
                }
            }
        }
    }
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

// out[M, P] += a[M, K] * b[K, P], four output rows at a time.
void gemm_nn(long m, long kdim, long p, const double* a, const double* b, double* out) {
    long i = 0;
    for (; i + 4 <= m; i += 4) {
        double* o0 = out + i * p;
        double* o1 = o0 + p;
        double* o2 = o1 + p;
        double* o3 = o2 + p;
        for (long j = 0; j < kdim; ++j) {
            const double a0 = a[i * kdim + j], a1 = a[(i + 1) * kdim + j], a2 = a[(i + 2) * kdim + j],
                         a3 = a[(i + 3) * kdim + j];
            const double* brow = b + j * p;
            for (long q = 0; q < p; ++q) {
                const double bv = brow[q];
                o0[q] += a0 * bv;
                o1[q] += a1 * bv;
                o2[q] += a2 * bv;
                o3[q] += a3 * bv;
            }
        }
    }
    for (; i < m; ++i) {
        double* o = out + i * p;
        for (long j = 0; j < kdim; ++j) {
            const double av = a[i * kdim + j];
            const double* brow = b + j * p;
            for (long q = 0; q < p; ++q) o[q] += av * brow[q];
        }
    }
}

// out[K, P] += a[M, K]^T * b[M, P]
void gemm_tn(long m, long kdim, long p, const double* a, const double* b, double* out) {
    for (long j = 0; j < kdim; ++j) {
        double* o = out + j * p;
        long i = 0;
        for (; i + 4 <= m; i += 4) {
            const double a0 = a[i * kdim + j], a1 = a[(i + 1) * kdim + j], a2 = a[(i + 2) * kdim + j],
                         a3 = a[(i + 3) * kdim + j];
            const double *b0 = b + i * p, *b1 = b0 + p, *b2 = b1 + p, *b3 = b2 + p;
            for (long q = 0; q < p; ++q) o[q] += a0 * b0[q] + a1 * b1[q] + a2 * b2[q] + a3 * b3[q];
        }
        for (; i < m; ++i) {
            const double av = a[i * kdim + j];
            const double* brow = b + i * p;
            for (long q = 0; q < p; ++q) o[q] += av * brow[q];
        }
    }
}

// out[M, K] += a[M, P] * b[K, P]^T
void gemm_nt(long m, long kdim, long p, const double* a, const double* b, double* out) {
    for (long i = 0; i < m; ++i) {
        const double* arow = a + i * p;
        for (long j = 0; j < kdim; ++j) {
            const double* brow = b + j * p;
            double acc = 0.0;
            for (long q = 0; q < p; ++q) acc += arow[q] * brow[q];
            out[i * kdim + j] += acc;
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t padding) {
    if (x.rank() != 4 || w.rank() != 4 || w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3)) {
        throw ShapeError("conv2d", x.shape(), w.shape());
    }
    check_bias("conv2d", bias, w.dim(0));
    const ConvGeom g = make_geom(x, w.dim(0), w.dim(2), stride, padding);
    const long plane_in = g.h * g.w, plane_out = g.ho * g.wo, kdim = g.c_in * g.k * g.k;
    std::vector<double> out(static_cast<std::size_t>(g.n * g.c_out * plane_out), 0.0);
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    std::vector<double> col(is_pointwise(g) ? 0 : static_cast<std::size_t>(kdim * plane_out));
    for (long n = 0; n < g.n; ++n) {
        double* os = out.data() + n * g.c_out * plane_out;
        if (bias.defined()) {
            for (long o = 0; o < g.c_out; ++o) {
                std::fill(os + o * plane_out, os + (o + 1) * plane_out, bias.data()[static_cast<std::size_t>(o)]);
            }
        }
        const double* xs = xd + n * g.c_in * plane_in;
        if (!is_pointwise(g)) {
            im2col(g, xs, col.data());
            xs = col.data();
        }
        gemm_nn(g.c_out, kdim, plane_out, wd, xs, os);
    }
    std::vector<std::shared_ptr<Node>> parents{x.node(), w.node()};
    if (bias.defined()) parents.push_back(bias.node());
    return detail::make_result(
        {x.dim(0), w.dim(0), static_cast<std::size_t>(g.ho), static_cast<std::size_t>(g.wo)}, std::move(out),
        std::move(parents), [g](Node& self) {
            Node& px = *self.parents[0];
            Node& pw = *self.parents[1];
            const long plane_in = g.h * g.w, plane_out = g.ho * g.wo, kdim = g.c_in * g.k * g.k;
            const bool pointwise = is_pointwise(g);
            std::vector<double> col(pointwise ? 0 : static_cast<std::size_t>(kdim * plane_out));
            std::vector<double> gcol(pointwise ? 0 : static_cast<std::size_t>(kdim * plane_out));
            for (long n = 0; n < g.n; ++n) {
                const double* gs = self.grad.data() + n * g.c_out * plane_out;
                const long xoff = n * g.c_in * plane_in;
                if (pw.requires_grad) {
                    const double* xs = px.data.data() + xoff;
                    if (!pointwise) {
                        im2col(g, xs, col.data());
                        xs = col.data();
                    }
                    gemm_nt(g.c_out, kdim, plane_out, gs, xs, pw.grad.data());
                }
                if (px.requires_grad) {
                    if (pointwise) {
                        gemm_tn(g.c_out, kdim, plane_out, pw.data.data(), gs, px.grad.data() + xoff);
                    } else {
                        std::fill(gcol.begin(), gcol.end(), 0.0);
                        gemm_tn(g.c_out, kdim, plane_out, pw.data.data(), gs, gcol.data());
                        col2im_add(g, gcol.data(), px.grad.data() + xoff);
                    }
                }
            }
            if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                Node& pb = *self.parents[2];
                for (long n = 0; n < g.n; ++n)
                    for (long o = 0; o < g.c_out; ++o) {
                        const double* gp = self.grad.data() + (n * g.c_out + o) * plane_out;
                        double acc = 0.0;
                        for (long i = 0; i < plane_out; ++i) acc += gp[i];
                        pb.grad[static_cast<std::size_t>(o)] += acc;
                    }
            }
        });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
                        std::size_t padding) {
    if (x.rank() != 4 || w.rank() != 4 || w.dim(0) != x.dim(1) || w.dim(1) != 1 || w.dim(2) != w.dim(3)) {
        throw ShapeError("depthwise_conv2d", x.shape(), w.shape());
    }
    check_bias("depthwise_conv2d", bias, w.dim(0));
    const ConvGeom g = make_geom(x, x.dim(1), w.dim(2), stride, padding);
    const long plane_in = g.h * g.w, plane_out = g.ho * g.wo, kk = g.k * g.k;
    std::vector<double> out(static_cast<std::size_t>(g.n * g.c_in * plane_out), 0.0);
    const double* xd = x.data().data();
    const double* wd = w.data().data();
    for (long n = 0; n < g.n; ++n) {
        for (long c = 0; c < g.c_in; ++c) {
            double* op = out.data() + (n * g.c_in + c) * plane_out;
            if (bias.defined()) std::fill(op, op + plane_out, bias.data()[static_cast<std::size_t>(c)]);
            plane_forward(g, xd + (n * g.c_in + c) * plane_in, wd + c * kk, op);
        }
    }
    std::vector<std::shared_ptr<Node>> parents{x.node(), w.node()};
    if (bias.defined()) parents.push_back(bias.node());
    return detail::make_result(
        {x.dim(0), x.dim(1), static_cast<std::size_t>(g.ho), static_cast<std::size_t>(g.wo)}, std::move(out),
        std::move(parents), [g](Node& self) {
            Node& px = *self.parents[0];
            Node& pw = *self.parents[1];
            const long plane_in = g.h * g.w, plane_out = g.ho * g.wo, kk = g.k * g.k;
            for (long n = 0; n < g.n; ++n) {
                for (long c = 0; c < g.c_in; ++c) {
                    const long xoff = (n * g.c_in + c) * plane_in;
                    const double* gp = self.grad.data() + (n * g.c_in + c) * plane_out;
                    plane_backward(g, px.data.data() + xoff, pw.data.data() + c * kk, gp,
                                   px.requires_grad ? px.grad.data() + xoff : nullptr,
                                   pw.requires_grad ? pw.grad.data() + c * kk : nullptr);
                }
            }
            if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                Node& pb = *self.parents[2];
                for (long n = 0; n < g.n; ++n)
                    for (long c = 0; c < g.c_in; ++c) {
                        const double* gp = self.grad.data() + (n * g.c_in + c) * plane_out;
                        double acc = 0.0;
                        for (long i = 0; i < plane_out; ++i) acc += gp[i];
                        pb.grad[static_cast<std::size_t>(c)] += acc;
                    }
            }
        });
}

}  // namespace a2d::ad
