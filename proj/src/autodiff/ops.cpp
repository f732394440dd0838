// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace a2d::ad {

using detail::make_result;

namespace {

using NodePtr = std::shared_ptr<Node>;

// Index layout for reductions along one axis: [outer, extent, inner].
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size()) {
        throw ShapeError(op, "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

enum class Bcast { Same, RightScalar, LeftScalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Bcast::Same;
    if (b.numel() == 1) return Bcast::RightScalar;
    if (a.numel() == 1) return Bcast::LeftScalar;
    throw ShapeError(op, a.shape(), b.shape());
}

template <typename F>
Tensor unary(const Tensor& a, F&& f, std::function<void(Node&)> back) {
    std::vector<double> out(a.numel());
    const auto in = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return make_result(a.shape(), std::move(out), {a.node()}, std::move(back));
}

}  // namespace

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0) throw ShapeError("conv", "stride must be positive");
    if (in + 2 * padding < kernel) {
        throw ShapeError("conv", "kernel " + std::to_string(kernel) + " larger than padded input " +
                                     std::to_string(in + 2 * padding));
    }
    return (in + 2 * padding - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    const Bcast kind = broadcast_kind(a, b, "add");
    const Tensor& big = kind == Bcast::LeftScalar ? b : a;
    std::vector<double> out(big.numel());
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (kind == Bcast::LeftScalar ? x[0] : x[i]) + (kind == Bcast::RightScalar ? y[0] : y[i]);
    }
    return make_result(big.shape(), std::move(out), {a.node(), b.node()}, [kind](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double g = self.grad[i];
            if (pa.requires_grad) pa.grad[kind == Bcast::LeftScalar ? 0 : i] += g;
            if (pb.requires_grad) pb.grad[kind == Bcast::RightScalar ? 0 : i] += g;
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const Bcast kind = broadcast_kind(a, b, "sub");
    const Tensor& big = kind == Bcast::LeftScalar ? b : a;
    std::vector<double> out(big.numel());
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (kind == Bcast::LeftScalar ? x[0] : x[i]) - (kind == Bcast::RightScalar ? y[0] : y[i]);
    }
    return make_result(big.shape(), std::move(out), {a.node(), b.node()}, [kind](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double g = self.grad[i];
            if (pa.requires_grad) pa.grad[kind == Bcast::LeftScalar ? 0 : i] += g;
            if (pb.requires_grad) pb.grad[kind == Bcast::RightScalar ? 0 : i] -= g;
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const Bcast kind = broadcast_kind(a, b, "mul");
    const Tensor& big = kind == Bcast::LeftScalar ? b : a;
    std::vector<double> out(big.numel());
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (kind == Bcast::LeftScalar ? x[0] : x[i]) * (kind == Bcast::RightScalar ? y[0] : y[i]);
    }
    return make_result(big.shape(), std::move(out), {a.node(), b.node()}, [kind](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double g = self.grad[i];
            const std::size_t ia = kind == Bcast::LeftScalar ? 0 : i;
            const std::size_t ib = kind == Bcast::RightScalar ? 0 : i;
            if (pa.requires_grad) pa.grad[ia] += g * pb.data[ib];
            if (pb.requires_grad) pb.grad[ib] += g * pa.data[ia];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(a, [factor](double v) { return v * factor; }, [factor](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += factor * self.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary(a, [value](double v) { return v + value; }, [](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
    return unary(a, [](double v) { return v > 0.0 ? v : 0.0; }, [](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (p.data[i] > 0.0) p.grad[i] += self.grad[i];
        }
    });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](double v) { return std::exp(v); }, [](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * self.data[i];
    });
}

Tensor log(const Tensor& a) {
    return unary(a, [](double v) { return std::log(v); }, [](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] / p.data[i];
    });
}

Tensor square(const Tensor& a) {
    return unary(a, [](double v) { return v * v; }, [](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += 2.0 * p.data[i] * self.grad[i];
    });
}

Tensor clamp_min(const Tensor& a, double floor) {
    return unary(a, [floor](double v) { return v > floor ? v : floor; }, [floor](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (p.data[i] > floor) p.grad[i] += self.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_result({1}, {s}, {a.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        const double g = self.grad[0];
        for (double& pg : p.grad) pg += g;
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean", "empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "sum");
    Shape out_shape = a.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
    std::vector<double> out(s.outer * s.inner, 0.0);
    const auto x = a.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
            for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += x[(o * s.extent + e) * s.inner + i];
    return make_result(std::move(out_shape), std::move(out), {a.node()}, [s](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t e = 0; e < s.extent; ++e)
                for (std::size_t i = 0; i < s.inner; ++i)
                    p.grad[(o * s.extent + e) * s.inner + i] += self.grad[o * s.inner + i];
    });
}

Tensor mean(const Tensor& a, std::size_t axis) {
    const std::size_t extent = split_axis(a.shape(), axis, "mean").extent;
    return scale(sum(a, axis), 1.0 / static_cast<double>(extent));
}

Tensor softmax(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "softmax");
    std::vector<double> out(a.numel());
    const auto x = a.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, x[base + e * s.inner]);
            double z = 0.0;
            for (std::size_t e = 0; e < s.extent; ++e) {
                const double v = std::exp(x[base + e * s.inner] - mx);
                out[base + e * s.inner] = v;
                z += v;
            }
            for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= z;
        }
    }
    return make_result(a.shape(), std::move(out), {a.node()}, [s](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.extent * s.inner + i;
                double dot = 0.0;
                for (std::size_t e = 0; e < s.extent; ++e) {
                    const std::size_t k = base + e * s.inner;
                    dot += self.grad[k] * self.data[k];
                }
                for (std::size_t e = 0; e < s.extent; ++e) {
                    const std::size_t k = base + e * s.inner;
                    p.grad[k] += self.data[k] * (self.grad[k] - dot);
                }
            }
        }
    });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "log_softmax");
    std::vector<double> out(a.numel());
    const auto x = a.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, x[base + e * s.inner]);
            double z = 0.0;
            for (std::size_t e = 0; e < s.extent; ++e) z += std::exp(x[base + e * s.inner] - mx);
            const double lse = mx + std::log(z);
            for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] = x[base + e * s.inner] - lse;
        }
    }
    return make_result(a.shape(), std::move(out), {a.node()}, [s](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.extent * s.inner + i;
                double gsum = 0.0;
                for (std::size_t e = 0; e < s.extent; ++e) gsum += self.grad[base + e * s.inner];
                for (std::size_t e = 0; e < s.extent; ++e) {
                    const std::size_t k = base + e * s.inner;
                    p.grad[k] += self.grad[k] - std::exp(self.data[k]) * gsum;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) throw ShapeError("matmul", a.shape(), b.shape());
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = x[i * k + p];
            const double* brow = y.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
    return make_result({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const double* g = self.grad.data();
        if (pa.requires_grad) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* brow = pb.data.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * brow[j];
                    pa.grad[i * k + p] += acc;
                }
        }
        if (pb.requires_grad) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = pa.data[i * k + p];
                    double* gb = pb.grad.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) gb[j] += av * g[i * n + j];
                }
        }
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) throw ShapeError("add_bias", x.shape(), bias.shape());
    const AxisSplit s = split_axis(x.shape(), 1, "add_bias");
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto b = bias.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t c = 0; c < s.extent; ++c) {
            double* row = out.data() + (o * s.extent + c) * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) row[i] += b[c];
        }
    return make_result(x.shape(), std::move(out), {x.node(), bias.node()}, [s](Node& self) {
        Node& px = *self.parents[0];
        Node& pb = *self.parents[1];
        if (px.requires_grad) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t c = 0; c < s.extent; ++c) {
                    const double* row = self.grad.data() + (o * s.extent + c) * s.inner;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < s.inner; ++i) acc += row[i];
                    pb.grad[c] += acc;
                }
        }
    });
}

Tensor scale_channels(const Tensor& x, const Tensor& scale) {
    if (x.rank() < 2 || scale.rank() != 1 || scale.dim(0) != x.dim(1)) {
        throw ShapeError("scale_channels", x.shape(), scale.shape());
    }
    const AxisSplit s = split_axis(x.shape(), 1, "scale_channels");
    std::vector<double> out(x.numel());
    const auto in = x.data();
    const auto k = scale.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t c = 0; c < s.extent; ++c)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t idx = (o * s.extent + c) * s.inner + i;
                out[idx] = in[idx] * k[c];
            }
    return make_result(x.shape(), std::move(out), {x.node(), scale.node()}, [s](Node& self) {
        Node& px = *self.parents[0];
        Node& pk = *self.parents[1];
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t c = 0; c < s.extent; ++c)
                for (std::size_t i = 0; i < s.inner; ++i) {
                    const std::size_t idx = (o * s.extent + c) * s.inner + i;
                    if (px.requires_grad) px.grad[idx] += self.grad[idx] * pk.data[c];
                    if (pk.requires_grad) pk.grad[c] += self.grad[idx] * px.data[idx];
                }
    });
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) throw ShapeError("dense", x.shape(), w.shape());
    Tensor y = matmul(x, w);
    if (!bias.defined()) return y;
    if (bias.rank() != 1 || bias.dim(0) != w.dim(1)) throw ShapeError("dense", w.shape(), bias.shape());
    return add_bias(y, bias);
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel_of(shape) != a.numel()) throw ShapeError("reshape", a.shape(), shape);
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result(std::move(shape), std::move(out), {a.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat", "no inputs");
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) throw ShapeError("concat", "axis out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::size_t> extents;
    for (const auto& t : parts) {
        Shape a = t.shape();
        Shape b = first;
        if (a.size() != b.size()) throw ShapeError("concat", first, t.shape());
        a[axis] = b[axis] = 0;
        if (a != b) throw ShapeError("concat", first, t.shape());
        extents.push_back(t.dim(axis));
        out_shape[axis] += t.dim(axis);
    }
    const AxisSplit s = split_axis(out_shape, axis, "concat");
    std::vector<double> out(numel_of(out_shape));
    std::vector<NodePtr> parents;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto src = parts[k].data();
        const std::size_t block = extents[k] * s.inner;
        for (std::size_t o = 0; o < s.outer; ++o)
            std::copy_n(src.data() + o * block, block, out.data() + o * s.extent * s.inner + offset * s.inner);
        offset += extents[k];
        parents.push_back(parts[k].node());
    }
    return make_result(std::move(out_shape), std::move(out), std::move(parents), [s, extents](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < extents.size(); ++k) {
            Node& p = *self.parents[k];
            const std::size_t block = extents[k] * s.inner;
            if (p.requires_grad) {
                for (std::size_t o = 0; o < s.outer; ++o) {
                    const double* g = self.grad.data() + o * s.extent * s.inner + offset * s.inner;
                    double* pg = p.grad.data() + o * block;
                    for (std::size_t i = 0; i < block; ++i) pg[i] += g[i];
                }
            }
            offset += extents[k];
        }
    });
}

Tensor index_select(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& indices) {
    const AxisSplit s = split_axis(a.shape(), axis, "index_select");
    for (auto idx : indices) {
        if (idx >= s.extent) {
            throw ShapeError("index_select", "index " + std::to_string(idx) + " out of range for axis extent " +
                                                 std::to_string(s.extent));
        }
    }
    Shape out_shape = a.shape();
    out_shape[axis] = indices.size();
    const std::size_t n_sel = indices.size();
    std::vector<double> out(s.outer * n_sel * s.inner);
    const auto x = a.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = 0; j < n_sel; ++j)
            std::copy_n(x.data() + (o * s.extent + indices[j]) * s.inner, s.inner,
                        out.data() + (o * n_sel + j) * s.inner);
    return make_result(std::move(out_shape), std::move(out), {a.node()}, [s, indices](Node& self) {
        Node& p = *self.parents[0];
        const std::size_t n_sel = indices.size();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t j = 0; j < n_sel; ++j) {
                const double* g = self.grad.data() + (o * n_sel + j) * s.inner;
                double* pg = p.grad.data() + (o * s.extent + indices[j]) * s.inner;
                for (std::size_t i = 0; i < s.inner; ++i) pg[i] += g[i];
            }
    });
}

// ---------------------------------------------------------------------------
// Pooling / normalization
// ---------------------------------------------------------------------------

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("global_avg_pool", "expected rank-4 input, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<double> out(n * c, 0.0);
    const auto in = x.data();
    for (std::size_t i = 0; i < n * c; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < hw; ++k) acc += in[i * hw + k];
        out[i] = acc / static_cast<double>(hw);
    }
    return make_result({n, c}, std::move(out), {x.node()}, [hw](Node& self) {
        Node& p = *self.parents[0];
        const double inv = 1.0 / static_cast<double>(hw);
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            for (std::size_t k = 0; k < hw; ++k) p.grad[i * hw + k] += self.grad[i] * inv;
    });
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() != 4) throw ShapeError("batch_norm2d", "expected rank-4 input, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (gamma.numel() != c || beta.numel() != c) throw ShapeError("batch_norm2d", x.shape(), gamma.shape());
    const double count = static_cast<double>(n * hw);
    std::vector<double> mu(c, 0.0), inv_std(c, 0.0), xhat(x.numel()), out(x.numel());
    const auto in = x.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t k = 0; k < hw; ++k) acc += in[(b * c + ch) * hw + k];
        mu[ch] = acc / count;
        double var = 0.0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t k = 0; k < hw; ++k) {
                const double d = in[(b * c + ch) * hw + k] - mu[ch];
                var += d * d;
            }
        inv_std[ch] = 1.0 / std::sqrt(var / count + eps);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t k = 0; k < hw; ++k) {
                const std::size_t i = (b * c + ch) * hw + k;
                xhat[i] = (in[i] - mu[ch]) * inv_std[ch];
                out[i] = gamma.data()[ch] * xhat[i] + beta.data()[ch];
            }
    }
    return make_result(x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
                       [n, c, hw, count, inv_std, xhat](Node& self) {
                           Node& px = *self.parents[0];
                           Node& pg = *self.parents[1];
                           Node& pb = *self.parents[2];
                           for (std::size_t ch = 0; ch < c; ++ch) {
                               double sum_g = 0.0, sum_gx = 0.0;
                               for (std::size_t b = 0; b < n; ++b)
                                   for (std::size_t k = 0; k < hw; ++k) {
                                       const std::size_t i = (b * c + ch) * hw + k;
                                       sum_g += self.grad[i];
                                       sum_gx += self.grad[i] * xhat[i];
                                   }
                               if (pg.requires_grad) pg.grad[ch] += sum_gx;
                               if (pb.requires_grad) pb.grad[ch] += sum_g;
                               if (px.requires_grad) {
                                   const double gm = pg.data[ch] * inv_std[ch] / count;
                                   for (std::size_t b = 0; b < n; ++b)
                                       for (std::size_t k = 0; k < hw; ++k) {
                                           const std::size_t i = (b * c + ch) * hw + k;
                                           px.grad[i] += gm * (count * self.grad[i] - sum_g - xhat[i] * sum_gx);
                                       }
                               }
                           }
                       });
}

}  // namespace a2d::ad
