// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bandfuse/error.hpp"

namespace bandfuse {

using detail::make_result;
using detail::Node;

namespace {

// Gradient buffer of parent i, or nullptr when that parent takes no gradient.
Scalar* parent_grad(Node& self, std::size_t i) {
    auto& p = *self.parents[i];
    return p.requires_grad ? p.grad.data() : nullptr;
}

const std::vector<Scalar>& parent_value(Node& self, std::size_t i) { return self.parents[i]->value; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
    if (x.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_str(x.shape()));
    }
}

Tensor unary(const Tensor& x, std::vector<Scalar> out, std::function<void(Node&)> fn) {
    return make_result(x.shape(), std::move(out), {x}, std::move(fn));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (b.rank() != 2 || (a.rank() != 1 && a.rank() != 2)) {
        throw DimensionError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const bool vec = a.rank() == 1;
    const std::size_t m = vec ? 1 : a.dim(0);
    const std::size_t k = vec ? a.dim(0) : a.dim(1);
    const std::size_t n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    std::vector<Scalar> out(m * n, Scalar(0));
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        Scalar* orow = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Scalar aip = av[i * k + p];
            if (aip == Scalar(0)) continue;
            const Scalar* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    Shape shape = vec ? Shape{n} : Shape{m, n};
    return make_result(std::move(shape), std::move(out), {a, b}, [m, k, n](Node& self) {
        const Scalar* g = self.grad.data();
        const auto& av = parent_value(self, 0);
        const auto& bv = parent_value(self, 1);
        if (Scalar* ga = parent_grad(self, 0)) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    Scalar s = 0;
                    const Scalar* grow = g + i * n;
                    const Scalar* brow = bv.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    ga[i * k + p] += s;
                }
            }
        }
        if (Scalar* gb = parent_grad(self, 1)) {
            for (std::size_t i = 0; i < m; ++i) {
                const Scalar* grow = g + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const Scalar aip = av[i * k + p];
                    Scalar* gbrow = gb + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                }
            }
        }
    });
}

Tensor transpose(const Tensor& x) {
    require_rank(x, 2, "transpose");
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<Scalar> out(r * c);
    const auto xv = x.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
    return make_result({c, r}, std::move(out), {x}, [r, c](Node& self) {
        if (Scalar* gx = parent_grad(self, 0)) {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<Scalar> out(a.values().begin(), a.values().end());
    const auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (Scalar* g = parent_grad(self, p))
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<Scalar> out(a.values().begin(), a.values().end());
    const auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        if (Scalar* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        if (Scalar* g = parent_grad(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<Scalar> out(a.numel());
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        const auto& av = parent_value(self, 0);
        const auto& bv = parent_value(self, 1);
        if (Scalar* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
        if (Scalar* g = parent_grad(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    require_rank(bias, 1, "add_bias");
    const std::size_t n = bias.dim(0);
    if (a.shape().back() != n || a.rank() > 2) {
        throw DimensionError("add_bias: " + shape_str(a.shape()) + " + " + shape_str(bias.shape()));
    }
    const std::size_t rows = a.numel() / n;
    std::vector<Scalar> out(a.values().begin(), a.values().end());
    const auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
    return make_result(a.shape(), std::move(out), {a, bias}, [rows, n](Node& self) {
        if (Scalar* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        if (Scalar* g = parent_grad(self, 1))
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[r * n + j];
    });
}

Tensor scale(const Tensor& x, Scalar s) {
    std::vector<Scalar> out(x.values().begin(), x.values().end());
    for (auto& v : out) v *= s;
    return unary(x, std::move(out), [s](Node& self) {
        if (Scalar* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
    });
}

Tensor add_scalar(const Tensor& x, Scalar s) {
    std::vector<Scalar> out(x.values().begin(), x.values().end());
    for (auto& v : out) v += s;
    return unary(x, std::move(out), [](Node& self) {
        if (Scalar* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor relu(const Tensor& x) {
    std::vector<Scalar> out(x.values().begin(), x.values().end());
    for (auto& v : out) v = v > Scalar(0) ? v : Scalar(0);
    return unary(x, std::move(out), [](Node& self) {
        if (Scalar* g = parent_grad(self, 0)) {
            const auto& xv = parent_value(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (xv[i] > Scalar(0)) g[i] += self.grad[i];
        }
    });
}

Tensor exp(const Tensor& x) {
    std::vector<Scalar> out(x.values().begin(), x.values().end());
    for (auto& v : out) v = std::exp(v);
    return unary(x, std::move(out), [](Node& self) {
        if (Scalar* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * self.value[i];
    });
}

Tensor log(const Tensor& x) {
    std::vector<Scalar> out(x.values().begin(), x.values().end());
    for (auto& v : out) v = std::log(std::max(v, kLogFloor));
    return unary(x, std::move(out), [](Node& self) {
        if (Scalar* g = parent_grad(self, 0)) {
            const auto& xv = parent_value(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (xv[i] > kLogFloor) g[i] += self.grad[i] / xv[i];
        }
    });
}

Tensor square(const Tensor& x) {
    std::vector<Scalar> out(x.values().begin(), x.values().end());
    for (auto& v : out) v *= v;
    return unary(x, std::move(out), [](Node& self) {
        if (Scalar* g = parent_grad(self, 0)) {
            const auto& xv = parent_value(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += Scalar(2) * xv[i] * self.grad[i];
        }
    });
}

Tensor xlogx(const Tensor& x) {
    std::vector<Scalar> out(x.values().begin(), x.values().end());
    for (auto& v : out) v = v == Scalar(0) ? Scalar(0) : v * std::log(std::max(v, kLogFloor));
    return unary(x, std::move(out), [](Node& self) {
        if (Scalar* g = parent_grad(self, 0)) {
            const auto& xv = parent_value(self, 0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const Scalar d = xv[i] > kLogFloor ? std::log(xv[i]) + Scalar(1) : std::log(kLogFloor);
                g[i] += self.grad[i] * d;
            }
        }
    });
}

Tensor sum(const Tensor& x) {
    const auto xv = x.values();
    const Scalar s = std::accumulate(xv.begin(), xv.end(), Scalar(0));
    return make_result({1}, {s}, {x}, [](Node& self) {
        if (Scalar* g = parent_grad(self, 0)) {
            const std::size_t n = self.parents[0]->value.size();
            for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
        }
    });
}

Tensor mean(const Tensor& x) {
    return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.numel()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
    require_rank(x, 2, "sum_axis");
    if (axis > 1) throw DimensionError("sum_axis: axis must be 0 or 1");
    const std::size_t r = x.dim(0), c = x.dim(1);
    const auto xv = x.values();
    std::vector<Scalar> out(axis == 0 ? c : r, Scalar(0));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += xv[i * c + j];
    Shape shape{out.size()};
    return make_result(std::move(shape), std::move(out), {x}, [r, c, axis](Node& self) {
        if (Scalar* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[axis == 0 ? j : i];
    });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
    require_rank(x, 2, "mean_axis");
    return scale(sum_axis(x, axis), Scalar(1) / static_cast<Scalar>(x.dim(axis)));
}

Tensor mean_pool_time(const Tensor& x) { return mean_axis(x, 0); }

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    std::vector<Scalar> out(x.values().begin(), x.values().end());
    return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
        if (Scalar* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
    if (xs.empty()) throw ParameterError("concat: empty input list");
    const std::size_t rank = xs.front().rank();
    if (rank == 0 || rank > 2 || axis >= rank) throw DimensionError("concat: unsupported rank/axis");
    for (const auto& t : xs) {
        if (t.rank() != rank) throw DimensionError("concat: rank mismatch");
        if (rank == 2 && t.dim(1 - axis) != xs.front().dim(1 - axis)) {
            throw DimensionError("concat: " + shape_str(t.shape()) + " vs " + shape_str(xs.front().shape()));
        }
    }
    if (rank == 1 || axis == 0) {
        // Row-major contiguous blocks.
        std::vector<Scalar> out;
        std::vector<std::size_t> offsets;
        std::size_t lead = 0;
        for (const auto& t : xs) {
            offsets.push_back(out.size());
            out.insert(out.end(), t.values().begin(), t.values().end());
            lead += t.dim(0);
        }
        Shape shape = rank == 1 ? Shape{lead} : Shape{lead, xs.front().dim(1)};
        return make_result(std::move(shape), std::move(out), xs, [offsets](Node& self) {
            for (std::size_t p = 0; p < self.parents.size(); ++p) {
                if (Scalar* g = parent_grad(self, p)) {
                    const std::size_t n = self.parents[p]->value.size();
                    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offsets[p] + i];
                }
            }
        });
    }
    const std::size_t rows = xs.front().dim(0);
    std::vector<std::size_t> widths, col0;
    std::size_t total = 0;
    for (const auto& t : xs) {
        col0.push_back(total);
        widths.push_back(t.dim(1));
        total += t.dim(1);
    }
    std::vector<Scalar> out(rows * total);
    for (std::size_t p = 0; p < xs.size(); ++p) {
        const auto v = xs[p].values();
        for (std::size_t i = 0; i < rows; ++i)
            std::copy_n(v.begin() + i * widths[p], widths[p], out.begin() + i * total + col0[p]);
    }
    return make_result({rows, total}, std::move(out), xs, [rows, total, widths, col0](Node& self) {
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
            if (Scalar* g = parent_grad(self, p))
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < widths[p]; ++j) g[i * widths[p] + j] += self.grad[i * total + col0[p] + j];
        }
    });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
    if (x.rank() == 0 || x.rank() > 2 || axis >= x.rank()) throw DimensionError("slice: unsupported rank/axis");
    if (begin >= end || end > x.dim(axis)) {
        throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                             shape_str(x.shape()));
    }
    const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
    const std::size_t cols = x.rank() == 1 ? x.dim(0) : x.dim(1);
    std::size_t r0 = 0, r1 = rows, c0 = 0, c1 = cols;
    if (x.rank() == 1 || axis == 1) {
        c0 = begin;
        c1 = end;
    } else {
        r0 = begin;
        r1 = end;
    }
    const std::size_t orow = r1 - r0, ocol = c1 - c0;
    std::vector<Scalar> out(orow * ocol);
    const auto xv = x.values();
    for (std::size_t i = 0; i < orow; ++i)
        std::copy_n(xv.begin() + (r0 + i) * cols + c0, ocol, out.begin() + i * ocol);
    Shape shape = x.rank() == 1 ? Shape{ocol} : Shape{orow, ocol};
    return make_result(std::move(shape), std::move(out), {x}, [=](Node& self) {
        if (Scalar* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < orow; ++i)
                for (std::size_t j = 0; j < ocol; ++j) g[(r0 + i) * cols + c0 + j] += self.grad[i * ocol + j];
    });
}

Tensor row(const Tensor& x, std::size_t r) {
    require_rank(x, 2, "row");
    return reshape(slice(x, 0, r, r + 1), {x.dim(1)});
}

Tensor last_row(const Tensor& x) {
    require_rank(x, 2, "last_row");
    return row(x, x.dim(0) - 1);
}

namespace {

// Softmax over [offset, offset+n) of `in` scaled by 1/tau, written into out.
void softmax_span(const Scalar* in, Scalar* out, std::size_t n, Scalar tau) {
    Scalar mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    Scalar z = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp((in[i] - mx) / tau);
        z += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= z;
}

void softmax_span_backward(const Scalar* y, const Scalar* g, Scalar* gx, std::size_t n, Scalar tau) {
    Scalar dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
    for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] * (g[i] - dot) / tau;
}

}  // namespace

Tensor softmax_temp(const Tensor& x, Scalar tau) {
    if (!(tau > Scalar(0))) throw ParameterError("softmax_temp: temperature must be positive");
    require_rank(x, 1, "softmax_temp");
    const std::size_t n = x.numel();
    if (n == 0) throw DimensionError("softmax_temp: empty input");
    std::vector<Scalar> out(n);
    softmax_span(x.values().data(), out.data(), n, tau);
    return unary(x, std::move(out), [n, tau](Node& self) {
        if (Scalar* g = parent_grad(self, 0)) softmax_span_backward(self.value.data(), self.grad.data(), g, n, tau);
    });
}

Tensor softmax(const Tensor& x) {
    const std::size_t n = x.numel();
    if (n == 0) throw DimensionError("softmax: empty input");
    std::vector<Scalar> out(n);
    softmax_span(x.values().data(), out.data(), n, Scalar(1));
    return unary(x, std::move(out), [n](Node& self) {
        if (Scalar* g = parent_grad(self, 0)) softmax_span_backward(self.value.data(), self.grad.data(), g, n, Scalar(1));
    });
}

Tensor softmax_rows(const Tensor& x) {
    require_rank(x, 2, "softmax_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<Scalar> out(r * c);
    for (std::size_t i = 0; i < r; ++i) softmax_span(x.values().data() + i * c, out.data() + i * c, c, Scalar(1));
    return unary(x, std::move(out), [r, c](Node& self) {
        if (Scalar* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < r; ++i)
                softmax_span_backward(self.value.data() + i * c, self.grad.data() + i * c, g + i * c, c, Scalar(1));
    });
}

Tensor l2_normalize(const Tensor& x) {
    const auto xv = x.values();
    Scalar sq = 0;
    for (auto v : xv) sq += v * v;
    const Scalar norm = std::sqrt(sq);
    const bool guarded = !(norm > kNormFloor);
    const Scalar denom = guarded ? kNormFloor : norm;
    std::vector<Scalar> out(xv.begin(), xv.end());
    for (auto& v : out) v /= denom;
    return unary(x, std::move(out), [guarded, denom](Node& self) {
        // The guarded branch has no meaningful direction; it passes no gradient.
        if (guarded) return;
        if (Scalar* g = parent_grad(self, 0)) {
            Scalar dot = 0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * self.value[i];
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += (self.grad[i] - self.value[i] * dot) / denom;
        }
    });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
    require_rank(x, 2, "layer_norm_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    if (gamma.numel() != c || beta.numel() != c) throw DimensionError("layer_norm_rows: affine size mismatch");
    const auto xv = x.values();
    const auto gv = gamma.values();
    const auto bv = beta.values();
    std::vector<Scalar> out(r * c);
    std::vector<Scalar> xhat(r * c);
    std::vector<Scalar> inv(r);
    for (std::size_t i = 0; i < r; ++i) {
        const Scalar* row = xv.data() + i * c;
        Scalar mu = 0;
        for (std::size_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<Scalar>(c);
        Scalar var = 0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<Scalar>(c);
        inv[i] = Scalar(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            xhat[i * c + j] = (row[j] - mu) * inv[i];
            out[i * c + j] = gv[j] * xhat[i * c + j] + bv[j];
        }
    }
    return make_result({r, c}, std::move(out), {x, gamma, beta},
                       [r, c, xhat = std::move(xhat), inv = std::move(inv)](Node& self) {
        const auto& gv = parent_value(self, 1);
        Scalar* gx = parent_grad(self, 0);
        Scalar* gg = parent_grad(self, 1);
        Scalar* gb = parent_grad(self, 2);
        std::vector<Scalar> gxhat(c);
        for (std::size_t i = 0; i < r; ++i) {
            const Scalar* g = self.grad.data() + i * c;
            const Scalar* xh = xhat.data() + i * c;
            Scalar m1 = 0, m2 = 0;
            for (std::size_t j = 0; j < c; ++j) {
                if (gg) gg[j] += g[j] * xh[j];
                if (gb) gb[j] += g[j];
                gxhat[j] = g[j] * gv[j];
                m1 += gxhat[j];
                m2 += gxhat[j] * xh[j];
            }
            if (gx) {
                m1 /= static_cast<Scalar>(c);
                m2 /= static_cast<Scalar>(c);
                for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += inv[i] * (gxhat[j] - m1 - xh[j] * m2);
            }
        }
    });
}

Tensor stop_gradient(const Tensor& x) {
    return Tensor::from(std::vector<Scalar>(x.values().begin(), x.values().end()), x.shape(), false);
}

Tensor weighted_sum(const std::vector<Tensor>& xs, const Tensor& w) {
    if (xs.empty()) throw ParameterError("weighted_sum: empty input list");
    if (w.numel() != xs.size()) {
        throw DimensionError("weighted_sum: " + std::to_string(xs.size()) + " terms but weights " + shape_str(w.shape()));
    }
    for (const auto& t : xs) require_same_shape(t, xs.front(), "weighted_sum");
    const std::size_t n = xs.front().numel();
    std::vector<Scalar> out(n, Scalar(0));
    const auto wv = w.values();
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto v = xs[k].values();
        for (std::size_t i = 0; i < n; ++i) out[i] += wv[k] * v[i];
    }
    std::vector<Tensor> inputs(xs);
    inputs.push_back(w);
    const std::size_t terms = xs.size();
    return make_result(xs.front().shape(), std::move(out), inputs, [terms, n](Node& self) {
        const auto& wv = parent_value(self, terms);
        Scalar* gw = parent_grad(self, terms);
        for (std::size_t k = 0; k < terms; ++k) {
            if (Scalar* gx = parent_grad(self, k))
                for (std::size_t i = 0; i < n; ++i) gx[i] += wv[k] * self.grad[i];
            if (gw) {
                const auto& xv = parent_value(self, k);
                Scalar s = 0;
                for (std::size_t i = 0; i < n; ++i) s += self.grad[i] * xv[i];
                gw[k] += s;
            }
        }
    });
}

Tensor masked_renormalize(const Tensor& alpha, const std::vector<Scalar>& mask, Scalar eps) {
    require_rank(alpha, 1, "masked_renormalize");
    const std::size_t n = alpha.numel();
    if (mask.size() != n) throw DimensionError("masked_renormalize: mask length differs from weights");
    const auto av = alpha.values();
    Scalar kept = 0;
    for (std::size_t i = 0; i < n; ++i) kept += av[i] * mask[i];
    const Scalar denom = kept + eps;
    std::vector<Scalar> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * mask[i] / denom;
    return unary(alpha, std::move(out), [mask, denom, n](Node& self) {
        if (Scalar* g = parent_grad(self, 0)) {
            Scalar dot = 0;
            for (std::size_t i = 0; i < n; ++i) dot += self.grad[i] * self.value[i];
            for (std::size_t i = 0; i < n; ++i) g[i] += mask[i] * (self.grad[i] - dot) / denom;
        }
    });
}

Tensor conv1d_same(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t kernel) {
    require_rank(x, 2, "conv1d_same");
    if (kernel % 2 == 0) throw ParameterError("conv1d_same: kernel size must be odd");
    const std::size_t T = x.dim(0), in = x.dim(1);
    if (weight.rank() != 2 || weight.dim(0) != kernel * in) {
        throw DimensionError("conv1d_same: weight " + shape_str(weight.shape()) + " incompatible with input " +
                             shape_str(x.shape()) + " and kernel " + std::to_string(kernel));
    }
    const std::size_t out_dim = weight.dim(1);
    if (bias.numel() != out_dim) throw DimensionError("conv1d_same: bias size mismatch");
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);
    const auto xv = x.values();
    const auto wv = weight.values();
    const auto bv = bias.values();
    std::vector<Scalar> out(T * out_dim);
    for (std::size_t t = 0; t < T; ++t) std::copy(bv.begin(), bv.end(), out.begin() + t * out_dim);
    for (std::size_t t = 0; t < T; ++t) {
        Scalar* orow = out.data() + t * out_dim;
        for (std::size_t j = 0; j < kernel; ++j) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - half;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
            for (std::size_t c = 0; c < in; ++c) {
                const Scalar xs = xv[static_cast<std::size_t>(src) * in + c];
                const Scalar* wrow = wv.data() + (j * in + c) * out_dim;
                for (std::size_t o = 0; o < out_dim; ++o) orow[o] += xs * wrow[o];
            }
        }
    }
    return make_result({T, out_dim}, std::move(out), {x, weight, bias}, [=](Node& self) {
        const auto& xv = parent_value(self, 0);
        const auto& wv = parent_value(self, 1);
        Scalar* gx = parent_grad(self, 0);
        Scalar* gw = parent_grad(self, 1);
        Scalar* gb = parent_grad(self, 2);
        for (std::size_t t = 0; t < T; ++t) {
            const Scalar* g = self.grad.data() + t * out_dim;
            if (gb)
                for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[o];
            for (std::size_t j = 0; j < kernel; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - half;
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
                for (std::size_t c = 0; c < in; ++c) {
                    const std::size_t xi = static_cast<std::size_t>(src) * in + c;
                    const std::size_t wr = (j * in + c) * out_dim;
                    Scalar acc = 0;
                    for (std::size_t o = 0; o < out_dim; ++o) {
                        if (gw) gw[wr + o] += xv[xi] * g[o];
                        acc += wv[wr + o] * g[o];
                    }
                    if (gx) gx[xi] += acc;
                }
            }
        }
    });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse");
    return mean(square(sub(pred, target)));
}

Tensor cross_entropy_with_logits(const Tensor& logits, std::size_t target) {
    require_rank(logits, 1, "cross_entropy_with_logits");
    const std::size_t n = logits.numel();
    if (target >= n) throw ParameterError("cross_entropy_with_logits: target class out of range");
    const auto xv = logits.values();
    std::vector<Scalar> p(n);
    softmax_span(xv.data(), p.data(), n, Scalar(1));
    const Scalar mx = *std::max_element(xv.begin(), xv.end());
    Scalar z = 0;
    for (auto v : xv) z += std::exp(v - mx);
    const Scalar loss = mx + std::log(z) - xv[target];
    return make_result({1}, {loss}, {logits}, [p = std::move(p), target](Node& self) {
        if (Scalar* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < p.size(); ++i) g[i] += self.grad[0] * (p[i] - (i == target ? Scalar(1) : Scalar(0)));
    });
}

}  // namespace bandfuse
