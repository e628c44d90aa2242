#include "sws/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kernels.hpp"
#include "sws/error.hpp"

namespace sws {

namespace {

template <class T>
using ImplPtr = std::shared_ptr<detail::TensorImpl<T>>;

// Impl of an input that wants a gradient, else null.
template <class T>
ImplPtr<T> grad_target(const BasicTensor<T>& t) {
    return t.defined() && t.requires_grad() ? t.impl() : nullptr;
}

template <class T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op) {
    if (!t.defined() || t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                             (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
    }
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

template <class T>
std::size_t last_dim(const BasicTensor<T>& t, const char* op) {
    if (t.rank() == 0) throw DimensionError(std::string(op) + ": needs at least one axis");
    return t.shape().back();
}

template <class T>
void check_finite(std::span<const T> v, const char* op) {
    for (T x : v) {
        if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
    }
}

}  // namespace

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(m * n);
    kernels::gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data(), false);
    auto ai = grad_target(a), bi = grad_target(b);
    auto av = a.impl(), bv = b.impl();
    return record_op<T>("matmul", {m, n}, std::move(out), {a, b}, [=](detail::TensorImpl<T>& o) {
        if (ai) kernels::gemm_nt(m, n, k, o.grad.data(), bv->data.data(), ai->grad_buffer().data(), true);
        if (bi) kernels::gemm_tn_acc(m, k, n, av->data.data(), o.grad.data(), bi->grad_buffer().data());
    });
}

template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias) {
    require_rank(w, 2, "linear");
    const std::size_t k = last_dim(x, "linear");
    if (k != w.dim(0)) {
        throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                             shape_str(w.shape()));
    }
    const std::size_t n = w.dim(1);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != n)) {
        throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                             shape_str(w.shape()));
    }
    const std::size_t rows = x.numel() / k;
    std::vector<T> out(rows * n);
    kernels::gemm_nn(rows, k, n, x.data().data(), w.data().data(), out.data(), false);
    if (bias.defined()) {
        const T* bd = bias.data().data();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bd[j];
    }
    Shape shape = x.shape();
    shape.back() = n;
    auto xi = grad_target(x), wi = grad_target(w), bi = grad_target(bias);
    auto xv = x.impl(), wv = w.impl();
    return record_op<T>("linear", std::move(shape), std::move(out), {x, w, bias}, [=](detail::TensorImpl<T>& o) {
        if (xi) kernels::gemm_nt(rows, n, k, o.grad.data(), wv->data.data(), xi->grad_buffer().data(), true);
        if (wi) kernels::gemm_tn_acc(rows, k, n, xv->data.data(), o.grad.data(), wi->grad_buffer().data());
        if (bi) {
            auto& g = bi->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[r * n + j];
        }
    });
}

template <class T>
BasicTensor<T> bmm(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a, 3, "bmm");
    require_rank(b, 3, "bmm");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        throw DimensionError("bmm: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    std::vector<T> out(batch * m * n);
    for (std::size_t s = 0; s < batch; ++s)
        kernels::gemm_nn(m, k, n, a.data().data() + s * m * k, b.data().data() + s * k * n, out.data() + s * m * n,
                         false);
    auto ai = grad_target(a), bi = grad_target(b);
    auto av = a.impl(), bv = b.impl();
    return record_op<T>("bmm", {batch, m, n}, std::move(out), {a, b}, [=](detail::TensorImpl<T>& o) {
        for (std::size_t s = 0; s < batch; ++s) {
            const T* g = o.grad.data() + s * m * n;
            if (ai)
                kernels::gemm_nt(m, n, k, g, bv->data.data() + s * k * n, ai->grad_buffer().data() + s * m * k, true);
            if (bi) kernels::gemm_tn_acc(m, k, n, av->data.data() + s * m * k, g, bi->grad_buffer().data() + s * k * n);
        }
    });
}

template <class T>
BasicTensor<T> bmm_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a, 3, "bmm_nt");
    require_rank(b, 3, "bmm_nt");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
        throw DimensionError("bmm_nt: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
    }
    const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
    std::vector<T> out(batch * m * n);
    for (std::size_t s = 0; s < batch; ++s)
        kernels::gemm_nt(m, k, n, a.data().data() + s * m * k, b.data().data() + s * n * k, out.data() + s * m * n,
                         false);
    auto ai = grad_target(a), bi = grad_target(b);
    auto av = a.impl(), bv = b.impl();
    return record_op<T>("bmm_nt", {batch, m, n}, std::move(out), {a, b}, [=](detail::TensorImpl<T>& o) {
        for (std::size_t s = 0; s < batch; ++s) {
            const T* g = o.grad.data() + s * m * n;
            if (ai)
                kernels::gemm_nn(m, n, k, g, bv->data.data() + s * n * k, ai->grad_buffer().data() + s * m * k, true);
            if (bi) kernels::gemm_tn_acc(m, n, k, g, av->data.data() + s * m * k, bi->grad_buffer().data() + s * n * k);
        }
    });
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto ai = grad_target(a), bi = grad_target(b);
    return record_op<T>("add", a.shape(), std::move(out), {a, b}, [=](detail::TensorImpl<T>& o) {
        for (auto* t : {ai.get(), bi.get()}) {
            if (!t) continue;
            auto& g = t->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
    });
}

template <class T>
BasicTensor<T> add_broadcast(const BasicTensor<T>& x, const BasicTensor<T>& y) {
    const auto& xs = x.shape();
    const auto& ys = y.shape();
    if (ys.size() > xs.size() || !std::equal(ys.begin(), ys.end(), xs.end() - static_cast<std::ptrdiff_t>(ys.size()))) {
        throw DimensionError("add_broadcast: " + shape_str(ys) + " is not a suffix of " + shape_str(xs));
    }
    const std::size_t inner = y.numel(), outer = x.numel() / inner;
    std::vector<T> out(x.numel());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = x.data()[o * inner + i] + y.data()[i];
    auto xi = grad_target(x), yi = grad_target(y);
    return record_op<T>("add_broadcast", xs, std::move(out), {x, y}, [=](detail::TensorImpl<T>& o) {
        if (xi) {
            auto& g = xi->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
        if (yi) {
            auto& g = yi->grad_buffer();
            for (std::size_t r = 0; r < outer; ++r)
                for (std::size_t i = 0; i < inner; ++i) g[i] += o.grad[r * inner + i];
        }
    });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto ai = grad_target(a), bi = grad_target(b);
    auto av = a.impl(), bv = b.impl();
    return record_op<T>("mul", a.shape(), std::move(out), {a, b}, [=](detail::TensorImpl<T>& o) {
        if (ai) {
            auto& g = ai->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bv->data[i];
        }
        if (bi) {
            auto& g = bi->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * av->data[i];
        }
    });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
    auto xi = grad_target(x);
    return record_op<T>("scale", x.shape(), std::move(out), {x}, [=](detail::TensorImpl<T>& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
    });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
    T total = T(0);
    for (T v : x.data()) total += v;
    auto xi = grad_target(x);
    return record_op<T>("sum", {}, {total}, {x}, [=](detail::TensorImpl<T>& o) {
        for (auto& g : xi->grad_buffer()) g += o.grad[0];
    });
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    auto xi = grad_target(x);
    return record_op<T>("reshape", std::move(shape), std::move(out), {x}, [=](detail::TensorImpl<T>& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
}

template <class T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x) {
    const std::size_t n = last_dim(x, "softmax_rows");
    const std::size_t rows = x.numel() / n;
    check_finite(x.data(), "softmax_rows");
    std::vector<T> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data().data() + r * n;
        T* y = out.data() + r * n;
        const T mx = *std::max_element(in, in + n);
        T z = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            y[j] = std::exp(in[j] - mx);
            z += y[j];
        }
        for (std::size_t j = 0; j < n; ++j) y[j] /= z;
    }
    auto xi = grad_target(x);
    return record_op<T>("softmax_rows", x.shape(), std::move(out), {x}, [=](detail::TensorImpl<T>& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = o.data.data() + r * n;
            const T* dy = o.grad.data() + r * n;
            T dot = T(0);
            for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
            for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - dot);
        }
    });
}

template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta, T eps) {
    if (!(eps > T(0))) throw ValidationError("layer_norm: eps must be positive");
    const std::size_t d = last_dim(x, "layer_norm");
    if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
        throw DimensionError("layer_norm: affine " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                             " does not match " + shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / d;
    std::vector<T> out(x.numel()), xhat(x.numel()), rstd(rows);
    const T* gd = gamma.data().data();
    const T* bd = beta.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data().data() + r * d;
        T mu = T(0);
        for (std::size_t j = 0; j < d; ++j) mu += in[j];
        mu /= static_cast<T>(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<T>(d);
        rstd[r] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (in[j] - mu) * rstd[r];
            out[r * d + j] = xhat[r * d + j] * gd[j] + bd[j];
        }
    }
    auto xi = grad_target(x), gi = grad_target(gamma), bi = grad_target(beta);
    auto gv = gamma.impl();
    return record_op<T>(
        "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
        [=, xhat = std::move(xhat), rstd = std::move(rstd)](detail::TensorImpl<T>& o) {
            for (std::size_t r = 0; r < rows; ++r) {
                const T* dy = o.grad.data() + r * d;
                const T* xh = xhat.data() + r * d;
                if (gi) {
                    auto& g = gi->grad_buffer();
                    for (std::size_t j = 0; j < d; ++j) g[j] += dy[j] * xh[j];
                }
                if (bi) {
                    auto& g = bi->grad_buffer();
                    for (std::size_t j = 0; j < d; ++j) g[j] += dy[j];
                }
                if (xi) {
                    T mean_dxh = T(0), mean_dxh_xh = T(0);
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dxh = dy[j] * gv->data[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh[j];
                    }
                    mean_dxh /= static_cast<T>(d);
                    mean_dxh_xh /= static_cast<T>(d);
                    auto& g = xi->grad_buffer();
                    for (std::size_t j = 0; j < d; ++j) {
                        const T dxh = dy[j] * gv->data[j];
                        g[r * d + j] += rstd[r] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                    }
                }
            }
        });
}

template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
    constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x.data()[i];
        out[i] = v * T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
    }
    auto xi = grad_target(x);
    auto xv = x.impl();
    return record_op<T>("gelu", x.shape(), std::move(out), {x}, [=](detail::TensorImpl<T>& o) {
        constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
        auto& g = xi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = xv->data[i];
            const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T pdf = std::exp(T(-0.5) * v * v) * inv_sqrt2pi;
            g[i] += o.grad[i] * (cdf + v * pdf);
        }
    });
}

template <class T>
BasicTensor<T> soft_cross_entropy(const BasicTensor<T>& p, const BasicTensor<T>& q) {
    require_same_shape(p, q, "soft_cross_entropy");
    const std::size_t c = last_dim(p, "soft_cross_entropy");
    const std::size_t rows = p.numel() / c;
    const T clamp = static_cast<T>(kLogClamp);
    for (const auto* t : {&p, &q}) {
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += static_cast<double>(t->data()[r * c + j]);
            if (std::abs(s - 1.0) > 1e-5) {
                throw ValidationError("soft_cross_entropy: row " + std::to_string(r) + " sums to " + std::to_string(s));
            }
        }
    }
    auto log_clamped = [clamp](T v) { return v > T(0) ? std::max(std::log(v), clamp) : clamp; };
    double total = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i)
        total -= static_cast<double>(p.data()[i]) * static_cast<double>(log_clamped(q.data()[i]));
    const T value = static_cast<T>(total / static_cast<double>(rows));
    auto pi = grad_target(p), qi = grad_target(q);
    auto pv = p.impl(), qv = q.impl();
    return record_op<T>("soft_cross_entropy", {}, {value}, {p, q}, [=](detail::TensorImpl<T>& o) {
        const T g = o.grad[0] / static_cast<T>(rows);
        if (pi) {
            auto& gp = pi->grad_buffer();
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] -= g * log_clamped(qv->data[i]);
        }
        if (qi) {
            auto& gq = qi->grad_buffer();
            for (std::size_t i = 0; i < gq.size(); ++i) {
                const T qv_i = qv->data[i];
                if (qv_i > T(0) && std::log(qv_i) > clamp) gq[i] -= g * pv->data[i] / qv_i;
            }
        }
    });
}

template <class T>
BasicTensor<T> slice_last(const BasicTensor<T>& x, std::size_t offset, std::size_t length) {
    const std::size_t d = last_dim(x, "slice_last");
    if (length == 0 || offset + length > d) {
        throw DimensionError("slice_last: [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                             ") outside " + shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / d;
    std::vector<T> out(rows * length);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(x.data().data() + r * d + offset, length, out.data() + r * length);
    Shape shape = x.shape();
    shape.back() = length;
    auto xi = grad_target(x);
    return record_op<T>("slice_last", std::move(shape), std::move(out), {x}, [=](detail::TensorImpl<T>& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < length; ++j) g[r * d + offset + j] += o.grad[r * length + j];
    });
}

template <class T>
BasicTensor<T> split_heads(const BasicTensor<T>& x, std::size_t heads) {
    require_rank(x, 3, "split_heads");
    const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
    if (heads == 0 || d % heads) throw DimensionError("split_heads: width " + std::to_string(d) + " not divisible");
    const std::size_t dk = d / heads;
    std::vector<T> out(x.numel());
    // out[(s*h + hh), t, j] = x[s, t, hh*dk + j]
    auto index = [=](std::size_t s, std::size_t hh, std::size_t t) { return ((s * heads + hh) * n + t) * dk; };
    for (std::size_t s = 0; s < b; ++s)
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t hh = 0; hh < heads; ++hh)
                std::copy_n(x.data().data() + (s * n + t) * d + hh * dk, dk, out.data() + index(s, hh, t));
    auto xi = grad_target(x);
    return record_op<T>("split_heads", {b * heads, n, dk}, std::move(out), {x}, [=](detail::TensorImpl<T>& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t s = 0; s < b; ++s)
            for (std::size_t t = 0; t < n; ++t)
                for (std::size_t hh = 0; hh < heads; ++hh)
                    for (std::size_t j = 0; j < dk; ++j) g[(s * n + t) * d + hh * dk + j] += o.grad[index(s, hh, t) + j];
    });
}

template <class T>
BasicTensor<T> merge_heads(const BasicTensor<T>& x, std::size_t heads) {
    require_rank(x, 3, "merge_heads");
    if (heads == 0 || x.dim(0) % heads) throw DimensionError("merge_heads: batch not divisible by heads");
    const std::size_t b = x.dim(0) / heads, n = x.dim(1), dk = x.dim(2), d = dk * heads;
    std::vector<T> out(x.numel());
    auto index = [=](std::size_t s, std::size_t hh, std::size_t t) { return ((s * heads + hh) * n + t) * dk; };
    for (std::size_t s = 0; s < b; ++s)
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t hh = 0; hh < heads; ++hh)
                std::copy_n(x.data().data() + index(s, hh, t), dk, out.data() + (s * n + t) * d + hh * dk);
    auto xi = grad_target(x);
    return record_op<T>("merge_heads", {b, n, d}, std::move(out), {x}, [=](detail::TensorImpl<T>& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t s = 0; s < b; ++s)
            for (std::size_t t = 0; t < n; ++t)
                for (std::size_t hh = 0; hh < heads; ++hh)
                    for (std::size_t j = 0; j < dk; ++j) g[index(s, hh, t) + j] += o.grad[(s * n + t) * d + hh * dk + j];
    });
}

template <class T>
BasicTensor<T> prepend_token(const BasicTensor<T>& token, const BasicTensor<T>& x) {
    require_rank(x, 3, "prepend_token");
    const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
    if (token.numel() != d) {
        throw DimensionError("prepend_token: token " + shape_str(token.shape()) + " vs " + shape_str(x.shape()));
    }
    std::vector<T> out(b * (n + 1) * d);
    for (std::size_t s = 0; s < b; ++s) {
        std::copy_n(token.data().data(), d, out.data() + s * (n + 1) * d);
        std::copy_n(x.data().data() + s * n * d, n * d, out.data() + (s * (n + 1) + 1) * d);
    }
    auto ti = grad_target(token), xi = grad_target(x);
    return record_op<T>("prepend_token", {b, n + 1, d}, std::move(out), {token, x}, [=](detail::TensorImpl<T>& o) {
        for (std::size_t s = 0; s < b; ++s) {
            const T* g = o.grad.data() + s * (n + 1) * d;
            if (ti) {
                auto& gt = ti->grad_buffer();
                for (std::size_t j = 0; j < d; ++j) gt[j] += g[j];
            }
            if (xi) {
                auto& gx = xi->grad_buffer();
                for (std::size_t j = 0; j < n * d; ++j) gx[s * n * d + j] += g[d + j];
            }
        }
    });
}

template <class T>
BasicTensor<T> select_token(const BasicTensor<T>& x, std::size_t index) {
    require_rank(x, 3, "select_token");
    const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
    if (index >= n) throw DimensionError("select_token: index out of range for " + shape_str(x.shape()));
    std::vector<T> out(b * d);
    for (std::size_t s = 0; s < b; ++s) std::copy_n(x.data().data() + (s * n + index) * d, d, out.data() + s * d);
    auto xi = grad_target(x);
    return record_op<T>("select_token", {b, d}, std::move(out), {x}, [=](detail::TensorImpl<T>& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t s = 0; s < b; ++s)
            for (std::size_t j = 0; j < d; ++j) g[(s * n + index) * d + j] += o.grad[s * d + j];
    });
}

template <class T>
BasicTensor<T> patchify(const BasicTensor<T>& images, std::size_t patch) {
    require_rank(images, 4, "patchify");
    const std::size_t b = images.dim(0), ch = images.dim(1), h = images.dim(2), w = images.dim(3);
    if (patch == 0 || h % patch || w % patch) {
        throw DimensionError("patchify: image " + shape_str(images.shape()) + " not divisible by patch " +
                             std::to_string(patch));
    }
    const std::size_t gh = h / patch, gw = w / patch, np = gh * gw, pd = ch * patch * patch;
    // Source offset of every output element, shared by forward and backward.
    std::vector<std::size_t> src(b * np * pd);
    for (std::size_t s = 0; s < b; ++s)
        for (std::size_t py = 0; py < gh; ++py)
            for (std::size_t px = 0; px < gw; ++px)
                for (std::size_t c = 0; c < ch; ++c)
                    for (std::size_t i = 0; i < patch; ++i)
                        for (std::size_t j = 0; j < patch; ++j) {
                            const std::size_t out_idx =
                                ((s * np + py * gw + px) * pd) + (c * patch + i) * patch + j;
                            src[out_idx] = ((s * ch + c) * h + py * patch + i) * w + px * patch + j;
                        }
    std::vector<T> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = images.data()[src[i]];
    auto xi = grad_target(images);
    return record_op<T>("patchify", {b, np, pd}, std::move(out), {images},
                        [=, src = std::move(src)](detail::TensorImpl<T>& o) {
                            auto& g = xi->grad_buffer();
                            for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += o.grad[i];
                        });
}

template <class T>
BasicTensor<T> one_hot(const std::vector<int>& labels, std::size_t classes) {
    if (labels.empty()) throw ValidationError("one_hot: empty label list");
    std::vector<T> out(labels.size() * classes, T(0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw ValidationError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) +
                                  ")");
        }
        out[i * classes + static_cast<std::size_t>(labels[i])] = T(1);
    }
    return BasicTensor<T>::from_values({labels.size(), classes}, std::move(out));
}

#define SWS_INSTANTIATE_OPS(T)                                                                               \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);     \
    template BasicTensor<T> bmm(const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> bmm_nt(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> add_broadcast(const BasicTensor<T>&, const BasicTensor<T>&);                     \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                 \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                                      \
    template BasicTensor<T> mean(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                           \
    template BasicTensor<T> softmax_rows(const BasicTensor<T>&);                                             \
    template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, T); \
    template BasicTensor<T> gelu(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> soft_cross_entropy(const BasicTensor<T>&, const BasicTensor<T>&);                \
    template BasicTensor<T> slice_last(const BasicTensor<T>&, std::size_t, std::size_t);                     \
    template BasicTensor<T> split_heads(const BasicTensor<T>&, std::size_t);                                 \
    template BasicTensor<T> merge_heads(const BasicTensor<T>&, std::size_t);                                 \
    template BasicTensor<T> prepend_token(const BasicTensor<T>&, const BasicTensor<T>&);                     \
    template BasicTensor<T> select_token(const BasicTensor<T>&, std::size_t);                                \
    template BasicTensor<T> patchify(const BasicTensor<T>&, std::size_t);                                    \
    template BasicTensor<T> one_hot<T>(const std::vector<int>&, std::size_t);

SWS_INSTANTIATE_OPS(float)
SWS_INSTANTIATE_OPS(double)

}  // namespace sws
