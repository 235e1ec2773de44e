#include <cmath>
#include <numbers>

#include "restore/ops.hpp"

namespace restore {

namespace {

template <class T>
T sigmoid_scalar(T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// Offset into b for every element of a, for b broadcast over a.
template <class T>
std::vector<std::size_t> broadcast_offsets(const BasicTensor<T>& a, const BasicTensor<T>& b,
                                           const char* op) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() != bs.size())
        throw ShapeError(std::string(op) + ": rank mismatch " + shape_str(as) + " vs " + shape_str(bs));
    const std::size_t rank = as.size();
    std::vector<std::size_t> bstride(rank, 0);
    std::size_t s = 1;
    for (std::size_t i = rank; i-- > 0;) {
        if (bs[i] != as[i] && bs[i] != 1)
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(bs) + " to " +
                             shape_str(as));
        bstride[i] = bs[i] == 1 ? 0 : s;
        s *= static_cast<std::size_t>(bs[i]);
    }
    std::vector<std::size_t> offsets(a.numel());
    std::vector<int> idx(rank, 0);
    std::size_t off = 0;
    for (std::size_t n = 0; n < offsets.size(); ++n) {
        offsets[n] = off;
        for (std::size_t d = rank; d-- > 0;) {
            off += bstride[d];
            if (++idx[d] < as[d]) break;
            off -= bstride[d] * static_cast<std::size_t>(as[d]);
            idx[d] = 0;
        }
    }
    return offsets;
}

}  // namespace

template <class T>
BasicTensor<T> unary_map(const BasicTensor<T>& x, UnaryKind kind, T eps) {
    const std::size_t n = x.numel();
    const T* xv = x.ptr();
    Buffer<T> out(n);
    // eps^2 is exact in double for a float eps, so sqrt_eps(0) returns eps exactly.
    const double eps2 = static_cast<double>(eps) * static_cast<double>(eps);
    switch (kind) {
        case UnaryKind::sigmoid:
            for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid_scalar(xv[i]);
            break;
        case UnaryKind::gelu:
            for (std::size_t i = 0; i < n; ++i)
                out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * T(std::numbers::sqrt2 / 2)));
            break;
        case UnaryKind::sqrt_eps:
            for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(std::sqrt(static_cast<double>(xv[i]) + eps2));
            break;
        case UnaryKind::abs:
            for (std::size_t i = 0; i < n; ++i) out[i] = std::abs(xv[i]);
            break;
    }
    auto in = x.shared();
    return detail::make_result<T>(x.shape(), std::move(out), {&x}, [in, kind](const TensorImpl<T>& o) {
        auto gx = detail::grad_buffer(*in);
        const std::size_t n = o.data.size();
        const T* g = o.grad.data();
        const T* y = o.data.data();
        const T* xv = in->data.data();
        switch (kind) {
            case UnaryKind::sigmoid:
                for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
                break;
            case UnaryKind::gelu: {
                const T inv_sqrt2pi = T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
                for (std::size_t i = 0; i < n; ++i) {
                    const T v = xv[i];
                    const T cdf = T(0.5) * (T(1) + std::erf(v * T(std::numbers::sqrt2 / 2)));
                    const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
                    gx[i] += g[i] * (cdf + v * pdf);
                }
                break;
            }
            case UnaryKind::sqrt_eps:
                for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * T(0.5) / y[i];
                break;
            case UnaryKind::abs:
                for (std::size_t i = 0; i < n; ++i)
                    gx[i] += xv[i] > T(0) ? g[i] : (xv[i] < T(0) ? -g[i] : T(0));
                break;
        }
    });
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "add");
    Buffer<T> out(a.numel());
    const T* av = a.ptr();
    const T* bv = b.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto ia = a.shared();
    auto ib = b.shared();
    return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [ia, ib](const TensorImpl<T>& o) {
        for (auto* in : {ia.get(), ib.get()}) {
            if (!in->requires_grad) continue;
            auto gi = detail::grad_buffer(*in);
            for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += o.grad[i];
        }
    });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "sub");
    Buffer<T> out(a.numel());
    const T* av = a.ptr();
    const T* bv = b.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    auto ia = a.shared();
    auto ib = b.shared();
    return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [ia, ib](const TensorImpl<T>& o) {
        if (ia->requires_grad) {
            auto g = detail::grad_buffer(*ia);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
        if (ib->requires_grad) {
            auto g = detail::grad_buffer(*ib);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
        }
    });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "mul");
    Buffer<T> out(a.numel());
    const T* av = a.ptr();
    const T* bv = b.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto ia = a.shared();
    auto ib = b.shared();
    return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [ia, ib](const TensorImpl<T>& o) {
        if (ia->requires_grad) {
            auto g = detail::grad_buffer(*ia);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ib->data[i];
        }
        if (ib->requires_grad) {
            auto g = detail::grad_buffer(*ib);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ia->data[i];
        }
    });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
    Buffer<T> out(x.numel());
    const T* xv = x.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
    auto in = x.shared();
    return detail::make_result<T>(x.shape(), std::move(out), {&x}, [in, factor](const TensorImpl<T>& o) {
        auto g = detail::grad_buffer(*in);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
    });
}

template <class T>
BasicTensor<T> add_broadcast(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    auto offsets = broadcast_offsets(a, b, "add_broadcast");
    Buffer<T> out(a.numel());
    const T* av = a.ptr();
    const T* bv = b.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[offsets[i]];
    auto ia = a.shared();
    auto ib = b.shared();
    return detail::make_result<T>(
        a.shape(), std::move(out), {&a, &b},
        [ia, ib, offsets = std::move(offsets)](const TensorImpl<T>& o) {
            if (ia->requires_grad) {
                auto g = detail::grad_buffer(*ia);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
            }
            if (ib->requires_grad) {
                auto g = detail::grad_buffer(*ib);
                for (std::size_t i = 0; i < offsets.size(); ++i) g[offsets[i]] += o.grad[i];
            }
        });
}

template <class T>
BasicTensor<T> mul_broadcast(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    auto offsets = broadcast_offsets(a, b, "mul_broadcast");
    Buffer<T> out(a.numel());
    const T* av = a.ptr();
    const T* bv = b.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[offsets[i]];
    auto ia = a.shared();
    auto ib = b.shared();
    return detail::make_result<T>(
        a.shape(), std::move(out), {&a, &b},
        [ia, ib, offsets = std::move(offsets)](const TensorImpl<T>& o) {
            if (ia->requires_grad) {
                auto g = detail::grad_buffer(*ia);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ib->data[offsets[i]];
            }
            if (ib->requires_grad) {
                auto g = detail::grad_buffer(*ib);
                for (std::size_t i = 0; i < offsets.size(); ++i)
                    g[offsets[i]] += o.grad[i] * ia->data[i];
            }
        });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
    double acc = 0.0;
    for (T v : x.data()) acc += static_cast<double>(v);
    auto in = x.shared();
    return detail::make_result<T>(Shape{1}, {static_cast<T>(acc)}, {&x}, [in](const TensorImpl<T>& o) {
        auto g = detail::grad_buffer(*in);
        const T go = o.grad[0];
        for (auto& v : g) v += go;
    });
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
    double acc = 0.0;
    for (T v : x.data()) acc += static_cast<double>(v);
    const double n = static_cast<double>(x.numel());
    auto in = x.shared();
    return detail::make_result<T>(Shape{1}, {static_cast<T>(acc / n)}, {&x}, [in, n](const TensorImpl<T>& o) {
        auto g = detail::grad_buffer(*in);
        const T go = static_cast<T>(static_cast<double>(o.grad[0]) / n);
        for (auto& v : g) v += go;
    });
}

#define RESTORE_INSTANTIATE(T)                                                          \
    template BasicTensor<T> unary_map(const BasicTensor<T>&, UnaryKind, T);            \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);         \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);         \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);         \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                           \
    template BasicTensor<T> add_broadcast(const BasicTensor<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> mul_broadcast(const BasicTensor<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                \
    template BasicTensor<T> mean(const BasicTensor<T>&);

RESTORE_INSTANTIATE(float)
RESTORE_INSTANTIATE(double)

}  // namespace restore
