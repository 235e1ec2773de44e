#include <Eigen/Core>

#include "restore/ops.hpp"

namespace restore {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using CMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MMap = Eigen::Map<RowMat<T>>;
template <class T>
using CVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using MVec = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

// Batch layout of a broadcast matmul: offsets of each output batch item into
// the two operands.
struct BatchPlan {
    Shape batch_shape;
    std::vector<std::size_t> a_index, b_index;
};

BatchPlan plan_batches(const Shape& as, const Shape& bs) {
    const std::size_t ra = as.size() - 2, rb = bs.size() - 2;
    const std::size_t r = std::max(ra, rb);
    Shape pa(r, 1), pb(r, 1), out(r, 1);
    std::copy(as.begin(), as.begin() + ra, pa.begin() + (r - ra));
    std::copy(bs.begin(), bs.begin() + rb, pb.begin() + (r - rb));
    for (std::size_t i = 0; i < r; ++i) {
        if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1)
            throw ShapeError("matmul: batch dims of " + shape_str(as) + " and " + shape_str(bs) +
                             " do not broadcast");
        out[i] = std::max(pa[i], pb[i]);
    }
    BatchPlan plan;
    plan.batch_shape = out;
    std::size_t total = 1;
    for (int d : out) total *= static_cast<std::size_t>(d);
    std::vector<int> idx(r, 0);
    for (std::size_t n = 0; n < total; ++n) {
        std::size_t ia = 0, ib = 0;
        for (std::size_t d = 0; d < r; ++d) {
            ia = ia * pa[d] + (pa[d] == 1 ? 0 : idx[d]);
            ib = ib * pb[d] + (pb[d] == 1 ? 0 : idx[d]);
        }
        plan.a_index.push_back(ia);
        plan.b_index.push_back(ib);
        for (std::size_t d = r; d-- > 0;) {
            if (++idx[d] < out[d]) break;
            idx[d] = 0;
        }
    }
    return plan;
}

template <class T>
void require_rank4(const BasicTensor<T>& x, const char* op) {
    if (x.rank() != 4) throw ShapeError(std::string(op) + ": expected [B,C,H,W], got " + shape_str(x.shape()));
}

}  // namespace

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2 || a.dim(-1) != b.dim(-2))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const int m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
    BatchPlan plan = plan_batches(a.shape(), b.shape());
    Shape shape = plan.batch_shape;
    shape.push_back(m);
    shape.push_back(n);
    const std::size_t sa = static_cast<std::size_t>(m) * k, sb = static_cast<std::size_t>(k) * n,
                      sc = static_cast<std::size_t>(m) * n;
    Buffer<T> out(plan.a_index.size() * sc);
    for (std::size_t i = 0; i < plan.a_index.size(); ++i) {
        MMap<T>(out.data() + i * sc, m, n).noalias() =
            CMap<T>(a.ptr() + plan.a_index[i] * sa, m, k) * CMap<T>(b.ptr() + plan.b_index[i] * sb, k, n);
    }
    auto ia = a.shared();
    auto ib = b.shared();
    return detail::make_result<T>(
        std::move(shape), std::move(out), {&a, &b},
        [ia, ib, plan = std::move(plan), m, k, n, sa, sb, sc](const TensorImpl<T>& o) {
            for (std::size_t i = 0; i < plan.a_index.size(); ++i) {
                CMap<T> dc(o.grad.data() + i * sc, m, n);
                if (ia->requires_grad) {
                    auto g = detail::grad_buffer(*ia);
                    MMap<T>(g.data() + plan.a_index[i] * sa, m, k).noalias() +=
                        dc * CMap<T>(ib->data.data() + plan.b_index[i] * sb, k, n).transpose();
                }
                if (ib->requires_grad) {
                    auto g = detail::grad_buffer(*ib);
                    MMap<T>(g.data() + plan.b_index[i] * sb, k, n).noalias() +=
                        CMap<T>(ia->data.data() + plan.a_index[i] * sa, m, k).transpose() * dc;
                }
            }
        });
}

template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias) {
    if (w.rank() != 2 || x.dim(-1) != w.dim(1))
        throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    const int in = w.dim(1), out_dim = w.dim(0);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim))
        throw ShapeError("linear: bias " + shape_str(bias.shape()) + " for weight " + shape_str(w.shape()));
    const std::size_t rows = x.numel() / static_cast<std::size_t>(in);
    Shape shape = x.shape();
    shape.back() = out_dim;
    Buffer<T> out(rows * out_dim);
    MMap<T> y(out.data(), rows, out_dim);
    y.noalias() = CMap<T>(x.ptr(), rows, in) * CMap<T>(w.ptr(), out_dim, in).transpose();
    if (bias.defined()) y.rowwise() += CVec<T>(bias.ptr(), out_dim).transpose();
    auto ix = x.shared();
    auto iw = w.shared();
    auto ibias = bias.defined() ? bias.shared() : nullptr;
    return detail::make_result<T>(
        std::move(shape), std::move(out), {&x, &w, &bias},
        [ix, iw, ibias, rows, in, out_dim](const TensorImpl<T>& o) {
            CMap<T> dy(o.grad.data(), rows, out_dim);
            if (ix->requires_grad)
                MMap<T>(detail::grad_buffer(*ix).data(), rows, in).noalias() +=
                    dy * CMap<T>(iw->data.data(), out_dim, in);
            if (iw->requires_grad)
                MMap<T>(detail::grad_buffer(*iw).data(), out_dim, in).noalias() +=
                    dy.transpose() * CMap<T>(ix->data.data(), rows, in);
            if (ibias && ibias->requires_grad)
                MVec<T>(detail::grad_buffer(*ibias).data(), out_dim) += dy.colwise().sum().transpose();
        });
}

template <class T>
BasicTensor<T> conv_pointwise(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias) {
    require_rank4(x, "conv_pointwise");
    if (w.rank() != 2 || w.dim(1) != x.dim(1))
        throw ShapeError("conv_pointwise: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    const int B = x.dim(0), C = x.dim(1), O = w.dim(0);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != O))
        throw ShapeError("conv_pointwise: bias " + shape_str(bias.shape()) + " for weight " + shape_str(w.shape()));
    const std::size_t P = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Buffer<T> out(static_cast<std::size_t>(B) * O * P);
    CMap<T> wm(w.ptr(), O, C);
    for (int b = 0; b < B; ++b) {
        MMap<T> y(out.data() + b * O * P, O, P);
        y.noalias() = wm * CMap<T>(x.ptr() + b * C * P, C, P);
        if (bias.defined()) y.colwise() += CVec<T>(bias.ptr(), O);
    }
    auto ix = x.shared();
    auto iw = w.shared();
    auto ibias = bias.defined() ? bias.shared() : nullptr;
    return detail::make_result<T>(
        Shape{B, O, x.dim(2), x.dim(3)}, std::move(out), {&x, &w, &bias},
        [ix, iw, ibias, B, C, O, P](const TensorImpl<T>& o) {
            CMap<T> wm(iw->data.data(), O, C);
            for (int b = 0; b < B; ++b) {
                CMap<T> dy(o.grad.data() + b * O * P, O, P);
                if (ix->requires_grad)
                    MMap<T>(detail::grad_buffer(*ix).data() + b * C * P, C, P).noalias() += wm.transpose() * dy;
                if (iw->requires_grad)
                    MMap<T>(detail::grad_buffer(*iw).data(), O, C).noalias() +=
                        dy * CMap<T>(ix->data.data() + b * C * P, C, P).transpose();
                if (ibias && ibias->requires_grad)
                    MVec<T>(detail::grad_buffer(*ibias).data(), O) += dy.rowwise().sum();
            }
        });
}

namespace {

// [C*9, H*W] patch matrix for one image, zero padded.
template <class T>
void im2col3x3(const T* x, int C, int H, int W, T* cols) {
    const std::size_t P = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                T* row = cols + ((c * 3 + ky) * 3 + kx) * P;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + ky - 1;
                    for (int xx = 0; xx < W; ++xx) {
                        const int sx = xx + kx - 1;
                        row[y * W + xx] = (sy < 0 || sy >= H || sx < 0 || sx >= W) ? T(0) : x[(c * H + sy) * W + sx];
                    }
                }
            }
}

template <class T>
void col2im3x3(const T* cols, int C, int H, int W, T* dx) {
    const std::size_t P = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = cols + ((c * 3 + ky) * 3 + kx) * P;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= H) continue;
                    for (int xx = 0; xx < W; ++xx) {
                        const int sx = xx + kx - 1;
                        if (sx >= 0 && sx < W) dx[(c * H + sy) * W + sx] += row[y * W + xx];
                    }
                }
            }
}

}  // namespace

template <class T>
BasicTensor<T> conv3x3(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias) {
    require_rank4(x, "conv3x3");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (w.rank() != 4 || w.dim(1) != C || w.dim(2) != 3 || w.dim(3) != 3)
        throw ShapeError("conv3x3: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    const int O = w.dim(0);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != O))
        throw ShapeError("conv3x3: bias " + shape_str(bias.shape()) + " for weight " + shape_str(w.shape()));
    const std::size_t P = static_cast<std::size_t>(H) * W;
    const int K = C * 9;
    Buffer<T> cols(static_cast<std::size_t>(B) * K * P);
    Buffer<T> out(static_cast<std::size_t>(B) * O * P);
    CMap<T> wm(w.ptr(), O, K);
    for (int b = 0; b < B; ++b) {
        T* cb = cols.data() + b * K * P;
        im2col3x3(x.ptr() + b * C * P, C, H, W, cb);
        MMap<T> y(out.data() + b * O * P, O, P);
        y.noalias() = wm * CMap<T>(cb, K, P);
        if (bias.defined()) y.colwise() += CVec<T>(bias.ptr(), O);
    }
    auto ix = x.shared();
    auto iw = w.shared();
    auto ibias = bias.defined() ? bias.shared() : nullptr;
    return detail::make_result<T>(
        Shape{B, O, H, W}, std::move(out), {&x, &w, &bias},
        [ix, iw, ibias, cols = std::move(cols), B, C, H, W, O, K, P](const TensorImpl<T>& o) {
            CMap<T> wm(iw->data.data(), O, K);
            Buffer<T> dcols;
            if (ix->requires_grad) dcols.resize(static_cast<std::size_t>(K) * P);
            for (int b = 0; b < B; ++b) {
                CMap<T> dy(o.grad.data() + b * O * P, O, P);
                if (iw->requires_grad)
                    MMap<T>(detail::grad_buffer(*iw).data(), O, K).noalias() +=
                        dy * CMap<T>(cols.data() + b * K * P, K, P).transpose();
                if (ibias && ibias->requires_grad)
                    MVec<T>(detail::grad_buffer(*ibias).data(), O) += dy.rowwise().sum();
                if (ix->requires_grad) {
                    MMap<T>(dcols.data(), K, P).noalias() = wm.transpose() * dy;
                    col2im3x3(dcols.data(), C, H, W, detail::grad_buffer(*ix).data() + b * C * P);
                }
            }
        });
}

template <class T>
BasicTensor<T> conv_depthwise3x3(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias) {
    require_rank4(x, "conv_depthwise3x3");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (w.rank() != 3 || w.dim(0) != C || w.dim(1) != 3 || w.dim(2) != 3)
        throw ShapeError("conv_depthwise3x3: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != C))
        throw ShapeError("conv_depthwise3x3: bias " + shape_str(bias.shape()) + " for " + shape_str(x.shape()));
    const std::size_t P = static_cast<std::size_t>(H) * W;
    Buffer<T> out(x.numel(), T(0));
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* src = x.ptr() + (b * C + c) * P;
            T* dst = out.data() + (b * C + c) * P;
            const T* k = w.ptr() + c * 9;
            if (bias.defined()) std::fill(dst, dst + P, bias.ptr()[c]);
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const T kv = k[ky * 3 + kx];
                    const int dy = ky - 1, dx = kx - 1;
                    const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                    for (int y = y0; y < y1; ++y) {
                        T* drow = dst + y * W;
                        const T* srow = src + (y + dy) * W + dx;
                        for (int xx = x0; xx < x1; ++xx) drow[xx] += kv * srow[xx];
                    }
                }
        }
    auto ix = x.shared();
    auto iw = w.shared();
    auto ibias = bias.defined() ? bias.shared() : nullptr;
    return detail::make_result<T>(
        x.shape(), std::move(out), {&x, &w, &bias}, [ix, iw, ibias, B, C, H, W, P](const TensorImpl<T>& o) {
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const T* g = o.grad.data() + (b * C + c) * P;
                    const T* src = ix->data.data() + (b * C + c) * P;
                    const T* k = iw->data.data() + c * 9;
                    if (ibias && ibias->requires_grad) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < P; ++i) acc += g[i];
                        detail::grad_buffer(*ibias)[c] += static_cast<T>(acc);
                    }
                    T* gx = ix->requires_grad ? detail::grad_buffer(*ix).data() + (b * C + c) * P : nullptr;
                    T* gw = iw->requires_grad ? detail::grad_buffer(*iw).data() + c * 9 : nullptr;
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int dy = ky - 1, dx = kx - 1;
                            const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                            const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                            const T kv = k[ky * 3 + kx];
                            T acc = T(0);
                            for (int y = y0; y < y1; ++y) {
                                const T* grow = g + y * W;
                                const T* srow = src + (y + dy) * W + dx;
                                if (gx) {
                                    T* xrow = gx + (y + dy) * W + dx;
                                    for (int xx = x0; xx < x1; ++xx) xrow[xx] += kv * grow[xx];
                                }
                                if (gw)
                                    for (int xx = x0; xx < x1; ++xx) acc += grow[xx] * srow[xx];
                            }
                            if (gw) gw[ky * 3 + kx] += acc;
                        }
                }
        });
}

#define RESTORE_INSTANTIATE(T)                                                                           \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                       \
    template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> conv_pointwise(const BasicTensor<T>&, const BasicTensor<T>&,                \
                                           const BasicTensor<T>&);                                      \
    template BasicTensor<T> conv3x3(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> conv_depthwise3x3(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                              const BasicTensor<T>&);

RESTORE_INSTANTIATE(float)
RESTORE_INSTANTIATE(double)

}  // namespace restore
