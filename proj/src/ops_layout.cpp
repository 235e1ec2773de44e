#include <algorithm>

#include "restore/ops.hpp"

namespace restore {

namespace {

int normalize_axis(int axis, int rank, const char* op) {
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank)
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for rank " +
                         std::to_string(rank));
    return a;
}

// Sizes of the dims before, at, and after `axis`.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
    AxisSplit r;
    for (int i = 0; i < axis; ++i) r.outer *= static_cast<std::size_t>(s[i]);
    r.extent = static_cast<std::size_t>(s[axis]);
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= static_cast<std::size_t>(s[i]);
    return r;
}

template <class T>
void require_rank4(const BasicTensor<T>& x, const char* op) {
    if (x.rank() != 4) throw ShapeError(std::string(op) + ": expected [B,C,H,W], got " + shape_str(x.shape()));
}

}  // namespace

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    auto in = x.shared();
    return detail::make_result<T>(std::move(shape), Buffer<T>(x.data().begin(), x.data().end()), {&x},
                                  [in](const TensorImpl<T>& o) {
                                      auto g = detail::grad_buffer(*in);
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                                  });
}

template <class T>
BasicTensor<T> transpose_last2(const BasicTensor<T>& x) {
    if (x.rank() < 2) throw ShapeError("transpose_last2: rank < 2 in " + shape_str(x.shape()));
    const std::size_t m = x.dim(-2), n = x.dim(-1);
    const std::size_t batch = x.numel() / (m * n);
    Shape shape = x.shape();
    std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
    Buffer<T> out(x.numel());
    const T* xv = x.ptr();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out[b * m * n + j * m + i] = xv[b * m * n + i * n + j];
    auto in = x.shared();
    return detail::make_result<T>(std::move(shape), std::move(out), {&x}, [in, batch, m, n](const TensorImpl<T>& o) {
        auto g = detail::grad_buffer(*in);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[b * m * n + i * n + j] += o.grad[b * m * n + j * m + i];
    });
}

template <class T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int rank = parts.front().rank();
    axis = normalize_axis(axis, rank, "concat");
    Shape shape = parts.front().shape();
    shape[axis] = 0;
    for (const auto& p : parts) {
        Shape a = p.shape(), b = parts.front().shape();
        a[axis] = b[axis] = 0;
        if (a != b)
            throw ShapeError("concat: incompatible " + shape_str(parts.front().shape()) + " and " +
                             shape_str(p.shape()));
        shape[axis] += p.dim(axis);
    }
    const AxisSplit total = split_at(shape, axis);
    Buffer<T> out(shape_numel(shape));
    std::vector<std::size_t> starts;
    std::size_t start = 0;
    for (const auto& p : parts) {
        starts.push_back(start);
        const std::size_t chunk = static_cast<std::size_t>(p.dim(axis)) * total.inner;
        for (std::size_t o = 0; o < total.outer; ++o)
            std::copy_n(p.ptr() + o * chunk, chunk, out.begin() + o * total.extent * total.inner + start * total.inner);
        start += static_cast<std::size_t>(p.dim(axis));
    }
    std::vector<std::shared_ptr<TensorImpl<T>>> ins;
    for (const auto& p : parts) ins.push_back(p.shared());

    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    auto result = detail::make_result<T>(std::move(shape), std::move(out), {}, {});
    if (any && GradMode::enabled()) {
        result.set_requires_grad(true);
        typename Tape<T>::Node node;
        node.inputs = ins;
        node.output = result.shared();
        node.backward = [ins, starts, total](const TensorImpl<T>& o) {
            for (std::size_t k = 0; k < ins.size(); ++k) {
                if (!ins[k]->requires_grad) continue;
                auto g = detail::grad_buffer(*ins[k]);
                const std::size_t chunk = g.size() / total.outer;
                for (std::size_t b = 0; b < total.outer; ++b) {
                    const T* src = o.grad.data() + b * total.extent * total.inner + starts[k] * total.inner;
                    for (std::size_t i = 0; i < chunk; ++i) g[b * chunk + i] += src[i];
                }
            }
        };
        Tape<T>::current().record(std::move(node));
    }
    return result;
}

template <class T>
BasicTensor<T> slice(const BasicTensor<T>& x, int axis, int start, int length) {
    axis = normalize_axis(axis, x.rank(), "slice");
    if (start < 0 || length <= 0 || start + length > x.dim(axis))
        throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis of " + shape_str(x.shape()));
    const AxisSplit s = split_at(x.shape(), axis);
    Shape shape = x.shape();
    shape[axis] = length;
    const std::size_t chunk = static_cast<std::size_t>(length) * s.inner;
    Buffer<T> out(s.outer * chunk);
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(x.ptr() + o * s.extent * s.inner + start * s.inner, chunk, out.begin() + o * chunk);
    auto in = x.shared();
    return detail::make_result<T>(std::move(shape), std::move(out), {&x},
                                  [in, s, chunk, start](const TensorImpl<T>& o) {
                                      auto g = detail::grad_buffer(*in);
                                      for (std::size_t b = 0; b < s.outer; ++b) {
                                          T* dst = g.data() + b * s.extent * s.inner + start * s.inner;
                                          const T* src = o.grad.data() + b * chunk;
                                          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                                      }
                                  });
}

template <class T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& x, int r) {
    require_rank4(x, "pixel_unshuffle");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (r < 1 || H % r || W % r)
        throw ShapeError("pixel_unshuffle: " + shape_str(x.shape()) + " not divisible by " + std::to_string(r));
    const int h = H / r, w = W / r;
    // Index map from output position to input position, shared by both passes.
    std::vector<std::size_t> src(x.numel());
    std::size_t k = 0;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx)
                    for (int y = 0; y < h; ++y)
                        for (int xx = 0; xx < w; ++xx)
                            src[k++] = ((static_cast<std::size_t>(b) * C + c) * H + (y * r + dy)) * W + (xx * r + dx);
    Buffer<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.ptr()[src[i]];
    auto in = x.shared();
    return detail::make_result<T>(Shape{B, C * r * r, h, w}, std::move(out), {&x},
                                  [in, src = std::move(src)](const TensorImpl<T>& o) {
                                      auto g = detail::grad_buffer(*in);
                                      for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += o.grad[i];
                                  });
}

template <class T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& x, int r) {
    require_rank4(x, "pixel_shuffle");
    const int B = x.dim(0), C4 = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (r < 1 || C4 % (r * r))
        throw ShapeError("pixel_shuffle: channels of " + shape_str(x.shape()) + " not divisible by " +
                         std::to_string(r * r));
    const int C = C4 / (r * r), H = h * r, W = w * r;
    // dst[i] is the output position fed by input element i.
    std::vector<std::size_t> dst(x.numel());
    std::size_t k = 0;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx)
                    for (int y = 0; y < h; ++y)
                        for (int xx = 0; xx < w; ++xx)
                            dst[k++] = ((static_cast<std::size_t>(b) * C + c) * H + (y * r + dy)) * W + (xx * r + dx);
    Buffer<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[dst[i]] = x.ptr()[i];
    auto in = x.shared();
    return detail::make_result<T>(Shape{B, C, H, W}, std::move(out), {&x},
                                  [in, dst = std::move(dst)](const TensorImpl<T>& o) {
                                      auto g = detail::grad_buffer(*in);
                                      for (std::size_t i = 0; i < dst.size(); ++i) g[i] += o.grad[dst[i]];
                                  });
}

template <class T>
BasicTensor<T> mean_spatial(const BasicTensor<T>& x) {
    require_rank4(x, "mean_spatial");
    const std::size_t planes = static_cast<std::size_t>(x.dim(0)) * x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Buffer<T> out(planes);
    for (std::size_t p = 0; p < planes; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += x.ptr()[p * hw + i];
        out[p] = static_cast<T>(acc / static_cast<double>(hw));
    }
    auto in = x.shared();
    return detail::make_result<T>(Shape{x.dim(0), x.dim(1)}, std::move(out), {&x},
                                  [in, planes, hw](const TensorImpl<T>& o) {
                                      auto g = detail::grad_buffer(*in);
                                      for (std::size_t p = 0; p < planes; ++p) {
                                          const T v = o.grad[p] / static_cast<T>(hw);
                                          for (std::size_t i = 0; i < hw; ++i) g[p * hw + i] += v;
                                      }
                                  });
}

template <class T>
BasicTensor<T> sum_per_channel(const BasicTensor<T>& x) {
    require_rank4(x, "sum_per_channel");
    const std::size_t B = x.dim(0), C = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Buffer<T> out(C);
    for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < hw; ++i) acc += x.ptr()[(b * C + c) * hw + i];
        out[c] = static_cast<T>(acc);
    }
    auto in = x.shared();
    return detail::make_result<T>(Shape{static_cast<int>(C)}, std::move(out), {&x},
                                  [in, B, C, hw](const TensorImpl<T>& o) {
                                      auto g = detail::grad_buffer(*in);
                                      for (std::size_t b = 0; b < B; ++b)
                                          for (std::size_t c = 0; c < C; ++c)
                                              for (std::size_t i = 0; i < hw; ++i)
                                                  g[(b * C + c) * hw + i] += o.grad[c];
                                  });
}

template <class T>
BasicTensor<T> gather_flat(const BasicTensor<T>& x, std::vector<std::size_t> index, Shape shape) {
    if (shape_numel(shape) != index.size())
        throw ShapeError("gather_flat: " + std::to_string(index.size()) + " indices for shape " + shape_str(shape));
    Buffer<T> out(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= x.numel()) throw std::out_of_range("gather_flat: index out of range");
        out[i] = x.ptr()[index[i]];
    }
    auto in = x.shared();
    return detail::make_result<T>(std::move(shape), std::move(out), {&x},
                                  [in, index = std::move(index)](const TensorImpl<T>& o) {
                                      auto g = detail::grad_buffer(*in);
                                      for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += o.grad[i];
                                  });
}

template <class T>
BasicTensor<T> scatter_add_flat(const BasicTensor<T>& src, std::vector<std::size_t> index, Shape shape) {
    if (src.numel() != index.size())
        throw ShapeError("scatter_add_flat: " + std::to_string(index.size()) + " indices for " +
                         shape_str(src.shape()));
    Buffer<T> out(shape_numel(shape), T(0));
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= out.size()) throw std::out_of_range("scatter_add_flat: index out of range");
        out[index[i]] += src.ptr()[i];
    }
    auto in = src.shared();
    return detail::make_result<T>(std::move(shape), std::move(out), {&src},
                                  [in, index = std::move(index)](const TensorImpl<T>& o) {
                                      auto g = detail::grad_buffer(*in);
                                      for (std::size_t i = 0; i < index.size(); ++i) g[i] += o.grad[index[i]];
                                  });
}

#define RESTORE_INSTANTIATE(T)                                                                        \
    template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                   \
    template BasicTensor<T> transpose_last2(const BasicTensor<T>&);                                  \
    template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, int);                         \
    template BasicTensor<T> slice(const BasicTensor<T>&, int, int, int);                             \
    template BasicTensor<T> pixel_unshuffle(const BasicTensor<T>&, int);                             \
    template BasicTensor<T> pixel_shuffle(const BasicTensor<T>&, int);                               \
    template BasicTensor<T> mean_spatial(const BasicTensor<T>&);                                     \
    template BasicTensor<T> sum_per_channel(const BasicTensor<T>&);                                  \
    template BasicTensor<T> gather_flat(const BasicTensor<T>&, std::vector<std::size_t>, Shape);     \
    template BasicTensor<T> scatter_add_flat(const BasicTensor<T>&, std::vector<std::size_t>, Shape);

RESTORE_INSTANTIATE(float)
RESTORE_INSTANTIATE(double)

}  // namespace restore
