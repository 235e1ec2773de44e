#include <algorithm>
#include <cmath>

#include "restore/ops.hpp"

namespace restore {

template <class T>
BasicTensor<T> softmax_axis(const BasicTensor<T>& x, int axis) {
    const int rank = x.rank();
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank)
        throw ShapeError("softmax_axis: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < a; ++i) outer *= static_cast<std::size_t>(x.dim(i));
    for (int i = a + 1; i < rank; ++i) inner *= static_cast<std::size_t>(x.dim(i));
    const std::size_t n = static_cast<std::size_t>(x.dim(a));
    Buffer<T> out(x.numel());
    const T* xv = x.ptr();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * n * inner + i;
            T mx = xv[base];
            for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const T e = std::exp(xv[base + k * inner] - mx);
                out[base + k * inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < n; ++k)
                out[base + k * inner] = static_cast<T>(out[base + k * inner] / z);
        }
    auto in = x.shared();
    return detail::make_result<T>(x.shape(), std::move(out), {&x}, [in, outer, inner, n](const TensorImpl<T>& o) {
        auto gx = detail::grad_buffer(*in);
        for (std::size_t ob = 0; ob < outer; ++ob)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t base = ob * n * inner + i;
                double dot = 0.0;
                for (std::size_t k = 0; k < n; ++k)
                    dot += static_cast<double>(o.grad[base + k * inner]) * o.data[base + k * inner];
                for (std::size_t k = 0; k < n; ++k) {
                    const std::size_t j = base + k * inner;
                    gx[j] += static_cast<T>(o.data[j] * (o.grad[j] - dot));
                }
            }
    });
}

template <class T>
BasicTensor<T> layernorm_channel(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                 T eps) {
    if (x.rank() != 4) throw ShapeError("layernorm_channel: expected [B,C,H,W], got " + shape_str(x.shape()));
    const int B = x.dim(0), C = x.dim(1);
    if (gamma.numel() != static_cast<std::size_t>(C) || beta.numel() != static_cast<std::size_t>(C))
        throw ShapeError("layernorm_channel: affine " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                         " for " + shape_str(x.shape()));
    const std::size_t P = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Buffer<T> out(x.numel());
    Buffer<T> xhat(x.numel());
    Buffer<T> inv_std(static_cast<std::size_t>(B) * P);
    std::vector<double> mu(P), var(P);
    for (int b = 0; b < B; ++b) {
        const T* xb = x.ptr() + b * C * P;
        std::fill(mu.begin(), mu.end(), 0.0);
        std::fill(var.begin(), var.end(), 0.0);
        for (int c = 0; c < C; ++c)
            for (std::size_t p = 0; p < P; ++p) mu[p] += xb[c * P + p];
        for (std::size_t p = 0; p < P; ++p) mu[p] /= C;
        for (int c = 0; c < C; ++c)
            for (std::size_t p = 0; p < P; ++p) {
                const double d = xb[c * P + p] - mu[p];
                var[p] += d * d;
            }
        T* ib = inv_std.data() + b * P;
        for (std::size_t p = 0; p < P; ++p) ib[p] = static_cast<T>(1.0 / std::sqrt(var[p] / C + eps));
        for (int c = 0; c < C; ++c) {
            const T g = gamma.ptr()[c], be = beta.ptr()[c];
            for (std::size_t p = 0; p < P; ++p) {
                const std::size_t j = (static_cast<std::size_t>(b) * C + c) * P + p;
                xhat[j] = static_cast<T>((xb[c * P + p] - mu[p]) * ib[p]);
                out[j] = g * xhat[j] + be;
            }
        }
    }
    auto ix = x.shared();
    auto ig = gamma.shared();
    auto ibeta = beta.shared();
    return detail::make_result<T>(
        x.shape(), std::move(out), {&x, &gamma, &beta},
        [ix, ig, ibeta, xhat = std::move(xhat), inv_std = std::move(inv_std), B, C, P](const TensorImpl<T>& o) {
            std::vector<double> m1(P), m2(P);
            for (int b = 0; b < B; ++b) {
                const std::size_t off = static_cast<std::size_t>(b) * C * P;
                const T* g = o.grad.data() + off;
                const T* xh = xhat.data() + off;
                if (ig->requires_grad || ibeta->requires_grad) {
                    for (int c = 0; c < C; ++c) {
                        double sg = 0.0, sgx = 0.0;
                        for (std::size_t p = 0; p < P; ++p) {
                            sg += g[c * P + p];
                            sgx += static_cast<double>(g[c * P + p]) * xh[c * P + p];
                        }
                        if (ig->requires_grad) detail::grad_buffer(*ig)[c] += static_cast<T>(sgx);
                        if (ibeta->requires_grad) detail::grad_buffer(*ibeta)[c] += static_cast<T>(sg);
                    }
                }
                if (!ix->requires_grad) continue;
                std::fill(m1.begin(), m1.end(), 0.0);
                std::fill(m2.begin(), m2.end(), 0.0);
                for (int c = 0; c < C; ++c) {
                    const T gm = ig->data[c];
                    for (std::size_t p = 0; p < P; ++p) {
                        const double d = static_cast<double>(g[c * P + p]) * gm;
                        m1[p] += d;
                        m2[p] += d * xh[c * P + p];
                    }
                }
                T* gx = detail::grad_buffer(*ix).data() + off;
                const T* ib = inv_std.data() + b * P;
                for (int c = 0; c < C; ++c) {
                    const T gm = ig->data[c];
                    for (std::size_t p = 0; p < P; ++p) {
                        const double d = static_cast<double>(g[c * P + p]) * gm;
                        gx[c * P + p] += static_cast<T>(ib[p] * (d - m1[p] / C - xh[c * P + p] * m2[p] / C));
                    }
                }
            }
        });
}

template <class T>
BasicTensor<T> l2_normalize_last(const BasicTensor<T>& x, T eps) {
    const std::size_t L = static_cast<std::size_t>(x.dim(-1));
    const std::size_t rows = x.numel() / L;
    Buffer<T> out(x.numel());
    Buffer<T> norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.ptr() + r * L;
        double ss = 0.0;
        for (std::size_t i = 0; i < L; ++i) ss += static_cast<double>(xr[i]) * xr[i];
        norms[r] = static_cast<T>(std::sqrt(ss));
        const T d = std::max(norms[r], eps);
        for (std::size_t i = 0; i < L; ++i) out[r * L + i] = xr[i] / d;
    }
    auto in = x.shared();
    return detail::make_result<T>(x.shape(), std::move(out), {&x},
                                  [in, norms = std::move(norms), rows, L, eps](const TensorImpl<T>& o) {
                                      auto gx = detail::grad_buffer(*in);
                                      for (std::size_t r = 0; r < rows; ++r) {
                                          const T* g = o.grad.data() + r * L;
                                          const T* y = o.data.data() + r * L;
                                          if (norms[r] <= eps) {
                                              for (std::size_t i = 0; i < L; ++i) gx[r * L + i] += g[i] / eps;
                                              continue;
                                          }
                                          double dot = 0.0;
                                          for (std::size_t i = 0; i < L; ++i) dot += static_cast<double>(g[i]) * y[i];
                                          for (std::size_t i = 0; i < L; ++i)
                                              gx[r * L + i] += static_cast<T>((g[i] - y[i] * dot) / norms[r]);
                                      }
                                  });
}

template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& target) {
    if (logits.rank() != 2 || logits.shape() != target.shape())
        throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs target " +
                         shape_str(target.shape()));
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    Buffer<T> probs(B * K);
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const T* z = logits.ptr() + b * K;
        const T mx = *std::max_element(z, z + K);
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += std::exp(static_cast<double>(z[k] - mx));
        const double log_z = std::log(s) + mx;
        for (std::size_t k = 0; k < K; ++k) {
            probs[b * K + k] = static_cast<T>(std::exp(z[k] - log_z));
            loss -= static_cast<double>(target.ptr()[b * K + k]) * (z[k] - log_z);
        }
    }
    auto il = logits.shared();
    auto it = target.shared();
    return detail::make_result<T>(Shape{1}, {static_cast<T>(loss / B)}, {&logits},
                                  [il, it, probs = std::move(probs), B, K](const TensorImpl<T>& o) {
                                      auto g = detail::grad_buffer(*il);
                                      const T go = o.grad[0] / static_cast<T>(B);
                                      for (std::size_t b = 0; b < B; ++b) {
                                          T tsum = 0;
                                          for (std::size_t k = 0; k < K; ++k) tsum += it->data[b * K + k];
                                          for (std::size_t k = 0; k < K; ++k)
                                              g[b * K + k] += go * (tsum * probs[b * K + k] - it->data[b * K + k]);
                                      }
                                  });
}

template <class T>
BasicTensor<T> dispersion(const BasicTensor<T>& v, T eps, bool squared) {
    const std::size_t n = v.numel();
    if (n == 0) throw ShapeError("dispersion: empty sequence");
    double mu = 0.0;
    for (T x : v.data()) mu += x;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (T x : v.data()) var += (x - mu) * (x - mu);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    const double denom = mu * mu + static_cast<double>(eps);
    const double spread = squared ? var : sd;
    auto in = v.shared();
    return detail::make_result<T>(
        Shape{1}, {static_cast<T>(spread / denom)}, {&v}, [in, mu, sd, denom, spread, n, squared](const TensorImpl<T>& o) {
            auto g = detail::grad_buffer(*in);
            const double go = o.grad[0];
            const double nn = static_cast<double>(n);
            // d(mean)/dv_i = 1/n for every i.
            const double d_denom = -spread * 2.0 * mu / (nn * denom * denom);
            for (std::size_t i = 0; i < n; ++i) {
                const double dev = in->data[i] - mu;
                double d_spread = 0.0;
                if (squared)
                    d_spread = 2.0 * dev / nn;
                else if (sd > 0.0)
                    d_spread = dev / (nn * sd);
                g[i] += static_cast<T>(go * (d_spread / denom + d_denom));
            }
        });
}

#define RESTORE_INSTANTIATE(T)                                                                      \
    template BasicTensor<T> softmax_axis(const BasicTensor<T>&, int);                              \
    template BasicTensor<T> layernorm_channel(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                              const BasicTensor<T>&, T);                           \
    template BasicTensor<T> l2_normalize_last(const BasicTensor<T>&, T);                           \
    template BasicTensor<T> cross_entropy(const BasicTensor<T>&, const BasicTensor<T>&);           \
    template BasicTensor<T> dispersion(const BasicTensor<T>&, T, bool);

RESTORE_INSTANTIATE(float)
RESTORE_INSTANTIATE(double)

}  // namespace restore
