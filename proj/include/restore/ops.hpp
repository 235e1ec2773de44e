#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "restore/tensor.hpp"

// Differentiable primitives. Every function is instantiated for float and
// double; each records a backward rule when an input requires grad.

namespace restore {

enum class UnaryKind { sigmoid, gelu, sqrt_eps, abs };

/// sqrt_eps computes sqrt(v + eps^2); `eps` is ignored by the other kinds.
template <class T>
BasicTensor<T> unary_map(const BasicTensor<T>& x, UnaryKind kind, T eps = T(0));

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
    return unary_map(x, UnaryKind::sigmoid);
}
template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
    return unary_map(x, UnaryKind::gelu);
}

// Same-shape elementwise arithmetic.
template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

/// `b` has the rank of `a`; each of its dims equals a's or is 1.
template <class T>
BasicTensor<T> add_broadcast(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> mul_broadcast(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Full reductions to a one-element tensor; accumulation is in double.
template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x);

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
template <class T>
BasicTensor<T> transpose_last2(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis);
template <class T>
BasicTensor<T> slice(const BasicTensor<T>& x, int axis, int start, int length);

/// Batched product [.., m, k] x [.., k, n]; batch dims broadcast numpy-style.
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x [.., in] times w [out, in] transposed, plus optional bias [out].
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w,
                      const BasicTensor<T>& bias = {});

/// 1x1 convolution: x [B,C,H,W], w [Cout,C], optional bias [Cout].
template <class T>
BasicTensor<T> conv_pointwise(const BasicTensor<T>& x, const BasicTensor<T>& w,
                              const BasicTensor<T>& bias = {});

/// Per-channel 3x3 convolution, zero padding 1, stride 1. w [C,3,3].
template <class T>
BasicTensor<T> conv_depthwise3x3(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                 const BasicTensor<T>& bias = {});

/// Dense 3x3 convolution, zero padding 1, stride 1. w [Cout,C,3,3].
template <class T>
BasicTensor<T> conv3x3(const BasicTensor<T>& x, const BasicTensor<T>& w,
                       const BasicTensor<T>& bias = {});

template <class T>
BasicTensor<T> softmax_axis(const BasicTensor<T>& x, int axis);

/// Normalizes every pixel of [B,C,H,W] over its channels, then applies the
/// per-channel affine gamma/beta.
template <class T>
BasicTensor<T> layernorm_channel(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                 const BasicTensor<T>& beta, T eps = T(1e-5));

/// x / max(||x||, eps) along the last axis.
template <class T>
BasicTensor<T> l2_normalize_last(const BasicTensor<T>& x, T eps = T(1e-12));

/// 2-D DFT of every [H,W] plane; H and W must be powers of two.
template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> fft2(const BasicTensor<T>& x);

/// [B,C,H,W] -> [B,C*r*r,H/r,W/r]; output channel c*r*r + dy*r + dx.
template <class T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& x, int r);
template <class T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& x, int r);

/// [B,C,H,W] -> [B,C] spatial mean.
template <class T>
BasicTensor<T> mean_spatial(const BasicTensor<T>& x);

/// [B,C,H,W] -> [C], summing over batch and space.
template <class T>
BasicTensor<T> sum_per_channel(const BasicTensor<T>& x);

/// out.flat[i] = x.flat[index[i]]; out has `shape` with numel == index.size().
template <class T>
BasicTensor<T> gather_flat(const BasicTensor<T>& x, std::vector<std::size_t> index, Shape shape);

/// Zeros of `shape` with out.flat[index[i]] += src.flat[i].
template <class T>
BasicTensor<T> scatter_add_flat(const BasicTensor<T>& src, std::vector<std::size_t> index,
                                Shape shape);

/// Mean over rows of -sum_k target[b,k] * log softmax(logits)[b,k]; both [B,K].
template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& target);

/// Dispersion of a 1-D sequence: sd / (mean^2 + eps), or var / (mean^2 + eps)
/// when `squared`. Population statistics; zero spread gives zero gradient.
template <class T>
BasicTensor<T> dispersion(const BasicTensor<T>& v, T eps, bool squared);

}  // namespace restore
