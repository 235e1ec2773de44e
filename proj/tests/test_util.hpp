#pragma once

#include <functional>
#include <random>
#include <vector>

#include "restore/gradcheck.hpp"
#include "restore/ops.hpp"

namespace restore::testing {

template <class T>
BasicTensor<T> random_tensor(Shape shape, unsigned seed, double scale = 1.0, double offset = 0.0) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(offset + scale * dist(rng));
    return BasicTensor<T>(std::move(shape), std::move(v));
}

template <class T>
BasicTensor<T> uniform_tensor(Shape shape, unsigned seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return BasicTensor<T>(std::move(shape), std::move(v));
}

/// Scalar probe sum(out * r) with fixed random weights r, so that outputs with
/// constrained sums (softmax, normalization) still have informative gradients.
template <class T>
BasicTensor<T> weighted_sum(const BasicTensor<T>& out, unsigned seed) {
    return sum(mul(out, random_tensor<T>(out.shape(), seed + 7919)));
}

/// Step for f64 checks; at 1e-3 the O(h^2) truncation term alone reaches the
/// tolerance on coordinates with small gradients.
constexpr double kStepF64 = 1e-4;

/// Gradient check of `op` with respect to `x` through a random weighted sum.
inline double check_op(const std::function<BasicTensor<double>(const BasicTensor<double>&)>& op,
                       BasicTensor<double> x, unsigned seed) {
    return finite_diff_check<double>(
        [&](const BasicTensor<double>& in) { return weighted_sum(op(in), seed); }, x, kStepF64);
}

constexpr double kGradTol = 1e-3;
constexpr unsigned kSeeds[] = {1u, 2u, 3u};

}  // namespace restore::testing
