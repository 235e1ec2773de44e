#pragma once

#include <vector>

#include "restore/adec.hpp"

namespace restore {

struct LossWeights {
    double lambda1 = 0.01;  // balance
    double lambda2 = 0.1;   // frequency
    double charb_eps = 1e-3;
    double balance_eps = 1e-8;
    bool cv_squared = false;  // var/mean^2 instead of sd/mean^2

    void validate() const;
};

/// Components are one-element tensors so `total` can be backpropagated.
template <class T>
struct LossReport {
    BasicTensor<T> charbonnier, balance, fft, total;
};

/// mean of sqrt(r^2 + eps^2) over all elements.
template <class T>
BasicTensor<T> charbonnier(const BasicTensor<T>& pred, const BasicTensor<T>& target, double eps);

/// sd(W)/(mean(W)^2+eps) + sd(S)/(mean(S)^2+eps); only the W term has a gradient.
template <class T>
BasicTensor<T> balance_loss(const RoutingStats<T>& stats, double eps, bool squared = false);

/// mean |[Re; Im]| of fft2(pred) - fft2(target).
template <class T>
BasicTensor<T> fft_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

/// Balance terms of all routing layers are summed.
template <class T>
LossReport<T> total_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                         const std::vector<RoutingStats<T>>& stats, const LossWeights& w);

}  // namespace restore
