#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "restore/tensor.hpp"

namespace restore {

/// Largest |analytic - central difference| / (|analytic| + 1e-8) over the
/// coordinates of `x`, where `f` maps x to a one-element tensor. Restores
/// x's values and clears its grad before returning.
template <class T>
double finite_diff_check(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f, BasicTensor<T> x,
                         double h = 1e-3) {
    const bool had_flag = x.requires_grad();
    x.set_requires_grad(true);
    x.zero_grad();
    Tape<T>::current().clear();
    backward(f(x));
    const std::vector<T> analytic(x.grad().begin(), x.grad().end());
    x.zero_grad();

    double worst = 0.0;
    {
        NoGradGuard no_grad;
        auto values = x.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const T saved = values[i];
            // Divide by the step actually stored, which differs from 2h at f32.
            const T plus = static_cast<T>(saved + h);
            const T minus = static_cast<T>(saved - h);
            values[i] = plus;
            const double up = f(x).item();
            values[i] = minus;
            const double down = f(x).item();
            values[i] = saved;
            const double numeric = (up - down) / (static_cast<double>(plus) - static_cast<double>(minus));
            const double a = analytic[i];
            worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + 1e-8));
        }
    }
    x.set_requires_grad(had_flag);
    return worst;
}

}  // namespace restore
