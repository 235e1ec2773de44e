#include "restore/losses.hpp"

#include "restore/ops.hpp"

namespace restore {

void LossWeights::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || charb_eps < 0 || balance_eps < 0)
        throw std::invalid_argument("loss weights must be nonnegative");
}

template <class T>
BasicTensor<T> charbonnier(const BasicTensor<T>& pred, const BasicTensor<T>& target, double eps) {
    if (pred.shape() != target.shape())
        throw ShapeError("charbonnier: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    auto r = sub(pred, target);
    return mean(unary_map(mul(r, r), UnaryKind::sqrt_eps, static_cast<T>(eps)));
}

template <class T>
BasicTensor<T> balance_loss(const RoutingStats<T>& stats, double eps, bool squared) {
    if (stats.experts() == 0) throw std::invalid_argument("balance_loss: no experts");
    std::vector<T> s(stats.s_totals.begin(), stats.s_totals.end());
    const BasicTensor<T> counts({stats.experts()}, std::move(s));
    return add(dispersion(stats.w_totals, static_cast<T>(eps), squared),
               dispersion(counts, static_cast<T>(eps), squared));
}

template <class T>
BasicTensor<T> fft_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("fft_loss: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    // The transform is linear, so one transform of the residual suffices.
    auto [re, im] = fft2(sub(pred, target));
    return mean(unary_map(concat(std::vector{re, im}, 1), UnaryKind::abs));
}

template <class T>
LossReport<T> total_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                         const std::vector<RoutingStats<T>>& stats, const LossWeights& w) {
    w.validate();
    LossReport<T> r;
    r.charbonnier = charbonnier(pred, target, w.charb_eps);
    r.fft = fft_loss(pred, target);
    r.balance = BasicTensor<T>({1}, T(0));
    for (const auto& s : stats) r.balance = add(r.balance, balance_loss(s, w.balance_eps, w.cv_squared));
    r.total = add(add(r.charbonnier, scale(r.balance, static_cast<T>(w.lambda1))),
                  scale(r.fft, static_cast<T>(w.lambda2)));
    return r;
}

#define RESTORE_INSTANTIATE(T)                                                                         \
    template BasicTensor<T> charbonnier(const BasicTensor<T>&, const BasicTensor<T>&, double);        \
    template BasicTensor<T> balance_loss(const RoutingStats<T>&, double, bool);                        \
    template BasicTensor<T> fft_loss(const BasicTensor<T>&, const BasicTensor<T>&);                    \
    template LossReport<T> total_loss(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                      const std::vector<RoutingStats<T>>&, const LossWeights&);

RESTORE_INSTANTIATE(float)
RESTORE_INSTANTIATE(double)

}  // namespace restore
