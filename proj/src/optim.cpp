#include "restore/optim.hpp"

#include <cmath>
#include <numbers>

namespace restore {

AdamW::AdamW(ParameterList<float> params, Options opt) : params_(std::move(params)), opt_(opt) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0f);
        v_.emplace_back(p.tensor.numel(), 0.0f);
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& tensor = params_[k].tensor;
        auto w = tensor.data();
        if (!tensor.has_grad()) {
            // Unused this step: only the decay applies, moments keep decaying.
            for (std::size_t i = 0; i < w.size(); ++i) {
                m_[k][i] = static_cast<float>(opt_.beta1 * m_[k][i]);
                v_[k][i] = static_cast<float>(opt_.beta2 * v_[k][i]);
            }
        } else {
            auto g = tensor.grad();
            for (std::size_t i = 0; i < w.size(); ++i) {
                m_[k][i] = static_cast<float>(opt_.beta1 * m_[k][i] + (1.0 - opt_.beta1) * g[i]);
                v_[k][i] = static_cast<float>(opt_.beta2 * v_[k][i] + (1.0 - opt_.beta2) * g[i] * g[i]);
            }
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double mhat = m_[k][i] / bc1;
            const double vhat = v_[k][i] / bc2;
            double x = w[i];
            x -= lr * opt_.weight_decay * x;
            x -= lr * mhat / (std::sqrt(vhat) + opt_.eps);
            w[i] = static_cast<float>(x);
        }
        tensor.zero_grad();
    }
}

double WarmupCosine::operator()(long step) const {
    if (step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
    const long span = std::max(1L, total - warmup);
    const double t = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
    return floor + 0.5 * (peak - floor) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace restore
