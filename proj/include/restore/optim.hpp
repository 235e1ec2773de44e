#pragma once

#include <vector>

#include "restore/params.hpp"

namespace restore {

/// Adam with decoupled weight decay. State is kept per parameter in list order.
class AdamW {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 1e-4;
    };

    AdamW(ParameterList<float> params, Options opt);

    /// Applies one update with learning rate `lr` and clears the gradients.
    void step(double lr);
    long steps() const { return t_; }
    const ParameterList<float>& params() const { return params_; }

private:
    ParameterList<float> params_;
    Options opt_;
    std::vector<std::vector<float>> m_, v_;
    long t_ = 0;
};

/// Linear warmup to `peak` over `warmup` steps, then cosine decay to `floor`
/// at `total` steps. Step indices start at 0.
struct WarmupCosine {
    double peak = 2e-4;
    long warmup = 0;
    long total = 1;
    double floor = 0.0;

    double operator()(long step) const;
};

}  // namespace restore
