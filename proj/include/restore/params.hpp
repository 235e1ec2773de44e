#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "restore/tensor.hpp"

namespace restore {

/// splitmix64 step; used to derive independent per-item seeds from one seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Small deterministic generator (xoshiro256**) with its own uniform and
/// normal samplers, so streams do not depend on the standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& v : state_) v = s = splitmix64(s);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int uniform_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi_inclusive - lo + 1));
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Normal(0, std) resampled until within two standard deviations.
    double truncated_normal(double stddev) {
        double z = normal();
        while (std::abs(z) > 2.0) z = normal();
        return z * stddev;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

constexpr double kInitStd = 0.02;

template <class T>
BasicTensor<T> init_weight(Shape shape, Rng& rng, double stddev = kInitStd) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.truncated_normal(stddev));
    BasicTensor<T> t(std::move(shape), std::move(v));
    t.set_requires_grad(true);
    return t;
}

template <class T>
BasicTensor<T> init_constant(Shape shape, T value) {
    BasicTensor<T> t(std::move(shape), value);
    t.set_requires_grad(true);
    return t;
}

/// Named learnable tensor; names are dotted paths unique within a model.
template <class T>
struct Parameter {
    std::string name;
    BasicTensor<T> tensor;
};

template <class T>
using ParameterList = std::vector<Parameter<T>>;

/// Weight [out, in] and bias [out], used both as a 1x1 convolution and as a
/// dense layer on the last axis.
template <class T>
struct Linear {
    BasicTensor<T> weight;
    BasicTensor<T> bias;

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        f(prefix + ".weight", weight);
        f(prefix + ".bias", bias);
    }
};

template <class T>
Linear<T> init_linear(int in, int out, Rng& rng) {
    return {init_weight<T>({out, in}, rng), init_constant<T>({out}, T(0))};
}

/// Flattens any block exposing for_each_param into a named list; throws on a
/// duplicate name.
template <class T, class Block>
ParameterList<T> collect_parameters(Block& block, const std::string& prefix) {
    ParameterList<T> out;
    block.for_each_param([&](const std::string& name, BasicTensor<T>& t) { out.push_back({name, t}); }, prefix);
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = i + 1; j < out.size(); ++j)
            if (out[i].name == out[j].name) throw std::logic_error("duplicate parameter name " + out[i].name);
    return out;
}

}  // namespace restore
