#pragma once

#include <string>

#include "restore/params.hpp"

// Channel-transposed attention and gated feed-forward sub-blocks.

namespace restore {

struct MdtaConfig {
    int channels = 0;
    int heads = 1;
    double temperature_init = 1.0;

    void validate() const;
};

struct GdfnConfig {
    int channels = 0;
    double expansion = 2.66;

    /// round(channels * expansion)
    int hidden() const;
    void validate() const;
};

template <class T>
struct MdtaParams {
    Linear<T> qkv;            // C -> 3C
    BasicTensor<T> qkv_dw;    // [3C, 3, 3]
    BasicTensor<T> temperature;  // [heads]
    Linear<T> proj;           // C -> C

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        qkv.for_each_param(f, prefix + ".qkv");
        f(prefix + ".qkv_dw", qkv_dw);
        f(prefix + ".temperature", temperature);
        proj.for_each_param(f, prefix + ".proj");
    }
};

/// Queries from one feature map, keys and values from another.
template <class T>
struct CrossAttentionParams {
    Linear<T> q;              // C -> C
    BasicTensor<T> q_dw;      // [C, 3, 3]
    Linear<T> kv;             // C -> 2C
    BasicTensor<T> kv_dw;     // [2C, 3, 3]
    BasicTensor<T> temperature;
    Linear<T> proj;

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        q.for_each_param(f, prefix + ".q");
        f(prefix + ".q_dw", q_dw);
        kv.for_each_param(f, prefix + ".kv");
        f(prefix + ".kv_dw", kv_dw);
        f(prefix + ".temperature", temperature);
        proj.for_each_param(f, prefix + ".proj");
    }
};

template <class T>
struct GdfnParams {
    BasicTensor<T> norm_gamma, norm_beta;
    Linear<T> in;             // C -> 2*hidden
    BasicTensor<T> dw;        // [2*hidden, 3, 3]
    Linear<T> out;            // hidden -> C

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        f(prefix + ".norm.gamma", norm_gamma);
        f(prefix + ".norm.beta", norm_beta);
        in.for_each_param(f, prefix + ".in");
        f(prefix + ".dw", dw);
        out.for_each_param(f, prefix + ".out");
    }
};

/// Optional capture of the softmax attention maps [B, heads, d, d].
template <class T>
struct AttentionTrace {
    BasicTensor<T> attention;
};

template <class T>
MdtaParams<T> init_mdta(const MdtaConfig& cfg, Rng& rng);
template <class T>
CrossAttentionParams<T> init_cross_attention(const MdtaConfig& cfg, Rng& rng);
template <class T>
GdfnParams<T> init_gdfn(const GdfnConfig& cfg, Rng& rng);

/// softmax(normalize(Q) normalize(K)^T * temperature) V per head, computed over
/// channels; q, k, v are [B,C,H,W] and the result has the same shape.
template <class T>
BasicTensor<T> transposed_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                                    const BasicTensor<T>& temperature, int heads, AttentionTrace<T>* trace = nullptr);

template <class T>
BasicTensor<T> mdta_forward(const BasicTensor<T>& x, const MdtaConfig& cfg, const MdtaParams<T>& p,
                            AttentionTrace<T>* trace = nullptr);

template <class T>
BasicTensor<T> cross_attention_forward(const BasicTensor<T>& query_src, const BasicTensor<T>& kv_src,
                                       const MdtaConfig& cfg, const CrossAttentionParams<T>& p,
                                       AttentionTrace<T>* trace = nullptr);

/// Pre-normalized gated feed-forward; the caller adds the residual.
template <class T>
BasicTensor<T> gdfn_forward(const BasicTensor<T>& x, const GdfnConfig& cfg, const GdfnParams<T>& p);

}  // namespace restore
