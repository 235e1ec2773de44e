#pragma once

#include "restore/restormer.hpp"

// Gated attention block: sigmoid-masked MDTA plus a second output gate,
// followed by a gated feed-forward, both residual.

namespace restore {

struct MstConfig {
    int channels = 0;
    int heads = 1;
    GdfnConfig gdfn;

    MstConfig() = default;
    MstConfig(int c, int h) : channels(c), heads(h), gdfn{c} {}

    MdtaConfig mdta() const { return {channels, heads}; }
    void validate() const;
};

template <class T>
struct MsaParams {
    Linear<T> wl1;           // C -> C, attention-path projection
    BasicTensor<T> wd;       // [C, 3, 3] depthwise kernel of the input mask
    BasicTensor<T> wd_bias;  // [C]
    MdtaParams<T> mdta;
    Linear<T> wl2;           // C -> C, output gate
    Linear<T> wl3;           // C -> C, output projection

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        wl1.for_each_param(f, prefix + ".wl1");
        f(prefix + ".wd", wd);
        f(prefix + ".wd_bias", wd_bias);
        mdta.for_each_param(f, prefix + ".mdta");
        wl2.for_each_param(f, prefix + ".wl2");
        wl3.for_each_param(f, prefix + ".wl3");
    }
};

template <class T>
struct MstParams {
    BasicTensor<T> norm_gamma, norm_beta;
    MsaParams<T> msa;
    GdfnParams<T> gdfn;

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        f(prefix + ".norm.gamma", norm_gamma);
        f(prefix + ".norm.beta", norm_beta);
        msa.for_each_param(f, prefix + ".msa");
        gdfn.for_each_param(f, prefix + ".gdfn");
    }
};

template <class T>
MsaParams<T> init_msa(const MstConfig& cfg, Rng& rng);
template <class T>
MstParams<T> init_mst(const MstConfig& cfg, Rng& rng);

/// x is the already-normalized feature map.
template <class T>
BasicTensor<T> msa_forward(const BasicTensor<T>& x, const MstConfig& cfg, const MsaParams<T>& p);

template <class T>
BasicTensor<T> mst_forward(const BasicTensor<T>& x, const MstConfig& cfg, const MstParams<T>& p);

/// Channel mean of the output gate sigmoid(W_l2 x) for a normalized x: [B,1,H,W].
template <class T>
BasicTensor<T> gate_map(const BasicTensor<T>& x, const MsaParams<T>& p);

/// gate_map of a whole block, applying the block's own input normalization.
template <class T>
BasicTensor<T> mst_gate_map(const BasicTensor<T>& x, const MstParams<T>& p);

}  // namespace restore
