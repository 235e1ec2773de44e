#include "restore/mst.hpp"

#include "restore/ops.hpp"

namespace restore {

void MstConfig::validate() const {
    mdta().validate();
    gdfn.validate();
    if (gdfn.channels != channels)
        throw std::invalid_argument("mst: feed-forward width " + std::to_string(gdfn.channels) +
                                    " differs from block width " + std::to_string(channels));
}

template <class T>
MsaParams<T> init_msa(const MstConfig& cfg, Rng& rng) {
    cfg.validate();
    const int c = cfg.channels;
    MsaParams<T> p;
    p.wl1 = init_linear<T>(c, c, rng);
    p.wd = init_weight<T>({c, 3, 3}, rng);
    p.wd_bias = init_constant<T>({c}, T(0));
    p.mdta = init_mdta<T>(cfg.mdta(), rng);
    p.wl2 = init_linear<T>(c, c, rng);
    p.wl3 = init_linear<T>(c, c, rng);
    return p;
}

template <class T>
MstParams<T> init_mst(const MstConfig& cfg, Rng& rng) {
    MstParams<T> p;
    p.norm_gamma = init_constant<T>({cfg.channels}, T(1));
    p.norm_beta = init_constant<T>({cfg.channels}, T(0));
    p.msa = init_msa<T>(cfg, rng);
    p.gdfn = init_gdfn<T>(cfg.gdfn, rng);
    return p;
}

template <class T>
BasicTensor<T> msa_forward(const BasicTensor<T>& x, const MstConfig& cfg, const MsaParams<T>& p) {
    auto a = conv_pointwise(x, p.wl1.weight, p.wl1.bias);
    auto mask = sigmoid(conv_depthwise3x3(a, p.wd, p.wd_bias));
    auto x1 = mdta_forward(mul(a, mask), cfg.mdta(), p.mdta);
    auto gate = sigmoid(conv_pointwise(x, p.wl2.weight, p.wl2.bias));
    return conv_pointwise(mul(x1, gate), p.wl3.weight, p.wl3.bias);
}

template <class T>
BasicTensor<T> mst_forward(const BasicTensor<T>& x, const MstConfig& cfg, const MstParams<T>& p) {
    auto y = add(x, msa_forward(layernorm_channel(x, p.norm_gamma, p.norm_beta), cfg, p.msa));
    return add(y, gdfn_forward(y, cfg.gdfn, p.gdfn));
}

template <class T>
BasicTensor<T> gate_map(const BasicTensor<T>& x, const MsaParams<T>& p) {
    auto gate = sigmoid(conv_pointwise(x, p.wl2.weight, p.wl2.bias));
    const int c = gate.dim(1);
    Shape avg_shape{1, c};
    auto avg = BasicTensor<T>(avg_shape, T(1) / static_cast<T>(c));
    // Channel mean as a 1x1 convolution with uniform weights.
    return conv_pointwise(gate, avg);
}

template <class T>
BasicTensor<T> mst_gate_map(const BasicTensor<T>& x, const MstParams<T>& p) {
    return gate_map(layernorm_channel(x, p.norm_gamma, p.norm_beta), p.msa);
}

#define RESTORE_INSTANTIATE(T)                                                                          \
    template MsaParams<T> init_msa<T>(const MstConfig&, Rng&);                                         \
    template MstParams<T> init_mst<T>(const MstConfig&, Rng&);                                         \
    template BasicTensor<T> msa_forward(const BasicTensor<T>&, const MstConfig&, const MsaParams<T>&); \
    template BasicTensor<T> mst_forward(const BasicTensor<T>&, const MstConfig&, const MstParams<T>&); \
    template BasicTensor<T> gate_map(const BasicTensor<T>&, const MsaParams<T>&);                      \
    template BasicTensor<T> mst_gate_map(const BasicTensor<T>&, const MstParams<T>&);

RESTORE_INSTANTIATE(float)
RESTORE_INSTANTIATE(double)

}  // namespace restore
