#include "restore/restormer.hpp"

#include <cmath>

#include "restore/ops.hpp"

namespace restore {

void MdtaConfig::validate() const {
    if (channels <= 0 || heads <= 0 || channels % heads != 0)
        throw std::invalid_argument("attention: " + std::to_string(channels) + " channels not divisible into " +
                                    std::to_string(heads) + " heads");
}

int GdfnConfig::hidden() const { return static_cast<int>(std::lround(channels * expansion)); }

void GdfnConfig::validate() const {
    if (channels <= 0 || expansion <= 0.0 || hidden() < 1)
        throw std::invalid_argument("feed-forward: invalid channels/expansion");
}

namespace {

template <class T>
void require_channels(const BasicTensor<T>& x, int channels, const char* block) {
    if (x.rank() != 4 || x.dim(1) != channels)
        throw ShapeError(std::string(block) + ": expected " + std::to_string(channels) + " channels, got " +
                         shape_str(x.shape()));
}

}  // namespace

template <class T>
MdtaParams<T> init_mdta(const MdtaConfig& cfg, Rng& rng) {
    cfg.validate();
    const int c = cfg.channels;
    return {init_linear<T>(c, 3 * c, rng), init_weight<T>({3 * c, 3, 3}, rng),
            init_constant<T>({cfg.heads}, static_cast<T>(cfg.temperature_init)), init_linear<T>(c, c, rng)};
}

template <class T>
CrossAttentionParams<T> init_cross_attention(const MdtaConfig& cfg, Rng& rng) {
    cfg.validate();
    const int c = cfg.channels;
    CrossAttentionParams<T> p;
    p.q = init_linear<T>(c, c, rng);
    p.q_dw = init_weight<T>({c, 3, 3}, rng);
    p.kv = init_linear<T>(c, 2 * c, rng);
    p.kv_dw = init_weight<T>({2 * c, 3, 3}, rng);
    p.temperature = init_constant<T>({cfg.heads}, static_cast<T>(cfg.temperature_init));
    p.proj = init_linear<T>(c, c, rng);
    return p;
}

template <class T>
GdfnParams<T> init_gdfn(const GdfnConfig& cfg, Rng& rng) {
    cfg.validate();
    const int c = cfg.channels, h = cfg.hidden();
    GdfnParams<T> p;
    p.norm_gamma = init_constant<T>({c}, T(1));
    p.norm_beta = init_constant<T>({c}, T(0));
    p.in = init_linear<T>(c, 2 * h, rng);
    p.dw = init_weight<T>({2 * h, 3, 3}, rng);
    p.out = init_linear<T>(h, c, rng);
    return p;
}

template <class T>
BasicTensor<T> transposed_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                                    const BasicTensor<T>& temperature, int heads, AttentionTrace<T>* trace) {
    const int B = q.dim(0), C = q.dim(1), H = q.dim(2), W = q.dim(3);
    if (C % heads != 0 || temperature.numel() != static_cast<std::size_t>(heads))
        throw ShapeError("transposed_attention: " + std::to_string(heads) + " heads for " + shape_str(q.shape()));
    const Shape split{B, heads, C / heads, H * W};
    auto qn = l2_normalize_last(reshape(q, split));
    auto kn = l2_normalize_last(reshape(k, split));
    auto logits = matmul(qn, transpose_last2(kn));
    logits = mul_broadcast(logits, reshape(temperature, {1, heads, 1, 1}));
    auto attn = softmax_axis(logits, -1);
    if (trace) trace->attention = attn;
    return reshape(matmul(attn, reshape(v, split)), {B, C, H, W});
}

template <class T>
BasicTensor<T> mdta_forward(const BasicTensor<T>& x, const MdtaConfig& cfg, const MdtaParams<T>& p,
                            AttentionTrace<T>* trace) {
    require_channels(x, cfg.channels, "mdta");
    const int c = cfg.channels;
    auto qkv = conv_depthwise3x3(conv_pointwise(x, p.qkv.weight, p.qkv.bias), p.qkv_dw);
    auto out = transposed_attention(slice(qkv, 1, 0, c), slice(qkv, 1, c, c), slice(qkv, 1, 2 * c, c),
                                    p.temperature, cfg.heads, trace);
    return conv_pointwise(out, p.proj.weight, p.proj.bias);
}

template <class T>
BasicTensor<T> cross_attention_forward(const BasicTensor<T>& query_src, const BasicTensor<T>& kv_src,
                                       const MdtaConfig& cfg, const CrossAttentionParams<T>& p,
                                       AttentionTrace<T>* trace) {
    require_channels(query_src, cfg.channels, "cross_attention");
    require_channels(kv_src, cfg.channels, "cross_attention");
    if (query_src.shape() != kv_src.shape())
        throw ShapeError("cross_attention: query " + shape_str(query_src.shape()) + " vs key/value " +
                         shape_str(kv_src.shape()));
    const int c = cfg.channels;
    auto q = conv_depthwise3x3(conv_pointwise(query_src, p.q.weight, p.q.bias), p.q_dw);
    auto kv = conv_depthwise3x3(conv_pointwise(kv_src, p.kv.weight, p.kv.bias), p.kv_dw);
    auto out = transposed_attention(q, slice(kv, 1, 0, c), slice(kv, 1, c, c), p.temperature, cfg.heads, trace);
    return conv_pointwise(out, p.proj.weight, p.proj.bias);
}

template <class T>
BasicTensor<T> gdfn_forward(const BasicTensor<T>& x, const GdfnConfig& cfg, const GdfnParams<T>& p) {
    require_channels(x, cfg.channels, "gdfn");
    const int h = cfg.hidden();
    auto t = layernorm_channel(x, p.norm_gamma, p.norm_beta);
    t = conv_depthwise3x3(conv_pointwise(t, p.in.weight, p.in.bias), p.dw);
    auto gated = mul(gelu(slice(t, 1, 0, h)), slice(t, 1, h, h));
    return conv_pointwise(gated, p.out.weight, p.out.bias);
}

#define RESTORE_INSTANTIATE(T)                                                                                   \
    template MdtaParams<T> init_mdta<T>(const MdtaConfig&, Rng&);                                               \
    template CrossAttentionParams<T> init_cross_attention<T>(const MdtaConfig&, Rng&);                         \
    template GdfnParams<T> init_gdfn<T>(const GdfnConfig&, Rng&);                                               \
    template BasicTensor<T> transposed_attention(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                                 const BasicTensor<T>&, const BasicTensor<T>&, int,             \
                                                 AttentionTrace<T>*);                                           \
    template BasicTensor<T> mdta_forward(const BasicTensor<T>&, const MdtaConfig&, const MdtaParams<T>&,        \
                                         AttentionTrace<T>*);                                                   \
    template BasicTensor<T> cross_attention_forward(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                                    const MdtaConfig&, const CrossAttentionParams<T>&,          \
                                                    AttentionTrace<T>*);                                        \
    template BasicTensor<T> gdfn_forward(const BasicTensor<T>&, const GdfnConfig&, const GdfnParams<T>&);

RESTORE_INSTANTIATE(float)
RESTORE_INSTANTIATE(double)

}  // namespace restore
