#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "igrsr/ops.hpp"
#include "igrsr/params.hpp"

namespace igrsr {

// Dropout context threaded through forward passes. Null or p == 0 disables
// it. Training uses inverted dropout (mask then scale by 1/(1-p)) so the
// evaluation path needs no rescaling; the mask itself is a plain 0/1 tensor.
struct DropoutCtx {
    Rng* rng = nullptr;
    double p = 0.0;
    bool active() const { return rng != nullptr && p > 0.0; }
};

inline Tensor apply_dropout(const Tensor& x, DropoutCtx* ctx) {
    if (ctx == nullptr || !ctx->active()) return x;
    Tensor mask = bernoulli_mask(x.shape(), ctx->p, *ctx->rng);
    return mul_scalar(mul(x, mask), 1.0 / (1.0 - ctx->p));
}

// Lower-triangular boolean mask: position t may attend positions <= t.
inline std::vector<std::uint8_t> causal_mask(std::size_t n) {
    std::vector<std::uint8_t> mask(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) mask[i * n + j] = 1;
    return mask;
}

// ---------------------------------------------------------------------------
// Multi-head attention with per-head projection matrices (no column slicing
// needed) and a joint output projection.
// ---------------------------------------------------------------------------

struct MultiHeadParams {
    std::vector<Tensor> wq, wk, wv;  // one [d x d_head] per head
    Tensor wo;                       // [d x d]
};

inline MultiHeadParams make_mha_params(ParamStore& store, const std::string& prefix,
                                       std::size_t d, std::size_t heads, Rng& rng,
                                       bool trainable = true) {
    if (heads == 0 || d % heads != 0)
        throw ConfigError("attention heads must divide the model dimension");
    const std::size_t dh = d / heads;
    const double scale = 0.02;
    MultiHeadParams p;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::string tag = prefix + ".h" + std::to_string(h);
        p.wq.push_back(store.add(tag + ".wq", Tensor::randn({d, dh}, rng, scale), trainable));
        p.wk.push_back(store.add(tag + ".wk", Tensor::randn({d, dh}, rng, scale), trainable));
        p.wv.push_back(store.add(tag + ".wv", Tensor::randn({d, dh}, rng, scale), trainable));
    }
    p.wo = store.add(prefix + ".wo", Tensor::randn({d, d}, rng, scale), trainable);
    return p;
}

inline MultiHeadParams mha_from_store(const ParamStore& store, const std::string& prefix,
                                      std::size_t heads) {
    MultiHeadParams p;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::string tag = prefix + ".h" + std::to_string(h);
        p.wq.push_back(store.get(tag + ".wq"));
        p.wk.push_back(store.get(tag + ".wk"));
        p.wv.push_back(store.get(tag + ".wv"));
    }
    p.wo = store.get(prefix + ".wo");
    return p;
}

// queries come from `q_in`, keys and values from `kv_in`.
inline Tensor multi_head_attention(const MultiHeadParams& p, const Tensor& q_in,
                                   const Tensor& kv_in,
                                   const std::vector<std::uint8_t>& mask,
                                   DropoutCtx* drop) {
    std::vector<Tensor> heads;
    heads.reserve(p.wq.size());
    for (std::size_t h = 0; h < p.wq.size(); ++h) {
        Tensor q = matmul(q_in, p.wq[h]);
        Tensor k = matmul(kv_in, p.wk[h]);
        Tensor v = matmul(kv_in, p.wv[h]);
        heads.push_back(scaled_dot_attention(q, k, v, mask));
    }
    Tensor joined = heads.size() == 1 ? heads[0] : concat_cols(heads);
    return apply_dropout(matmul(joined, p.wo), drop);
}

// ---------------------------------------------------------------------------
// Position-wise feed-forward: w2 . relu(w1 x + b1) + b2, hidden width d.
// ---------------------------------------------------------------------------

struct FfnParams {
    Tensor w1, b1, w2, b2;
};

inline FfnParams make_ffn_params(ParamStore& store, const std::string& prefix, std::size_t d,
                                 Rng& rng, bool trainable = true) {
    FfnParams p;
    p.w1 = store.add(prefix + ".w1", Tensor::randn({d, d}, rng, 0.02), trainable);
    p.b1 = store.add(prefix + ".b1", Tensor::zeros({d}), trainable);
    p.w2 = store.add(prefix + ".w2", Tensor::randn({d, d}, rng, 0.02), trainable);
    p.b2 = store.add(prefix + ".b2", Tensor::zeros({d}), trainable);
    return p;
}

inline FfnParams ffn_from_store(const ParamStore& store, const std::string& prefix) {
    return {store.get(prefix + ".w1"), store.get(prefix + ".b1"),
            store.get(prefix + ".w2"), store.get(prefix + ".b2")};
}

inline Tensor ffn_forward(const FfnParams& p, const Tensor& x, DropoutCtx* drop) {
    Tensor hidden = relu(add_row_vector(matmul(x, p.w1), p.b1));
    return apply_dropout(add_row_vector(matmul(hidden, p.w2), p.b2), drop);
}

// ---------------------------------------------------------------------------
// Decision block: causal self-attention with a plain residual, then a
// feed-forward residual normalized at the end.
//   h' = h + SelfAttn(h); out = LayerNorm(h' + FFN(h'))
// ---------------------------------------------------------------------------

struct BlockParams {
    MultiHeadParams attn;
    FfnParams ffn;
    Tensor ln_gain, ln_bias;
};

inline BlockParams make_block_params(ParamStore& store, const std::string& prefix,
                                     std::size_t d, std::size_t heads, Rng& rng,
                                     bool trainable = true) {
    BlockParams p;
    p.attn = make_mha_params(store, prefix + ".attn", d, heads, rng, trainable);
    p.ffn = make_ffn_params(store, prefix + ".ffn", d, rng, trainable);
    p.ln_gain = store.add(prefix + ".ln.gain", Tensor::full({d}, 1.0), trainable);
    p.ln_bias = store.add(prefix + ".ln.bias", Tensor::zeros({d}), trainable);
    return p;
}

inline BlockParams block_from_store(const ParamStore& store, const std::string& prefix,
                                    std::size_t heads) {
    BlockParams p;
    p.attn = mha_from_store(store, prefix + ".attn", heads);
    p.ffn = ffn_from_store(store, prefix + ".ffn");
    p.ln_gain = store.get(prefix + ".ln.gain");
    p.ln_bias = store.get(prefix + ".ln.bias");
    return p;
}

inline Tensor decision_block(const BlockParams& p, const Tensor& h,
                             const std::vector<std::uint8_t>& mask, DropoutCtx* drop) {
    Tensor after_attn = add(h, multi_head_attention(p.attn, h, h, mask, drop));
    Tensor after_ffn = add(after_attn, ffn_forward(p.ffn, after_attn, drop));
    return layer_norm(after_ffn, p.ln_gain, p.ln_bias);
}

}  // namespace igrsr
