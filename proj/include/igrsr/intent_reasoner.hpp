#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "igrsr/attention.hpp"
#include "igrsr/config.hpp"

namespace igrsr {

// Model variants used by the ablation study. WithoutIcr shares the Full
// architecture (only the training objective changes).
enum class Variant { Full, WithoutLid, ConcatFusion, WithoutIcr };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Full: return "igrsr";
        case Variant::WithoutLid: return "wo_lid";
        case Variant::ConcatFusion: return "wo_cross_attn";
        case Variant::WithoutIcr: return "wo_icr";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Intent-aware Deliberative Reasoner. Each of the L layers runs
//   deliberation:    H <- H + CrossAttn(Q=H, K=T_D, V=T_D)      (no mask)
//   decision-making: H <- H + MaskedSelfAttn(H)                  (causal)
//                    H <- LayerNorm(H + FFN(H))
// and the user representation is the final hidden state of the last item.
// A projection MLP (one hidden layer of width 2d) first lifts raw intents
// from the distiller's space into the reasoner's.
// ---------------------------------------------------------------------------

class IntentReasoner {
public:
    IntentReasoner(std::size_t item_count, std::size_t lid_dim, const ModelConfig& cfg,
                   Variant variant, std::uint64_t seed)
        : variant_(variant),
          item_count_(item_count),
          d_(cfg.hidden_dim),
          layers_(cfg.idr_layers),
          heads_(cfg.idr_heads),
          n_max_(cfg.max_seq_len),
          intent_tokens_(cfg.intent_tokens) {
        Rng rng(derive_seed(seed, "idr-init"));
        Tensor items = Tensor::randn({item_count + 1, d_}, rng, 0.02);
        for (std::size_t j = 0; j < d_; ++j) items.at(0, j) = 0.0;
        params_.add("item_emb", std::move(items), true);
        // the concat-fusion ablation prepends m intent pseudo-tokens, so its
        // positional table covers m + n_max positions
        const std::size_t pos_rows =
            variant == Variant::ConcatFusion ? n_max_ + intent_tokens_ : n_max_;
        params_.add("pos_emb", Tensor::randn({pos_rows, d_}, rng, 0.02), true);

        if (has_intents()) {
            params_.add("proj.w1", Tensor::randn({lid_dim, 2 * d_}, rng, 0.02), true);
            params_.add("proj.b1", Tensor::zeros({2 * d_}), true);
            params_.add("proj.w2", Tensor::randn({2 * d_, d_}, rng, 0.02), true);
            params_.add("proj.b2", Tensor::zeros({d_}), true);
        }
        for (std::size_t l = 0; l < layers_; ++l) {
            if (uses_cross_attention())
                cross_.push_back(make_mha_params(params_, layer_name(l) + ".cross", d_,
                                                 heads_, rng, true));
            blocks_.push_back(make_block_params(params_, layer_name(l), d_, heads_, rng,
                                                true));
        }
    }

    Variant variant() const { return variant_; }
    bool has_intents() const { return variant_ != Variant::WithoutLid; }
    bool uses_cross_attention() const {
        return variant_ != Variant::WithoutLid && variant_ != Variant::ConcatFusion;
    }
    std::size_t dim() const { return d_; }
    std::size_t layer_count() const { return layers_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Row-wise projection MLP, d_I -> 2d -> d, smooth nonlinearity.
    Tensor project_intents(const Tensor& raw) const {
        if (!has_intents())
            throw ConfigError("this variant carries no intent projection");
        Tensor hidden = gelu(add_row_vector(matmul(raw, params_.get("proj.w1")),
                                            params_.get("proj.b1")));
        return add_row_vector(matmul(hidden, params_.get("proj.w2")),
                              params_.get("proj.b2"));
    }

    // Intent deliberation stage of one layer.
    Tensor deliberate(std::size_t layer, const Tensor& h, const Tensor& t_d,
                      DropoutCtx* drop = nullptr) const {
        if (!uses_cross_attention())
            throw ConfigError("this variant has no deliberation stage");
        return add(h, multi_head_attention(cross_[layer], h, t_d, {}, drop));
    }

    // Decision-making stage of one layer.
    Tensor decide(std::size_t layer, const Tensor& h_cross,
                  const std::vector<std::uint8_t>& mask, DropoutCtx* drop = nullptr) const {
        return decision_block(blocks_[layer], h_cross, mask, drop);
    }

    // Full stack over one true (unpadded) item sequence. t_d may be null only
    // in the WithoutLid variant, where deliberation is skipped entirely.
    Tensor forward_hidden(const std::vector<int>& items, const Tensor* t_d,
                          DropoutCtx* drop = nullptr) const {
        if (items.empty()) throw LengthError("reasoner: empty input sequence");
        if (items.size() > n_max_)
            throw LengthError("reasoner: sequence exceeds positional capacity");
        if (uses_cross_attention() && t_d == nullptr)
            throw ConfigError("reasoner: this variant requires projected intents");
        Tensor h = add(embedding_lookup(params_.get("item_emb"), items),
                       slice_rows(params_.get("pos_emb"), 0, items.size()));
        h = apply_dropout(h, drop);
        const auto mask = causal_mask(items.size());
        for (std::size_t l = 0; l < layers_; ++l) {
            if (uses_cross_attention()) h = deliberate(l, h, *t_d, drop);
            h = decide(l, h, mask, drop);
        }
        return h;
    }

    // h_u: final hidden state of the last item.
    Tensor user_representation(const std::vector<int>& items, const Tensor* t_d,
                               DropoutCtx* drop = nullptr) const {
        Tensor h = forward_hidden(items, t_d, drop);
        return slice_rows(h, h.rows() - 1, 1);
    }

    // "w/o cross-attn" ablation: projected intents are prepended to the item
    // sequence as pseudo-tokens (picking up positional encodings, which is
    // exactly the contamination cross-attention avoids) and a single causal
    // self-attention stack runs over the concatenation.
    Tensor concat_fusion_representation(const std::vector<int>& items, const Tensor& t_d,
                                        DropoutCtx* drop = nullptr) const {
        if (variant_ != Variant::ConcatFusion)
            throw ConfigError("concat fusion belongs to the wo_cross_attn variant");
        if (items.empty()) throw LengthError("reasoner: empty input sequence");
        if (items.size() > n_max_)
            throw LengthError("reasoner: sequence exceeds positional capacity");
        const std::size_t m = t_d.rows();
        Tensor tokens = concat_rows({t_d, embedding_lookup(params_.get("item_emb"), items)});
        Tensor h = add(tokens, slice_rows(params_.get("pos_emb"), 0, m + items.size()));
        h = apply_dropout(h, drop);
        const auto mask = causal_mask(m + items.size());
        for (std::size_t l = 0; l < layers_; ++l) h = decide(l, h, mask, drop);
        return slice_rows(h, h.rows() - 1, 1);  // last item position
    }

    // Tied-embedding scoring over the reasoner's own item table.
    Tensor logits(const Tensor& h_rows) const {
        Tensor scores = matmul(h_rows, transpose(params_.get("item_emb")));
        Tensor pad_mask = Tensor::zeros({item_count_ + 1});
        pad_mask.at(0) = -1e9;
        return add_row_vector(scores, pad_mask);
    }

private:
    static std::string layer_name(std::size_t l) { return "layer" + std::to_string(l); }

    Variant variant_;
    std::size_t item_count_, d_, layers_, heads_, n_max_, intent_tokens_;
    ParamStore params_;
    std::vector<MultiHeadParams> cross_;
    std::vector<BlockParams> blocks_;
};

}  // namespace igrsr
