#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "igrsr/backbone.hpp"

namespace igrsr {

// ---------------------------------------------------------------------------
// Latent Intent Distiller: a frozen pretrained backbone steered by k
// trainable prefix tokens, with m trainable <intent> tokens appended whose
// final hidden states are the distilled intent vectors.
//
// The augmented stream is [prefix, items, intents]; prefix and intent
// positions route to the distiller's own embedding tables, item positions to
// the frozen item table. Positions past the backbone's pretrained table come
// from a trainable extension (those rows did not exist at pretraining).
// ---------------------------------------------------------------------------

struct AugmentedToken {
    enum class Kind { Prefix, Item, Intent };
    Kind kind;
    int index;  // table row: prefix slot, item id, or intent slot
};

inline std::vector<AugmentedToken> build_augmented(std::size_t prefix_count,
                                                   const std::vector<int>& items,
                                                   std::size_t intent_count) {
    if (items.empty()) throw LengthError("build_augmented: empty item sequence");
    std::vector<AugmentedToken> stream;
    stream.reserve(prefix_count + items.size() + intent_count);
    for (std::size_t i = 0; i < prefix_count; ++i)
        stream.push_back({AugmentedToken::Kind::Prefix, static_cast<int>(i)});
    for (int id : items) stream.push_back({AugmentedToken::Kind::Item, id});
    for (std::size_t i = 0; i < intent_count; ++i)
        stream.push_back({AugmentedToken::Kind::Intent, static_cast<int>(i)});
    return stream;
}

class IntentDistiller {
public:
    // Takes ownership of a pretrained backbone and freezes it.
    IntentDistiller(Backbone backbone, std::size_t prefix_count, std::size_t intent_count,
                    std::uint64_t seed)
        : backbone_(std::move(backbone)), k_(prefix_count), m_(intent_count) {
        if (m_ == 0) throw ConfigError("intent distiller needs at least one <intent> token");
        backbone_.freeze();
        const std::size_t d = backbone_.config().dim;
        Rng rng(derive_seed(seed, "lid-init"));
        if (k_ > 0)
            own_.add("prefix_emb", Tensor::randn({k_, d}, rng, 0.02), true);
        own_.add("intent_emb", Tensor::randn({m_, d}, rng, 0.02), true);
        // positions n_max .. n_max+k+m-1 of the augmented stream
        own_.add("pos_ext", Tensor::randn({k_ + m_, d}, rng, 0.02), true);
    }

    std::size_t prefix_count() const { return k_; }
    std::size_t intent_count() const { return m_; }
    std::size_t dim() const { return backbone_.config().dim; }
    const Backbone& backbone() const { return backbone_; }
    ParamStore& own_params() { return own_; }
    const ParamStore& own_params() const { return own_; }
    std::uint64_t backbone_fingerprint() const { return backbone_.fingerprint(); }

    // Exactly the distiller-owned tensors; the frozen backbone is excluded.
    std::vector<std::pair<std::string, Tensor>> trainable_parameters() const {
        return own_.trainable_named();
    }

    // Hidden states of the whole augmented stream [prefix, items, intents]
    // under the frozen backbone's causal mask.
    Tensor augmented_hidden(const std::vector<int>& items, DropoutCtx* drop = nullptr) const {
        const std::size_t n = items.size();
        const std::size_t n_max = backbone_.config().n_max;
        if (n > n_max)
            throw LengthError("distill: sequence length " + std::to_string(n) +
                              " exceeds capacity " + std::to_string(n_max));
        const auto stream = build_augmented(k_, items, m_);

        std::vector<Tensor> parts;
        if (k_ > 0) parts.push_back(own_.get("prefix_emb"));
        parts.push_back(embedding_lookup(backbone_.item_embeddings(), items));
        parts.push_back(own_.get("intent_emb"));
        Tensor tokens = concat_rows(parts);

        const std::size_t total = stream.size();
        Tensor positions;
        if (total <= n_max) {
            positions = slice_rows(backbone_.positional_embeddings(), 0, total);
        } else {
            positions = concat_rows(
                {slice_rows(backbone_.positional_embeddings(), 0, n_max),
                 slice_rows(own_.get("pos_ext"), 0, total - n_max)});
        }

        return backbone_.run_blocks(add(tokens, positions), drop);
    }

    // Intent vectors for one item sequence: the hidden states at the final m
    // (<intent>) positions of the augmented stream.
    Tensor distill(const std::vector<int>& items, DropoutCtx* drop = nullptr) const {
        Tensor hidden = augmented_hidden(items, drop);
        return slice_rows(hidden, k_ + items.size(), m_);
    }

private:
    Backbone backbone_;
    std::size_t k_, m_;
    ParamStore own_;
};

}  // namespace igrsr
