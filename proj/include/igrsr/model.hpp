#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "igrsr/intent_consistency.hpp"
#include "igrsr/intent_distiller.hpp"
#include "igrsr/intent_reasoner.hpp"
#include "igrsr/metrics.hpp"

namespace igrsr {

// ---------------------------------------------------------------------------
// The assembled model: a frozen-backbone intent distiller feeding the
// deliberative reasoner through the projection MLP. Ablation variants drop
// the distiller (WithoutLid), swap cross-attention for concatenation
// (ConcatFusion), or only change the objective (WithoutIcr).
// ---------------------------------------------------------------------------

class IgrsrModel {
public:
    static IgrsrModel create(Variant variant, const ModelConfig& cfg, std::size_t item_count,
                             std::uint64_t seed, std::optional<Backbone> pretrained) {
        IgrsrModel m(variant, cfg, item_count);
        if (variant != Variant::WithoutLid) {
            if (!pretrained.has_value())
                throw ConfigError("this variant needs a pretrained backbone for the LID");
            if (pretrained->config().dim != cfg.lid_dim)
                throw ConfigError("backbone dim does not match lid_dim");
            m.lid_.emplace(std::move(*pretrained), cfg.prefix_tokens, cfg.intent_tokens,
                           derive_seed(seed, "lid"));
        }
        m.idr_.emplace(item_count, cfg.lid_dim, cfg, variant, derive_seed(seed, "idr"));
        return m;
    }

    Variant variant() const { return variant_; }
    const ModelConfig& config() const { return cfg_; }
    std::size_t item_count() const { return item_count_; }
    bool has_lid() const { return lid_.has_value(); }
    IntentDistiller& lid() { return *lid_; }
    const IntentDistiller& lid() const { return *lid_; }
    IntentReasoner& idr() { return *idr_; }
    const IntentReasoner& idr() const { return *idr_; }

    // Distill-and-project: the unmasked T_D for one input sequence.
    Tensor projected_intents(const std::vector<int>& prefix, DropoutCtx* drop = nullptr) const {
        return idr_->project_intents(lid_->distill(prefix, drop));
    }

    // h_u for one sequence. `intents_override` substitutes a (possibly
    // masked) T_D; null means compute it fresh, or skip intents entirely in
    // the WithoutLid variant.
    Tensor user_representation(const std::vector<int>& prefix,
                               const Tensor* intents_override = nullptr,
                               DropoutCtx* drop = nullptr) const {
        if (variant_ == Variant::WithoutLid)
            return idr_->user_representation(prefix, nullptr, drop);
        Tensor t_d =
            intents_override != nullptr ? *intents_override : projected_intents(prefix, drop);
        if (variant_ == Variant::ConcatFusion)
            return idr_->concat_fusion_representation(prefix, t_d, drop);
        return idr_->user_representation(prefix, &t_d, drop);
    }

    struct BatchForward {
        Tensor representations;             // [rows x d]
        std::vector<Tensor> intents;        // unmasked T_D per row (empty w/o LID)
        std::vector<std::vector<int>> prefixes;
    };

    // The prediction-path forward: unmasked intents throughout. Intents are
    // recomputed fresh per batch (prefix embeddings evolve during training).
    BatchForward forward_batch(const Batch& batch, DropoutCtx* drop = nullptr) const {
        BatchForward out;
        out.prefixes.reserve(batch.rows);
        std::vector<Tensor> rows;
        rows.reserve(batch.rows);
        for (std::size_t r = 0; r < batch.rows; ++r) {
            std::vector<int> prefix(batch.row(r) + (batch.width - batch.lengths[r]),
                                    batch.row(r) + batch.width);
            if (has_lid()) {
                out.intents.push_back(projected_intents(prefix, drop));
                rows.push_back(user_representation(prefix, &out.intents.back(), drop));
            } else {
                rows.push_back(user_representation(prefix, nullptr, drop));
            }
            out.prefixes.push_back(std::move(prefix));
        }
        out.representations = concat_rows(rows);
        return out;
    }

    // ICR view pass: two reasoner forwards per row over independently masked
    // intents, sharing every parameter. Ordinary dropout is disabled here so
    // the intent masks are the only stochasticity.
    std::pair<Tensor, Tensor> view_representations(
        const std::vector<std::vector<int>>& prefixes, const std::vector<Tensor>& intents,
        double p_mask, std::uint64_t seed) const {
        std::vector<Tensor> h1, h2;
        h1.reserve(prefixes.size());
        h2.reserve(prefixes.size());
        for (std::size_t r = 0; r < prefixes.size(); ++r) {
            IntentViews views =
                sample_views(intents[r], p_mask, derive_seed(seed, "row" + std::to_string(r)));
            h1.push_back(user_representation(prefixes[r], &views.first, nullptr));
            h2.push_back(user_representation(prefixes[r], &views.second, nullptr));
        }
        return {concat_rows(h1), concat_rows(h2)};
    }

    // Everything the optimizer may touch: reasoner weights (projection
    // included) plus the distiller's prefix/intent/position-extension tables.
    // The frozen backbone never appears.
    std::vector<std::pair<std::string, Tensor>> trainable_named() const {
        std::vector<std::pair<std::string, Tensor>> out;
        if (has_lid())
            for (auto& [name, t] : lid_->trainable_parameters())
                out.emplace_back("lid." + name, t);
        for (auto& [name, t] : idr_->params().trainable_named())
            out.emplace_back("idr." + name, t);
        return out;
    }

    std::vector<Tensor> trainable_tensors() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : trainable_named()) out.push_back(t);
        return out;
    }

    std::vector<double> score_prefix(const std::vector<int>& prefix) const {
        NoGradGuard ng;
        Tensor s = idr_->logits(user_representation(prefix));
        return s.values();
    }

    ScoreFn scorer() const {
        return [this](const std::vector<int>& prefix, int) { return score_prefix(prefix); };
    }

    // ------------------------------------------------------------------
    // Model archive: reasoner + distiller + frozen backbone in one file,
    // keyed by section prefixes, with config and backbone fingerprints.
    // ------------------------------------------------------------------

    void save_archive(const std::string& path, const std::string& config_fingerprint) const {
        ParamStore flat;
        for (const auto& name : idr_->params().names()) {
            const Tensor& t = idr_->params().get(name);
            flat.add("idr." + name, Tensor::from(t.shape(), t.values()), t.requires_grad());
        }
        if (has_lid()) {
            for (const auto& name : lid_->own_params().names()) {
                const Tensor& t = lid_->own_params().get(name);
                flat.add("lid." + name, Tensor::from(t.shape(), t.values()),
                         t.requires_grad());
            }
            for (const auto& name : lid_->backbone().params().names()) {
                const Tensor& t = lid_->backbone().params().get(name);
                flat.add("bb." + name, Tensor::from(t.shape(), t.values()), false);
            }
        }
        CheckpointMeta meta;
        meta["kind"] = "igrsr-model";
        meta["variant"] = variant_name(variant_);
        meta["config_fingerprint"] = config_fingerprint;
        meta["item_count"] = std::to_string(item_count_);
        if (has_lid())
            meta["backbone_fingerprint"] = to_hex(lid_->backbone_fingerprint());
        save_checkpoint(flat, meta, path);
    }

    static IgrsrModel load_archive(const std::string& path, const ModelConfig& cfg,
                                   const std::string& config_fingerprint) {
        auto [flat, meta] = load_checkpoint(path);
        if (meta.count("kind") == 0 || meta.at("kind") != "igrsr-model")
            throw IoError(path + " is not a model archive");
        if (meta.at("config_fingerprint") != config_fingerprint)
            throw ConfigError("model archive was written under a different config");
        Variant variant = variant_from_name(meta.at("variant"));
        const std::size_t item_count = std::stoul(meta.at("item_count"));

        IgrsrModel m(variant, cfg, item_count);
        if (variant != Variant::WithoutLid) {
            ParamStore bb_store;
            for (const auto& name : flat.names())
                if (name.rfind("bb.", 0) == 0) {
                    const Tensor& t = flat.get(name);
                    bb_store.add(name.substr(3), Tensor::from(t.shape(), t.values()), false);
                }
            if (to_hex(bb_store.checksum()) != meta.at("backbone_fingerprint"))
                throw IoError("model archive rejects load: backbone fingerprint mismatch");
            BackboneConfig bc;
            bc.dim = cfg.lid_dim;
            bc.layers = cfg.backbone_layers;
            bc.heads = cfg.backbone_heads;
            bc.n_max = cfg.max_seq_len;
            bc.dropout = cfg.dropout;
            Backbone bb = Backbone::from_store(std::move(bb_store), bc, item_count);
            m.lid_.emplace(std::move(bb), cfg.prefix_tokens, cfg.intent_tokens, 0);
            assign_section(flat, "lid.", m.lid_->own_params());
        }
        m.idr_.emplace(item_count, cfg.lid_dim, cfg, variant, 0);
        assign_section(flat, "idr.", m.idr_->params());
        return m;
    }

private:
    IgrsrModel(Variant variant, ModelConfig cfg, std::size_t item_count)
        : variant_(variant), cfg_(std::move(cfg)), item_count_(item_count) {}

    static Variant variant_from_name(const std::string& s) {
        for (Variant v : {Variant::Full, Variant::WithoutLid, Variant::ConcatFusion,
                          Variant::WithoutIcr})
            if (s == variant_name(v)) return v;
        throw IoError("unknown model variant '" + s + "'");
    }

    static void assign_section(const ParamStore& flat, const std::string& prefix,
                               ParamStore& dst) {
        for (const auto& name : dst.names()) {
            const Tensor& src = flat.get(prefix + name);
            Tensor& t = dst.get(name);
            if (src.shape() != t.shape())
                throw IoError("archive tensor shape mismatch for " + prefix + name);
            t.values() = src.values();
        }
    }

    Variant variant_;
    ModelConfig cfg_;
    std::size_t item_count_;
    std::optional<IntentDistiller> lid_;
    std::optional<IntentReasoner> idr_;
};

}  // namespace igrsr
