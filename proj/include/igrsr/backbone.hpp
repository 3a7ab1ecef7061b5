#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "igrsr/attention.hpp"
#include "igrsr/config.hpp"
#include "igrsr/dataset.hpp"
#include "igrsr/metrics.hpp"
#include "igrsr/optim.hpp"
#include "igrsr/training_util.hpp"

namespace igrsr {

// ---------------------------------------------------------------------------
// SASRec-style causal transformer over item sequences. Serves as the
// reflexive baseline and, pretrained then frozen, as the LID encoder.
// Tied input/output item embeddings; learnable positions; pad id 0 is never
// embedded (callers strip leading pads) and never scored.
// ---------------------------------------------------------------------------

struct BackboneConfig {
    std::size_t dim = 64;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t n_max = 50;
    double dropout = 0.2;
};

class Backbone {
public:
    Backbone(std::size_t item_count, BackboneConfig cfg, std::uint64_t seed)
        : cfg_(cfg), item_count_(item_count) {
        Rng rng(derive_seed(seed, "backbone-init"));
        Tensor items = Tensor::randn({item_count + 1, cfg.dim}, rng, 0.02);
        for (std::size_t j = 0; j < cfg.dim; ++j) items.at(0, j) = 0.0;  // pad row
        params_.add("item_emb", std::move(items), true);
        params_.add("pos_emb", Tensor::randn({cfg.n_max, cfg.dim}, rng, 0.02), true);
        for (std::size_t l = 0; l < cfg.layers; ++l)
            blocks_.push_back(make_block_params(params_, block_name(l), cfg.dim,
                                                cfg.heads, rng, true));
    }

    static Backbone from_store(ParamStore params, BackboneConfig cfg,
                               std::size_t item_count) {
        Backbone b;
        b.cfg_ = cfg;
        b.item_count_ = item_count;
        b.params_ = std::move(params);
        for (std::size_t l = 0; l < cfg.layers; ++l)
            b.blocks_.push_back(block_from_store(b.params_, block_name(l), cfg.heads));
        return b;
    }

    const BackboneConfig& config() const { return cfg_; }
    std::size_t item_count() const { return item_count_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    Tensor item_embeddings() const { return params_.get("item_emb"); }
    Tensor positional_embeddings() const { return params_.get("pos_emb"); }

    void freeze() {
        for (const auto& name : params_.names()) params_.get(name).set_requires_grad(false);
    }

    std::uint64_t fingerprint() const { return params_.checksum(); }

    // Runs the block stack over externally assembled embeddings under a
    // causal mask. This is the hook the intent distiller drives with its
    // augmented token stream.
    Tensor run_blocks(Tensor h, DropoutCtx* drop = nullptr) const {
        const auto mask = causal_mask(h.rows());
        for (const auto& block : blocks_) h = decision_block(block, h, mask, drop);
        return h;
    }

    // Hidden states for a true (unpadded) item id sequence. Position t only
    // ever attends positions <= t, so output row t depends on ids[0..t] alone.
    Tensor forward_ids(const std::vector<int>& ids, DropoutCtx* drop = nullptr) const {
        if (ids.empty()) throw LengthError("backbone: empty input sequence");
        if (ids.size() > cfg_.n_max)
            throw LengthError("backbone: sequence length " + std::to_string(ids.size()) +
                              " exceeds positional capacity " + std::to_string(cfg_.n_max));
        Tensor h = add(embedding_lookup(params_.get("item_emb"), ids),
                       slice_rows(params_.get("pos_emb"), 0, ids.size()));
        return run_blocks(apply_dropout(h, drop), drop);
    }

    // Padded-row semantics: leading pads are masked out of attention entirely
    // (they are stripped before embedding, which is equivalent) and their
    // output rows are zero. Positions index the real tokens only, so the
    // result is invariant to the amount of left padding.
    Tensor forward_padded_row(const int* row, std::size_t width, std::size_t len,
                              DropoutCtx* drop = nullptr) const {
        if (len == 0 || len > width) throw LengthError("backbone: bad row length");
        std::vector<int> ids(row + (width - len), row + width);
        Tensor real = forward_ids(ids, drop);
        if (len == width) return real;
        return concat_rows({Tensor::zeros({width - len, cfg_.dim}), real});
    }

    // Last-position hidden state per batch row, stacked to [rows x dim].
    Tensor last_hidden_batch(const Batch& batch, DropoutCtx* drop = nullptr) const {
        std::vector<Tensor> rows;
        rows.reserve(batch.rows);
        for (std::size_t r = 0; r < batch.rows; ++r) {
            std::vector<int> ids(batch.row(r) + (batch.width - batch.lengths[r]),
                                 batch.row(r) + batch.width);
            Tensor h = forward_ids(ids, drop);
            rows.push_back(slice_rows(h, h.rows() - 1, 1));
        }
        return concat_rows(rows);
    }

    // Tied-embedding scoring: logits = item_embeddings . h, pad masked to a
    // large negative so it can never be ranked.
    Tensor logits(const Tensor& h_rows) const {
        Tensor scores = matmul(h_rows, transpose(params_.get("item_emb")));
        Tensor pad_mask = Tensor::zeros({item_count_ + 1});
        pad_mask.at(0) = -1e9;
        return add_row_vector(scores, pad_mask);
    }

    // Evaluation-path scoring of one prefix; no graph is recorded.
    std::vector<double> score_prefix(const std::vector<int>& prefix) const {
        NoGradGuard ng;
        Tensor h = forward_ids(prefix);
        Tensor s = logits(slice_rows(h, h.rows() - 1, 1));
        return s.values();
    }

    ScoreFn scorer() const {
        return [this](const std::vector<int>& prefix, int) { return score_prefix(prefix); };
    }

private:
    Backbone() = default;
    static std::string block_name(std::size_t l) { return "block" + std::to_string(l); }

    BackboneConfig cfg_;
    std::size_t item_count_ = 0;
    ParamStore params_;
    std::vector<BlockParams> blocks_;
};

// ---------------------------------------------------------------------------
// Next-item pretraining with patience-based early stopping on validation
// Recall@10. Returns the model restored to its best epoch.
// ---------------------------------------------------------------------------

inline std::pair<Backbone, TrainLog> pretrain_backbone(const InteractionDataset& ds,
                                                       const SplitIndex& split,
                                                       BackboneConfig cfg,
                                                       const TrainConfig& tc) {
    Backbone model(ds.item_count, cfg, tc.seed);
    Adam opt(model.params().trainable_tensors(), tc.learning_rate, tc.beta1, tc.beta2,
             tc.adam_eps);
    const std::vector<Instance> instances =
        cap_instances(split.train, tc.max_instances_per_user);
    const std::vector<Instance> val_instances = val_view(split.val, tc.val_subset);

    TrainLog log;
    ParamStore best = model.params().clone();
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        Rng drop_rng(derive_seed(tc.seed, "backbone-dropout-" + std::to_string(epoch)));
        DropoutCtx drop{&drop_rng, cfg.dropout};
        auto batches = make_batches(instances, ds, cfg.n_max, tc.batch_size,
                                    derive_seed(tc.seed, "backbone-shuffle-" +
                                                             std::to_string(epoch)));
        double epoch_loss = 0.0;
        for (const Batch& batch : batches) {
            Tensor h = model.last_hidden_batch(batch, &drop);
            Tensor loss = cross_entropy_from_logits(model.logits(h), batch.targets,
                                                    Reduction::Mean);
            check_loss_finite(loss.item(), batch, epoch, "backbone");
            epoch_loss += loss.item() * static_cast<double>(batch.rows);
            opt.zero_grad();
            loss.backward();
            opt.step();
        }
        epoch_loss /= static_cast<double>(instances.size());

        RankingMetrics val = rank_and_score(model.scorer(), ds, val_instances, cfg.n_max);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.rec_loss = epoch_loss;
        rec.total_loss = epoch_loss;
        rec.val_recall10 = val.recall_at(10);
        rec.val_ndcg10 = val.ndcg_at(10);
        log.epochs.push_back(rec);

        if (val.recall_at(10) > log.best_val_recall10) {
            log.best_val_recall10 = val.recall_at(10);
            log.best_epoch = epoch;
            best = model.params().clone();
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    return {Backbone::from_store(std::move(best), cfg, ds.item_count), log};
}

}  // namespace igrsr
