#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "igrsr/model.hpp"
#include "igrsr/optim.hpp"
#include "igrsr/training_util.hpp"

namespace igrsr {

// Full-vocabulary softmax cross entropy against tied item embeddings, pad
// masked out, averaged over the batch.
inline Tensor rec_loss(const Tensor& h_rows, const std::vector<int>& targets,
                       const Tensor& item_embeddings) {
    Tensor logits = matmul(h_rows, transpose(item_embeddings));
    Tensor pad_mask = Tensor::zeros({item_embeddings.rows()});
    pad_mask.at(0) = -1e9;
    return cross_entropy_from_logits(add_row_vector(logits, pad_mask), targets,
                                     Reduction::Mean);
}

struct LossParts {
    Tensor total;
    double rec_value = 0.0;
    double icr_value = 0.0;
    std::size_t icr_forwards = 0;  // reasoner view passes taken for ICR
};

// L = L_rec + lambda_icr * L_IntentCL, from one unmasked prediction forward
// plus (when the weight and variant call for it) two masked view forwards.
inline LossParts total_loss(const IgrsrModel& model, const Batch& batch,
                            const TrainConfig& tc, DropoutCtx* drop,
                            std::uint64_t icr_seed) {
    LossParts parts;
    IgrsrModel::BatchForward fwd = model.forward_batch(batch, drop);
    Tensor rec = rec_loss(fwd.representations, batch.targets,
                          model.idr().params().get("item_emb"));
    parts.rec_value = rec.item();

    const bool icr_active = tc.lambda_icr > 0.0 && model.has_lid() &&
                            model.variant() != Variant::WithoutIcr;
    if (icr_active) {
        auto [h1, h2] = model.view_representations(fwd.prefixes, fwd.intents,
                                                   model.config().p_mask, icr_seed);
        parts.icr_forwards = 2 * batch.rows;
        Tensor agreement = infonce(h1, h2, model.config().temperature);
        parts.icr_value = agreement.item();
        parts.total = add(rec, mul_scalar(agreement, tc.lambda_icr));
    } else {
        parts.total = rec;
    }
    return parts;
}

// ---------------------------------------------------------------------------
// fit: adaptive-moment descent over every trainable tensor (reasoner,
// projection, prefix/intent embeddings), early-stopped on validation
// Recall@10 with the best checkpoint retained. The frozen backbone is
// untouched by construction; tests pin it by checksum.
// ---------------------------------------------------------------------------

inline TrainLog fit(const InteractionDataset& ds, const SplitIndex& split, IgrsrModel& model,
                    const TrainConfig& tc) {
    Adam opt(model.trainable_tensors(), tc.learning_rate, tc.beta1, tc.beta2, tc.adam_eps);
    const std::vector<Instance> instances =
        cap_instances(split.train, tc.max_instances_per_user);
    const std::vector<Instance> val_instances = val_view(split.val, tc.val_subset);
    const std::size_t n_max = model.config().max_seq_len;

    auto snapshot = [&model] {
        std::vector<std::vector<double>> values;
        for (const auto& [name, t] : model.trainable_named()) values.push_back(t.values());
        return values;
    };
    auto restore = [&model](const std::vector<std::vector<double>>& values) {
        std::size_t i = 0;
        for (auto& [name, t] : model.trainable_named()) t.values() = values[i++];
    };

    TrainLog log;
    std::vector<std::vector<double>> best = snapshot();
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        Rng drop_rng(derive_seed(tc.seed, "fit-dropout-" + std::to_string(epoch)));
        DropoutCtx drop{&drop_rng, model.config().dropout};
        auto batches = make_batches(instances, ds, n_max, tc.batch_size,
                                    derive_seed(tc.seed, "fit-shuffle-" +
                                                             std::to_string(epoch)));
        double rec_sum = 0.0, icr_sum = 0.0;
        std::size_t icr_forwards = 0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const Batch& batch = batches[bi];
            LossParts parts =
                total_loss(model, batch, tc, &drop,
                           derive_seed(tc.seed, "icr-" + std::to_string(epoch) + "-" +
                                                    std::to_string(bi)));
            check_loss_finite(parts.total.item(), batch, epoch, "igrsr");
            rec_sum += parts.rec_value * static_cast<double>(batch.rows);
            icr_sum += parts.icr_value;
            icr_forwards += parts.icr_forwards;
            opt.zero_grad();
            parts.total.backward();
            opt.step();
        }

        RankingMetrics val = rank_and_score(model.scorer(), ds, val_instances, n_max);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.rec_loss = rec_sum / static_cast<double>(instances.size());
        rec.icr_loss = icr_sum;
        rec.total_loss = rec.rec_loss + tc.lambda_icr * rec.icr_loss;
        rec.val_recall10 = val.recall_at(10);
        rec.val_ndcg10 = val.ndcg_at(10);
        rec.icr_forward_count = icr_forwards;
        log.epochs.push_back(rec);

        if (val.recall_at(10) > log.best_val_recall10) {
            log.best_val_recall10 = val.recall_at(10);
            log.best_epoch = epoch;
            best = snapshot();
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    restore(best);
    return log;
}

}  // namespace igrsr
