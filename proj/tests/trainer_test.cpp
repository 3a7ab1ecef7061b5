#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "igrsr/trainer.hpp"
#include "oracles.hpp"

using namespace igrsr;

namespace {

ModelConfig small_cfg() {
    ModelConfig cfg;
    cfg.lid_dim = 8;
    cfg.prefix_tokens = 2;
    cfg.intent_tokens = 2;
    cfg.hidden_dim = 8;
    cfg.idr_layers = 1;
    cfg.idr_heads = 2;
    cfg.backbone_layers = 1;
    cfg.backbone_heads = 2;
    cfg.max_seq_len = 10;
    cfg.dropout = 0.1;
    cfg.p_mask = 0.3;
    cfg.temperature = 0.1;
    return cfg;
}

InteractionDataset small_ds(std::uint64_t seed = 7) {
    SynthSpec spec;
    spec.users = 120;
    spec.items = 24;
    spec.intent_count = 4;
    spec.len_min = 6;
    spec.len_max = 10;
    return generate_synthetic(spec, seed);
}

BackboneConfig lid_backbone_cfg(const ModelConfig& cfg) {
    BackboneConfig bc;
    bc.dim = cfg.lid_dim;
    bc.layers = cfg.backbone_layers;
    bc.heads = cfg.backbone_heads;
    bc.n_max = cfg.max_seq_len;
    bc.dropout = cfg.dropout;
    return bc;
}

IgrsrModel make_model(const InteractionDataset& ds, const ModelConfig& cfg,
                      Variant v = Variant::Full, std::uint64_t seed = 5) {
    Backbone bb(ds.item_count, lid_backbone_cfg(cfg), seed + 100);
    return IgrsrModel::create(v, cfg, ds.item_count, seed, std::move(bb));
}

}  // namespace

TEST_CASE("rec_loss: uniform logits cost ln V, confident logits cost nothing") {
    // zero representation -> all item logits 0, pad masked out -> uniform
    // over the V real items
    Rng rng(3);
    Tensor item_emb = Tensor::randn({6, 4}, rng);  // 5 items + pad
    Tensor h = Tensor::zeros({2, 4});
    Tensor loss = rec_loss(h, {1, 3}, item_emb);
    CHECK(std::abs(loss.item() - std::log(5.0)) < 1e-9);

    // a representation exactly aligned with a huge target row drives the
    // loss toward zero
    Tensor spiky = Tensor::zeros({6, 4});
    spiky.at(2, 0) = 100.0;
    Tensor h2 = Tensor::zeros({1, 4});
    h2.at(0, 0) = 1.0;
    CHECK(rec_loss(h2, {2}, spiky).item() < 1e-12);
}

TEST_CASE("rec_loss: matches the loop oracle on a random 5-item vocab") {
    Rng rng(11);
    Tensor item_emb = Tensor::randn({6, 4}, rng);
    Tensor h = Tensor::randn({3, 4}, rng);
    std::vector<int> targets = {2, 5, 1};
    Tensor loss = rec_loss(h, targets, item_emb);

    std::vector<double> logits(3 * 6);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t v = 0; v < 6; ++v) {
            double s = 0.0;
            for (std::size_t c = 0; c < 4; ++c) s += h.at(i, c) * item_emb.at(v, c);
            logits[i * 6 + v] = s + (v == 0 ? -1e9 : 0.0);
        }
    const double expect = oracle::cross_entropy(logits, targets, 3, 6, true);
    CHECK(std::abs(loss.item() - expect) < 1e-12);
}

TEST_CASE("total_loss: weight zero reduces exactly to the recommendation loss") {
    InteractionDataset ds = small_ds();
    SplitIndex split = leave_one_out_split(ds);
    ModelConfig cfg = small_cfg();
    IgrsrModel model = make_model(ds, cfg);
    auto batches = make_batches(split.train, ds, cfg.max_seq_len, 8, 1);

    TrainConfig tc;
    tc.lambda_icr = 0.0;
    LossParts parts = total_loss(model, batches[0], tc, nullptr, 3);
    CHECK(parts.total.item() == parts.rec_value);
    CHECK(parts.icr_forwards == 0);

    TrainConfig tc2;
    tc2.lambda_icr = 0.5;
    LossParts both = total_loss(model, batches[0], tc2, nullptr, 3);
    CHECK(both.icr_forwards == 2 * batches[0].rows);
    CHECK(both.total.item() ==
          doctest::Approx(both.rec_value + 0.5 * both.icr_value).epsilon(1e-12));

    // B = 1: the contrastive term is identically zero
    Batch single;
    single.rows = 1;
    single.width = batches[0].width;
    single.items.assign(single.width, 0);
    single.items[single.width - 1] = 3;
    single.lengths = {1};
    single.targets = {5};
    single.users = {0};
    TrainConfig tc3;
    tc3.lambda_icr = 1.0;
    LossParts lone = total_loss(model, single, tc3, nullptr, 9);
    CHECK(std::abs(lone.icr_value) < 1e-12);
    CHECK(lone.total.item() == doctest::Approx(lone.rec_value).epsilon(1e-12));
}

TEST_CASE("total_loss: gradient matches central differences at toy dims") {
    InteractionDataset ds = small_ds(13);
    SplitIndex split = leave_one_out_split(ds);
    ModelConfig cfg = small_cfg();
    cfg.dropout = 0.0;
    IgrsrModel model = make_model(ds, cfg, Variant::Full, 17);
    auto batches = make_batches(split.train, ds, cfg.max_seq_len, 3, 1);
    TrainConfig tc;
    tc.lambda_icr = 0.3;

    std::vector<Tensor> inputs = {model.lid().own_params().get("prefix_emb"),
                                  model.idr().params().get("proj.w2"),
                                  model.idr().params().get("layer0.cross.h1.wv"),
                                  model.idr().params().get("layer0.ln.gain")};
    double err = grad_check(
        [&](const std::vector<Tensor>&) {
            return total_loss(model, batches[0], tc, nullptr, 21).total;
        },
        inputs);
    CHECK(err < 1e-4);
}

TEST_CASE("fit: frozen backbone, decreasing loss, reproducible logs") {
    InteractionDataset ds = small_ds(19);
    SplitIndex split = leave_one_out_split(ds);
    ModelConfig cfg = small_cfg();

    TrainConfig tc;
    tc.learning_rate = 3e-3;
    tc.batch_size = 16;
    tc.max_epochs = 3;
    tc.patience = 3;
    tc.seed = 23;
    tc.lambda_icr = 0.1;
    tc.max_instances_per_user = 4;

    IgrsrModel model = make_model(ds, cfg, Variant::Full, 29);
    const std::uint64_t frozen_before = model.lid().backbone().params().checksum();
    TrainLog log = fit(ds, split, model, tc);
    CHECK(model.lid().backbone().params().checksum() == frozen_before);

    REQUIRE(log.epochs.size() == 3);
    CHECK(log.epochs[1].rec_loss < log.epochs[0].rec_loss);
    CHECK(log.epochs[2].rec_loss < log.epochs[1].rec_loss);
    for (const auto& e : log.epochs) CHECK(e.icr_forward_count > 0);

    IgrsrModel model2 = make_model(ds, cfg, Variant::Full, 29);
    TrainLog log2 = fit(ds, split, model2, tc);
    CHECK(logs_equal_deterministic(log, log2));

    // the without-ICR training path never samples intent views
    TrainConfig no_icr = tc;
    no_icr.lambda_icr = 0.0;
    IgrsrModel plain = make_model(ds, cfg, Variant::WithoutIcr, 29);
    TrainLog plain_log = fit(ds, split, plain, no_icr);
    for (const auto& e : plain_log.epochs) CHECK(e.icr_forward_count == 0);
}

TEST_CASE("fit: a poisoned parameter aborts with a divergence error") {
    InteractionDataset ds = small_ds(31);
    SplitIndex split = leave_one_out_split(ds);
    ModelConfig cfg = small_cfg();
    IgrsrModel model = make_model(ds, cfg, Variant::Full, 37);
    model.idr().params().get("item_emb").at(1, 0) =
        std::numeric_limits<double>::quiet_NaN();
    TrainConfig tc;
    tc.max_epochs = 1;
    CHECK_THROWS_AS(fit(ds, split, model, tc), TrainingDivergedError);
}

TEST_CASE("trainable parameter census per variant") {
    InteractionDataset ds = small_ds(41);
    ModelConfig cfg = small_cfg();

    IgrsrModel full = make_model(ds, cfg, Variant::Full, 43);
    IgrsrModel wo_lid = IgrsrModel::create(Variant::WithoutLid, cfg, ds.item_count, 43,
                                           std::nullopt);
    IgrsrModel wo_cross = make_model(ds, cfg, Variant::ConcatFusion, 43);
    IgrsrModel wo_icr = make_model(ds, cfg, Variant::WithoutIcr, 43);

    auto names = [](const IgrsrModel& m) {
        std::vector<std::string> out;
        for (auto& [name, t] : m.trainable_named()) out.push_back(name);
        return out;
    };

    auto full_names = names(full);
    // exactly: LID prefix/intent/pos-extension + IDR (projection, cross and
    // self attention, FFN, norms, item/pos embeddings); never the backbone
    for (const auto& n : full_names) {
        CHECK(n.rfind("bb.", 0) != 0);
        CHECK((n.rfind("lid.", 0) == 0 || n.rfind("idr.", 0) == 0));
    }
    auto has = [&](const std::vector<std::string>& ns, const std::string& key) {
        for (const auto& n : ns)
            if (n.find(key) != std::string::npos) return true;
        return false;
    };
    CHECK(has(full_names, "lid.prefix_emb"));
    CHECK(has(full_names, "lid.intent_emb"));
    CHECK(has(full_names, "proj.w1"));
    CHECK(has(full_names, "cross"));

    auto wo_lid_names = names(wo_lid);
    CHECK(!has(wo_lid_names, "lid."));
    CHECK(!has(wo_lid_names, "proj."));
    CHECK(!has(wo_lid_names, "cross"));
    CHECK(wo_lid_names.size() < full_names.size());

    auto wo_cross_names = names(wo_cross);
    CHECK(has(wo_cross_names, "lid.prefix_emb"));
    CHECK(has(wo_cross_names, "proj.w1"));
    CHECK(!has(wo_cross_names, "cross"));
    CHECK(wo_cross_names.size() < full_names.size());

    CHECK(names(wo_icr).size() == full_names.size());
}

TEST_CASE("model archive: save, load, bit-identical evaluation") {
    InteractionDataset ds = small_ds(47);
    SplitIndex split = leave_one_out_split(ds);
    ModelConfig cfg = small_cfg();
    IgrsrModel model = make_model(ds, cfg, Variant::Full, 53);

    TrainConfig tc;
    tc.batch_size = 32;
    tc.max_epochs = 1;
    tc.seed = 3;
    tc.max_instances_per_user = 1;
    fit(ds, split, model, tc);

    model.save_archive("igrsr_test_model.ckpt", "cafebabe");
    IgrsrModel loaded = IgrsrModel::load_archive("igrsr_test_model.ckpt", cfg, "cafebabe");

    RankingMetrics a = rank_and_score(model.scorer(), ds, split.test, cfg.max_seq_len);
    RankingMetrics b = rank_and_score(loaded.scorer(), ds, split.test, cfg.max_seq_len);
    CHECK(a.ranks == b.ranks);
    CHECK(a.recall_at(10) == b.recall_at(10));

    CHECK_THROWS_AS(IgrsrModel::load_archive("igrsr_test_model.ckpt", cfg, "00000000"),
                    ConfigError);
    std::remove("igrsr_test_model.ckpt");
}

TEST_CASE("trained model actually uses its intents") {
    InteractionDataset ds = small_ds(59);
    SplitIndex split = leave_one_out_split(ds);
    ModelConfig cfg = small_cfg();
    IgrsrModel model = make_model(ds, cfg, Variant::Full, 61);
    TrainConfig tc;
    tc.batch_size = 32;
    tc.max_epochs = 2;
    tc.seed = 5;
    tc.max_instances_per_user = 2;
    fit(ds, split, model, tc);

    // swap another user's intents in: h_u moves (cosine distance > 0 on avg)
    NoGradGuard ng;
    double distance = 0.0;
    std::size_t count = 0;
    for (std::size_t u = 0; u + 1 < 20; u += 2) {
        const auto& seq_a = ds.sequences[u];
        const auto& seq_b = ds.sequences[u + 1];
        std::vector<int> pa(seq_a.begin(), seq_a.end() - 1);
        std::vector<int> pb(seq_b.begin(), seq_b.end() - 1);
        Tensor own = model.user_representation(pa);
        Tensor swapped_intents = model.projected_intents(pb);
        Tensor swapped = model.user_representation(pa, &swapped_intents);
        distance += 1.0 - cosine_similarity(own, swapped).item();
        ++count;
    }
    CHECK(distance / static_cast<double>(count) > 0.0);
}
