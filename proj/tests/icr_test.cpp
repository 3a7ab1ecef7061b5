#include <doctest.h>

#include <cmath>
#include <vector>

#include "igrsr/model.hpp"
#include "oracles.hpp"

using namespace igrsr;

namespace {

std::vector<std::vector<double>> to_rows(const Tensor& t) {
    std::vector<std::vector<double>> rows(t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) rows[i].push_back(t.at(i, j));
    return rows;
}

IgrsrModel tiny_model(std::uint64_t seed = 7) {
    ModelConfig cfg;
    cfg.lid_dim = 8;
    cfg.prefix_tokens = 2;
    cfg.intent_tokens = 2;
    cfg.hidden_dim = 8;
    cfg.idr_layers = 1;
    cfg.idr_heads = 2;
    cfg.backbone_layers = 1;
    cfg.backbone_heads = 2;
    cfg.max_seq_len = 8;
    cfg.dropout = 0.0;
    cfg.p_mask = 0.4;
    BackboneConfig bc;
    bc.dim = 8;
    bc.layers = 1;
    bc.heads = 2;
    bc.n_max = 8;
    bc.dropout = 0.0;
    return IgrsrModel::create(Variant::Full, cfg, 20, seed, Backbone(20, bc, seed + 1));
}

}  // namespace

TEST_CASE("sample_views: identity at p=0, determinism, rejection at p=1") {
    Rng rng(3);
    Tensor t_d = Tensor::randn({3, 6}, rng);

    IntentViews id_views = sample_views(t_d, 0.0, 9);
    CHECK(id_views.first.values() == t_d.values());
    CHECK(id_views.second.values() == t_d.values());

    IntentViews a = sample_views(t_d, 0.5, 42);
    IntentViews b = sample_views(t_d, 0.5, 42);
    CHECK(a.first.values() == b.first.values());
    CHECK(a.second.values() == b.second.values());
    IntentViews c = sample_views(t_d, 0.5, 43);
    CHECK(a.first.values() != c.first.values());

    // the two masks are sampled independently
    CHECK(a.first.values() != a.second.values());

    CHECK_THROWS_AS(sample_views(t_d, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(sample_views(t_d, -0.1, 1), ConfigError);
}

TEST_CASE("sample_views: masked fraction concentrates at p_mask") {
    // 10^5 samples, every entry nonzero so a zero in the view means masked
    Tensor t_d = Tensor::full({200, 500}, 1.0);
    const double p = 0.3;
    IntentViews views = sample_views(t_d, p, 123);
    double zeros = 0.0;
    for (std::size_t i = 0; i < views.first.numel(); ++i)
        if (views.first.at(i) == 0.0) zeros += 1.0;
    const double fraction = zeros / static_cast<double>(views.first.numel());
    CHECK(std::abs(fraction - p) < 0.02);
}

TEST_CASE("infonce: analytic anchors") {
    // identical representations: every summand is -log(1/B), total B ln B
    const std::size_t b = 5;
    Tensor h = Tensor::zeros({b, 4});
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < 4; ++j) h.at(i, j) = 0.3 * static_cast<double>(j) + 0.1;
    Tensor loss = infonce(h, h, 0.1);
    CHECK(std::abs(loss.item() - static_cast<double>(b) * std::log(static_cast<double>(b))) <
          1e-6);

    // B = 1: numerator equals denominator
    Rng rng(5);
    Tensor one = Tensor::randn({1, 6}, rng);
    Tensor other = Tensor::randn({1, 6}, rng);
    CHECK(std::abs(infonce(one, other, 0.2).item()) < 1e-12);
}

TEST_CASE("infonce: matches the loop oracle on a random batch") {
    Rng rng(11);
    Tensor h1 = Tensor::randn({4, 6}, rng);
    Tensor h2 = Tensor::randn({4, 6}, rng);
    for (double tau : {0.1, 0.5, 2.0}) {
        Tensor loss = infonce(h1, h2, tau);
        const double expect = oracle::infonce(to_rows(h1), to_rows(h2), tau);
        CHECK(std::abs(loss.item() - expect) < 1e-10);
        CHECK(loss.item() >= 0.0);  // each summand is -log of a probability
    }
}

TEST_CASE("infonce: temperature to infinity flattens the softmax") {
    Rng rng(13);
    Tensor h1 = Tensor::randn({6, 5}, rng);
    Tensor h2 = Tensor::randn({6, 5}, rng);
    const double limit = 6.0 * std::log(6.0);
    CHECK(std::abs(infonce(h1, h2, 1e9).item() - limit) < 1e-6);
}

TEST_CASE("infonce: zero-norm representations are a numeric error") {
    Rng rng(17);
    Tensor h1 = Tensor::randn({3, 4}, rng);
    Tensor h2 = Tensor::randn({3, 4}, rng);
    for (std::size_t j = 0; j < 4; ++j) h2.at(1, j) = 0.0;
    CHECK_THROWS_AS(infonce(h1, h2, 0.1), NumericError);
    CHECK_THROWS_AS(infonce(h1, h2, 0.0), ConfigError);
}

TEST_CASE("infonce: gradient matches central differences") {
    Rng rng(19);
    Tensor h1 = Tensor::randn({3, 5}, rng);
    Tensor h2 = Tensor::randn({3, 5}, rng);
    double err = grad_check(
        [](const std::vector<Tensor>& in) { return infonce(in[0], in[1], 0.3); }, {h1, h2});
    CHECK(err < 1e-4);
}

TEST_CASE("view_representations: p=0 with dropout off gives bit-identical views") {
    IgrsrModel model = tiny_model();
    std::vector<std::vector<int>> prefixes = {{3, 7}, {10, 2, 5}};
    std::vector<Tensor> intents;
    for (const auto& p : prefixes) intents.push_back(model.projected_intents(p));

    auto [h1, h2] = model.view_representations(prefixes, intents, 0.0, 77);
    CHECK(h1.values() == h2.values());
    CHECK(h1.rows() == 2);

    // B = 1 keeps single-row outputs
    auto [s1, s2] = model.view_representations({prefixes[0]}, {intents[0]}, 0.4, 78);
    CHECK(s1.rows() == 1);
}

TEST_CASE("view_representations: gradients reach projection and LID tables") {
    IgrsrModel model = tiny_model(21);
    std::vector<std::vector<int>> prefixes = {{3, 7}, {10, 2, 5}, {1, 4}};
    std::vector<Tensor> intents;
    for (const auto& p : prefixes) intents.push_back(model.projected_intents(p));
    auto [h1, h2] = model.view_representations(prefixes, intents, 0.3, 99);
    Tensor loss = infonce(h1, h2, 0.2);
    loss.backward();

    auto grad_norm = [](const Tensor& t) {
        if (!t.has_grad()) return 0.0;
        double s = 0.0;
        for (double v : t.grad()) s += v * v;
        return s;
    };
    CHECK(grad_norm(model.idr().params().get("proj.w1")) > 0.0);
    CHECK(grad_norm(model.lid().own_params().get("prefix_emb")) > 0.0);
    CHECK(grad_norm(model.lid().own_params().get("intent_emb")) > 0.0);
    CHECK(!model.lid().backbone().params().get("item_emb").has_grad());
}

TEST_CASE("icr loss is reproducible to the bit under fixed seeds") {
    auto run = [] {
        IgrsrModel model = tiny_model(31);
        std::vector<std::vector<int>> prefixes = {{3, 7}, {10, 2, 5}};
        std::vector<Tensor> intents;
        for (const auto& p : prefixes) intents.push_back(model.projected_intents(p));
        auto [h1, h2] = model.view_representations(prefixes, intents, 0.4, 7);
        return infonce(h1, h2, 0.1).item();
    };
    CHECK(run() == run());
}
