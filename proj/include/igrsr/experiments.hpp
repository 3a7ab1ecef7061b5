#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "igrsr/trainer.hpp"

namespace igrsr {

// ---------------------------------------------------------------------------
// Experiment orchestration. Every experiment returns a deterministic report
// (seeded runs, no wall-clock content); timing goes to a separate file so
// report.json stays byte-stable across reruns.
// ---------------------------------------------------------------------------

struct RunResult {
    std::string variant;
    std::uint64_t seed = 0;
    RankingMetrics test;
    TrainLog log;
};

struct ExperimentOutcome {
    std::string experiment;
    nlohmann::json report;
    std::vector<RunResult> runs;
    double wall_s = 0.0;
};

inline InteractionDataset acquire_dataset(const Config& cfg, std::uint64_t synth_seed) {
    const std::string& path = cfg.data.dataset_path;
    if (path.empty()) return generate_synthetic(cfg.data.synth, synth_seed);
    std::string fmt = cfg.data.format;
    if (fmt == "auto") {
        if (path.size() >= 4 && path.substr(path.size() - 4) == ".tsv") fmt = "tsv";
        else if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl") fmt = "jsonl";
        else fmt = "container";
    }
    if (fmt == "tsv") return ingest(path, IngestFormat::Tsv, cfg.data.k_core);
    if (fmt == "jsonl") return ingest(path, IngestFormat::Jsonl, cfg.data.k_core);
    if (fmt == "container") return load_dataset(path);
    throw ConfigError("unknown dataset format '" + fmt + "'");
}

namespace detail {

inline std::string run_id(const std::string& config_fp, const std::string& variant,
                          std::uint64_t seed) {
    return to_hex(fnv1a(config_fp + ":" + variant + ":" + std::to_string(seed)));
}

inline nlohmann::json metrics_json(const RankingMetrics& m,
                                   const std::vector<std::size_t>& ks) {
    nlohmann::json j;
    for (std::size_t k : ks) {
        j["recall@" + std::to_string(k)] = m.recall_at(k);
        j["ndcg@" + std::to_string(k)] = m.ndcg_at(k);
    }
    return j;
}

inline BackboneConfig lid_backbone_config(const ModelConfig& m) {
    BackboneConfig bc;
    bc.dim = m.lid_dim;
    bc.layers = m.backbone_layers;
    bc.heads = m.backbone_heads;
    bc.n_max = m.max_seq_len;
    bc.dropout = m.dropout;
    return bc;
}

inline BackboneConfig baseline_backbone_config(const ModelConfig& m) {
    BackboneConfig bc = lid_backbone_config(m);
    bc.dim = m.backbone_dim;
    return bc;
}

inline TrainConfig run_train_config(const Config& cfg, std::uint64_t seed) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    return tc;
}

// Frozen-encoder pretraining runs under its own instance budget; competing
// models (the baseline included) all train under the fit budget.
inline TrainConfig pretrain_config(const Config& cfg, std::uint64_t seed) {
    TrainConfig tc = run_train_config(cfg, seed);
    tc.max_instances_per_user = cfg.train.pretrain_instances;
    return tc;
}

// Trains the SASRec-style baseline for one seed and evaluates on test.
inline RunResult run_baseline(const Config& cfg, const InteractionDataset& ds,
                              const SplitIndex& split, std::uint64_t seed) {
    TrainConfig tc = run_train_config(cfg, derive_seed(seed, "baseline"));
    auto [model, log] = pretrain_backbone(ds, split, baseline_backbone_config(cfg.model), tc);
    RunResult r;
    r.variant = "baseline";
    r.seed = seed;
    r.log = std::move(log);
    r.test = rank_and_score(model.scorer(), ds, split.test, cfg.model.max_seq_len,
                            cfg.experiment.top_k);
    return r;
}

// Pretrains (or reuses) the frozen LID encoder, assembles the requested
// variant, fits it and evaluates on test.
inline RunResult run_variant(const Config& cfg, const InteractionDataset& ds,
                             const SplitIndex& split, Variant variant, std::uint64_t seed,
                             const Backbone* shared_lid_backbone,
                             std::optional<IgrsrModel>* trained_out = nullptr) {
    ModelConfig mc = cfg.model;
    TrainConfig tc = run_train_config(cfg, derive_seed(seed, variant_name(variant)));
    if (variant == Variant::WithoutIcr) tc.lambda_icr = 0.0;

    std::optional<Backbone> lid_encoder;
    if (variant != Variant::WithoutLid) {
        if (shared_lid_backbone != nullptr) {
            lid_encoder = *shared_lid_backbone;  // shares frozen tensors
        } else {
            TrainConfig ptc = pretrain_config(cfg, derive_seed(seed, "lid-pretrain"));
            lid_encoder = pretrain_backbone(ds, split, lid_backbone_config(mc), ptc).first;
        }
    }

    IgrsrModel model = IgrsrModel::create(variant, mc, ds.item_count,
                                          derive_seed(seed, "model"), std::move(lid_encoder));
    RunResult r;
    r.variant = variant_name(variant);
    r.seed = seed;
    r.log = fit(ds, split, model, tc);
    r.test = rank_and_score(model.scorer(), ds, split.test, mc.max_seq_len,
                            cfg.experiment.top_k);
    if (trained_out != nullptr) trained_out->emplace(std::move(model));
    return r;
}

inline nlohmann::json aggregate_variants(const std::vector<RunResult>& runs,
                                         const Config& cfg) {
    std::vector<std::string> order;
    for (const auto& r : runs)
        if (std::find(order.begin(), order.end(), r.variant) == order.end())
            order.push_back(r.variant);

    nlohmann::json variants = nlohmann::json::array();
    for (const auto& name : order) {
        nlohmann::json v;
        v["name"] = name;
        nlohmann::json jruns = nlohmann::json::array();
        std::map<std::string, std::vector<double>> samples;
        for (const auto& r : runs) {
            if (r.variant != name) continue;
            nlohmann::json jr;
            jr["seed"] = r.seed;
            jr["run_id"] = run_id(cfg.fingerprint(), name, r.seed);
            jr["metrics"] = metrics_json(r.test, cfg.experiment.top_k);
            jr["best_epoch"] = r.log.best_epoch;
            jr["epochs_trained"] = r.log.epochs.size();
            for (auto& [key, val] : jr["metrics"].items())
                samples[key].push_back(val.get<double>());
            jruns.push_back(std::move(jr));
        }
        v["runs"] = std::move(jruns);
        nlohmann::json mean, stddev;
        for (auto& [key, vals] : samples) {
            double mu = 0.0;
            for (double x : vals) mu += x;
            mu /= static_cast<double>(vals.size());
            double var = 0.0;
            for (double x : vals) var += (x - mu) * (x - mu);
            var /= static_cast<double>(vals.size());
            mean[key] = mu;
            stddev[key] = std::sqrt(var);
        }
        v["mean"] = std::move(mean);
        v["std"] = std::move(stddev);
        variants.push_back(std::move(v));
    }
    return variants;
}

inline double variant_mean(const nlohmann::json& variants, const std::string& name,
                           const std::string& metric) {
    for (const auto& v : variants)
        if (v["name"] == name) return v["mean"][metric].get<double>();
    throw Error("variant " + name + " missing from report");
}

inline nlohmann::json report_header(const std::string& experiment, const Config& cfg,
                                    const InteractionDataset& ds) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["experiment"] = experiment;
    j["config_fingerprint"] = cfg.fingerprint();
    j["seeds"] = cfg.experiment.seeds;
    j["protocol"] = {{"ranking", "full"},
                     {"candidate_exclusion", "interacted-items-before-target"},
                     {"tie_break", "smaller-item-id"},
                     {"loss", "full-softmax-cross-entropy"},
                     {"lambda_icr", cfg.train.lambda_icr}};
    j["dataset"] = {{"source", cfg.data.dataset_path.empty() ? std::string("synthetic")
                                                             : cfg.data.dataset_path},
                    {"users", ds.user_count},
                    {"items", ds.item_count},
                    {"interactions", ds.interaction_count()}};
    return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Main comparison: the reflexive baseline vs the intent-guided model, shared
// splits and seeds, multi-seed mean and std plus relative deltas.
// ---------------------------------------------------------------------------

inline ExperimentOutcome run_main(const Config& cfg, const InteractionDataset& ds) {
    const auto start = std::chrono::steady_clock::now();
    SplitIndex split = leave_one_out_split(ds);

    ExperimentOutcome out;
    out.experiment = "main";
    for (std::uint64_t seed : cfg.experiment.seeds) {
        out.runs.push_back(detail::run_baseline(cfg, ds, split, seed));
        out.runs.push_back(
            detail::run_variant(cfg, ds, split, Variant::Full, seed, nullptr));
    }

    nlohmann::json report = detail::report_header("main", cfg, ds);
    report["variants"] = detail::aggregate_variants(out.runs, cfg);
    nlohmann::json deltas = nlohmann::json::array();
    for (std::size_t k : cfg.experiment.top_k) {
        for (const char* metric_base : {"recall@", "ndcg@"}) {
            const std::string metric = metric_base + std::to_string(k);
            const double base = detail::variant_mean(report["variants"], "baseline", metric);
            const double ours = detail::variant_mean(report["variants"], "igrsr", metric);
            deltas.push_back({{"variant", "igrsr"},
                              {"vs", "baseline"},
                              {"metric", metric},
                              {"relative", base > 0.0 ? (ours - base) / base : 0.0}});
        }
    }
    report["deltas"] = std::move(deltas);
    out.report = std::move(report);
    out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// ---------------------------------------------------------------------------
// Ablations: full model vs w/o LID, w/o cross-attention (concat fusion) and
// w/o ICR, identical seeds and splits. Each seed pretrains one frozen
// encoder shared by every variant that needs it.
// ---------------------------------------------------------------------------

inline ExperimentOutcome run_ablations(const Config& cfg, const InteractionDataset& ds) {
    const auto start = std::chrono::steady_clock::now();
    SplitIndex split = leave_one_out_split(ds);

    ExperimentOutcome out;
    out.experiment = "ablations";
    for (std::uint64_t seed : cfg.experiment.seeds) {
        TrainConfig ptc = detail::pretrain_config(cfg, derive_seed(seed, "lid-pretrain"));
        Backbone lid_encoder =
            pretrain_backbone(ds, split, detail::lid_backbone_config(cfg.model), ptc).first;
        for (Variant v : {Variant::Full, Variant::WithoutLid, Variant::ConcatFusion,
                          Variant::WithoutIcr})
            out.runs.push_back(detail::run_variant(cfg, ds, split, v, seed, &lid_encoder));
    }

    nlohmann::json report = detail::report_header("ablations", cfg, ds);
    report["variants"] = detail::aggregate_variants(out.runs, cfg);
    nlohmann::json deltas = nlohmann::json::array();
    for (const char* name : {"wo_lid", "wo_cross_attn", "wo_icr"}) {
        const double full = detail::variant_mean(report["variants"], "igrsr", "recall@10");
        const double abl = detail::variant_mean(report["variants"], name, "recall@10");
        deltas.push_back({{"variant", name},
                          {"vs", "igrsr"},
                          {"metric", "recall@10"},
                          {"relative", full > 0.0 ? (abl - full) / full : 0.0}});
    }
    report["deltas"] = std::move(deltas);
    out.report = std::move(report);
    out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// ---------------------------------------------------------------------------
// Noise robustness: retrain on a dataset whose training interactions are
// randomly replaced at the configured ratio (held-out test targets are never
// touched) and compare relative Recall@10 drops.
// ---------------------------------------------------------------------------

inline ExperimentOutcome run_noise(const Config& cfg, const InteractionDataset& ds) {
    const auto start = std::chrono::steady_clock::now();
    SplitIndex split = leave_one_out_split(ds);

    ExperimentOutcome out;
    out.experiment = "noise";
    for (std::uint64_t seed : cfg.experiment.seeds) {
        InteractionDataset noisy =
            inject_noise(ds, cfg.experiment.noise_ratio, derive_seed(seed, "noise"));
        SplitIndex noisy_split = leave_one_out_split(noisy);

        RunResult r = detail::run_baseline(cfg, ds, split, seed);
        r.variant = "baseline_clean";
        out.runs.push_back(std::move(r));
        r = detail::run_baseline(cfg, noisy, noisy_split, seed);
        r.variant = "baseline_noisy";
        out.runs.push_back(std::move(r));
        r = detail::run_variant(cfg, ds, split, Variant::Full, seed, nullptr);
        r.variant = "igrsr_clean";
        out.runs.push_back(std::move(r));
        r = detail::run_variant(cfg, noisy, noisy_split, Variant::Full, seed, nullptr);
        r.variant = "igrsr_noisy";
        out.runs.push_back(std::move(r));
    }

    nlohmann::json report = detail::report_header("noise", cfg, ds);
    report["noise_ratio"] = cfg.experiment.noise_ratio;
    report["variants"] = detail::aggregate_variants(out.runs, cfg);
    nlohmann::json drops = nlohmann::json::array();
    for (const char* name : {"baseline", "igrsr"}) {
        const double clean = detail::variant_mean(report["variants"],
                                                  std::string(name) + "_clean", "recall@10");
        const double noisy = detail::variant_mean(report["variants"],
                                                  std::string(name) + "_noisy", "recall@10");
        drops.push_back({{"variant", name},
                         {"clean_recall@10", clean},
                         {"noisy_recall@10", noisy},
                         {"relative_drop", clean > 0.0 ? (clean - noisy) / clean : 0.0}});
    }
    report["drops"] = std::move(drops);
    out.report = std::move(report);
    out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// ---------------------------------------------------------------------------
// Prefix/intent token-count sweep. Every grid point of one seed reuses the
// same pretrained frozen encoder; the report carries its fingerprint per run
// so that reuse is checkable.
// ---------------------------------------------------------------------------

inline ExperimentOutcome run_token_sweep(const Config& cfg, const InteractionDataset& ds) {
    const auto start = std::chrono::steady_clock::now();
    SplitIndex split = leave_one_out_split(ds);

    ExperimentOutcome out;
    out.experiment = "token_sweep";
    nlohmann::json grid = nlohmann::json::array();
    for (std::uint64_t seed : cfg.experiment.seeds) {
        TrainConfig ptc = detail::pretrain_config(cfg, derive_seed(seed, "lid-pretrain"));
        Backbone lid_encoder =
            pretrain_backbone(ds, split, detail::lid_backbone_config(cfg.model), ptc).first;
        const std::string encoder_fp = to_hex(lid_encoder.fingerprint());
        for (std::size_t k : cfg.experiment.k_grid) {
            for (std::size_t m : cfg.experiment.m_grid) {
                Config point = cfg;
                point.model.prefix_tokens = k;
                point.model.intent_tokens = m;
                point.model.validate();
                RunResult r = detail::run_variant(point, ds, split, Variant::Full, seed,
                                                  &lid_encoder);
                r.variant = "k" + std::to_string(k) + "_m" + std::to_string(m);
                grid.push_back({{"k", k},
                                {"m", m},
                                {"seed", seed},
                                {"recall@10", r.test.recall_at(10)},
                                {"ndcg@10", r.test.ndcg_at(10)},
                                {"backbone_fingerprint", encoder_fp}});
                out.runs.push_back(std::move(r));
            }
        }
    }

    nlohmann::json report = detail::report_header("token_sweep", cfg, ds);
    report["grid"] = std::move(grid);
    out.report = std::move(report);
    out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// ---------------------------------------------------------------------------
// Output emission. report.json and metrics.csv are deterministic; wall-clock
// timing lands in timing.json; per-epoch training records (with wall time)
// in train_log.jsonl.
// ---------------------------------------------------------------------------

inline void write_outputs(const ExperimentOutcome& out, const std::string& out_dir) {
    {
        std::ofstream f(out_dir + "/report.json");
        if (!f) throw IoError("cannot write " + out_dir + "/report.json");
        f << out.report.dump(2) << "\n";
    }
    {
        std::ofstream f(out_dir + "/metrics.csv");
        f << "variant,seed,recall@10,recall@20,ndcg@10,ndcg@20\n";
        for (const auto& r : out.runs) {
            f << r.variant << "," << r.seed;
            for (std::size_t k : {10, 20}) f << "," << r.test.recall_at(k);
            for (std::size_t k : {10, 20}) f << "," << r.test.ndcg_at(k);
            f << "\n";
        }
    }
    if (out.experiment == "token_sweep") {
        std::ofstream f(out_dir + "/sweep.csv");
        f << "k,m,seed,recall@10,ndcg@10\n";
        for (const auto& row : out.report.at("grid"))
            f << row.at("k") << "," << row.at("m") << "," << row.at("seed") << ","
              << row.at("recall@10").get<double>() << ","
              << row.at("ndcg@10").get<double>() << "\n";
    }
    {
        std::ofstream f(out_dir + "/train_log.jsonl");
        for (const auto& r : out.runs) {
            for (const auto& e : r.log.epochs) {
                nlohmann::json line = {{"variant", r.variant},
                                       {"seed", r.seed},
                                       {"epoch", e.epoch},
                                       {"rec_loss", e.rec_loss},
                                       {"icr_loss", e.icr_loss},
                                       {"total_loss", e.total_loss},
                                       {"val_recall@10", e.val_recall10},
                                       {"val_ndcg@10", e.val_ndcg10},
                                       {"icr_forwards", e.icr_forward_count},
                                       {"wall_s", e.wall_s}};
                f << line.dump() << "\n";
            }
        }
    }
    {
        std::ofstream f(out_dir + "/timing.json");
        f << nlohmann::json{{"experiment", out.experiment}, {"wall_s", out.wall_s}}.dump(2)
          << "\n";
    }
}

}  // namespace igrsr
