// Command-line front end: dataset synthesis, backbone pretraining, model
// training and the experiment suites (main comparison, ablations, noise
// robustness, token sweep), all driven by a JSON config.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "igrsr/experiments.hpp"

using namespace igrsr;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--out", args.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--seed", args.seed, "override every configured seed");
}

Config load(const CommonArgs& args) {
    Config cfg = args.config_path.empty() ? Config{} : load_config(args.config_path);
    if (args.seed.has_value()) {
        cfg.train.seed = *args.seed;
        cfg.experiment.seeds = {*args.seed};
    }
    return cfg;
}

void ensure_out(const std::string& dir) { std::filesystem::create_directories(dir); }

std::uint64_t synth_seed(const Config& cfg) {
    return derive_seed(cfg.train.seed, "dataset");
}

void print_summary(const ExperimentOutcome& out, const std::string& out_dir) {
    std::cout << out.experiment << ": " << out.runs.size() << " runs in " << out.wall_s
              << "s -> " << out_dir << "/report.json\n";
    if (out.report.contains("variants"))
        for (const auto& v : out.report["variants"])
            std::cout << "  " << v["name"].get<std::string>()
                      << " recall@10=" << v["mean"]["recall@10"].get<double>() << "\n";
    if (out.report.contains("drops"))
        for (const auto& d : out.report["drops"])
            std::cout << "  " << d["variant"].get<std::string>() << " relative drop "
                      << d["relative_drop"].get<double>() << "\n";
}

int cmd_synth(const CommonArgs& args) {
    Config cfg = load(args);
    ensure_out(args.out_dir);
    InteractionDataset ds = generate_synthetic(cfg.data.synth, synth_seed(cfg));
    const std::string path = args.out_dir + "/dataset.json";
    save_dataset(ds, path);
    std::cout << "synthetic dataset: " << ds.user_count << " users, " << ds.item_count
              << " items, " << ds.interaction_count() << " interactions -> " << path << "\n";
    return 0;
}

int cmd_pretrain(const CommonArgs& args) {
    Config cfg = load(args);
    ensure_out(args.out_dir);
    InteractionDataset ds = acquire_dataset(cfg, synth_seed(cfg));
    SplitIndex split = leave_one_out_split(ds);

    TrainConfig tc = detail::pretrain_config(cfg, cfg.train.seed);
    BackboneConfig bc = detail::lid_backbone_config(cfg.model);
    auto [model, log] = pretrain_backbone(ds, split, bc, tc);
    RankingMetrics test = rank_and_score(model.scorer(), ds, split.test, bc.n_max,
                                         cfg.experiment.top_k);

    CheckpointMeta meta;
    meta["kind"] = "backbone";
    meta["config_fingerprint"] = cfg.fingerprint();
    meta["dim"] = std::to_string(bc.dim);
    meta["layers"] = std::to_string(bc.layers);
    meta["heads"] = std::to_string(bc.heads);
    meta["n_max"] = std::to_string(bc.n_max);
    meta["item_count"] = std::to_string(ds.item_count);
    const std::string ckpt = args.out_dir + "/backbone.ckpt";
    save_checkpoint(model.params(), meta, ckpt);

    ExperimentOutcome out;
    out.experiment = "pretrain";
    RunResult r;
    r.variant = "backbone";
    r.seed = tc.seed;
    r.test = test;
    r.log = log;
    out.runs.push_back(std::move(r));
    out.report = detail::report_header("pretrain", cfg, ds);
    out.report["variants"] = detail::aggregate_variants(out.runs, cfg);
    out.report["checkpoint"] = "backbone.ckpt";
    write_outputs(out, args.out_dir);
    std::cout << "backbone: best val recall@10 " << log.best_val_recall10 << ", test recall@10 "
              << test.recall_at(10) << " -> " << ckpt << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& backbone_path) {
    Config cfg = load(args);
    ensure_out(args.out_dir);
    InteractionDataset ds = acquire_dataset(cfg, synth_seed(cfg));
    SplitIndex split = leave_one_out_split(ds);

    std::optional<Backbone> shared;
    if (!backbone_path.empty()) {
        auto [params, meta] = load_checkpoint(backbone_path);
        if (meta.count("kind") == 0 || meta.at("kind") != "backbone")
            throw ConfigError(backbone_path + " is not a backbone checkpoint");
        BackboneConfig bc = detail::lid_backbone_config(cfg.model);
        if (std::to_string(bc.dim) != meta.at("dim"))
            throw ConfigError("backbone checkpoint dim does not match lid_dim");
        shared = Backbone::from_store(std::move(params), bc, std::stoul(meta.at("item_count")));
        shared->freeze();
    }

    ExperimentOutcome out;
    out.experiment = "main";
    const auto start = std::chrono::steady_clock::now();
    for (std::uint64_t seed : cfg.experiment.seeds) {
        out.runs.push_back(detail::run_baseline(cfg, ds, split, seed));
        std::optional<IgrsrModel> trained;
        out.runs.push_back(detail::run_variant(cfg, ds, split, Variant::Full, seed,
                                               shared.has_value() ? &*shared : nullptr,
                                               &trained));
        trained->save_archive(args.out_dir + "/model_seed" + std::to_string(seed) + ".ckpt",
                              cfg.fingerprint());
    }
    nlohmann::json report = detail::report_header("main", cfg, ds);
    report["variants"] = detail::aggregate_variants(out.runs, cfg);
    nlohmann::json deltas = nlohmann::json::array();
    for (std::size_t k : cfg.experiment.top_k)
        for (const char* base : {"recall@", "ndcg@"}) {
            const std::string metric = base + std::to_string(k);
            const double b = detail::variant_mean(report["variants"], "baseline", metric);
            const double o = detail::variant_mean(report["variants"], "igrsr", metric);
            deltas.push_back({{"variant", "igrsr"},
                              {"vs", "baseline"},
                              {"metric", metric},
                              {"relative", b > 0.0 ? (o - b) / b : 0.0}});
        }
    report["deltas"] = std::move(deltas);
    out.report = std::move(report);
    out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_outputs(out, args.out_dir);
    print_summary(out, args.out_dir);
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& model_path) {
    Config cfg = load(args);
    ensure_out(args.out_dir);
    InteractionDataset ds = acquire_dataset(cfg, synth_seed(cfg));
    SplitIndex split = leave_one_out_split(ds);

    auto [params, meta] = load_checkpoint(model_path);
    RunResult r;
    if (meta.count("kind") != 0 && meta.at("kind") == "backbone") {
        BackboneConfig bc;
        bc.dim = std::stoul(meta.at("dim"));
        bc.layers = std::stoul(meta.at("layers"));
        bc.heads = std::stoul(meta.at("heads"));
        bc.n_max = std::stoul(meta.at("n_max"));
        Backbone model = Backbone::from_store(std::move(params), bc,
                                              std::stoul(meta.at("item_count")));
        r.variant = "baseline";
        r.test = rank_and_score(model.scorer(), ds, split.test, bc.n_max,
                                cfg.experiment.top_k);
    } else {
        IgrsrModel model = IgrsrModel::load_archive(model_path, cfg.model, cfg.fingerprint());
        r.variant = variant_name(model.variant());
        r.test = rank_and_score(model.scorer(), ds, split.test, cfg.model.max_seq_len,
                                cfg.experiment.top_k);
    }
    r.seed = cfg.train.seed;

    ExperimentOutcome out;
    out.experiment = "eval";
    out.runs.push_back(std::move(r));
    out.report = detail::report_header("eval", cfg, ds);
    out.report["model"] = model_path;
    out.report["variants"] = detail::aggregate_variants(out.runs, cfg);
    write_outputs(out, args.out_dir);
    print_summary(out, args.out_dir);
    return 0;
}

template <typename Runner>
int cmd_experiment(const CommonArgs& args, Runner runner) {
    Config cfg = load(args);
    ensure_out(args.out_dir);
    InteractionDataset ds = acquire_dataset(cfg, synth_seed(cfg));
    ExperimentOutcome out = runner(cfg, ds);
    write_outputs(out, args.out_dir);
    print_summary(out, args.out_dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"intent-guided sequential recommendation workbench"};
    app.require_subcommand(1);

    CommonArgs synth_args, pretrain_args, train_args, eval_args, ablate_args, noise_args,
        sweep_args;
    std::string backbone_path, model_path;
    double noise_ratio = -1.0;

    add_common(app.add_subcommand("synth", "generate a synthetic intent-driven dataset"),
               synth_args);
    add_common(app.add_subcommand("pretrain", "pretrain the frozen sequence encoder"),
               pretrain_args);
    CLI::App* train = app.add_subcommand("train", "train the model and the baseline");
    add_common(train, train_args);
    train->add_option("--backbone", backbone_path, "reuse a pretrained encoder checkpoint");
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a saved checkpoint");
    add_common(eval_cmd, eval_args);
    eval_cmd->add_option("--model", model_path, "model archive or backbone checkpoint")
        ->required();
    add_common(app.add_subcommand("ablate", "run the component ablations"), ablate_args);
    CLI::App* noise = app.add_subcommand("noise", "noise-robustness comparison");
    add_common(noise, noise_args);
    noise->add_option("--ratio", noise_ratio, "override the configured noise ratio");
    add_common(app.add_subcommand("sweep", "prefix/intent token-count sweep"), sweep_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("synth")) return cmd_synth(synth_args);
        if (app.got_subcommand("pretrain")) return cmd_pretrain(pretrain_args);
        if (app.got_subcommand("train")) return cmd_train(train_args, backbone_path);
        if (app.got_subcommand("eval")) return cmd_eval(eval_args, model_path);
        if (app.got_subcommand("ablate"))
            return cmd_experiment(ablate_args, [](const Config& c, const InteractionDataset& d) {
                return run_ablations(c, d);
            });
        if (app.got_subcommand("noise"))
            return cmd_experiment(noise_args,
                                  [noise_ratio](Config c, const InteractionDataset& d) {
                                      if (noise_ratio >= 0.0)
                                          c.experiment.noise_ratio = noise_ratio;
                                      return run_noise(c, d);
                                  });
        if (app.got_subcommand("sweep"))
            return cmd_experiment(sweep_args, [](const Config& c, const InteractionDataset& d) {
                return run_token_sweep(c, d);
            });
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const EmptyDatasetError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const TrainingDivergedError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
