#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "igrsr/common.hpp"
#include "igrsr/dataset.hpp"

namespace igrsr {

// ---------------------------------------------------------------------------
// ModelConfig: every architecture hyperparameter in one validated record.
// ---------------------------------------------------------------------------

struct ModelConfig {
    // latent intent distiller
    std::size_t lid_dim = 16;        // frozen-encoder width d_I, one of {8, 16, 32}
    std::size_t prefix_tokens = 4;   // k, tuned in [2, 32]
    std::size_t intent_tokens = 2;   // m, tuned in [1, 5]
    // deliberative reasoner
    std::size_t hidden_dim = 64;     // d
    std::size_t idr_layers = 2;      // L
    std::size_t idr_heads = 2;
    // backbone (baseline role and LID encoder role share layer/head counts)
    std::size_t backbone_dim = 64;   // d_b when serving as the baseline
    std::size_t backbone_layers = 2;
    std::size_t backbone_heads = 2;
    // shared
    std::size_t max_seq_len = 50;    // n_max
    double dropout = 0.2;
    // consistency regularization
    double p_mask = 0.5;             // tuned in [0.1, 0.8]
    double temperature = 0.1;        // tau

    void validate(bool allow_no_lid = false) const {
        if (lid_dim != 8 && lid_dim != 16 && lid_dim != 32)
            throw ConfigError("lid_dim must be one of {8, 16, 32}");
        if (!allow_no_lid && (prefix_tokens < 2 || prefix_tokens > 32))
            throw ConfigError("prefix_tokens must lie in [2, 32]");
        if (!allow_no_lid && (intent_tokens < 1 || intent_tokens > 5))
            throw ConfigError("intent_tokens must lie in [1, 5]");
        if (hidden_dim == 0 || idr_layers == 0)
            throw ConfigError("hidden_dim and idr_layers must be positive");
        if (idr_heads == 0 || hidden_dim % idr_heads != 0)
            throw ConfigError("idr_heads must divide hidden_dim");
        if (backbone_heads == 0 || backbone_dim % backbone_heads != 0 ||
            lid_dim % backbone_heads != 0)
            throw ConfigError("backbone_heads must divide backbone_dim and lid_dim");
        if (backbone_layers == 0) throw ConfigError("backbone_layers must be positive");
        if (max_seq_len == 0) throw ConfigError("max_seq_len must be positive");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
        if (p_mask < 0.0 || p_mask >= 1.0)
            throw ConfigError("p_mask must lie in [0, 1); masking every intent entry "
                              "would make deliberation vacuous");
        if (temperature <= 0.0) throw ConfigError("temperature must be positive");
    }
};

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 128;
    double lambda_icr = 0.1;
    std::size_t max_epochs = 20;
    std::size_t patience = 3;
    std::uint64_t seed = 42;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    // 0 = use every training instance; otherwise cap per user at the most
    // recent q instances (a desk-scale throttle, echoed in reports)
    std::size_t max_instances_per_user = 0;
    // separate cap for backbone pretraining (the baseline and the frozen
    // LID encoder); pretraining may see more data than the fit stage
    std::size_t pretrain_instances = 0;
    // 0 = score the whole validation split each epoch; otherwise early-stop
    // on a fixed deterministic subset of this size
    std::size_t val_subset = 0;

    void validate() const {
        if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (lambda_icr < 0.0) throw ConfigError("lambda_icr must be nonnegative");
        if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
        if (patience == 0) throw ConfigError("patience must be at least 1");
    }
};

struct DataConfig {
    std::string dataset_path;        // empty = synthetic
    std::string format = "auto";     // auto | tsv | jsonl | container
    std::size_t k_core = 5;
    SynthSpec synth;
};

struct ExperimentConfig {
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    double noise_ratio = 0.2;
    std::vector<std::size_t> k_grid = {2, 8};
    std::vector<std::size_t> m_grid = {1, 3};
    std::vector<std::size_t> top_k = {10, 20};
};

struct Config {
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    ExperimentConfig experiment;

    void validate() const {
        model.validate();
        train.validate();
        if (experiment.seeds.empty()) throw ConfigError("experiment.seeds must be nonempty");
        if (experiment.noise_ratio < 0.0 || experiment.noise_ratio > 1.0)
            throw ConfigError("experiment.noise_ratio must lie in [0, 1]");
        if (experiment.top_k.empty()) throw ConfigError("experiment.top_k must be nonempty");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["model"] = {{"lid_dim", model.lid_dim},
                      {"prefix_tokens", model.prefix_tokens},
                      {"intent_tokens", model.intent_tokens},
                      {"hidden_dim", model.hidden_dim},
                      {"idr_layers", model.idr_layers},
                      {"idr_heads", model.idr_heads},
                      {"backbone_dim", model.backbone_dim},
                      {"backbone_layers", model.backbone_layers},
                      {"backbone_heads", model.backbone_heads},
                      {"max_seq_len", model.max_seq_len},
                      {"dropout", model.dropout},
                      {"p_mask", model.p_mask},
                      {"temperature", model.temperature}};
        j["train"] = {{"learning_rate", train.learning_rate},
                      {"batch_size", train.batch_size},
                      {"lambda_icr", train.lambda_icr},
                      {"max_epochs", train.max_epochs},
                      {"patience", train.patience},
                      {"seed", train.seed},
                      {"beta1", train.beta1},
                      {"beta2", train.beta2},
                      {"adam_eps", train.adam_eps},
                      {"max_instances_per_user", train.max_instances_per_user},
                      {"pretrain_instances", train.pretrain_instances},
                      {"val_subset", train.val_subset}};
        j["data"] = {{"dataset_path", data.dataset_path},
                     {"format", data.format},
                     {"k_core", data.k_core},
                     {"synthetic",
                      {{"users", data.synth.users},
                       {"items", data.synth.items},
                       {"intent_count", data.synth.intent_count},
                       {"len_min", data.synth.len_min},
                       {"len_max", data.synth.len_max},
                       {"noise", data.synth.noise},
                       {"min_intents_per_user", data.synth.min_intents_per_user},
                       {"max_intents_per_user", data.synth.max_intents_per_user},
                       {"zipf_s", data.synth.zipf_s},
                       {"pool_switch_prob", data.synth.pool_switch_prob},
                       {"taste_blend", data.synth.taste_blend}}}};
        j["experiment"] = {{"seeds", experiment.seeds},
                           {"noise_ratio", experiment.noise_ratio},
                           {"k_grid", experiment.k_grid},
                           {"m_grid", experiment.m_grid},
                           {"top_k", experiment.top_k}};
        return j;
    }

    // nlohmann::json keeps object keys sorted, so dump() is canonical
    std::string fingerprint() const { return to_hex(fnv1a(to_json().dump())); }
};

namespace detail {

// Strict section parser: any unknown key is a config error.
class SectionReader {
public:
    SectionReader(const nlohmann::json& j, std::string section)
        : j_(j), section_(std::move(section)) {}

    template <typename T>
    void read(const char* key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(section_ + "." + key + " has the wrong type");
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown key " + section_ + "." + it.key());
    }

private:
    const nlohmann::json& j_;
    std::string section_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline Config config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    Config c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& section = it.key();
        if (section == "model") {
            detail::SectionReader r(it.value(), section);
            r.read("lid_dim", c.model.lid_dim);
            r.read("prefix_tokens", c.model.prefix_tokens);
            r.read("intent_tokens", c.model.intent_tokens);
            r.read("hidden_dim", c.model.hidden_dim);
            r.read("idr_layers", c.model.idr_layers);
            r.read("idr_heads", c.model.idr_heads);
            r.read("backbone_dim", c.model.backbone_dim);
            r.read("backbone_layers", c.model.backbone_layers);
            r.read("backbone_heads", c.model.backbone_heads);
            r.read("max_seq_len", c.model.max_seq_len);
            r.read("dropout", c.model.dropout);
            r.read("p_mask", c.model.p_mask);
            r.read("temperature", c.model.temperature);
            r.finish();
        } else if (section == "train") {
            detail::SectionReader r(it.value(), section);
            r.read("learning_rate", c.train.learning_rate);
            r.read("batch_size", c.train.batch_size);
            r.read("lambda_icr", c.train.lambda_icr);
            r.read("max_epochs", c.train.max_epochs);
            r.read("patience", c.train.patience);
            r.read("seed", c.train.seed);
            r.read("beta1", c.train.beta1);
            r.read("beta2", c.train.beta2);
            r.read("adam_eps", c.train.adam_eps);
            r.read("max_instances_per_user", c.train.max_instances_per_user);
            r.read("pretrain_instances", c.train.pretrain_instances);
            r.read("val_subset", c.train.val_subset);
            r.finish();
        } else if (section == "data") {
            nlohmann::json dj = it.value();
            if (dj.contains("synthetic")) {
                detail::SectionReader s(dj["synthetic"], "data.synthetic");
                s.read("users", c.data.synth.users);
                s.read("items", c.data.synth.items);
                s.read("intent_count", c.data.synth.intent_count);
                s.read("len_min", c.data.synth.len_min);
                s.read("len_max", c.data.synth.len_max);
                s.read("noise", c.data.synth.noise);
                s.read("min_intents_per_user", c.data.synth.min_intents_per_user);
                s.read("max_intents_per_user", c.data.synth.max_intents_per_user);
                s.read("zipf_s", c.data.synth.zipf_s);
                s.read("pool_switch_prob", c.data.synth.pool_switch_prob);
                s.read("taste_blend", c.data.synth.taste_blend);
                s.finish();
                dj.erase("synthetic");
            }
            detail::SectionReader r(dj, section);
            r.read("dataset_path", c.data.dataset_path);
            r.read("format", c.data.format);
            r.read("k_core", c.data.k_core);
            r.finish();
        } else if (section == "experiment") {
            detail::SectionReader r(it.value(), section);
            r.read("seeds", c.experiment.seeds);
            r.read("noise_ratio", c.experiment.noise_ratio);
            r.read("k_grid", c.experiment.k_grid);
            r.read("m_grid", c.experiment.m_grid);
            r.read("top_k", c.experiment.top_k);
            r.finish();
        } else {
            throw ConfigError("unknown config section '" + section + "'");
        }
    }
    c.validate();
    return c;
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    return config_from_json(j);
}

}  // namespace igrsr
