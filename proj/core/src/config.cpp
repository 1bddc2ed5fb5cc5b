// SPDX-License-Identifier: Apache-2.0
#include "promptcl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace promptcl {
namespace {

using nlohmann::ordered_json;

ordered_json parse_or_throw(const std::string& text, const char* what) {
    try {
        return ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
}

void reject_unknown_keys(const ordered_json& obj, const std::set<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (!known.count(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read_field(const ordered_json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const std::exception& e) {
        throw ConfigError(where + ": bad value for '" + std::string(key) + "': " + e.what());
    }
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

StreamConfig parse_stream_config(const std::string& json_text) {
    const ordered_json j = parse_or_throw(json_text, "stream config");
    if (!j.is_object()) throw ConfigError("stream config: top level must be an object");
    reject_unknown_keys(
        j,
        {"method", "stages", "shots", "summarization_shots", "pseudo_per_class",
         "pseudo_per_domain", "max_attempts_factor", "pseudo_max_tokens", "replay_budget",
         "lambda_lm", "lambda_kl", "lambda_reg", "fkt", "no_replay", "seeds", "steps_per_stage",
         "batch_size", "eval_every", "n_p", "corpus_seed", "ft_lr", "optimizer"},
        "stream config");

    StreamConfig config;
    if (j.contains("method")) {
        try {
            config.method = method_from_string(j.at("method").get<std::string>());
        } catch (const std::exception& e) {
            throw ConfigError(std::string("stream config: ") + e.what());
        }
    }
    if (!j.contains("stages") || !j.at("stages").is_array() || j.at("stages").empty()) {
        throw ConfigError("stream config: 'stages' must be a nonempty array");
    }
    for (const auto& stage : j.at("stages")) {
        if (!stage.is_object()) throw ConfigError("stream config: each stage must be an object");
        reject_unknown_keys(stage, {"task", "domain"}, "stream config stage");
        if (!stage.contains("task") || !stage.contains("domain")) {
            throw ConfigError("stream config: each stage needs 'task' and 'domain'");
        }
        StageSpec spec;
        try {
            spec.task_type = task_type_from_string(stage.at("task").get<std::string>());
        } catch (const std::exception& e) {
            throw ConfigError(std::string("stream config: ") + e.what());
        }
        spec.domain_id = stage.at("domain").get<std::string>();
        config.stages.push_back(std::move(spec));
    }

    const std::string where = "stream config";
    read_field(j, "shots", config.shots, where);
    read_field(j, "summarization_shots", config.summarization_shots, where);
    read_field(j, "pseudo_per_class", config.pseudo_per_class, where);
    read_field(j, "pseudo_per_domain", config.pseudo_per_domain, where);
    read_field(j, "max_attempts_factor", config.max_attempts_factor, where);
    read_field(j, "pseudo_max_tokens", config.pseudo_max_tokens, where);
    read_field(j, "replay_budget", config.replay_budget, where);
    read_field(j, "lambda_reg", config.lambda_reg, where);
    read_field(j, "fkt", config.fkt, where);
    read_field(j, "no_replay", config.no_replay, where);
    read_field(j, "seeds", config.seeds, where);
    read_field(j, "steps_per_stage", config.steps_per_stage, where);
    read_field(j, "batch_size", config.batch_size, where);
    read_field(j, "eval_every", config.eval_every, where);
    read_field(j, "n_p", config.n_p, where);
    read_field(j, "corpus_seed", config.corpus_seed, where);
    read_field(j, "ft_lr", config.ft_lr, where);

    const bool has_lm = j.contains("lambda_lm");
    const bool has_kl = j.contains("lambda_kl");
    if (has_lm != has_kl) {
        throw ConfigError("stream config: 'lambda_lm' and 'lambda_kl' must be set together");
    }
    if (has_lm) {
        LossWeights w;
        read_field(j, "lambda_lm", w.lambda_lm, where);
        read_field(j, "lambda_kl", w.lambda_kl, where);
        if (w.lambda_lm < 0.0 || w.lambda_kl < 0.0) {
            throw ConfigError("stream config: loss weights must be >= 0");
        }
        config.weights = w;
    }

    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        if (!o.is_object()) throw ConfigError("stream config: 'optimizer' must be an object");
        reject_unknown_keys(o, {"lr", "beta2", "eps", "clip_norm", "decay_steps", "min_lr_frac"},
                            "stream config optimizer");
        read_field(o, "lr", config.optimizer.lr, "optimizer");
        read_field(o, "beta2", config.optimizer.beta2, "optimizer");
        read_field(o, "eps", config.optimizer.eps, "optimizer");
        read_field(o, "clip_norm", config.optimizer.clip_norm, "optimizer");
        read_field(o, "decay_steps", config.optimizer.decay_steps, "optimizer");
        read_field(o, "min_lr_frac", config.optimizer.min_lr_frac, "optimizer");
    }

    try {
        config.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("stream config: ") + e.what());
    }
    return config;
}

StreamConfig load_stream_config(const std::filesystem::path& path) {
    return parse_stream_config(slurp(path));
}

PretrainSpec parse_pretrain_spec(const std::string& json_text) {
    const ordered_json j = parse_or_throw(json_text, "pretrain spec");
    if (!j.is_object()) throw ConfigError("pretrain spec: top level must be an object");
    reject_unknown_keys(j,
                        {"corpus_size", "corpus_seed", "init_seed", "gen_slots", "dims", "train"},
                        "pretrain spec");
    PretrainSpec spec;
    const std::string where = "pretrain spec";
    read_field(j, "corpus_size", spec.corpus_size, where);
    read_field(j, "corpus_seed", spec.corpus_seed, where);
    read_field(j, "init_seed", spec.init_seed, where);
    read_field(j, "gen_slots", spec.gen_slots, where);
    if (j.contains("dims")) {
        const auto& d = j.at("dims");
        if (!d.is_object()) throw ConfigError("pretrain spec: 'dims' must be an object");
        reject_unknown_keys(d, {"d_model", "n_enc_layers", "n_dec_layers", "n_heads", "d_ff",
                                "max_seq"},
                            "pretrain spec dims");
        read_field(d, "d_model", spec.dims.d_model, "dims");
        read_field(d, "n_enc_layers", spec.dims.n_enc_layers, "dims");
        read_field(d, "n_dec_layers", spec.dims.n_dec_layers, "dims");
        read_field(d, "n_heads", spec.dims.n_heads, "dims");
        read_field(d, "d_ff", spec.dims.d_ff, "dims");
        read_field(d, "max_seq", spec.dims.max_seq, "dims");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        if (!t.is_object()) throw ConfigError("pretrain spec: 'train' must be an object");
        reject_unknown_keys(
            t, {"epochs", "batch_size", "lr", "beta1", "beta2", "eps", "clip_norm", "seed"},
            "pretrain spec train");
        read_field(t, "epochs", spec.train.epochs, "train");
        read_field(t, "batch_size", spec.train.batch_size, "train");
        read_field(t, "lr", spec.train.lr, "train");
        read_field(t, "beta1", spec.train.beta1, "train");
        read_field(t, "beta2", spec.train.beta2, "train");
        read_field(t, "eps", spec.train.eps, "train");
        read_field(t, "clip_norm", spec.train.clip_norm, "train");
        read_field(t, "seed", spec.train.seed, "train");
    }
    if (spec.corpus_size < 1) throw ConfigError("pretrain spec: corpus_size must be >= 1");
    if (spec.gen_slots < 0) throw ConfigError("pretrain spec: gen_slots must be >= 0");
    if (spec.train.epochs < 1) throw ConfigError("pretrain spec: train.epochs must be >= 1");
    try {
        spec.dims.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("pretrain spec: ") + e.what());
    }
    return spec;
}

PretrainSpec load_pretrain_spec(const std::filesystem::path& path) {
    return parse_pretrain_spec(slurp(path));
}

std::string canonical_json(const StreamConfig& config) {
    ordered_json j;
    j["method"] = to_string(config.method);
    j["stages"] = ordered_json::array();
    for (const StageSpec& s : config.stages) {
        j["stages"].push_back({{"task", to_string(s.task_type)}, {"domain", s.domain_id}});
    }
    j["shots"] = config.shots;
    j["summarization_shots"] = config.summarization_shots;
    j["pseudo_per_class"] = config.pseudo_per_class;
    j["pseudo_per_domain"] = config.pseudo_per_domain;
    j["max_attempts_factor"] = config.max_attempts_factor;
    j["pseudo_max_tokens"] = config.pseudo_max_tokens;
    j["replay_budget"] = config.replay_budget;
    if (config.weights.has_value()) {
        j["lambda_lm"] = config.weights->lambda_lm;
        j["lambda_kl"] = config.weights->lambda_kl;
    }
    j["lambda_reg"] = config.lambda_reg;
    j["fkt"] = config.fkt;
    j["no_replay"] = config.no_replay;
    j["seeds"] = config.seeds;
    j["steps_per_stage"] = config.steps_per_stage;
    j["batch_size"] = config.batch_size;
    j["eval_every"] = config.eval_every;
    j["n_p"] = config.n_p;
    j["corpus_seed"] = config.corpus_seed;
    j["ft_lr"] = config.ft_lr;
    j["optimizer"] = {{"lr", config.optimizer.lr},
                      {"beta2", config.optimizer.beta2},
                      {"eps", config.optimizer.eps},
                      {"clip_norm", config.optimizer.clip_norm},
                      {"decay_steps", config.optimizer.decay_steps},
                      {"min_lr_frac", config.optimizer.min_lr_frac}};
    return j.dump();
}

std::string canonical_json(const PretrainSpec& spec) {
    ordered_json j;
    j["corpus_size"] = spec.corpus_size;
    j["corpus_seed"] = spec.corpus_seed;
    j["init_seed"] = spec.init_seed;
    j["gen_slots"] = spec.gen_slots;
    j["dims"] = {{"d_model", spec.dims.d_model},       {"n_enc_layers", spec.dims.n_enc_layers},
                 {"n_dec_layers", spec.dims.n_dec_layers}, {"n_heads", spec.dims.n_heads},
                 {"d_ff", spec.dims.d_ff},             {"max_seq", spec.dims.max_seq}};
    j["train"] = {{"epochs", spec.train.epochs},   {"batch_size", spec.train.batch_size},
                  {"lr", spec.train.lr},           {"beta1", spec.train.beta1},
                  {"beta2", spec.train.beta2},     {"eps", spec.train.eps},
                  {"clip_norm", spec.train.clip_norm}, {"seed", spec.train.seed}};
    return j.dump();
}

}  // namespace promptcl
