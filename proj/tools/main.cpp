// SPDX-License-Identifier: Apache-2.0
//
// promptcl: pretrain the synthetic backbone, generate corpora, run lifelong
// streams and baselines, and write structured reports.
//
// Exit codes: 0 success, 2 config error, 3 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "promptcl/config.hpp"
#include "promptcl/digest.hpp"
#include "promptcl/report.hpp"
#include "promptcl/runner.hpp"
#include "promptcl/synth.hpp"
#include "promptcl/task_format.hpp"
#include "promptcl/vocab.hpp"

namespace {

namespace fs = std::filesystem;
using namespace promptcl;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

fs::path resolve_out_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("PROMPTCL_OUT_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return "runs";
}

struct RunFlags {
    std::string config_path;
    std::string backbone_path = "backbone.bin";
    std::string out_dir;
    std::string method;
    std::vector<std::uint64_t> seeds;
    int workers = 1;
};

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Stream config JSON path")->required();
    cmd->add_option("--backbone", flags.backbone_path,
                    "Frozen backbone model file (default: backbone.bin)");
    cmd->add_option("--out-dir", flags.out_dir,
                    "Output directory (default: $PROMPTCL_OUT_DIR, else ./runs)");
    cmd->add_option("--method", flags.method,
                    "Override the config's method (LFPT5, FT, PT, EWC-PT, EWC-FT, MAS-PT, "
                    "MAS-FT, PT-R, MT-PT, MT-FT)");
    cmd->add_option("--seeds", flags.seeds, "Override the config's seed list")->delimiter(',');
    cmd->add_option("--workers", flags.workers, "Concurrent per-seed worker threads (default: 1)")
        ->check(CLI::PositiveNumber);
}

int execute_stream(const RunFlags& flags, StreamConfig config) {
    if (!flags.method.empty()) config.method = method_from_string(flags.method);
    if (!flags.seeds.empty()) config.seeds = flags.seeds;
    config.validate();

    if (!fs::exists(flags.backbone_path)) {
        std::cerr << "error: backbone file '" << flags.backbone_path << "' does not exist\n";
        return kExitConfig;
    }
    const Backbone backbone = Backbone::load(flags.backbone_path);
    const fs::path out_dir = resolve_out_dir(flags.out_dir);
    fs::create_directories(out_dir);

    RunManifest manifest;
    manifest.config_json = canonical_json(config);
    manifest.seeds = config.seeds;
    manifest.timestamp = current_timestamp_utc();
    const std::uint64_t digest = manifest.digest();

    std::vector<fs::path> seed_paths;
    for (std::uint64_t seed : config.seeds) {
        seed_paths.push_back(out_dir / ("seed_" + std::to_string(seed) + ".jsonl"));
    }
    const fs::path aggregate_path = out_dir / "aggregate.tsv";
    const fs::path manifest_path = out_dir / "manifest.json";
    for (const fs::path& p : seed_paths) manifest.outputs.push_back(p.string());
    manifest.outputs.push_back(aggregate_path.string());

    try {
        // Flushing per seed keeps completed results on disk even if a later
        // seed aborts; the aggregate only exists for fully successful runs.
        RunStreamResult result = run_stream(
            config, backbone, flags.workers, &std::cerr,
            [&](const SeedResult& sr, std::size_t index) {
                write_seed_records(config, sr, digest, seed_paths[index]);
            });
        write_aggregate(result, digest, aggregate_path);
        write_manifest(manifest, manifest_path);
    } catch (const std::exception& e) {
        std::cerr << "error: stream failed: " << e.what() << '\n';
        write_manifest(manifest, manifest_path);
        return kExitRuntime;
    }
    std::cout << "wrote " << aggregate_path.string() << '\n';
    return kExitOk;
}

int cmd_run(const RunFlags& flags) {
    return execute_stream(flags, load_stream_config(flags.config_path));
}

int cmd_ablate(const RunFlags& flags, const std::string& toggle) {
    StreamConfig config = load_stream_config(flags.config_path);
    if (config.method != Method::lfpt5) {
        throw ConfigError("ablate: toggles apply to the LFPT5 method only");
    }
    LossWeights weights =
        config.weights ? *config.weights
                       : LossWeights::defaults_for(config.stages.front().task_type);
    if (toggle == "no_kl") {
        weights.lambda_kl = 0.0;
        config.weights = weights;
    } else if (toggle == "no_lm") {
        weights.lambda_lm = 0.0;
        config.weights = weights;
    } else if (toggle == "no_replay") {
        config.no_replay = true;
    } else if (toggle == "fkt") {
        config.fkt = true;
    } else {
        throw ConfigError("ablate: unknown toggle '" + toggle +
                          "' (expected no_kl, no_lm, no_replay, or fkt)");
    }
    return execute_stream(flags, std::move(config));
}

int cmd_pretrain(const std::string& config_path, const std::string& out_flag,
                 const std::string& out_dir_flag) {
    PretrainSpec spec;
    if (!config_path.empty()) spec = load_pretrain_spec(config_path);

    const fs::path out = out_flag.empty()
                             ? resolve_out_dir(out_dir_flag) / "backbone.bin"
                             : fs::path(out_flag);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());

    Vocabulary vocab = Vocabulary::build(word_universe(), spec.gen_slots);
    Backbone backbone(std::move(vocab), spec.dims, spec.init_seed);
    const auto corpus = make_pretrain_corpus(spec.corpus_size, spec.corpus_seed);
    std::cerr << "pretraining on " << corpus.size() << " samples for " << spec.train.epochs
              << " epochs...\n";
    const PretrainStats stats = backbone.pretrain(corpus, spec.train);
    backbone.save(out.string());

    RunManifest manifest;
    manifest.config_json = canonical_json(spec);
    manifest.seeds = {spec.train.seed};
    manifest.timestamp = current_timestamp_utc();
    manifest.outputs = {out.string()};
    write_manifest(manifest, out.string() + ".manifest.json");

    std::cout << "wrote " << out.string() << " (digest " << to_hex(backbone.digest_now())
              << ", final epoch loss " << stats.epoch_loss.back() << ")\n";
    return kExitOk;
}

int cmd_gen_data(const std::string& task, const std::string& domain, std::uint64_t seed,
                 const std::string& out_dir_flag) {
    const TaskType type = task_type_from_string(task);
    const DomainCorpus corpus = make_domain(type, domain, seed);
    const fs::path out_dir = resolve_out_dir(out_dir_flag);
    fs::create_directories(out_dir);
    const fs::path pool_path = out_dir / (domain + ".pool.jsonl");
    const fs::path test_path = out_dir / (domain + ".test.jsonl");
    save_samples(pool_path.string(), corpus.pool);
    save_samples(test_path.string(), corpus.test);
    std::cout << "wrote " << pool_path.string() << " (" << corpus.pool.size() << " samples), "
              << test_path.string() << " (" << corpus.test.size() << " samples)\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Desk-scale lifelong few-shot prompt tuning: frozen seq2seq backbone, tunable soft "
        "prompts, generative replay, and baselines over synthetic task streams."};
    app.require_subcommand(1);

    // pretrain
    std::string pre_config, pre_out, pre_out_dir;
    CLI::App* pretrain = app.add_subcommand("pretrain", "Pretrain and freeze a backbone");
    pretrain->add_option("--config", pre_config, "Pretrain spec JSON (defaults are built in)");
    pretrain->add_option("--out", pre_out, "Model output path (default: <out-dir>/backbone.bin)");
    pretrain->add_option("--out-dir", pre_out_dir,
                         "Output directory (default: $PROMPTCL_OUT_DIR, else ./runs)");

    // gen-data
    std::string gd_task, gd_domain, gd_out_dir;
    std::uint64_t gd_seed = 42;
    CLI::App* gen_data = app.add_subcommand("gen-data", "Write a synthetic domain as JSONL");
    gen_data->add_option("--task", gd_task, "Task type: ner, classification, or summarization")
        ->required();
    gen_data->add_option("--domain", gd_domain, "Catalog domain id (e.g. cls_reviews)")
        ->required();
    gen_data->add_option("--seed", gd_seed, "Corpus seed (default: 42)");
    gen_data->add_option("--out-dir", gd_out_dir,
                         "Output directory (default: $PROMPTCL_OUT_DIR, else ./runs)");

    // run
    RunFlags run_flags;
    CLI::App* run = app.add_subcommand("run", "Run a lifelong stream per the config");
    add_run_flags(run, run_flags);

    // ablate
    RunFlags ablate_flags;
    std::string toggle;
    CLI::App* ablate = app.add_subcommand("ablate", "Run an LFPT5 ablation variant");
    add_run_flags(ablate, ablate_flags);
    ablate->add_option("--toggle", toggle, "One of: no_kl, no_lm, no_replay, fkt")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (pretrain->parsed()) return cmd_pretrain(pre_config, pre_out, pre_out_dir);
        if (gen_data->parsed()) return cmd_gen_data(gd_task, gd_domain, gd_seed, gd_out_dir);
        if (run->parsed()) return cmd_run(run_flags);
        if (ablate->parsed()) return cmd_ablate(ablate_flags, toggle);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
