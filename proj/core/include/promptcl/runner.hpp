// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "promptcl/backbone.hpp"
#include "promptcl/losses.hpp"
#include "promptcl/metrics.hpp"
#include "promptcl/prompt.hpp"
#include "promptcl/synth.hpp"
#include "promptcl/task_format.hpp"

namespace promptcl {

enum class Method {
    lfpt5,
    ft,
    pt,
    ewc_pt,
    ewc_ft,
    mas_pt,
    mas_ft,
    pt_r,
    mt_pt,
    mt_ft,
};

std::string to_string(Method method);
// Accepts the canonical spellings ("LFPT5", "FT", "PT", "EWC-PT", "EWC-FT",
// "MAS-PT", "MAS-FT", "PT-R", "MT-PT", "MT-FT"), case-insensitively.
Method method_from_string(const std::string& text);

// FT-family methods unfreeze a private backbone copy; everything else keeps
// the shared backbone frozen and tunes prompt rows only.
bool is_ft_family(Method method);
// Multitask upper bounds collapse the stream into one stage trained on the
// union of every stage's training data.
bool is_multitask(Method method);
bool uses_regularizer(Method method);

struct StageSpec {
    TaskType task_type = TaskType::classification;
    std::string domain_id;
};

// Everything a stream run needs to know, independent of the backbone.
struct StreamConfig {
    Method method = Method::lfpt5;
    std::vector<StageSpec> stages;

    int shots = 16;                // per class (NER / classification)
    int summarization_shots = 64;  // total examples for summarization stages

    int pseudo_per_class = 2;   // NER / classification replay targets
    int pseudo_per_domain = 4;  // summarization replay targets
    int max_attempts_factor = 20;
    int pseudo_max_tokens = 0;  // 0 → per-task default
    int replay_budget = 0;      // > 0 → cap total replay per stage, split evenly

    // Unset → per-task defaults from LossWeights::defaults_for.
    std::optional<LossWeights> weights;
    double lambda_reg = -1.0;  // < 0 → per-method default (EWC 100, MAS 1)

    bool fkt = false;        // init a new task type's prompt from the previous one
    bool no_replay = false;  // ablation: keep LM loss but never fill the buffer

    std::vector<std::uint64_t> seeds = {1, 2, 3};
    int steps_per_stage = 500;
    int batch_size = 8;
    int eval_every = 25;  // model-selection cadence (steps)
    int n_p = 20;
    PromptOptimizer::Config optimizer;
    double ft_lr = 1e-3;  // full fine-tuning rate (FT family)

    std::uint64_t corpus_seed = 42;  // domain corpora are shared across seeds

    // Throws std::invalid_argument on an ill-formed config.
    void validate() const;
};

// Accepted replay samples grouped by source domain.  Members are either
// parse_pseudo survivors (generative replay) or verbatim copies of stored
// real training records (PT-R).
struct ReplayBuffer {
    std::map<std::string, std::vector<Sample>> by_domain;

    bool empty() const;
    std::size_t size() const;
    std::vector<Sample> all() const;  // domain order, stable
};

struct PseudoDomainStats {
    std::string domain_id;
    int target = 0;
    int attempts = 0;
    int accepted = 0;
    std::map<RejectReason, int> rejected;

    double acceptance_rate() const {
        return attempts > 0 ? static_cast<double>(accepted) / attempts : 0.0;
    }
};

struct PseudoGenStats {
    int stage = 0;  // the stage about to be trained
    std::vector<PseudoDomainStats> domains;
    std::vector<std::string> warnings;
};

// Quadratic-penalty state for EWC/MAS: nonnegative importances plus anchor
// values, over whichever parameter set the method tunes.
struct ImportanceMap {
    Mat prompt_omega;   // 0x0 when the map covers backbone parameters
    Mat prompt_anchor;
    std::optional<BackboneParams> backbone_omega;
    std::optional<BackboneParams> backbone_anchor;

    bool empty() const;
    // Sums importances into this map and replaces the anchors.
    void merge_add(const ImportanceMap& other);
};

// Diagonal-Fisher importances: mean squared task-loss gradient per parameter.
// A null prompt computes the map over backbone parameters instead.
ImportanceMap ewc_importance(const Backbone& backbone, const TaskPrompt* prompt,
                             std::span<const TextBatchItem> dataset);
// Output-sensitivity importances: mean absolute gradient of the squared L2
// norm of the output log-probabilities, teacher-forced on the targets.
ImportanceMap mas_importance(const Backbone& backbone, const TaskPrompt* prompt,
                             std::span<const TextBatchItem> dataset);

// lambda * sum_i omega_i (theta_i - anchor_i)^2 over the map's parameter set;
// with a grads sink, accumulates the penalty gradient 2*lambda*omega*(theta-anchor).
double regularizer_penalty(const ImportanceMap& map, double lambda, const TaskPrompt& prompt,
                           PromptGrads* grads = nullptr);
double regularizer_penalty(const ImportanceMap& map, double lambda, const BackboneParams& params,
                           BackboneParams* grads = nullptr);

// One stage of one seed's stream: the spec plus this seed's few-shot split.
// Corpora are shared across seeds (fixed corpus_seed); splits are not.
struct StageContext {
    StageSpec spec;
    const DomainCorpus* corpus = nullptr;
    FewShotSplit split;
};

// Decodes with each learned domain's generation token and keeps only strings
// that survive parse_pseudo; summarization targets are replaced by lead3 of
// the generated document.  Domains that restore nothing get a warning entry
// and an empty slot, never an error.
ReplayBuffer generate_pseudo(const Backbone& backbone, const PromptSnapshot& snapshot,
                             std::span<const StageContext> learned, const StreamConfig& config,
                             std::uint64_t seed, PseudoGenStats& stats);

// PT-R: uniform draws from the stored real training sets, with the same
// per-domain targets as generate_pseudo; oversized requests take everything.
ReplayBuffer select_real_replay(std::span<const StageContext> learned, const StreamConfig& config,
                                std::uint64_t seed);

// Pre-formatted tensors-adjacent view of one stage's training problem.  Real
// and replay items are kept separate so the mixed-batch sampler can weight
// them proportionally and apply the KL term to replayed pseudo members only.
struct StageData {
    TaskType task_type = TaskType::classification;
    std::string domain_id;
    std::vector<TextBatchItem> train_task;
    std::vector<TextBatchItem> train_gen;  // parallel to train_task; empty when LM loss is off
    std::vector<TextBatchItem> valid_task;
    std::vector<TextBatchItem> replay_task;
    std::vector<TextBatchItem> replay_gen;  // parallel to replay_task; empty when LM loss is off
    bool replay_is_pseudo = false;          // gates the KL term
};

struct StageTrainResult {
    int steps_run = 0;
    int best_step = 0;  // model-selection checkpoint (0 → initial state kept)
    double best_valid_loss = 0.0;
    LossBreakdown final_loss;
};

// Optimizes the combined loss over mixed real/replay batches and rolls the
// prompt back to the best validation-task-loss checkpoint.  The snapshot is
// the KL teacher; pass null to disable the KL term regardless of weights.
StageTrainResult train_stage(const Backbone& backbone, TaskPrompt& prompt, const StageData& data,
                             const StreamConfig& config, const LossWeights& weights,
                             const PromptSnapshot* snapshot, const ImportanceMap* importance,
                             double lambda_reg, std::uint64_t seed);

// Full fine-tuning counterpart: every backbone parameter trains, no prompt,
// no LM/KL terms; model selection and the quadratic penalty work the same.
StageTrainResult train_stage_ft(Backbone& backbone, const StageData& data,
                                const StreamConfig& config, const ImportanceMap* importance,
                                double lambda_reg, std::uint64_t seed);

// Per-sample evaluation tallies, poolable across domains so union metrics
// use exactly the same counts as per-domain metrics.
struct EvalTally {
    TaskType task_type = TaskType::classification;
    int n = 0;
    long tp = 0, fp = 0, fn = 0;       // NER entity counts
    long correct = 0;                  // classification
    double r1 = 0.0, r2 = 0.0, rl = 0.0;  // summed per-sample ROUGE F1

    void add(const EvalTally& other);
    // ner → precision/recall/f1; classification → accuracy;
    // summarization → rouge1/rouge2/rougeL/rouge_avg.
    std::map<std::string, double> metrics() const;
};

// Greedy-decodes every sample and scores it against the gold target.
// A null lead evaluates the bare backbone (FT family).
EvalTally evaluate_samples(const Backbone& backbone, const Mat* lead,
                           std::span<const Sample> samples, const DomainCorpus& corpus,
                           const FormatConfig& fmt = {});

// One (stage, scope, metric) measurement for one seed.  scope is a domain id
// or "combined" for the union test set.
struct StageRecord {
    int stage = 0;
    std::string scope;
    TaskType task_type = TaskType::classification;
    std::string metric;
    double value = 0.0;
    int n = 0;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<StageRecord> records;
    std::vector<PseudoGenStats> pseudo;
    std::uint64_t backbone_digest_before = 0;
    std::uint64_t backbone_digest_after = 0;
    // Trained prompt state per task type at end of that type's last stage
    // (PT-family methods only).  DT isolation re-evaluates from these.
    std::map<TaskType, PromptSnapshot> stored_prompts;
    std::vector<std::string> warnings;
};

struct AggregateRow {
    int stage = 0;
    std::string scope;
    std::string metric;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation over seeds
    int seeds = 0;
};

struct RunStreamResult {
    StreamConfig config;
    std::vector<SeedResult> seeds;
    std::vector<AggregateRow> aggregate;
};

// Invoked as each seed completes (serialized under a lock when workers > 1),
// so callers can flush partial results before a later seed can fail.
using SeedCallback = std::function<void(const SeedResult&, std::size_t seed_index)>;

// Executes the stream once per seed (optionally across worker threads) and
// aggregates mean/std per (stage, scope, metric).  STDD streams add a
// "combined" union row per stage; DT streams report each learned task
// separately.  Warnings stream to `log` in seed order when provided.
RunStreamResult run_stream(const StreamConfig& config, const Backbone& backbone, int workers = 1,
                           std::ostream* log = nullptr, const SeedCallback& on_seed = nullptr);

}  // namespace promptcl
