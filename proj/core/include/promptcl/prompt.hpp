// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "promptcl/backbone.hpp"
#include "promptcl/types.hpp"

namespace promptcl {

// Gradient accumulator mirroring a prompt's tunable parameters.
struct PromptGrads {
    Mat embeds;
    std::map<std::string, Vec> gen;

    void set_zero();
};

// Immutable copy of a prompt's parameters taken at a stage boundary.  Serves
// as the reference distribution for the consistency loss and as the generator
// for pseudo samples of already-learned domains.
struct PromptSnapshot {
    TaskType type = TaskType::ner;
    Mat embeds;
    std::map<std::string, Vec> gen;

    int n_rows() const { return static_cast<int>(embeds.rows()); }
    bool has_generation_token(const std::string& domain_id) const;
    // P alone, n_p x d.
    Mat task_lead() const { return embeds; }
    // [G, P] for one domain, (1 + n_p) x d.
    Mat gen_lead(const std::string& domain_id) const;
    std::vector<std::string> domains() const;
};

// A trainable soft prompt for one task type: the prompt matrix P plus one
// generation-token embedding G per registered domain.  The backbone stays
// frozen; these rows are the only parameters a prompt-tuning method updates.
class TaskPrompt {
   public:
    TaskPrompt() = default;

    // Each row is a copy of a uniformly sampled backbone embedding row.
    static TaskPrompt vocab_init(TaskType type, int n_p, const Backbone& backbone,
                                 std::uint64_t seed);
    // Forward knowledge transfer: start from the previous task's trained rows.
    // Generation tokens are not carried over.
    static TaskPrompt fkt_init(TaskType type, const TaskPrompt& prev);

    TaskType type() const { return type_; }
    int n_p() const { return static_cast<int>(embeds_.rows()); }
    int dim() const { return static_cast<int>(embeds_.cols()); }
    const Mat& embeds() const { return embeds_; }
    const std::map<std::string, Vec>& gen_embeds() const { return gen_; }

    // Registers a vocab-initialized generation token; duplicate ids rejected.
    void add_generation_token(const std::string& domain_id, const Backbone& backbone,
                              std::uint64_t seed);
    bool has_generation_token(const std::string& domain_id) const;
    const Vec& generation_token(const std::string& domain_id) const;
    std::vector<std::string> domains() const;

    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }  // idempotent
    std::uint64_t version() const { return version_; }
    std::uint64_t digest() const;

    PromptGrads zero_grads() const;
    Mat task_lead() const { return embeds_; }
    Mat gen_lead(const std::string& domain_id) const;
    PromptSnapshot snapshot() const;
    // Restores rows captured by snapshot(); the snapshot must carry the same
    // task type and row shape.  Used for best-checkpoint rollback.
    void load_snapshot(const PromptSnapshot& snap);

    // Split a d(loss)/d(lead) matrix back into per-parameter gradients.
    void accumulate_task_lead_grad(const Mat& dlead, PromptGrads& grads) const;
    void accumulate_gen_lead_grad(const std::string& domain_id, const Mat& dlead,
                                  PromptGrads& grads) const;

   private:
    friend class PromptOptimizer;
    friend struct PromptBank;

    TaskType type_ = TaskType::ner;
    Mat embeds_;
    std::map<std::string, Vec> gen_;
    bool frozen_ = false;
    std::uint64_t version_ = 0;
};

// Stochastic updates with adaptive per-parameter second-moment scaling and
// global-norm gradient clipping.  State covers exactly one prompt's layout,
// captured at construction; the backbone is never touched.
class PromptOptimizer {
   public:
    struct Config {
        double lr = 0.5;
        double beta2 = 0.999;
        double eps = 1e-8;
        double clip_norm = 1.0;
        // Linear decay from lr to min_lr_frac * lr over decay_steps;
        // decay_steps == 0 keeps the rate constant.
        long decay_steps = 0;
        double min_lr_frac = 0.05;
    };

    PromptOptimizer(const TaskPrompt& prompt, Config config);

    // Clips, updates embeds and registered gen tokens, bumps the version.
    // Throws if the prompt is frozen or its layout changed since construction.
    void step(TaskPrompt& prompt, PromptGrads& grads);
    long steps_taken() const { return steps_; }

   private:
    Config config_;
    int n_p_ = 0;
    int dim_ = 0;
    std::vector<std::string> domain_layout_;
    std::vector<double> v_;  // second-moment accumulators, flat
    long steps_ = 0;
};

// Named collection of prompts, one per task type, persisted between runs.
struct PromptBank {
    std::map<std::string, TaskPrompt> prompts;  // keyed by task-type name

    void save(const std::string& path) const;
    static PromptBank load(const std::string& path);
};

}  // namespace promptcl
