// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "promptcl/backbone.hpp"
#include "promptcl/prompt.hpp"

namespace promptcl {

struct LossWeights {
    double lambda_lm = 0.0;
    double lambda_kl = 0.0;

    // Per-stream defaults by task type.
    static LossWeights defaults_for(TaskType type);
};

struct LossBreakdown {
    double task = 0.0;
    double lm = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

LossBreakdown combined_loss(const LossWeights& weights, double task, double lm, double kl);

// One formatted training item.  task_loss reads (input, target); lm_loss
// reads (target, domain_id) — its conditioning input is [G, P]; kl_loss
// reads (input, target) of accepted pseudo samples.
struct TextBatchItem {
    std::string input;
    std::string target;
    std::string domain_id;
};

// Mean over samples of the per-token negative log-likelihood of the target
// (terminator included) given [P, input].  A null prompt drops the soft
// prefix entirely (the fine-tuning path, where the textual task tag in
// `input` stands in for P and gradients flow into `backbone_grads`).
// Gradients are scaled by grad_scale and accumulated.
double task_loss(const Backbone& backbone, const TaskPrompt* prompt,
                 std::span<const TextBatchItem> batch, PromptGrads* prompt_grads = nullptr,
                 BackboneParams* backbone_grads = nullptr, double grad_scale = 1.0);

// Mean over samples of the per-token NLL of "X __split__ Y" given
// [G_domain, P].  Empty batches contribute zero.
double lm_loss(const Backbone& backbone, const TaskPrompt& prompt,
               std::span<const TextBatchItem> batch, PromptGrads* prompt_grads = nullptr,
               double grad_scale = 1.0);

// Sum over pseudo samples and target positions of
// KL(previous distribution over the vocabulary || current distribution),
// teacher-forced on the pseudo targets, divided by the pseudo-batch size.
// Gradients flow into the current prompt only.
double kl_loss(const Backbone& backbone, const PromptSnapshot& snapshot, const TaskPrompt& prompt,
               std::span<const TextBatchItem> pseudo_batch, PromptGrads* prompt_grads = nullptr,
               double grad_scale = 1.0);

}  // namespace promptcl
