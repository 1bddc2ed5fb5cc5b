// SPDX-License-Identifier: Apache-2.0
#include "promptcl/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace promptcl {
namespace {

std::vector<int> target_ids(const Vocabulary& vocab, const std::string& text) {
    std::vector<int> ids = vocab.tokenize(text);
    ids.push_back(vocab.eos_id());
    return ids;
}

void check_finite(double value, const char* what) {
    if (!std::isfinite(value)) {
        throw std::runtime_error(std::string(what) + ": non-finite loss value");
    }
}

}  // namespace

LossWeights LossWeights::defaults_for(TaskType type) {
    switch (type) {
        case TaskType::ner: return {0.10, 0.03};
        case TaskType::classification: return {0.25, 0.01};
        case TaskType::summarization: return {0.10, 0.04};
    }
    throw std::invalid_argument("LossWeights::defaults_for: invalid TaskType");
}

LossBreakdown combined_loss(const LossWeights& weights, double task, double lm, double kl) {
    if (!std::isfinite(task) || !std::isfinite(lm) || !std::isfinite(kl)) {
        throw std::invalid_argument("combined_loss: non-finite component");
    }
    LossBreakdown out;
    out.task = task;
    out.lm = lm;
    out.kl = kl;
    out.total = task + weights.lambda_lm * lm + weights.lambda_kl * kl;
    return out;
}

double task_loss(const Backbone& backbone, const TaskPrompt* prompt,
                 std::span<const TextBatchItem> batch, PromptGrads* prompt_grads,
                 BackboneParams* backbone_grads, double grad_scale) {
    if (batch.empty()) throw std::invalid_argument("task_loss: empty batch");
    if (prompt == nullptr && prompt_grads != nullptr) {
        throw std::invalid_argument("task_loss: prompt gradients requested without a prompt");
    }
    const Vocabulary& vocab = backbone.vocab();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const Mat lead = prompt ? prompt->task_lead() : Mat(0, backbone.dims().d_model);

    double loss = 0.0;
    for (const TextBatchItem& item : batch) {
        const std::vector<int> in = vocab.tokenize(item.input);
        const std::vector<int> tgt = target_ids(vocab, item.target);
        const double inv_t = 1.0 / static_cast<double>(tgt.size());
        const bool want_grads = prompt_grads != nullptr || backbone_grads != nullptr;
        Tape tape;
        const Mat lp = backbone.forward(prompt ? &lead : nullptr, in, tgt, want_grads ? &tape : nullptr);
        double sample_nll = 0.0;
        for (std::size_t t = 0; t < tgt.size(); ++t) {
            sample_nll -= lp(static_cast<Eigen::Index>(t), tgt[t]);
        }
        loss += sample_nll * inv_t * inv_b;
        if (want_grads) {
            Mat dscores = lp.array().exp();
            for (std::size_t t = 0; t < tgt.size(); ++t) {
                dscores(static_cast<Eigen::Index>(t), tgt[t]) -= 1.0;
            }
            dscores *= inv_t * inv_b * grad_scale;
            const Mat dlead = backbone.backward(tape, dscores, backbone_grads);
            if (prompt_grads) prompt->accumulate_task_lead_grad(dlead, *prompt_grads);
        }
    }
    check_finite(loss, "task_loss");
    return loss;
}

double lm_loss(const Backbone& backbone, const TaskPrompt& prompt,
               std::span<const TextBatchItem> batch, PromptGrads* prompt_grads,
               double grad_scale) {
    if (batch.empty()) return 0.0;
    const Vocabulary& vocab = backbone.vocab();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const std::vector<int> no_input;

    double loss = 0.0;
    for (const TextBatchItem& item : batch) {
        const Mat lead = prompt.gen_lead(item.domain_id);
        const std::vector<int> tgt = target_ids(vocab, item.target);
        const double inv_t = 1.0 / static_cast<double>(tgt.size());
        Tape tape;
        const Mat lp =
            backbone.forward(&lead, no_input, tgt, prompt_grads ? &tape : nullptr);
        double sample_nll = 0.0;
        for (std::size_t t = 0; t < tgt.size(); ++t) {
            sample_nll -= lp(static_cast<Eigen::Index>(t), tgt[t]);
        }
        loss += sample_nll * inv_t * inv_b;
        if (prompt_grads) {
            Mat dscores = lp.array().exp();
            for (std::size_t t = 0; t < tgt.size(); ++t) {
                dscores(static_cast<Eigen::Index>(t), tgt[t]) -= 1.0;
            }
            dscores *= inv_t * inv_b * grad_scale;
            const Mat dlead = backbone.backward(tape, dscores, nullptr);
            prompt.accumulate_gen_lead_grad(item.domain_id, dlead, *prompt_grads);
        }
    }
    check_finite(loss, "lm_loss");
    return loss;
}

double kl_loss(const Backbone& backbone, const PromptSnapshot& snapshot, const TaskPrompt& prompt,
               std::span<const TextBatchItem> pseudo_batch, PromptGrads* prompt_grads,
               double grad_scale) {
    if (pseudo_batch.empty()) return 0.0;
    const Vocabulary& vocab = backbone.vocab();
    const double inv_m = 1.0 / static_cast<double>(pseudo_batch.size());
    const Mat lead_prev = snapshot.task_lead();
    const Mat lead_cur = prompt.task_lead();

    double loss = 0.0;
    for (const TextBatchItem& item : pseudo_batch) {
        const std::vector<int> in = vocab.tokenize(item.input);
        const std::vector<int> tgt = target_ids(vocab, item.target);
        const Mat lp_prev = backbone.forward(&lead_prev, in, tgt, nullptr);
        Tape tape;
        const Mat lp_cur = backbone.forward(&lead_cur, in, tgt, prompt_grads ? &tape : nullptr);

        const Mat p_prev = lp_prev.array().exp();
        // sum_j sum_v p'_v (ln p'_v - ln p_v)
        loss += inv_m * (p_prev.array() * (lp_prev - lp_cur).array()).sum();
        if (prompt_grads) {
            Mat dscores = lp_cur.array().exp().matrix() - p_prev;
            dscores *= inv_m * grad_scale;
            const Mat dlead = backbone.backward(tape, dscores, nullptr);
            prompt.accumulate_task_lead_grad(dlead, *prompt_grads);
        }
    }
    check_finite(loss, "kl_loss");
    return loss;
}

}  // namespace promptcl
