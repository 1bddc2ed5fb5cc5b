// SPDX-License-Identifier: Apache-2.0
#include "promptcl/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include "promptcl/optim.hpp"
#include "promptcl/rng.hpp"
#include "promptcl/vocab.hpp"

namespace promptcl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int eval_max_tokens(TaskType type) {
    switch (type) {
        case TaskType::ner: return 24;
        case TaskType::classification: return 4;
        case TaskType::summarization: return 32;
    }
    return 24;
}

// Pseudo-sample decoding: mild top-k sampling keeps generated text close to
// the learned templates while preserving enough diversity across attempts.
constexpr double kPseudoTemperature = 0.8;
constexpr int kPseudoTopK = 5;

int pseudo_max_tokens(TaskType type, const StreamConfig& config) {
    if (config.pseudo_max_tokens > 0) return config.pseudo_max_tokens;
    switch (type) {
        case TaskType::ner: return 40;
        case TaskType::classification: return 24;
        case TaskType::summarization: return 96;
    }
    return 40;
}

int replay_target(const StageContext& ctx, const StreamConfig& config, std::size_t n_learned) {
    int target = 0;
    switch (ctx.spec.task_type) {
        case TaskType::ner:
            target = config.pseudo_per_class * static_cast<int>(ctx.corpus->label_set.size());
            break;
        case TaskType::classification:
            target = config.pseudo_per_class * static_cast<int>(ctx.corpus->verbalizer.size());
            break;
        case TaskType::summarization: target = config.pseudo_per_domain; break;
    }
    if (config.replay_budget > 0 && n_learned > 0) {
        const int share = std::max(1, config.replay_budget / static_cast<int>(n_learned));
        target = std::min(target, share);
    }
    return target;
}

LossWeights resolve_weights(const StreamConfig& config, TaskType type) {
    if (config.method != Method::lfpt5) return LossWeights{0.0, 0.0};
    return config.weights ? *config.weights : LossWeights::defaults_for(type);
}

double resolve_lambda_reg(const StreamConfig& config) {
    if (config.lambda_reg >= 0.0) return config.lambda_reg;
    switch (config.method) {
        case Method::ewc_pt:
        case Method::ewc_ft: return 100.0;
        case Method::mas_pt:
        case Method::mas_ft: return 1.0;
        default: return 0.0;
    }
}

std::vector<int> target_ids(const Vocabulary& vocab, const std::string& text) {
    std::vector<int> ids = vocab.tokenize(text);
    ids.push_back(vocab.eos_id());
    return ids;
}

std::vector<GradView> flat_views(BackboneParams& params) {
    std::vector<GradView> views;
    params.visit([&](const std::string&, auto& tensor) {
        views.push_back({tensor.data(), static_cast<std::size_t>(tensor.size())});
    });
    return views;
}

// Parallel flat iteration over two same-shaped parameter sets.
template <typename F>
void zip_params(BackboneParams& a, const BackboneParams& b, F&& f) {
    std::vector<GradView> va = flat_views(a);
    std::vector<GradView> vb = flat_views(const_cast<BackboneParams&>(b));
    if (va.size() != vb.size()) throw std::invalid_argument("zip_params: layout mismatch");
    for (std::size_t i = 0; i < va.size(); ++i) {
        if (va[i].n != vb[i].n) throw std::invalid_argument("zip_params: tensor shape mismatch");
        f(va[i].data, vb[i].data, va[i].n);
    }
}

std::string trimmed_decode(const Backbone& backbone, const Mat* lead, std::span<const int> input,
                           int max_len, const DecodeStrategy& strategy, std::uint64_t seed) {
    std::vector<int> ids = backbone.decode(lead, input, max_len, strategy, seed);
    if (!ids.empty() && ids.back() == backbone.vocab().eos_id()) ids.pop_back();
    return backbone.vocab().detokenize(ids);
}

}  // namespace

// ---------------------------------------------------------------------------
// method names and families

std::string to_string(Method method) {
    switch (method) {
        case Method::lfpt5: return "LFPT5";
        case Method::ft: return "FT";
        case Method::pt: return "PT";
        case Method::ewc_pt: return "EWC-PT";
        case Method::ewc_ft: return "EWC-FT";
        case Method::mas_pt: return "MAS-PT";
        case Method::mas_ft: return "MAS-FT";
        case Method::pt_r: return "PT-R";
        case Method::mt_pt: return "MT-PT";
        case Method::mt_ft: return "MT-FT";
    }
    throw std::invalid_argument("to_string(Method): invalid value");
}

Method method_from_string(const std::string& text) {
    std::string up;
    up.reserve(text.size());
    for (char c : text) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    std::replace(up.begin(), up.end(), '_', '-');
    if (up == "LFPT5") return Method::lfpt5;
    if (up == "FT") return Method::ft;
    if (up == "PT") return Method::pt;
    if (up == "EWC-PT") return Method::ewc_pt;
    if (up == "EWC-FT") return Method::ewc_ft;
    if (up == "MAS-PT") return Method::mas_pt;
    if (up == "MAS-FT") return Method::mas_ft;
    if (up == "PT-R") return Method::pt_r;
    if (up == "MT-PT") return Method::mt_pt;
    if (up == "MT-FT") return Method::mt_ft;
    throw std::invalid_argument("unknown method '" + text + "'");
}

bool is_ft_family(Method method) {
    return method == Method::ft || method == Method::ewc_ft || method == Method::mas_ft ||
           method == Method::mt_ft;
}

bool is_multitask(Method method) { return method == Method::mt_pt || method == Method::mt_ft; }

bool uses_regularizer(Method method) {
    return method == Method::ewc_pt || method == Method::ewc_ft || method == Method::mas_pt ||
           method == Method::mas_ft;
}

// ---------------------------------------------------------------------------
// config validation

void StreamConfig::validate() const {
    if (stages.empty()) throw std::invalid_argument("StreamConfig: stages must be nonempty");
    std::set<std::string> seen;
    std::set<TaskType> types;
    for (const StageSpec& s : stages) {
        if (s.domain_id.empty()) throw std::invalid_argument("StreamConfig: empty domain_id");
        if (!seen.insert(s.domain_id).second) {
            throw std::invalid_argument("StreamConfig: duplicate domain '" + s.domain_id + "'");
        }
        types.insert(s.task_type);
    }
    if (method == Method::mt_pt && types.size() > 1) {
        throw std::invalid_argument("StreamConfig: MT-PT requires a single task type");
    }
    if (shots < 1 || summarization_shots < 1) {
        throw std::invalid_argument("StreamConfig: shots must be >= 1");
    }
    if (pseudo_per_class < 0 || pseudo_per_domain < 0) {
        throw std::invalid_argument("StreamConfig: pseudo targets must be >= 0");
    }
    if (max_attempts_factor < 1) {
        throw std::invalid_argument("StreamConfig: max_attempts_factor must be >= 1");
    }
    if (replay_budget < 0) {
        throw std::invalid_argument("StreamConfig: replay_budget must be >= 0");
    }
    if (seeds.empty()) throw std::invalid_argument("StreamConfig: seeds must be nonempty");
    if (steps_per_stage < 1) throw std::invalid_argument("StreamConfig: steps_per_stage must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("StreamConfig: batch_size must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("StreamConfig: eval_every must be >= 1");
    if (n_p < 1) throw std::invalid_argument("StreamConfig: n_p must be >= 1");
    if (!(optimizer.lr > 0.0)) throw std::invalid_argument("StreamConfig: optimizer.lr must be > 0");
    if (!(ft_lr > 0.0)) throw std::invalid_argument("StreamConfig: ft_lr must be > 0");
}

// ---------------------------------------------------------------------------
// replay buffer

bool ReplayBuffer::empty() const { return size() == 0; }

std::size_t ReplayBuffer::size() const {
    std::size_t n = 0;
    for (const auto& [domain, samples] : by_domain) n += samples.size();
    return n;
}

std::vector<Sample> ReplayBuffer::all() const {
    std::vector<Sample> out;
    out.reserve(size());
    for (const auto& [domain, samples] : by_domain) {
        out.insert(out.end(), samples.begin(), samples.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// importance maps

bool ImportanceMap::empty() const {
    return prompt_omega.size() == 0 && !backbone_omega.has_value();
}

void ImportanceMap::merge_add(const ImportanceMap& other) {
    if (other.prompt_omega.size() != 0) {
        if (prompt_omega.size() == 0) {
            prompt_omega = other.prompt_omega;
        } else {
            if (prompt_omega.rows() != other.prompt_omega.rows() ||
                prompt_omega.cols() != other.prompt_omega.cols()) {
                throw std::invalid_argument("ImportanceMap::merge_add: prompt shape mismatch");
            }
            prompt_omega += other.prompt_omega;
        }
        prompt_anchor = other.prompt_anchor;
    }
    if (other.backbone_omega.has_value()) {
        if (!backbone_omega.has_value()) {
            backbone_omega = other.backbone_omega;
        } else {
            zip_params(*backbone_omega, *other.backbone_omega,
                       [](double* a, const double* b, std::size_t n) {
                           for (std::size_t i = 0; i < n; ++i) a[i] += b[i];
                       });
        }
        backbone_anchor = other.backbone_anchor;
    }
}

ImportanceMap ewc_importance(const Backbone& backbone, const TaskPrompt* prompt,
                             std::span<const TextBatchItem> dataset) {
    if (dataset.empty()) throw std::invalid_argument("ewc_importance: empty dataset");
    ImportanceMap map;
    const double inv_n = 1.0 / static_cast<double>(dataset.size());
    if (prompt != nullptr) {
        Mat omega = Mat::Zero(prompt->n_p(), prompt->dim());
        for (const TextBatchItem& item : dataset) {
            PromptGrads grads = prompt->zero_grads();
            task_loss(backbone, prompt, std::span<const TextBatchItem>(&item, 1), &grads);
            omega.array() += grads.embeds.array().square();
        }
        map.prompt_omega = omega * inv_n;
        map.prompt_anchor = prompt->embeds();
        return map;
    }
    BackboneParams omega = backbone.params().zeros_like();
    for (const TextBatchItem& item : dataset) {
        BackboneParams grads = backbone.params().zeros_like();
        task_loss(backbone, nullptr, std::span<const TextBatchItem>(&item, 1), nullptr, &grads);
        zip_params(omega, grads, [](double* a, const double* b, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) a[i] += b[i] * b[i];
        });
    }
    for (GradView v : flat_views(omega)) {
        for (std::size_t i = 0; i < v.n; ++i) v.data[i] *= inv_n;
    }
    map.backbone_omega = std::move(omega);
    map.backbone_anchor = backbone.params();
    return map;
}

ImportanceMap mas_importance(const Backbone& backbone, const TaskPrompt* prompt,
                             std::span<const TextBatchItem> dataset) {
    if (dataset.empty()) throw std::invalid_argument("mas_importance: empty dataset");
    const Vocabulary& vocab = backbone.vocab();
    const double inv_n = 1.0 / static_cast<double>(dataset.size());
    const Mat lead = prompt ? prompt->task_lead() : Mat(0, backbone.dims().d_model);

    ImportanceMap map;
    Mat prompt_omega;
    std::optional<BackboneParams> bb_omega;
    if (prompt != nullptr) {
        prompt_omega = Mat::Zero(prompt->n_p(), prompt->dim());
    } else {
        bb_omega = backbone.params().zeros_like();
    }

    for (const TextBatchItem& item : dataset) {
        const std::vector<int> in = vocab.tokenize(item.input);
        const std::vector<int> tgt = target_ids(vocab, item.target);
        Tape tape;
        const Mat lp = backbone.forward(prompt ? &lead : nullptr, in, tgt, &tape);
        // d/d(scores) of the token-mean squared L2 norm of the log-probs.
        const Mat dscores = lp * (2.0 / static_cast<double>(tgt.size()));
        if (prompt != nullptr) {
            const Mat dlead = backbone.backward(tape, dscores, nullptr);
            PromptGrads grads = prompt->zero_grads();
            prompt->accumulate_task_lead_grad(dlead, grads);
            prompt_omega.array() += grads.embeds.array().abs();
        } else {
            BackboneParams grads = backbone.params().zeros_like();
            backbone.backward(tape, dscores, &grads);
            zip_params(*bb_omega, grads, [](double* a, const double* b, std::size_t n) {
                for (std::size_t i = 0; i < n; ++i) a[i] += std::abs(b[i]);
            });
        }
    }
    if (prompt != nullptr) {
        map.prompt_omega = prompt_omega * inv_n;
        map.prompt_anchor = prompt->embeds();
    } else {
        for (GradView v : flat_views(*bb_omega)) {
            for (std::size_t i = 0; i < v.n; ++i) v.data[i] *= inv_n;
        }
        map.backbone_omega = std::move(bb_omega);
        map.backbone_anchor = backbone.params();
    }
    return map;
}

double regularizer_penalty(const ImportanceMap& map, double lambda, const TaskPrompt& prompt,
                           PromptGrads* grads) {
    if (map.prompt_omega.size() == 0) return 0.0;
    if (map.prompt_omega.rows() != prompt.embeds().rows() ||
        map.prompt_omega.cols() != prompt.embeds().cols()) {
        throw std::invalid_argument("regularizer_penalty: prompt shape mismatch");
    }
    const Mat diff = prompt.embeds() - map.prompt_anchor;
    const double penalty = lambda * (map.prompt_omega.array() * diff.array().square()).sum();
    if (grads != nullptr) {
        grads->embeds.array() += 2.0 * lambda * map.prompt_omega.array() * diff.array();
    }
    return penalty;
}

double regularizer_penalty(const ImportanceMap& map, double lambda, const BackboneParams& params,
                           BackboneParams* grads) {
    if (!map.backbone_omega.has_value()) return 0.0;
    double penalty = 0.0;
    auto& omega = const_cast<BackboneParams&>(*map.backbone_omega);
    std::vector<GradView> vo = flat_views(omega);
    std::vector<GradView> va = flat_views(const_cast<BackboneParams&>(*map.backbone_anchor));
    std::vector<GradView> vp = flat_views(const_cast<BackboneParams&>(params));
    std::vector<GradView> vg;
    if (grads != nullptr) vg = flat_views(*grads);
    if (vo.size() != vp.size() || va.size() != vp.size()) {
        throw std::invalid_argument("regularizer_penalty: backbone layout mismatch");
    }
    for (std::size_t b = 0; b < vp.size(); ++b) {
        if (vo[b].n != vp[b].n || va[b].n != vp[b].n) {
            throw std::invalid_argument("regularizer_penalty: backbone shape mismatch");
        }
        for (std::size_t i = 0; i < vp[b].n; ++i) {
            const double diff = vp[b].data[i] - va[b].data[i];
            penalty += vo[b].data[i] * diff * diff;
            if (grads != nullptr) vg[b].data[i] += 2.0 * lambda * vo[b].data[i] * diff;
        }
    }
    return lambda * penalty;
}

// ---------------------------------------------------------------------------
// replay construction

ReplayBuffer generate_pseudo(const Backbone& backbone, const PromptSnapshot& snapshot,
                             std::span<const StageContext> learned, const StreamConfig& config,
                             std::uint64_t seed, PseudoGenStats& stats) {
    ReplayBuffer buffer;
    for (const StageContext& ctx : learned) {
        const std::string& domain = ctx.spec.domain_id;
        PseudoDomainStats ds;
        ds.domain_id = domain;
        ds.target = replay_target(ctx, config, learned.size());
        if (!snapshot.has_generation_token(domain)) {
            stats.warnings.push_back("pseudo generation skipped for '" + domain +
                                     "': no generation token in snapshot");
            stats.domains.push_back(std::move(ds));
            buffer.by_domain[domain];
            continue;
        }
        const Mat lead = snapshot.gen_lead(domain);
        const int max_tokens = pseudo_max_tokens(ctx.spec.task_type, config);
        const int max_attempts = config.max_attempts_factor * std::max(ds.target, 1);
        Rng rng = Rng(seed).derive("pseudo").derive(domain);
        std::vector<Sample> kept;
        while (ds.attempts < max_attempts && static_cast<int>(kept.size()) < ds.target) {
            ++ds.attempts;
            const std::string text = trimmed_decode(
                backbone, &lead, {}, max_tokens,
                DecodeStrategy::sample(kPseudoTemperature, kPseudoTopK), rng.next_u64());
            PseudoParse parsed = parse_pseudo(text, ctx.spec.task_type, domain,
                                              &ctx.corpus->label_set, &ctx.corpus->verbalizer);
            if (!parsed.accepted) {
                ++ds.rejected[parsed.reason];
                continue;
            }
            Sample sample = std::move(parsed.sample);
            if (sample.task_type == TaskType::summarization) {
                sample.target = lead3(sample.x);
            }
            kept.push_back(std::move(sample));
            ++ds.accepted;
        }
        if (kept.empty() && ds.target > 0) {
            stats.warnings.push_back("no accepted pseudo samples for '" + domain + "' after " +
                                     std::to_string(ds.attempts) +
                                     " attempts; replaying nothing for this domain");
        }
        buffer.by_domain[domain] = std::move(kept);
        stats.domains.push_back(std::move(ds));
    }
    return buffer;
}

ReplayBuffer select_real_replay(std::span<const StageContext> learned, const StreamConfig& config,
                                std::uint64_t seed) {
    ReplayBuffer buffer;
    for (const StageContext& ctx : learned) {
        const std::string& domain = ctx.spec.domain_id;
        const int target = replay_target(ctx, config, learned.size());
        std::vector<Sample> pool = ctx.split.train;
        Rng rng = Rng(seed).derive("real-replay").derive(domain);
        rng.shuffle(std::span<Sample>(pool));
        const std::size_t take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(target));
        pool.resize(take);
        buffer.by_domain[domain] = std::move(pool);
    }
    return buffer;
}

// ---------------------------------------------------------------------------
// stage training

StageTrainResult train_stage(const Backbone& backbone, TaskPrompt& prompt, const StageData& data,
                             const StreamConfig& config, const LossWeights& weights,
                             const PromptSnapshot* snapshot, const ImportanceMap* importance,
                             double lambda_reg, std::uint64_t seed) {
    if (data.train_task.empty()) throw std::invalid_argument("train_stage: empty training set");
    if (data.valid_task.empty()) throw std::invalid_argument("train_stage: empty validation set");
    const bool use_lm = weights.lambda_lm > 0.0;
    if (use_lm && data.train_gen.size() != data.train_task.size()) {
        throw std::invalid_argument("train_stage: train_gen must parallel train_task");
    }
    if (use_lm && !data.replay_task.empty() && data.replay_gen.size() != data.replay_task.size()) {
        throw std::invalid_argument("train_stage: replay_gen must parallel replay_task");
    }
    const bool use_kl = snapshot != nullptr && weights.lambda_kl > 0.0 && data.replay_is_pseudo &&
                        !data.replay_task.empty();

    PromptOptimizer::Config oc = config.optimizer;
    if (oc.decay_steps == 0) oc.decay_steps = config.steps_per_stage;
    PromptOptimizer opt(prompt, oc);

    Rng rng(seed);
    const std::size_t n_real = data.train_task.size();
    const std::size_t n_replay = data.replay_task.size();
    const std::size_t n_pool = n_real + n_replay;
    // Replay occupies its pool share of every batch (stratified draw with
    // randomized rounding); a plain uniform draw over the concatenated pool
    // leaves most batches without any replay item at few-shot sizes.
    const double replay_share =
        static_cast<double>(config.batch_size) * static_cast<double>(n_replay) /
        static_cast<double>(n_pool);

    StageTrainResult result;
    double best_valid = kInf;
    PromptSnapshot best = prompt.snapshot();

    std::vector<TextBatchItem> task_b, gen_b, kl_b;
    for (int step = 1; step <= config.steps_per_stage; ++step) {
        task_b.clear();
        gen_b.clear();
        kl_b.clear();
        std::size_t k_replay = 0;
        if (n_replay > 0) {
            const double whole = std::floor(replay_share);
            k_replay = static_cast<std::size_t>(whole) +
                       (rng.uniform() < replay_share - whole ? 1 : 0);
            k_replay = std::min<std::size_t>(k_replay,
                                             static_cast<std::size_t>(config.batch_size));
        }
        for (std::size_t i = k_replay; i < static_cast<std::size_t>(config.batch_size); ++i) {
            const std::size_t idx = rng.uniform_index(n_real);
            task_b.push_back(data.train_task[idx]);
            if (use_lm) gen_b.push_back(data.train_gen[idx]);
        }
        for (std::size_t i = 0; i < k_replay; ++i) {
            const std::size_t j = rng.uniform_index(n_replay);
            task_b.push_back(data.replay_task[j]);
            if (use_lm) gen_b.push_back(data.replay_gen[j]);
            if (use_kl) kl_b.push_back(data.replay_task[j]);
        }

        PromptGrads grads = prompt.zero_grads();
        const double lt = task_loss(backbone, &prompt, task_b, &grads);
        const double ll = use_lm && !gen_b.empty()
                              ? lm_loss(backbone, prompt, gen_b, &grads, weights.lambda_lm)
                              : 0.0;
        const double lk =
            use_kl && !kl_b.empty() ? kl_loss(backbone, *snapshot, prompt, kl_b, &grads,
                                              weights.lambda_kl)
                                    : 0.0;
        double penalty = 0.0;
        if (importance != nullptr && !importance->empty() && lambda_reg > 0.0) {
            penalty = regularizer_penalty(*importance, lambda_reg, prompt, &grads);
        }
        LossBreakdown breakdown = combined_loss(weights, lt, ll, lk);
        breakdown.total += penalty;
        if (!std::isfinite(breakdown.total)) {
            throw std::runtime_error("train_stage: non-finite loss at step " +
                                     std::to_string(step));
        }
        opt.step(prompt, grads);
        result.final_loss = breakdown;

        if (step % config.eval_every == 0 || step == config.steps_per_stage) {
            const double lv = task_loss(backbone, &prompt, data.valid_task);
            if (lv < best_valid) {
                best_valid = lv;
                result.best_step = step;
                best = prompt.snapshot();
            }
        }
    }
    prompt.load_snapshot(best);
    result.steps_run = config.steps_per_stage;
    result.best_valid_loss = best_valid;
    return result;
}

StageTrainResult train_stage_ft(Backbone& backbone, const StageData& data,
                                const StreamConfig& config, const ImportanceMap* importance,
                                double lambda_reg, std::uint64_t seed) {
    if (backbone.frozen()) throw std::logic_error("train_stage_ft: backbone is frozen");
    if (data.train_task.empty()) throw std::invalid_argument("train_stage_ft: empty training set");
    if (data.valid_task.empty()) throw std::invalid_argument("train_stage_ft: empty validation set");

    BackboneParams& params = backbone.mutable_params();
    AdamConfig ac;
    ac.lr = config.ft_lr;
    Adam adam(params.scalar_count(), ac);

    Rng rng(seed);
    const std::size_t n_real = data.train_task.size();
    const std::size_t n_replay = data.replay_task.size();
    const std::size_t n_pool = n_real + n_replay;
    const double replay_share =
        static_cast<double>(config.batch_size) * static_cast<double>(n_replay) /
        static_cast<double>(n_pool);

    StageTrainResult result;
    double best_valid = kInf;
    BackboneParams best = params;

    std::vector<TextBatchItem> task_b;
    for (int step = 1; step <= config.steps_per_stage; ++step) {
        task_b.clear();
        std::size_t k_replay = 0;
        if (n_replay > 0) {
            const double whole = std::floor(replay_share);
            k_replay = static_cast<std::size_t>(whole) +
                       (rng.uniform() < replay_share - whole ? 1 : 0);
            k_replay = std::min<std::size_t>(k_replay,
                                             static_cast<std::size_t>(config.batch_size));
        }
        for (std::size_t i = k_replay; i < static_cast<std::size_t>(config.batch_size); ++i) {
            task_b.push_back(data.train_task[rng.uniform_index(n_real)]);
        }
        for (std::size_t i = 0; i < k_replay; ++i) {
            task_b.push_back(data.replay_task[rng.uniform_index(n_replay)]);
        }

        BackboneParams grads = params.zeros_like();
        const double lt = task_loss(backbone, nullptr, task_b, nullptr, &grads);
        double penalty = 0.0;
        if (importance != nullptr && !importance->empty() && lambda_reg > 0.0) {
            penalty = regularizer_penalty(*importance, lambda_reg, params, &grads);
        }
        const double total = lt + penalty;
        if (!std::isfinite(total)) {
            throw std::runtime_error("train_stage_ft: non-finite loss at step " +
                                     std::to_string(step));
        }
        std::vector<GradView> views = flat_views(grads);
        clip_global_norm(views, config.optimizer.clip_norm);
        std::vector<ParamBlock> blocks;
        blocks.reserve(views.size());
        std::vector<GradView> pviews = flat_views(params);
        for (std::size_t b = 0; b < views.size(); ++b) {
            blocks.push_back({pviews[b].data, views[b].data, views[b].n});
        }
        adam.step(blocks);
        result.final_loss.task = lt;
        result.final_loss.total = total;

        if (step % config.eval_every == 0 || step == config.steps_per_stage) {
            const double lv = task_loss(backbone, nullptr, data.valid_task);
            if (lv < best_valid) {
                best_valid = lv;
                result.best_step = step;
                best = params;
            }
        }
    }
    params = best;
    result.steps_run = config.steps_per_stage;
    result.best_valid_loss = best_valid;
    return result;
}

// ---------------------------------------------------------------------------
// evaluation

void EvalTally::add(const EvalTally& other) {
    if (n == 0) task_type = other.task_type;
    if (other.n != 0 && other.task_type != task_type) {
        throw std::invalid_argument("EvalTally::add: mixed task types");
    }
    n += other.n;
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    correct += other.correct;
    r1 += other.r1;
    r2 += other.r2;
    rl += other.rl;
}

std::map<std::string, double> EvalTally::metrics() const {
    std::map<std::string, double> out;
    switch (task_type) {
        case TaskType::ner: {
            const double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
            const double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
            out["precision"] = p;
            out["recall"] = r;
            out["f1"] = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
            break;
        }
        case TaskType::classification:
            out["accuracy"] = n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
            break;
        case TaskType::summarization: {
            const double inv = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
            out["rouge1"] = r1 * inv;
            out["rouge2"] = r2 * inv;
            out["rougeL"] = rl * inv;
            out["rouge_avg"] = (r1 + r2 + rl) * inv / 3.0;
            break;
        }
    }
    return out;
}

EvalTally evaluate_samples(const Backbone& backbone, const Mat* lead,
                           std::span<const Sample> samples, const DomainCorpus& corpus,
                           const FormatConfig& fmt) {
    EvalTally tally;
    tally.task_type = corpus.task_type;
    const Vocabulary& vocab = backbone.vocab();
    const int max_len = eval_max_tokens(corpus.task_type);
    for (const Sample& sample : samples) {
        const FormattedPair fp_text = format_task(sample, &corpus.verbalizer, fmt);
        const std::vector<int> in = vocab.tokenize(fp_text.input);
        const std::string text =
            trimmed_decode(backbone, lead, in, max_len, DecodeStrategy::greedy(), 0);
        ++tally.n;
        switch (corpus.task_type) {
            case TaskType::ner: {
                const EntitySet pred = parse_ner_output(text, corpus.label_set);
                std::set<std::pair<std::string, std::string>> gold_set(
                    sample.entities().pairs.begin(), sample.entities().pairs.end());
                std::set<std::pair<std::string, std::string>> pred_set(pred.pairs.begin(),
                                                                       pred.pairs.end());
                for (const auto& pr : pred_set) {
                    if (gold_set.count(pr)) {
                        ++tally.tp;
                    } else {
                        ++tally.fp;
                    }
                }
                for (const auto& g : gold_set) {
                    if (!pred_set.count(g)) ++tally.fn;
                }
                break;
            }
            case TaskType::classification: {
                const std::optional<int> id = corpus.verbalizer.deverbalize(text);
                if (id.has_value() && *id == sample.class_id()) ++tally.correct;
                break;
            }
            case TaskType::summarization: {
                tally.r1 += rouge(text, sample.summary(), RougeVariant::r1);
                tally.r2 += rouge(text, sample.summary(), RougeVariant::r2);
                tally.rl += rouge(text, sample.summary(), RougeVariant::rl);
                break;
            }
        }
    }
    return tally;
}

// ---------------------------------------------------------------------------
// stream execution

namespace {

struct DomainLookup {
    std::map<std::string, const DomainCorpus*> by_id;

    const DomainCorpus& at(const std::string& domain) const {
        auto it = by_id.find(domain);
        if (it == by_id.end()) {
            throw std::logic_error("runner: unknown domain '" + domain + "'");
        }
        return *it->second;
    }
};

void append_formatted(std::vector<TextBatchItem>& task_items, std::vector<TextBatchItem>* gen_items,
                      std::span<const Sample> samples, const DomainLookup& lookup,
                      const FormatConfig& fmt) {
    for (const Sample& s : samples) {
        const DomainCorpus& corpus = lookup.at(s.domain_id);
        const FormattedPair fp = format_task(s, &corpus.verbalizer, fmt);
        task_items.push_back({fp.input, fp.target, s.domain_id});
        if (gen_items != nullptr) {
            gen_items->push_back({"", format_gen_target(s, &corpus.verbalizer), s.domain_id});
        }
    }
}

void record_metrics(SeedResult& res, int stage, const std::string& scope, const EvalTally& tally) {
    for (const auto& [name, value] : tally.metrics()) {
        res.records.push_back({stage, scope, tally.task_type, name, value, tally.n});
    }
}

// Evaluates every learned stage with its task type's current prompt (or the
// branch backbone for FT) and emits per-domain rows plus, for single-type
// streams, the pooled union row.
void evaluate_learned(SeedResult& res, int stage, std::span<const StageContext> learned,
                      const Backbone& backbone,
                      const std::map<TaskType, TaskPrompt>* prompts, const FormatConfig& fmt,
                      bool single_type) {
    std::vector<EvalTally> tallies;
    for (const StageContext& ctx : learned) {
        const Mat lead = prompts != nullptr
                             ? prompts->at(ctx.spec.task_type).task_lead()
                             : Mat(0, 0);
        const Mat* lead_ptr = prompts != nullptr ? &lead : nullptr;
        EvalTally tally =
            evaluate_samples(backbone, lead_ptr, ctx.split.test, *ctx.corpus, fmt);
        record_metrics(res, stage, ctx.spec.domain_id, tally);
        tallies.push_back(std::move(tally));
    }
    if (single_type) {
        EvalTally pooled;
        for (const EvalTally& t : tallies) pooled.add(t);
        record_metrics(res, stage, "combined", pooled);
    }
}

std::vector<StageContext> build_contexts(const StreamConfig& config, const DomainLookup& lookup,
                                         std::uint64_t seed) {
    std::vector<StageContext> ctxs;
    for (const StageSpec& spec : config.stages) {
        StageContext ctx;
        ctx.spec = spec;
        ctx.corpus = &lookup.at(spec.domain_id);
        const int shots = spec.task_type == TaskType::summarization ? config.summarization_shots
                                                                    : config.shots;
        ctx.split = sample_few_shot(*ctx.corpus, shots, seed);
        ctxs.push_back(std::move(ctx));
    }
    return ctxs;
}

bool stream_is_single_type(const StreamConfig& config) {
    for (const StageSpec& s : config.stages) {
        if (s.task_type != config.stages.front().task_type) return false;
    }
    return true;
}

SeedResult run_seed_pt(const StreamConfig& config, const Backbone& backbone,
                       const DomainLookup& lookup, std::uint64_t seed) {
    SeedResult res;
    res.seed = seed;
    res.backbone_digest_before = backbone.digest_now();
    const FormatConfig fmt;
    const bool single_type = stream_is_single_type(config);
    std::vector<StageContext> ctxs = build_contexts(config, lookup, seed);
    const double lambda_reg = resolve_lambda_reg(config);

    if (is_multitask(config.method)) {
        // MT-PT: one stage over the union of every stage's few-shot data.
        const TaskType type = config.stages.front().task_type;
        TaskPrompt prompt = TaskPrompt::vocab_init(
            type, config.n_p, backbone, Rng(seed).derive("prompt").derive(std::uint64_t{0}).next_u64());
        StageData data;
        data.task_type = type;
        data.domain_id = "union";
        for (const StageContext& ctx : ctxs) {
            append_formatted(data.train_task, nullptr, ctx.split.train, lookup, fmt);
            append_formatted(data.valid_task, nullptr, ctx.split.valid, lookup, fmt);
        }
        train_stage(backbone, prompt, data, config, LossWeights{0.0, 0.0}, nullptr, nullptr, 0.0,
                    Rng(seed).derive("train").derive(std::uint64_t{0}).next_u64());
        prompt.freeze();
        std::map<TaskType, TaskPrompt> prompts;
        prompts.emplace(type, std::move(prompt));
        evaluate_learned(res, 0, ctxs, backbone, &prompts, fmt, single_type);
        res.stored_prompts.emplace(type, prompts.at(type).snapshot());
        res.backbone_digest_after = backbone.digest_now();
        return res;
    }

    std::map<TaskType, TaskPrompt> prompts;
    ImportanceMap importance;
    bool has_importance = false;
    std::optional<TaskType> prev_type;

    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        const StageContext& ctx = ctxs[k];
        const TaskType type = ctx.spec.task_type;
        const LossWeights weights = resolve_weights(config, type);

        if (!prompts.count(type)) {
            if (config.fkt && prev_type.has_value()) {
                prompts.emplace(type, TaskPrompt::fkt_init(type, prompts.at(*prev_type)));
            } else {
                prompts.emplace(type, TaskPrompt::vocab_init(
                                          type, config.n_p, backbone,
                                          Rng(seed).derive("prompt").derive(k).next_u64()));
            }
        }
        TaskPrompt& prompt = prompts.at(type);

        // Learned same-type stages feed replay and the KL teacher.
        std::vector<StageContext> learned;
        for (std::size_t i = 0; i < k; ++i) {
            if (ctxs[i].spec.task_type == type) learned.push_back(ctxs[i]);
        }

        std::optional<PromptSnapshot> snapshot;
        ReplayBuffer buffer;
        if (config.method == Method::lfpt5 && !learned.empty()) {
            snapshot = prompt.snapshot();
            if (!config.no_replay) {
                PseudoGenStats stats;
                stats.stage = static_cast<int>(k);
                buffer = generate_pseudo(backbone, *snapshot, learned, config,
                                         Rng(seed).derive("pseudo-gen").derive(k).next_u64(),
                                         stats);
                for (const std::string& w : stats.warnings) res.warnings.push_back(w);
                res.pseudo.push_back(std::move(stats));
            }
        } else if (config.method == Method::pt_r && !learned.empty()) {
            buffer = select_real_replay(learned, config,
                                        Rng(seed).derive("real-replay").derive(k).next_u64());
        }

        if (config.method == Method::lfpt5 && !prompt.has_generation_token(ctx.spec.domain_id)) {
            prompt.add_generation_token(
                ctx.spec.domain_id, backbone,
                Rng(seed).derive("gen-token").derive(ctx.spec.domain_id).next_u64());
        }

        StageData data;
        data.task_type = type;
        data.domain_id = ctx.spec.domain_id;
        const bool lm_on = weights.lambda_lm > 0.0;
        append_formatted(data.train_task, lm_on ? &data.train_gen : nullptr, ctx.split.train,
                         lookup, fmt);
        append_formatted(data.valid_task, nullptr, ctx.split.valid, lookup, fmt);
        const std::vector<Sample> replay_samples = buffer.all();
        append_formatted(data.replay_task, lm_on ? &data.replay_gen : nullptr, replay_samples,
                         lookup, fmt);
        data.replay_is_pseudo = config.method == Method::lfpt5;

        train_stage(backbone, prompt, data, config, weights,
                    snapshot.has_value() ? &*snapshot : nullptr,
                    has_importance ? &importance : nullptr, lambda_reg,
                    Rng(seed).derive("train").derive(k).next_u64());

        if (uses_regularizer(config.method)) {
            const bool ewc = config.method == Method::ewc_pt;
            ImportanceMap stage_map = ewc ? ewc_importance(backbone, &prompt, data.train_task)
                                          : mas_importance(backbone, &prompt, data.train_task);
            importance.merge_add(stage_map);
            has_importance = true;
        }

        res.stored_prompts.insert_or_assign(type, prompt.snapshot());
        evaluate_learned(res, static_cast<int>(k),
                         std::span<const StageContext>(ctxs.data(), k + 1), backbone, &prompts,
                         fmt, single_type);

        // Freeze a finished task type the moment the stream moves on.
        if (prev_type.has_value() && *prev_type != type) prompts.at(*prev_type).freeze();
        prev_type = type;
    }
    res.backbone_digest_after = backbone.digest_now();
    return res;
}

SeedResult run_seed_ft(const StreamConfig& config, const Backbone& backbone,
                       const DomainLookup& lookup, std::uint64_t seed) {
    SeedResult res;
    res.seed = seed;
    const FormatConfig fmt;
    const bool single_type = stream_is_single_type(config);
    std::vector<StageContext> ctxs = build_contexts(config, lookup, seed);
    const double lambda_reg = resolve_lambda_reg(config);

    Backbone branch = backbone.unfrozen_copy();
    res.backbone_digest_before = branch.digest_now();

    if (is_multitask(config.method)) {
        StageData data;
        data.task_type = config.stages.front().task_type;
        data.domain_id = "union";
        for (const StageContext& ctx : ctxs) {
            append_formatted(data.train_task, nullptr, ctx.split.train, lookup, fmt);
            append_formatted(data.valid_task, nullptr, ctx.split.valid, lookup, fmt);
        }
        train_stage_ft(branch, data, config, nullptr, 0.0,
                       Rng(seed).derive("train").derive(std::uint64_t{0}).next_u64());
        evaluate_learned(res, 0, ctxs, branch, nullptr, fmt, single_type);
        res.backbone_digest_after = branch.digest_now();
        return res;
    }

    ImportanceMap importance;
    bool has_importance = false;
    for (std::size_t k = 0; k < ctxs.size(); ++k) {
        const StageContext& ctx = ctxs[k];
        StageData data;
        data.task_type = ctx.spec.task_type;
        data.domain_id = ctx.spec.domain_id;
        append_formatted(data.train_task, nullptr, ctx.split.train, lookup, fmt);
        append_formatted(data.valid_task, nullptr, ctx.split.valid, lookup, fmt);

        train_stage_ft(branch, data, config, has_importance ? &importance : nullptr, lambda_reg,
                       Rng(seed).derive("train").derive(k).next_u64());

        if (uses_regularizer(config.method)) {
            const bool ewc = config.method == Method::ewc_ft;
            ImportanceMap stage_map = ewc ? ewc_importance(branch, nullptr, data.train_task)
                                          : mas_importance(branch, nullptr, data.train_task);
            importance.merge_add(stage_map);
            has_importance = true;
        }

        evaluate_learned(res, static_cast<int>(k),
                         std::span<const StageContext>(ctxs.data(), k + 1), branch, nullptr, fmt,
                         single_type);
    }
    res.backbone_digest_after = branch.digest_now();
    return res;
}

SeedResult run_seed(const StreamConfig& config, const Backbone& backbone,
                    const DomainLookup& lookup, std::uint64_t seed) {
    return is_ft_family(config.method) ? run_seed_ft(config, backbone, lookup, seed)
                                       : run_seed_pt(config, backbone, lookup, seed);
}

std::vector<AggregateRow> aggregate_records(const std::vector<SeedResult>& seeds) {
    std::vector<AggregateRow> rows;
    if (seeds.empty()) return rows;
    const std::vector<StageRecord>& first = seeds.front().records;
    for (const SeedResult& sr : seeds) {
        if (sr.records.size() != first.size()) {
            throw std::logic_error("aggregate_records: seed record shapes differ");
        }
    }
    for (std::size_t i = 0; i < first.size(); ++i) {
        AggregateRow row;
        row.stage = first[i].stage;
        row.scope = first[i].scope;
        row.metric = first[i].metric;
        row.seeds = static_cast<int>(seeds.size());
        double sum = 0.0;
        for (const SeedResult& sr : seeds) {
            const StageRecord& rec = sr.records[i];
            if (rec.stage != row.stage || rec.scope != row.scope || rec.metric != row.metric) {
                throw std::logic_error("aggregate_records: seed record keys differ");
            }
            sum += rec.value;
        }
        row.mean = sum / static_cast<double>(seeds.size());
        double ss = 0.0;
        for (const SeedResult& sr : seeds) {
            const double d = sr.records[i].value - row.mean;
            ss += d * d;
        }
        row.stddev = seeds.size() > 1 ? std::sqrt(ss / static_cast<double>(seeds.size() - 1)) : 0.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

RunStreamResult run_stream(const StreamConfig& config, const Backbone& backbone, int workers,
                           std::ostream* log, const SeedCallback& on_seed) {
    config.validate();
    if (!backbone.frozen()) {
        throw std::invalid_argument("run_stream: backbone must be frozen (FT branches privately)");
    }

    // Domain corpora are deterministic in corpus_seed and shared by reference
    // across seeds and worker threads (read-only from here on).
    std::map<std::string, DomainCorpus> corpora;
    DomainLookup lookup;
    for (const StageSpec& spec : config.stages) {
        auto [it, inserted] =
            corpora.emplace(spec.domain_id, DomainCorpus{});
        if (inserted) {
            it->second = make_domain(spec.task_type, spec.domain_id, config.corpus_seed);
        }
    }
    for (const auto& [id, corpus] : corpora) lookup.by_id.emplace(id, &corpus);

    RunStreamResult out;
    out.config = config;
    out.seeds.resize(config.seeds.size());

    const int n_workers =
        std::clamp<int>(workers, 1, static_cast<int>(config.seeds.size()));
    if (n_workers <= 1) {
        for (std::size_t i = 0; i < config.seeds.size(); ++i) {
            out.seeds[i] = run_seed(config, backbone, lookup, config.seeds[i]);
            if (on_seed) on_seed(out.seeds[i], i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(config.seeds.size());
        std::mutex flush_mutex;
        auto worker = [&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= config.seeds.size()) break;
                try {
                    out.seeds[i] = run_seed(config, backbone, lookup, config.seeds[i]);
                    if (on_seed) {
                        const std::lock_guard<std::mutex> lock(flush_mutex);
                        on_seed(out.seeds[i], i);
                    }
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(n_workers));
        for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
        for (const std::exception_ptr& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    if (log != nullptr) {
        for (const SeedResult& sr : out.seeds) {
            for (const std::string& w : sr.warnings) {
                (*log) << "[seed " << sr.seed << "] warning: " << w << '\n';
            }
        }
    }

    out.aggregate = aggregate_records(out.seeds);
    return out;
}

}  // namespace promptcl
