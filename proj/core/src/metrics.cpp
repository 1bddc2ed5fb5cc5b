// SPDX-License-Identifier: Apache-2.0
#include "promptcl/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <stdexcept>

namespace promptcl {
namespace {

EntitySet dedup(const EntitySet& in) {
    EntitySet out;
    for (const auto& p : in.pairs) {
        if (std::find(out.pairs.begin(), out.pairs.end(), p) == out.pairs.end()) {
            out.pairs.push_back(p);
        }
    }
    return out;
}

struct MicroCounts {
    std::size_t tp = 0;
    std::size_t n_pred = 0;
    std::size_t n_gold = 0;
};

void count_pair(const EntitySet& predicted, const EntitySet& gold, MicroCounts& c) {
    const EntitySet p = dedup(predicted);
    const EntitySet g = dedup(gold);
    c.n_pred += p.pairs.size();
    c.n_gold += g.pairs.size();
    for (const auto& pair : p.pairs) {
        if (std::find(g.pairs.begin(), g.pairs.end(), pair) != g.pairs.end()) ++c.tp;
    }
}

Prf prf_from(const MicroCounts& c) {
    Prf out;
    out.precision = c.n_pred > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.n_pred) : 0.0;
    out.recall = c.n_gold > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.n_gold) : 0.0;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

std::vector<std::string> lower_words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
        for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        out.push_back(std::move(w));
    }
    return out;
}

double ngram_f1(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                std::size_t n) {
    if (cand.size() < n || ref.size() < n) return 0.0;
    auto grams = [n](const std::vector<std::string>& words) {
        std::map<std::string, std::size_t> counts;
        for (std::size_t i = 0; i + n <= words.size(); ++i) {
            std::string key;
            for (std::size_t j = 0; j < n; ++j) {
                key += words[i + j];
                key += '\x1f';
            }
            ++counts[key];
        }
        return counts;
    };
    const auto gc = grams(cand);
    const auto gr = grams(ref);
    std::size_t overlap = 0, total_c = 0, total_r = 0;
    for (const auto& [k, v] : gc) {
        total_c += v;
        auto it = gr.find(k);
        if (it != gr.end()) overlap += std::min(v, it->second);
    }
    for (const auto& [_, v] : gr) total_r += v;
    if (overlap == 0) return 0.0;
    const double p = static_cast<double>(overlap) / static_cast<double>(total_c);
    const double r = static_cast<double>(overlap) / static_cast<double>(total_r);
    return 2.0 * p * r / (p + r);
}

double lcs_f1(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
    if (cand.empty() || ref.empty()) return 0.0;
    const std::size_t n = cand.size(), m = ref.size();
    std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const std::size_t lcs = prev[m];
    if (lcs == 0) return 0.0;
    const double p = static_cast<double>(lcs) / static_cast<double>(n);
    const double r = static_cast<double>(lcs) / static_cast<double>(m);
    return 2.0 * p * r / (p + r);
}

}  // namespace

Prf entity_f1(const EntitySet& predicted, const EntitySet& gold) {
    MicroCounts c;
    count_pair(predicted, gold, c);
    return prf_from(c);
}

Prf entity_f1_micro(const std::vector<EntitySet>& predicted, const std::vector<EntitySet>& gold) {
    if (predicted.size() != gold.size()) {
        throw std::invalid_argument("entity_f1_micro: prediction/gold size mismatch");
    }
    MicroCounts c;
    for (std::size_t i = 0; i < predicted.size(); ++i) count_pair(predicted[i], gold[i], c);
    return prf_from(c);
}

double accuracy(const std::vector<std::string>& predicted_texts,
                const std::vector<int>& gold_class_ids, const Verbalizer& verbalizer) {
    if (predicted_texts.size() != gold_class_ids.size()) {
        throw std::invalid_argument("accuracy: prediction/gold size mismatch");
    }
    if (predicted_texts.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted_texts.size(); ++i) {
        const auto id = verbalizer.deverbalize(predicted_texts[i]);
        if (id && *id == gold_class_ids[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predicted_texts.size());
}

double rouge(const std::string& candidate, const std::string& reference, RougeVariant variant) {
    const auto cand = lower_words(candidate);
    const auto ref = lower_words(reference);
    switch (variant) {
        case RougeVariant::r1: return ngram_f1(cand, ref, 1);
        case RougeVariant::r2: return ngram_f1(cand, ref, 2);
        case RougeVariant::rl: return lcs_f1(cand, ref);
    }
    throw std::invalid_argument("rouge: invalid variant");
}

double average_rouge(const std::string& candidate, const std::string& reference) {
    return (rouge(candidate, reference, RougeVariant::r1) +
            rouge(candidate, reference, RougeVariant::r2) +
            rouge(candidate, reference, RougeVariant::rl)) /
           3.0;
}

std::vector<ForgettingRecord> forgetting(
    const std::vector<std::map<std::string, double>>& per_stage_metrics,
    const std::vector<std::string>& stage_domains) {
    if (per_stage_metrics.size() != stage_domains.size()) {
        throw std::invalid_argument("forgetting: stage count mismatch");
    }
    std::vector<ForgettingRecord> out;
    if (per_stage_metrics.size() < 2) return out;
    const auto& final_stage = per_stage_metrics.back();
    for (std::size_t k = 0; k + 1 < stage_domains.size(); ++k) {
        const std::string& domain = stage_domains[k];
        ForgettingRecord rec;
        rec.domain_id = domain;
        rec.own_stage = per_stage_metrics[k].at(domain);
        rec.final_stage = final_stage.at(domain);
        rec.delta = rec.final_stage - rec.own_stage;
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace promptcl
