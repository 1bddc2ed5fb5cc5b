// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "promptcl/task_format.hpp"

namespace promptcl {

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Exact (segment, label) matching after deduplication.  The micro variant
// pools true-positive/support counts over the whole test set.
Prf entity_f1(const EntitySet& predicted, const EntitySet& gold);
Prf entity_f1_micro(const std::vector<EntitySet>& predicted, const std::vector<EntitySet>& gold);

// Exact-match of deverbalized predictions; unparseable text counts as wrong.
double accuracy(const std::vector<std::string>& predicted_texts,
                const std::vector<int>& gold_class_ids, const Verbalizer& verbalizer);

enum class RougeVariant { r1, r2, rl };

// Word-level F-measures over lowercased whitespace tokens: n-gram multiset
// overlap for ROUGE-1/2, longest common subsequence for ROUGE-L.  An empty
// side scores 0.
double rouge(const std::string& candidate, const std::string& reference, RougeVariant variant);
double average_rouge(const std::string& candidate, const std::string& reference);

struct ForgettingRecord {
    std::string domain_id;
    double own_stage = 0.0;
    double final_stage = 0.0;
    double delta = 0.0;  // final - own
};

// per_stage_metrics[k] maps every domain learned by stage k to its metric
// after stage k; stage_domains[k] names the domain introduced at stage k.
std::vector<ForgettingRecord> forgetting(
    const std::vector<std::map<std::string, double>>& per_stage_metrics,
    const std::vector<std::string>& stage_domains);

}  // namespace promptcl
