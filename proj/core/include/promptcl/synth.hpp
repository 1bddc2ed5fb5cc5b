// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "promptcl/task_format.hpp"
#include "promptcl/types.hpp"

namespace promptcl {

// Sentence templates contain {label} / {kw} / {noun} / {topic} / {filler}
// slots; all literal template words and all pool words are delimiter-free and
// part of the shared word universe.

struct NerDomainSpec {
    std::string domain_id;
    std::vector<std::string> labels;
    std::map<std::string, std::vector<std::string>> lexicon;    // label -> entity phrases
    std::map<std::string, std::vector<std::string>> templates;  // primary label -> patterns
    int train_pool = 600;
    int test = 200;
};

struct ClsDomainSpec {
    std::string domain_id;
    std::vector<std::pair<int, std::string>> classes;  // class id -> verbalization
    std::map<int, std::vector<std::string>> keywords;  // class id -> keyword pool
    std::vector<std::string> nouns;
    std::vector<std::string> templates;
    double overlap = 0.1;  // chance a keyword slot draws from a foreign class
    int train_pool = 600;
    int test = 200;
};

struct SumDomainSpec {
    std::string domain_id;
    std::vector<std::string> topics;
    std::vector<std::string> fillers;
    std::vector<std::string> body_templates;
    std::vector<std::string> key_templates;  // exactly one key sentence per document
    int min_sentences = 4;
    int max_sentences = 7;
    int train_pool = 400;
    int test = 200;
};

// A generated domain: a sampling pool for few-shot splits plus a fixed
// held-out test set, with the grammar objects evaluation needs.
struct DomainCorpus {
    TaskType task_type = TaskType::ner;
    std::string domain_id;
    std::vector<Sample> pool;
    std::vector<Sample> test;
    std::set<std::string> label_set;  // ner only
    Verbalizer verbalizer;            // classification only
};

struct FewShotSplit {
    std::vector<Sample> train;
    std::vector<Sample> valid;  // always |valid| == |train|
    std::vector<Sample> test;
};

// Desk-scale catalogs.  NER domains share part of their label sets;
// classification domains have pairwise disjoint verbalizations.
std::vector<NerDomainSpec> default_ner_domains();
std::vector<ClsDomainSpec> default_classification_domains();
std::vector<SumDomainSpec> default_summarization_domains();

// Every word any generator or tag can emit, deduplicated, deterministic order.
std::vector<std::string> word_universe();

DomainCorpus make_ner_domain(const NerDomainSpec& spec, std::uint64_t seed);
DomainCorpus make_classification_domain(const ClsDomainSpec& spec, std::uint64_t seed);
DomainCorpus make_summarization_domain(const SumDomainSpec& spec, std::uint64_t seed);

// Finds the default-catalog domain with this id and generates it.
DomainCorpus make_domain(TaskType task_type, const std::string& domain_id, std::uint64_t seed);

// shots is per primary label (ner), per class (classification), or the total
// sample count (summarization).  Train and valid are disjoint, equally sized,
// and drawn from the pool; test is the corpus' fixed held-out set.
FewShotSplit sample_few_shot(const DomainCorpus& corpus, int shots, std::uint64_t seed);

// Seq2seq pretraining mixture over the word universe: echo ("copy"),
// split-marked echo ("wrap"), paired segment-label grammar ("match"), and
// single-word association ("pick").  Teaches the output grammars without
// leaking any task-specific mapping.
std::vector<std::pair<std::string, std::string>> make_pretrain_corpus(int size,
                                                                      std::uint64_t seed);

}  // namespace promptcl
