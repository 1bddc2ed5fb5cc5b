// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "promptcl/types.hpp"

namespace promptcl {

// Ordered (segment, label) pairs for sequence-labeling targets.
struct EntitySet {
    std::vector<std::pair<std::string, std::string>> pairs;

    bool operator==(const EntitySet&) const = default;
    bool empty() const { return pairs.empty(); }
    std::size_t size() const { return pairs.size(); }
};

// Bijective mapping between class ids and their surface words.
class Verbalizer {
   public:
    Verbalizer() = default;
    static Verbalizer from_pairs(const std::vector<std::pair<int, std::string>>& pairs);

    const std::string& verbalize(int class_id) const;              // throws on unknown id
    std::optional<int> deverbalize(const std::string& text) const;  // trimmed exact match
    std::vector<int> class_ids() const;
    std::size_t size() const { return to_word_.size(); }

   private:
    std::map<int, std::string> to_word_;
    std::map<std::string, int> to_id_;
};

enum class Origin { real, pseudo };

// One labeled example.  The target is held in canonical form; the text-to-text
// rendering is produced by format_task.
struct Sample {
    TaskType task_type = TaskType::ner;
    std::string domain_id;
    std::string x;
    std::variant<EntitySet, int, std::string> target;
    Origin origin = Origin::real;

    const EntitySet& entities() const;  // checked accessors; throw on wrong alternative
    int class_id() const;
    const std::string& summary() const;
};

// Short textual task tags prefixed to every input.  An empty tag yields the
// bare X.  Recorded in run configs so the template is auditable.
struct FormatConfig {
    std::string ner_tag = "ner";
    std::string classification_tag = "classify";
    std::string summarization_tag = "summarize";

    const std::string& tag_for(TaskType type) const;
};

struct FormattedPair {
    std::string input;
    std::string target;
};

// Renders the canonical target per task grammar:
//   ner:            "seg ! label ; seg ! label ; ..."
//   classification: verbalized class word
//   summarization:  target text verbatim
// The verbalizer is required for classification samples only.
FormattedPair format_task(const Sample& sample, const Verbalizer* verbalizer,
                          const FormatConfig& fmt = {});

// Renders the string target alone (no input tag) for a known-canonical sample.
std::string format_task_target(const Sample& sample, const Verbalizer* verbalizer);

struct NerParseReport {
    int dropped_malformed = 0;
    int dropped_foreign = 0;
    int dropped_duplicate = 0;
};

// Lenient evaluation-time parser: malformed or foreign pairs are dropped and
// counted, duplicates deduplicated (first occurrence kept).
EntitySet parse_ner_output(const std::string& text, const std::set<std::string>& label_set,
                           NerParseReport* report = nullptr);

// One reason per rejected string; listed in priority order.
enum class RejectReason { multi_split, no_split, empty_side, bad_grammar, foreign_label };

std::string to_string(RejectReason reason);

struct PseudoParse {
    bool accepted = false;
    Sample sample;                                 // valid iff accepted
    RejectReason reason = RejectReason::no_split;  // valid iff !accepted
};

// Strict filter for generated pseudo text "X __split__ Y".  The label_set
// governs NER, the verbalizer governs classification; summarization accepts
// any nonempty sides.  Rejection is a normal outcome, never an error.
PseudoParse parse_pseudo(const std::string& generated_text, TaskType task_type,
                         const std::string& domain_id,
                         const std::set<std::string>* label_set = nullptr,
                         const Verbalizer* verbalizer = nullptr);

// "X __split__ Y" with Y in TASK-format rendering.
std::string format_gen_target(const Sample& sample, const Verbalizer* verbalizer);

// First three sentences ('.', '!', '?' terminated); shorter documents pass
// through whole.
std::string lead3(const std::string& document);

// Line-delimited dataset IO.  Each record is a JSON object with fields
// task_type, domain, x, y (entity pair array / class id / summary string).
void save_samples(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> load_samples(const std::string& path);

}  // namespace promptcl
