// SPDX-License-Identifier: Apache-2.0
#include "promptcl/task_format.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "promptcl/vocab.hpp"

namespace promptcl {
namespace {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

std::string join_words(const std::vector<std::string>& words, std::size_t begin,
                       std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (!out.empty()) out += ' ';
        out += words[i];
    }
    return out;
}

// Collapses runs of whitespace and trims; "" stays "".
std::string normalize_ws(const std::string& text) {
    auto words = split_words(text);
    return join_words(words, 0, words.size());
}

std::vector<std::string> split_on_char(const std::string& text, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string render_entities(const EntitySet& entities) {
    std::string out;
    for (const auto& [seg, label] : entities.pairs) {
        if (!out.empty()) out += " ; ";
        out += seg + " ! " + label;
    }
    return out;
}

// Strict grammar parse for generated NER targets: every ';' chunk must hold
// exactly one '!' with nonempty sides.  Foreign labels are reported after the
// grammar check so grammar violations take priority.
bool parse_ner_strict(const std::string& text, const std::set<std::string>& label_set,
                      EntitySet& out, bool& foreign) {
    out.pairs.clear();
    foreign = false;
    for (const std::string& chunk : split_on_char(text, ';')) {
        const auto parts = split_on_char(chunk, '!');
        if (parts.size() != 2) return false;
        const std::string seg = normalize_ws(parts[0]);
        const std::string label = normalize_ws(parts[1]);
        if (seg.empty() || label.empty()) return false;
        if (label_set.count(label) == 0) foreign = true;
        bool dup = false;
        for (const auto& p : out.pairs) {
            if (p.first == seg && p.second == label) dup = true;
        }
        if (!dup) out.pairs.push_back({seg, label});
    }
    return !out.pairs.empty();
}

}  // namespace

Verbalizer Verbalizer::from_pairs(const std::vector<std::pair<int, std::string>>& pairs) {
    Verbalizer v;
    for (const auto& [id, word] : pairs) {
        const std::string norm = normalize_ws(word);
        if (norm.empty()) throw std::invalid_argument("Verbalizer: empty verbalization");
        if (!v.to_word_.emplace(id, norm).second) {
            throw std::invalid_argument("Verbalizer: duplicate class id");
        }
        if (!v.to_id_.emplace(norm, id).second) {
            throw std::invalid_argument("Verbalizer: duplicate verbalization '" + norm + "'");
        }
    }
    return v;
}

const std::string& Verbalizer::verbalize(int class_id) const {
    auto it = to_word_.find(class_id);
    if (it == to_word_.end()) {
        throw std::invalid_argument("Verbalizer: unknown class id " + std::to_string(class_id));
    }
    return it->second;
}

std::optional<int> Verbalizer::deverbalize(const std::string& text) const {
    auto it = to_id_.find(normalize_ws(text));
    if (it == to_id_.end()) return std::nullopt;
    return it->second;
}

std::vector<int> Verbalizer::class_ids() const {
    std::vector<int> out;
    out.reserve(to_word_.size());
    for (const auto& [id, _] : to_word_) out.push_back(id);
    return out;
}

const EntitySet& Sample::entities() const { return std::get<EntitySet>(target); }
int Sample::class_id() const { return std::get<int>(target); }
const std::string& Sample::summary() const { return std::get<std::string>(target); }

const std::string& FormatConfig::tag_for(TaskType type) const {
    switch (type) {
        case TaskType::ner: return ner_tag;
        case TaskType::classification: return classification_tag;
        case TaskType::summarization: return summarization_tag;
    }
    throw std::invalid_argument("FormatConfig::tag_for: invalid TaskType");
}

std::string format_task_target(const Sample& sample, const Verbalizer* verbalizer) {
    switch (sample.task_type) {
        case TaskType::ner:
            return render_entities(sample.entities());
        case TaskType::classification:
            if (verbalizer == nullptr) {
                throw std::invalid_argument("format_task: classification requires a verbalizer");
            }
            return verbalizer->verbalize(sample.class_id());
        case TaskType::summarization:
            return sample.summary();
    }
    throw std::invalid_argument("format_task: invalid TaskType");
}

FormattedPair format_task(const Sample& sample, const Verbalizer* verbalizer,
                          const FormatConfig& fmt) {
    const std::string& tag = fmt.tag_for(sample.task_type);
    FormattedPair out;
    if (tag.empty()) {
        out.input = sample.x;
    } else if (sample.x.empty()) {
        out.input = tag;
    } else {
        out.input = tag + " " + sample.x;
    }
    out.target = format_task_target(sample, verbalizer);
    return out;
}

EntitySet parse_ner_output(const std::string& text, const std::set<std::string>& label_set,
                           NerParseReport* report) {
    EntitySet out;
    if (normalize_ws(text).empty()) return out;
    for (const std::string& chunk : split_on_char(text, ';')) {
        const auto parts = split_on_char(chunk, '!');
        if (parts.size() != 2) {
            if (report) ++report->dropped_malformed;
            continue;
        }
        const std::string seg = normalize_ws(parts[0]);
        const std::string label = normalize_ws(parts[1]);
        if (seg.empty() || label.empty()) {
            if (report) ++report->dropped_malformed;
            continue;
        }
        if (label_set.count(label) == 0) {
            if (report) ++report->dropped_foreign;
            continue;
        }
        bool dup = false;
        for (const auto& p : out.pairs) {
            if (p.first == seg && p.second == label) dup = true;
        }
        if (dup) {
            if (report) ++report->dropped_duplicate;
            continue;
        }
        out.pairs.push_back({seg, label});
    }
    return out;
}

std::string to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::multi_split: return "multi_split";
        case RejectReason::no_split: return "no_split";
        case RejectReason::empty_side: return "empty_side";
        case RejectReason::bad_grammar: return "bad_grammar";
        case RejectReason::foreign_label: return "foreign_label";
    }
    throw std::invalid_argument("to_string: invalid RejectReason");
}

PseudoParse parse_pseudo(const std::string& generated_text, TaskType task_type,
                         const std::string& domain_id, const std::set<std::string>* label_set,
                         const Verbalizer* verbalizer) {
    PseudoParse result;
    auto reject = [&result](RejectReason r) {
        result.accepted = false;
        result.reason = r;
        return result;
    };

    // The split marker counts at token level; markers glued into larger
    // tokens cannot be produced by the generator's detokenizer.
    const auto words = split_words(generated_text);
    std::vector<std::size_t> split_pos;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (words[i] == kSplitToken) split_pos.push_back(i);
    }
    if (split_pos.size() > 1) return reject(RejectReason::multi_split);
    if (split_pos.empty()) return reject(RejectReason::no_split);

    const std::string x = join_words(words, 0, split_pos[0]);
    const std::string y = join_words(words, split_pos[0] + 1, words.size());
    if (x.empty() || y.empty()) return reject(RejectReason::empty_side);

    Sample s;
    s.task_type = task_type;
    s.domain_id = domain_id;
    s.x = x;
    s.origin = Origin::pseudo;
    switch (task_type) {
        case TaskType::ner: {
            if (label_set == nullptr) {
                throw std::invalid_argument("parse_pseudo: ner requires a label set");
            }
            EntitySet entities;
            bool foreign = false;
            if (!parse_ner_strict(y, *label_set, entities, foreign)) {
                return reject(RejectReason::bad_grammar);
            }
            if (foreign) return reject(RejectReason::foreign_label);
            s.target = std::move(entities);
            break;
        }
        case TaskType::classification: {
            if (verbalizer == nullptr) {
                throw std::invalid_argument("parse_pseudo: classification requires a verbalizer");
            }
            if (y.find('!') != std::string::npos || y.find(';') != std::string::npos) {
                return reject(RejectReason::bad_grammar);
            }
            const auto id = verbalizer->deverbalize(y);
            if (!id) return reject(RejectReason::foreign_label);
            s.target = *id;
            break;
        }
        case TaskType::summarization:
            s.target = y;
            break;
    }
    result.accepted = true;
    result.sample = std::move(s);
    return result;
}

std::string format_gen_target(const Sample& sample, const Verbalizer* verbalizer) {
    const std::string y = format_task_target(sample, verbalizer);
    if (sample.x.empty()) return std::string(kSplitToken) + " " + y;
    return sample.x + " " + kSplitToken + " " + y;
}

std::string lead3(const std::string& document) {
    std::vector<std::string> sentences;
    std::string cur;
    for (char c : document) {
        cur += c;
        if (c == '.' || c == '!' || c == '?') {
            const std::string s = normalize_ws(cur);
            if (!s.empty()) sentences.push_back(s);
            cur.clear();
        }
    }
    const std::string remnant = normalize_ws(cur);
    if (!remnant.empty()) sentences.push_back(remnant);
    if (sentences.size() <= 3) return document;
    return sentences[0] + " " + sentences[1] + " " + sentences[2];
}

// --------------------------------------------------------------------------
// dataset IO

void save_samples(const std::string& path, const std::vector<Sample>& samples) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_samples: cannot open " + path);
    for (const Sample& s : samples) {
        nlohmann::json rec;
        rec["task_type"] = to_string(s.task_type);
        rec["domain"] = s.domain_id;
        rec["x"] = s.x;
        switch (s.task_type) {
            case TaskType::ner: {
                nlohmann::json pairs = nlohmann::json::array();
                for (const auto& [seg, label] : s.entities().pairs) {
                    pairs.push_back(nlohmann::json::array({seg, label}));
                }
                rec["y"] = std::move(pairs);
                break;
            }
            case TaskType::classification:
                rec["y"] = s.class_id();
                break;
            case TaskType::summarization:
                rec["y"] = s.summary();
                break;
        }
        os << rec.dump() << '\n';
    }
    if (!os) throw std::runtime_error("save_samples: write failed for " + path);
}

std::vector<Sample> load_samples(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_samples: cannot open " + path);
    std::vector<Sample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error("load_samples: " + path + ":" + std::to_string(lineno) +
                                     ": " + e.what());
        }
        Sample s;
        s.task_type = task_type_from_string(rec.at("task_type").get<std::string>());
        s.domain_id = rec.at("domain").get<std::string>();
        s.x = rec.at("x").get<std::string>();
        s.origin = Origin::real;
        switch (s.task_type) {
            case TaskType::ner: {
                EntitySet entities;
                for (const auto& pair : rec.at("y")) {
                    entities.pairs.push_back(
                        {pair.at(0).get<std::string>(), pair.at(1).get<std::string>()});
                }
                s.target = std::move(entities);
                break;
            }
            case TaskType::classification:
                s.target = rec.at("y").get<int>();
                break;
            case TaskType::summarization:
                s.target = rec.at("y").get<std::string>();
                break;
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace promptcl
