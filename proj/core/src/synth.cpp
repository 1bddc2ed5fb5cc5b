// SPDX-License-Identifier: Apache-2.0
#include "promptcl/synth.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "promptcl/rng.hpp"
#include "promptcl/vocab.hpp"

namespace promptcl {
namespace {

constexpr int kGenerationRetries = 80;

// ---------------------------------------------------------------- catalogs

const std::vector<std::string>& first_names() {
    static const std::vector<std::string> v = {
        "alice", "bruno", "carol", "dana", "erin", "felix", "grace", "henry",
        "iris",  "jonas", "kate",  "liam", "mara", "nolan", "petra", "quinn"};
    return v;
}

const std::vector<std::string>& last_names() {
    static const std::vector<std::string> v = {"archer", "bell", "cole", "dorn",
                                               "ellis",  "fenn", "gray", "holt"};
    return v;
}

std::vector<std::string> person_phrases() {
    std::vector<std::string> out = first_names();
    for (std::size_t i = 0; i < first_names().size(); ++i) {
        out.push_back(first_names()[i] + " " + last_names()[i % last_names().size()]);
    }
    return out;
}

std::vector<std::string> group_phrases() {
    const std::vector<std::string> orgs = {"acme",    "globex",  "initech", "vertex", "zenith",
                                           "nimbus",  "quantum", "stellar", "halcyon", "borealis"};
    std::vector<std::string> out = orgs;
    for (std::size_t i = 0; i < orgs.size(); i += 2) out.push_back(orgs[i] + " union");
    return out;
}

std::vector<std::string> place_phrases() {
    const std::vector<std::string> places = {"arcadia", "brookfield", "calder",  "dover",
                                             "elmwood", "fairview",   "galway",  "harlow",
                                             "ivydale", "jutland",    "kentmere", "lorne"};
    std::vector<std::string> out = places;
    for (std::size_t i = 1; i < places.size(); i += 2) out.push_back(places[i] + " valley");
    return out;
}

std::vector<std::string> time_phrases() {
    return {"monday", "tuesday", "thursday", "friday", "january", "april",
            "july",   "october", "dawn",     "noon",   "dusk",    "midnight"};
}

std::vector<std::string> item_phrases() {
    return {"ledger",  "parcel",   "engine",   "crate", "lantern", "compass",
            "telescope", "archive", "manifest", "beacon", "folio",  "stencil"};
}

}  // namespace

std::vector<NerDomainSpec> default_ner_domains() {
    std::vector<NerDomainSpec> out;

    NerDomainSpec press;
    press.domain_id = "ner_press";
    press.labels = {"person", "group", "place"};
    press.lexicon = {{"person", person_phrases()},
                     {"group", group_phrases()},
                     {"place", place_phrases()}};
    press.templates = {
        {"person",
         {"{person} spoke to reporters near {place}",
          "{person} joined {group} last spring",
          "{person} praised the work of {group}"}},
        {"group",
         {"{group} hired {person} quietly",
          "{group} opened offices in {place}",
          "{group} sent a statement to {person}"}},
        {"place",
         {"{place} welcomed delegates from {group}",
          "{place} hosted a rally for {person}",
          "{place} appeared in a report by {group}"}}};
    out.push_back(std::move(press));

    NerDomainSpec notes;
    notes.domain_id = "ner_notes";
    notes.labels = {"person", "time", "item"};
    notes.lexicon = {{"person", person_phrases()},
                     {"time", time_phrases()},
                     {"item", item_phrases()}};
    notes.templates = {
        {"person",
         {"{person} borrowed the {item} on {time}",
          "{person} promised a reply before {time}",
          "{person} left the {item} behind"}},
        {"time",
         {"{time} brought a note from {person}",
          "{time} was saved for checking the {item}",
          "{time} came and {person} waited"}},
        {"item",
         {"{item} duty passed to {person}",
          "{item} counts were due by {time}",
          "{item} repairs kept {person} busy"}}};
    out.push_back(std::move(notes));

    NerDomainSpec field;
    field.domain_id = "ner_field";
    field.labels = {"place", "item", "group"};
    field.lexicon = {{"place", place_phrases()},
                     {"item", item_phrases()},
                     {"group", group_phrases()}};
    field.templates = {
        {"place",
         {"{place} stored a spare {item}",
          "{place} assigned crews from {group}",
          "{place} reported a missing {item}"}},
        {"item",
         {"{item} shipments reached {place}",
          "{item} orders came from {group}",
          "{item} stock ran low in {place}"}},
        {"group",
         {"{group} surveyed the roads near {place}",
          "{group} requisitioned every {item}",
          "{group} mapped the trail to {place}"}}};
    out.push_back(std::move(field));
    return out;
}

std::vector<ClsDomainSpec> default_classification_domains() {
    std::vector<ClsDomainSpec> out;

    ClsDomainSpec reviews;
    reviews.domain_id = "cls_reviews";
    reviews.classes = {{0, "awful"}, {1, "poor"}, {2, "fine"}, {3, "wonderful"}};
    reviews.keywords = {{0, {"terrible", "broken", "useless", "dreadful", "faulty"}},
                        {1, {"weak", "flawed", "clumsy", "shaky", "dull"}},
                        {2, {"decent", "usable", "steady", "fair", "plain"}},
                        {3, {"superb", "delightful", "flawless", "brilliant", "splendid"}}};
    reviews.nouns = {"gadget", "kettle", "speaker", "blender", "charger", "monitor"};
    reviews.templates = {"the {noun} felt {kw} and {kw}",
                         "{kw} build with a {kw} finish on this {noun}",
                         "this {noun} seemed {kw} though somewhat {kw}",
                         "a {kw} purchase because the {noun} ran {kw}"};
    out.push_back(std::move(reviews));

    ClsDomainSpec topics;
    topics.domain_id = "cls_topics";
    topics.classes = {{0, "sports"}, {1, "finance"}, {2, "science"}, {3, "travel"}};
    topics.keywords = {{0, {"stadium", "coach", "referee", "tournament", "goalkeeper"}},
                       {1, {"market", "shares", "profit", "budget", "lender"}},
                       {2, {"particle", "theory", "fossil", "orbit", "microscope"}},
                       {3, {"passport", "voyage", "hostel", "itinerary", "luggage"}}};
    topics.nouns = {"briefing", "column", "digest", "bulletin", "journal"};
    topics.templates = {"{kw} updates in the {noun} about the {kw}",
                        "the {noun} covered the {kw} and the {kw}",
                        "notes on the {kw} with {kw} details",
                        "fresh {kw} coverage plus {kw} analysis"};
    out.push_back(std::move(topics));

    ClsDomainSpec weather;
    weather.domain_id = "cls_weather";
    weather.classes = {{0, "sunny"}, {1, "rainy"}, {2, "snowy"}, {3, "stormy"}};
    weather.keywords = {{0, {"sunshine", "cloudless", "warm", "glare", "haze"}},
                        {1, {"drizzle", "puddle", "damp", "shower", "soggy"}},
                        {2, {"frost", "flake", "chill", "sleet", "powder"}},
                        {3, {"thunder", "gale", "lightning", "squall", "tempest"}}};
    weather.nouns = {"morning", "afternoon", "evening", "weekend", "forecast"};
    weather.templates = {"{kw} skies with {kw} spells this {noun}",
                         "the {noun} brought {kw} air and {kw} gusts",
                         "{kw} then {kw} across the whole {noun}",
                         "expect {kw} patches and {kw} breaks"};
    out.push_back(std::move(weather));
    return out;
}

std::vector<SumDomainSpec> default_summarization_domains() {
    std::vector<SumDomainSpec> out;

    SumDomainSpec harbor;
    harbor.domain_id = "sum_harbor";
    harbor.topics = {"harbor", "ferry", "dock", "pier", "wharf", "jetty"};
    harbor.fillers = {"crews", "vessels", "cargo", "nets", "ropes", "gulls", "fog", "lamps"};
    harbor.body_templates = {"the {topic} stayed busy while {filler} gathered",
                             "workers checked the {topic} as {filler} passed",
                             "{filler} lined the {topic} during the morning",
                             "locals watched the {topic} when {filler} arrived",
                             "evening tides rocked the {topic} under the {filler}"};
    harbor.key_templates = {"the {topic} closed after {filler} damaged the rails",
                            "officials repaired the {topic} once the {filler} cleared"};
    out.push_back(std::move(harbor));

    SumDomainSpec orchard;
    orchard.domain_id = "sum_orchard";
    orchard.topics = {"orchard", "grove", "vineyard", "meadow", "pasture"};
    orchard.fillers = {"pickers", "baskets", "ladders", "blossoms",
                       "bees",    "tractors", "crates", "sparrows"};
    orchard.body_templates = {"the {topic} hummed while {filler} worked",
                              "neighbors toured the {topic} as {filler} rested",
                              "{filler} filled the {topic} before lunch",
                              "children counted {filler} around the {topic}",
                              "warm winds crossed the {topic} past the {filler}"};
    orchard.key_templates = {"the {topic} reopened after {filler} finished the harvest",
                             "growers protected the {topic} before the {filler} spread"};
    out.push_back(std::move(orchard));
    return out;
}

namespace {

// ------------------------------------------------------------- templating

std::vector<std::string> template_parts(const std::string& pattern) {
    // Alternating literal / slot-name pieces: literals at even indices.
    std::vector<std::string> parts;
    std::string cur;
    bool in_slot = false;
    for (char c : pattern) {
        if (c == '{') {
            parts.push_back(cur);
            cur.clear();
            in_slot = true;
        } else if (c == '}') {
            if (!in_slot) throw std::invalid_argument("template: stray '}' in " + pattern);
            parts.push_back(cur);
            cur.clear();
            in_slot = false;
        } else {
            cur += c;
        }
    }
    if (in_slot) throw std::invalid_argument("template: unterminated slot in " + pattern);
    parts.push_back(cur);
    return parts;
}

std::vector<std::string> slot_names(const std::string& pattern) {
    const auto parts = template_parts(pattern);
    std::vector<std::string> out;
    for (std::size_t i = 1; i < parts.size(); i += 2) out.push_back(parts[i]);
    return out;
}

std::string fill_template(const std::string& pattern, const std::vector<std::string>& values) {
    const auto parts = template_parts(pattern);
    std::string text;
    std::size_t v = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i % 2 == 0) {
            text += parts[i];
        } else {
            if (v >= values.size()) throw std::invalid_argument("template: missing slot value");
            text += values[v++];
        }
    }
    return Vocabulary::canonical(text);
}

void collect_words(const std::string& text, std::vector<std::string>& out,
                   std::unordered_set<std::string>& seen) {
    for (const auto& w : Vocabulary::split_words(text)) {
        if (w.front() == '{') continue;
        if (seen.insert(w).second) out.push_back(w);
    }
}

std::string strip_slots(const std::string& pattern) {
    const auto parts = template_parts(pattern);
    std::string text;
    for (std::size_t i = 0; i < parts.size(); i += 2) text += " " + parts[i];
    return text;
}

// ------------------------------------------------------------ generation

struct UniquePool {
    std::unordered_set<std::string> seen;

    bool insert(const std::string& x) { return seen.insert(x).second; }
};

Sample make_ner_sample(const NerDomainSpec& spec, const std::string& primary, Rng& rng) {
    const auto& patterns = spec.templates.at(primary);
    const std::string& pattern = patterns[rng.uniform_index(patterns.size())];
    std::vector<std::string> values;
    EntitySet gold;
    std::vector<std::string> used;
    for (const std::string& label : slot_names(pattern)) {
        auto it = spec.lexicon.find(label);
        if (it == spec.lexicon.end()) {
            throw std::invalid_argument("ner domain " + spec.domain_id + ": template slot '" +
                                        label + "' has no lexicon");
        }
        const auto& pool = it->second;
        std::string phrase;
        do {
            phrase = pool[rng.uniform_index(pool.size())];
        } while (std::find(used.begin(), used.end(), phrase) != used.end());
        used.push_back(phrase);
        values.push_back(phrase);
        gold.pairs.push_back({phrase, label});
    }
    Sample s;
    s.task_type = TaskType::ner;
    s.domain_id = spec.domain_id;
    s.x = fill_template(pattern, values);
    s.target = std::move(gold);
    return s;
}

Sample make_cls_sample(const ClsDomainSpec& spec, std::size_t class_index, Rng& rng) {
    const int class_id = spec.classes[class_index].first;
    const std::string& pattern = spec.templates[rng.uniform_index(spec.templates.size())];
    std::vector<std::string> values;
    for (const std::string& slot : slot_names(pattern)) {
        if (slot == "kw") {
            std::size_t source = class_index;
            if (spec.overlap > 0.0 && rng.uniform() < spec.overlap) {
                source = rng.uniform_index(spec.classes.size());
            }
            const auto& pool = spec.keywords.at(spec.classes[source].first);
            values.push_back(pool[rng.uniform_index(pool.size())]);
        } else if (slot == "noun") {
            values.push_back(spec.nouns[rng.uniform_index(spec.nouns.size())]);
        } else {
            throw std::invalid_argument("classification template: unknown slot '" + slot + "'");
        }
    }
    Sample s;
    s.task_type = TaskType::classification;
    s.domain_id = spec.domain_id;
    s.x = fill_template(pattern, values);
    s.target = class_id;
    return s;
}

std::string make_sum_sentence(const SumDomainSpec& spec, const std::string& pattern,
                              const std::string& topic, Rng& rng) {
    std::vector<std::string> values;
    for (const std::string& slot : slot_names(pattern)) {
        if (slot == "topic") {
            values.push_back(topic);
        } else if (slot == "filler") {
            values.push_back(spec.fillers[rng.uniform_index(spec.fillers.size())]);
        } else {
            throw std::invalid_argument("summarization template: unknown slot '" + slot + "'");
        }
    }
    return fill_template(pattern, values) + " .";
}

Sample make_sum_sample(const SumDomainSpec& spec, Rng& rng) {
    const std::string& topic = spec.topics[rng.uniform_index(spec.topics.size())];
    const int n = rng.uniform_int(spec.min_sentences, spec.max_sentences);
    const int key_pos = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n)));
    const std::string key = make_sum_sentence(
        spec, spec.key_templates[rng.uniform_index(spec.key_templates.size())], topic, rng);
    std::vector<std::string> sentences;
    for (int i = 0; i < n; ++i) {
        if (i == key_pos) {
            sentences.push_back(key);
        } else {
            sentences.push_back(make_sum_sentence(
                spec, spec.body_templates[rng.uniform_index(spec.body_templates.size())], topic,
                rng));
        }
    }
    std::string doc;
    for (const auto& s : sentences) {
        if (!doc.empty()) doc += ' ';
        doc += s;
    }
    Sample s;
    s.task_type = TaskType::summarization;
    s.domain_id = spec.domain_id;
    s.x = doc;
    s.target = key;
    return s;
}

template <typename MakeFn>
std::vector<Sample> generate_unique(int count, UniquePool& unique, MakeFn&& make) {
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Sample s;
        bool ok = false;
        for (int attempt = 0; attempt < kGenerationRetries; ++attempt) {
            s = make(i);
            if (unique.insert(s.x)) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw std::runtime_error("synth: could not generate enough unique samples");
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

DomainCorpus make_ner_domain(const NerDomainSpec& spec, std::uint64_t seed) {
    if (spec.labels.empty()) throw std::invalid_argument("ner domain: empty label set");
    DomainCorpus corpus;
    corpus.task_type = TaskType::ner;
    corpus.domain_id = spec.domain_id;
    corpus.label_set = {spec.labels.begin(), spec.labels.end()};
    Rng rng = Rng(seed).derive(spec.domain_id);
    UniquePool unique;
    auto make = [&spec, &rng](int i) {
        return make_ner_sample(spec, spec.labels[static_cast<std::size_t>(i) % spec.labels.size()],
                               rng);
    };
    corpus.pool = generate_unique(spec.train_pool, unique, make);
    corpus.test = generate_unique(spec.test, unique, make);
    return corpus;
}

DomainCorpus make_classification_domain(const ClsDomainSpec& spec, std::uint64_t seed) {
    if (spec.classes.size() < 2) {
        throw std::invalid_argument("classification domain: need at least two classes");
    }
    DomainCorpus corpus;
    corpus.task_type = TaskType::classification;
    corpus.domain_id = spec.domain_id;
    corpus.verbalizer = Verbalizer::from_pairs(spec.classes);
    Rng rng = Rng(seed).derive(spec.domain_id);
    UniquePool unique;
    auto make = [&spec, &rng](int i) {
        return make_cls_sample(spec, static_cast<std::size_t>(i) % spec.classes.size(), rng);
    };
    corpus.pool = generate_unique(spec.train_pool, unique, make);
    corpus.test = generate_unique(spec.test, unique, make);
    return corpus;
}

DomainCorpus make_summarization_domain(const SumDomainSpec& spec, std::uint64_t seed) {
    DomainCorpus corpus;
    corpus.task_type = TaskType::summarization;
    corpus.domain_id = spec.domain_id;
    Rng rng = Rng(seed).derive(spec.domain_id);
    UniquePool unique;
    auto make = [&spec, &rng](int) { return make_sum_sample(spec, rng); };
    corpus.pool = generate_unique(spec.train_pool, unique, make);
    corpus.test = generate_unique(spec.test, unique, make);
    return corpus;
}

DomainCorpus make_domain(TaskType task_type, const std::string& domain_id, std::uint64_t seed) {
    switch (task_type) {
        case TaskType::ner:
            for (const auto& spec : default_ner_domains()) {
                if (spec.domain_id == domain_id) return make_ner_domain(spec, seed);
            }
            break;
        case TaskType::classification:
            for (const auto& spec : default_classification_domains()) {
                if (spec.domain_id == domain_id) return make_classification_domain(spec, seed);
            }
            break;
        case TaskType::summarization:
            for (const auto& spec : default_summarization_domains()) {
                if (spec.domain_id == domain_id) return make_summarization_domain(spec, seed);
            }
            break;
    }
    throw std::invalid_argument("make_domain: unknown domain '" + domain_id + "' for task type " +
                                to_string(task_type));
}

namespace {

const std::string& primary_label(const Sample& s) {
    const auto& pairs = s.entities().pairs;
    if (pairs.empty()) throw std::logic_error("ner sample without entities");
    return pairs.front().second;
}

// Draws n disjoint stratified groups of `shots` pool indices per stratum.
std::vector<std::vector<std::size_t>> stratified_draw(
    const std::vector<std::vector<std::size_t>>& strata, int shots, int groups, Rng& rng) {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(groups));
    for (auto indices : strata) {
        if (indices.size() < static_cast<std::size_t>(shots * groups)) {
            throw std::invalid_argument("sample_few_shot: pool too small for stratified split");
        }
        rng.shuffle(std::span<std::size_t>(indices));
        std::size_t next = 0;
        for (int g = 0; g < groups; ++g) {
            for (int k = 0; k < shots; ++k) out[static_cast<std::size_t>(g)].push_back(indices[next++]);
        }
    }
    return out;
}

}  // namespace

FewShotSplit sample_few_shot(const DomainCorpus& corpus, int shots, std::uint64_t seed) {
    if (shots < 1) throw std::invalid_argument("sample_few_shot: shots must be >= 1");
    Rng rng = Rng(seed).derive("fewshot").derive(corpus.domain_id);

    std::vector<std::vector<std::size_t>> strata;
    if (corpus.task_type == TaskType::summarization) {
        std::vector<std::size_t> all(corpus.pool.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        strata.push_back(std::move(all));
    } else {
        std::map<std::string, std::vector<std::size_t>> by_key;
        for (std::size_t i = 0; i < corpus.pool.size(); ++i) {
            const Sample& s = corpus.pool[i];
            const std::string key = corpus.task_type == TaskType::ner
                                        ? primary_label(s)
                                        : std::to_string(s.class_id());
            by_key[key].push_back(i);
        }
        for (auto& [_, v] : by_key) strata.push_back(std::move(v));
    }

    const auto groups = stratified_draw(strata, shots, 2, rng);
    FewShotSplit split;
    for (std::size_t i : groups[0]) split.train.push_back(corpus.pool[i]);
    for (std::size_t i : groups[1]) split.valid.push_back(corpus.pool[i]);
    split.test = corpus.test;
    return split;
}

// --------------------------------------------------------------- universe

std::vector<std::string> word_universe() {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    auto add_text = [&out, &seen](const std::string& text) { collect_words(text, out, seen); };
    auto add_all = [&add_text](const std::vector<std::string>& items) {
        for (const auto& s : items) add_text(s);
    };

    add_all({"ner", "classify", "summarize"});          // task tags
    add_all({"copy", "wrap", "match", "pick", "sort"});  // pretrain controls
    add_text(".");

    for (const auto& spec : default_ner_domains()) {
        add_all(spec.labels);
        for (const auto& [_, pool] : spec.lexicon) add_all(pool);
        for (const auto& [_, patterns] : spec.templates) {
            for (const auto& p : patterns) add_text(strip_slots(p));
        }
    }
    for (const auto& spec : default_classification_domains()) {
        for (const auto& [_, word] : spec.classes) add_text(word);
        for (const auto& [_, pool] : spec.keywords) add_all(pool);
        add_all(spec.nouns);
        for (const auto& p : spec.templates) add_text(strip_slots(p));
    }
    for (const auto& spec : default_summarization_domains()) {
        add_all(spec.topics);
        add_all(spec.fillers);
        for (const auto& p : spec.body_templates) add_text(strip_slots(p));
        for (const auto& p : spec.key_templates) add_text(strip_slots(p));
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> make_pretrain_corpus(int size,
                                                                      std::uint64_t seed) {
    if (size < 1) throw std::invalid_argument("make_pretrain_corpus: size must be >= 1");
    const std::vector<std::string> words = word_universe();
    Rng rng = Rng(seed).derive("pretrain");

    // Deterministic association table: consecutive pairs of a seeded shuffle.
    std::vector<std::string> shuffled = words;
    rng.shuffle(std::span<std::string>(shuffled));
    std::unordered_map<std::string, std::string> partner;
    for (std::size_t i = 0; i + 1 < shuffled.size(); i += 2) {
        partner[shuffled[i]] = shuffled[i + 1];
        partner[shuffled[i + 1]] = shuffled[i];
    }
    if (shuffled.size() % 2 == 1) partner[shuffled.back()] = shuffled.back();

    // Deterministic word groups with an anchor word each: another seeded
    // shuffle chopped into equal chunks.  Grouping words this way gives the
    // backbone a notion of arbitrary word clusters mapping to one
    // representative, which downstream prompts can re-bind.
    constexpr std::size_t kGroupSize = 12;
    std::vector<std::string> grouped = words;
    rng.shuffle(std::span<std::string>(grouped));
    std::vector<std::vector<std::string>> groups;
    for (std::size_t i = 0; i + kGroupSize <= grouped.size(); i += kGroupSize) {
        groups.emplace_back(grouped.begin() + static_cast<std::ptrdiff_t>(i),
                            grouped.begin() + static_cast<std::ptrdiff_t>(i + kGroupSize));
    }

    auto draw_words = [&](int k) {
        std::string text;
        for (int i = 0; i < k; ++i) {
            if (!text.empty()) text += ' ';
            text += words[rng.uniform_index(words.size())];
        }
        return text;
    };

    std::vector<std::pair<std::string, std::string>> corpus;
    corpus.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
        const double r = rng.uniform();
        if (r < 0.30) {
            const std::string body = draw_words(rng.uniform_int(2, 8));
            corpus.push_back({"copy " + body, body});
        } else if (r < 0.45) {
            const std::string body = draw_words(rng.uniform_int(1, 4));
            corpus.push_back({"wrap " + body, body + " __split__ " + body});
        } else if (r < 0.65) {
            const int k = rng.uniform_int(1, 3);
            std::string in = "match";
            std::string tgt;
            for (int j = 0; j < k; ++j) {
                const std::string& w = words[rng.uniform_index(words.size())];
                in += ' ' + w;
                if (!tgt.empty()) tgt += " ; ";
                tgt += w + " ! " + partner.at(w);
            }
            corpus.push_back({in, tgt});
        } else if (r < 0.75) {
            const std::string body = draw_words(rng.uniform_int(2, 5));
            const std::string first = Vocabulary::split_words(body).front();
            corpus.push_back({"pick " + body, partner.at(first)});
        } else {
            const auto& group = groups[rng.uniform_index(groups.size())];
            const int k = rng.uniform_int(2, 4);
            std::string in = "sort";
            for (int j = 0; j < k; ++j) {
                in += ' ' + group[1 + rng.uniform_index(group.size() - 1)];
            }
            corpus.push_back({in, group.front()});
        }
    }
    return corpus;
}

}  // namespace promptcl
