// SPDX-License-Identifier: Apache-2.0
#include "promptcl/vocab.hpp"

#include <cctype>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace promptcl {

Vocabulary Vocabulary::build(const std::vector<std::string>& words, int gen_slot_count) {
    Vocabulary v;
    auto add = [&v](const std::string& tok) {
        if (v.index_.count(tok)) return v.index_.at(tok);
        const int id = static_cast<int>(v.tokens_.size());
        v.tokens_.push_back(tok);
        v.index_.emplace(tok, id);
        return id;
    };
    v.pad_ = add(kPadToken);
    v.eos_ = add(kEosToken);
    v.unk_ = add(kUnkToken);
    v.split_ = add(kSplitToken);
    v.semicolon_ = add(kSemicolonToken);
    v.bang_ = add(kBangToken);
    for (int i = 0; i < gen_slot_count; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "<gen_%d>", i);
        v.gen_slots_.push_back(add(buf));
    }
    for (const auto& w : words) {
        if (w.empty()) continue;
        add(w);
    }
    if (v.size() < kMinSize) {
        throw std::invalid_argument("Vocabulary::build: vocabulary smaller than " +
                                    std::to_string(kMinSize) + " tokens");
    }
    return v;
}

int Vocabulary::id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? unk_ : it->second;
}

std::vector<std::string> Vocabulary::split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string Vocabulary::canonical(const std::string& text) {
    const auto words = split_words(text);
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return out;
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) ids.push_back(id(w));
    return ids;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        out += token(ids[i]);
    }
    return out;
}

}  // namespace promptcl
