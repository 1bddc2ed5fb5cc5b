// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace promptcl {

// Closed word-level vocabulary. Tokens are whitespace-delimited words plus a
// fixed set of specials; anything unknown maps to <unk>.
class Vocabulary {
public:
    static constexpr int kMinSize = 64;

    // Specials occupy the low ids, then reserved generation-token slots,
    // then the word list (deduplicated, insertion order).
    static Vocabulary build(const std::vector<std::string>& words, int gen_slot_count = 8);

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    // id lookup; unknown words resolve to unk_id()
    int id(const std::string& word) const;
    bool contains(const std::string& word) const { return index_.count(word) != 0; }

    int pad_id() const { return pad_; }
    int eos_id() const { return eos_; }
    int unk_id() const { return unk_; }
    int split_id() const { return split_; }
    int semicolon_id() const { return semicolon_; }
    int bang_id() const { return bang_; }
    const std::vector<int>& gen_slot_ids() const { return gen_slots_; }

    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(std::span<const int> ids) const;

    // single-space-joined words; tokenize/detokenize round-trips canonical text
    static std::string canonical(const std::string& text);
    static std::vector<std::string> split_words(const std::string& text);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int pad_ = 0, eos_ = 0, unk_ = 0, split_ = 0, semicolon_ = 0, bang_ = 0;
    std::vector<int> gen_slots_;
};

inline const char* kPadToken = "<pad>";
inline const char* kEosToken = "<eos>";
inline const char* kUnkToken = "<unk>";
inline const char* kSplitToken = "__split__";
inline const char* kSemicolonToken = ";";
inline const char* kBangToken = "!";

}  // namespace promptcl
