// SPDX-License-Identifier: Apache-2.0
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "promptcl/synth.hpp"
#include "promptcl/vocab.hpp"

using promptcl::Vocabulary;

namespace {

std::vector<std::string> filler(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("w" + std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("special tokens occupy the low ids, then generation slots") {
  const auto v = Vocabulary::build(filler(80), 4);
  CHECK(v.pad_id() == 0);
  CHECK(v.eos_id() == 1);
  CHECK(v.unk_id() == 2);
  CHECK(v.split_id() == 3);
  CHECK(v.semicolon_id() == 4);
  CHECK(v.bang_id() == 5);
  CHECK(v.token(0) == promptcl::kPadToken);
  CHECK(v.token(3) == promptcl::kSplitToken);
  REQUIRE(v.gen_slot_ids().size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(v.gen_slot_ids()[i] == 6 + i);
  }
  CHECK(v.size() == 6 + 4 + 80);
}

TEST_CASE("duplicate words are dropped, insertion order kept") {
  std::vector<std::string> words = filler(70);
  words.push_back("w0");
  words.push_back("zz");
  const auto v = Vocabulary::build(words, 2);
  CHECK(v.size() == 6 + 2 + 71);
  CHECK(v.token(v.size() - 1) == "zz");
}

TEST_CASE("minimum size is enforced") {
  CHECK_THROWS_AS((void)Vocabulary::build(filler(10), 2), std::invalid_argument);
}

TEST_CASE("unknown words map to unk") {
  const auto v = Vocabulary::build(filler(80), 2);
  CHECK(v.id("w5") > 5);
  CHECK(v.id("never-seen") == v.unk_id());
  CHECK(v.contains("w5"));
  CHECK(!v.contains("never-seen"));
}

TEST_CASE("tokenize and detokenize round-trip canonical text") {
  const auto v = Vocabulary::build(filler(80), 2);
  const std::string text = "w1  w2   w3 __split__ w4 ! w5 ; w6";
  const auto ids = v.tokenize(text);
  CHECK(v.detokenize(ids) == Vocabulary::canonical(text));
  CHECK(Vocabulary::canonical(text) == "w1 w2 w3 __split__ w4 ! w5 ; w6");
}

TEST_CASE("tokenize of empty text yields no ids") {
  const auto v = Vocabulary::build(filler(80), 2);
  CHECK(v.tokenize("").empty());
  CHECK(v.tokenize("   ").empty());
  CHECK(v.detokenize(std::vector<int>{}).empty());
}

TEST_CASE("split_words handles arbitrary whitespace") {
  const auto ws = Vocabulary::split_words(" a\tb\n c  ");
  REQUIRE(ws.size() == 3);
  CHECK(ws[0] == "a");
  CHECK(ws[2] == "c");
}

TEST_CASE("word universe builds the project vocabulary with every task word known") {
  const auto v = Vocabulary::build(promptcl::word_universe(), 8);
  CHECK(v.size() >= Vocabulary::kMinSize);
  // Task tags and structural words must be in-vocabulary, not unk.
  for (const std::string w : {"ner", "classify", "summarize"}) {
    CHECK(v.id(w) != v.unk_id());
  }
}
