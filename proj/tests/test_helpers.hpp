// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared construction helpers for the test suites: small random backbones over
// the full synthetic vocabulary, plus tiny batch builders.  Unit tests use
// unfrozen or freshly frozen random backbones; only the fixture-driven suites
// load the pretrained binary.

#include <string>
#include <vector>

#include "promptcl/backbone.hpp"
#include "promptcl/losses.hpp"
#include "promptcl/prompt.hpp"
#include "promptcl/synth.hpp"
#include "promptcl/vocab.hpp"

namespace testutil {

inline promptcl::Vocabulary test_vocab(int gen_slots = 8) {
  return promptcl::Vocabulary::build(promptcl::word_universe(), gen_slots);
}

inline promptcl::BackboneDims tiny_dims(int d_model = 16) {
  promptcl::BackboneDims dims;
  dims.d_model = d_model;
  dims.n_enc_layers = 1;
  dims.n_dec_layers = 1;
  dims.n_heads = 2;
  dims.d_ff = 2 * d_model;
  dims.max_seq = 64;
  return dims;
}

// A small randomly initialised backbone.  Frozen by default so prompt-side
// code paths (the common case) work out of the box.
inline promptcl::Backbone tiny_backbone(bool frozen = true, int d_model = 16,
                                        unsigned long long seed = 99) {
  promptcl::Backbone bb(test_vocab(), tiny_dims(d_model), seed);
  if (frozen) bb.freeze();
  return bb;
}

inline std::vector<promptcl::TextBatchItem> tiny_batch() {
  return {
      {"alder visits the harbor", "alder ! person", "dom_a"},
      {"rain over the orchard today", "rain ! time ; orchard ! place", "dom_a"},
      {"the market was quiet", "quiet", "dom_a"},
  };
}

}  // namespace testutil
