// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "promptcl/backbone.hpp"
#include "promptcl/runner.hpp"

namespace promptcl {

// Raised for malformed or contradictory experiment configs; the CLI maps it
// to its config-error exit code.
class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Backbone pretraining recipe: synthetic corpus size/seed, initialization
// seed, and the optimizer schedule.  The defaults are the calibrated recipe
// the default stream configs assume.
struct PretrainSpec {
    int corpus_size = 9000;
    std::uint64_t corpus_seed = 777;
    std::uint64_t init_seed = 12345;
    int gen_slots = 8;
    BackboneDims dims;
    PretrainConfig train;

    PretrainSpec() {
        train.epochs = 12;
        train.batch_size = 16;
        train.seed = 314;
    }
};

// Strict JSON parsing: unknown keys and type mismatches raise ConfigError.
StreamConfig parse_stream_config(const std::string& json_text);
StreamConfig load_stream_config(const std::filesystem::path& path);

PretrainSpec parse_pretrain_spec(const std::string& json_text);
PretrainSpec load_pretrain_spec(const std::filesystem::path& path);

// Full round-trip serialization with every field spelled out in a fixed key
// order; the manifest digests these bytes.
std::string canonical_json(const StreamConfig& config);
std::string canonical_json(const PretrainSpec& spec);

}  // namespace promptcl
