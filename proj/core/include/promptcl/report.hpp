// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "promptcl/runner.hpp"

namespace promptcl {

inline constexpr const char* kCodeVersion = "1.0.0";

// Provenance envelope for a run.  The digest covers config bytes, seeds, and
// code version only — never the timestamp — so result files that reference it
// are byte-identical across reruns of the same configuration.
struct RunManifest {
    std::string config_json;  // canonical serialization
    std::vector<std::uint64_t> seeds;
    std::string code_version = kCodeVersion;
    std::string timestamp;  // informational; excluded from digests
    std::vector<std::string> outputs;

    std::uint64_t config_digest() const;
    std::uint64_t digest() const;
};

std::string current_timestamp_utc();

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

// Line-delimited records for one seed: run rows, pseudo-generation stats,
// backbone digests, and warnings.  Every line carries the manifest digest.
// Takes a single seed's result so callers can flush as each seed completes.
void write_seed_records(const StreamConfig& config, const SeedResult& seed_result,
                        std::uint64_t manifest_digest, const std::filesystem::path& path);

// Tab-separated mean±std table over seeds, one row per (stage, scope, metric).
void write_aggregate(const RunStreamResult& result, std::uint64_t manifest_digest,
                     const std::filesystem::path& path);

}  // namespace promptcl
