// SPDX-License-Identifier: Apache-2.0
#include "promptcl/report.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "promptcl/digest.hpp"

namespace promptcl {
namespace {

using nlohmann::ordered_json;

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    return out;
}

std::string fixed6(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    return buf;
}

}  // namespace

std::uint64_t RunManifest::config_digest() const { return fnv1a(config_json); }

std::uint64_t RunManifest::digest() const {
    std::string blob = "config:" + to_hex(config_digest()) + "|seeds:";
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i != 0) blob += ',';
        blob += std::to_string(seeds[i]);
    }
    blob += "|code:" + code_version;
    return fnv1a(blob);
}

std::string current_timestamp_utc() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    ordered_json j;
    j["config_digest"] = to_hex(manifest.config_digest());
    j["manifest_digest"] = to_hex(manifest.digest());
    j["seeds"] = manifest.seeds;
    j["code_version"] = manifest.code_version;
    j["timestamp"] = manifest.timestamp;
    j["outputs"] = manifest.outputs;
    j["config"] = ordered_json::parse(manifest.config_json);
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
}

void write_seed_records(const StreamConfig& config, const SeedResult& sr,
                        std::uint64_t manifest_digest, const std::filesystem::path& path) {
    const std::string digest_hex = to_hex(manifest_digest);
    const std::string method = to_string(config.method);
    std::ofstream out = open_out(path);

    for (const StageRecord& rec : sr.records) {
        ordered_json j;
        j["record"] = "run";
        j["manifest"] = digest_hex;
        j["method"] = method;
        j["seed"] = sr.seed;
        j["stage"] = rec.stage;
        j["scope"] = rec.scope;
        j["task"] = to_string(rec.task_type);
        j["metric"] = rec.metric;
        j["value"] = rec.value;
        j["n"] = rec.n;
        out << j.dump() << '\n';
    }
    for (const PseudoGenStats& stats : sr.pseudo) {
        for (const PseudoDomainStats& ds : stats.domains) {
            ordered_json j;
            j["record"] = "pseudo";
            j["manifest"] = digest_hex;
            j["method"] = method;
            j["seed"] = sr.seed;
            j["stage"] = stats.stage;
            j["domain"] = ds.domain_id;
            j["target"] = ds.target;
            j["attempts"] = ds.attempts;
            j["accepted"] = ds.accepted;
            j["acceptance_rate"] = ds.acceptance_rate();
            ordered_json rej = ordered_json::object();
            for (const auto& [reason, count] : ds.rejected) {
                rej[to_string(reason)] = count;
            }
            j["rejected"] = rej;
            out << j.dump() << '\n';
        }
    }
    {
        ordered_json j;
        j["record"] = "backbone";
        j["manifest"] = digest_hex;
        j["seed"] = sr.seed;
        j["digest_before"] = to_hex(sr.backbone_digest_before);
        j["digest_after"] = to_hex(sr.backbone_digest_after);
        j["changed"] = sr.backbone_digest_before != sr.backbone_digest_after;
        out << j.dump() << '\n';
    }
    for (const std::string& w : sr.warnings) {
        ordered_json j;
        j["record"] = "warning";
        j["manifest"] = digest_hex;
        j["seed"] = sr.seed;
        j["text"] = w;
        out << j.dump() << '\n';
    }
}

void write_aggregate(const RunStreamResult& result, std::uint64_t manifest_digest,
                     const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    out << "# manifest=" << to_hex(manifest_digest) << " method="
        << to_string(result.config.method) << " code=" << kCodeVersion << " seeds=";
    for (std::size_t i = 0; i < result.config.seeds.size(); ++i) {
        if (i != 0) out << ',';
        out << result.config.seeds[i];
    }
    out << '\n';
    out << "stage\tscope\tmetric\tmean\tstd\tseeds\n";
    for (const AggregateRow& row : result.aggregate) {
        out << row.stage << '\t' << row.scope << '\t' << row.metric << '\t' << fixed6(row.mean)
            << '\t' << fixed6(row.stddev) << '\t' << row.seeds << '\n';
    }
}

}  // namespace promptcl
