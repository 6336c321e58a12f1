#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bnsp/checkpoint.hpp"

namespace bnsp {

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::string& path);

/// Reproducibility record written next to every command's primary artifact.
/// Replaying the stored argv regenerates the artifacts bit-identically.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    ConfigMap config;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> input_digests;  // path -> fnv1a64 hex
    std::vector<std::string> artifacts;
    double wall_clock_seconds = 0.0;

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
};

void save_manifest(const RunManifest& manifest, const std::string& path);
RunManifest load_manifest(const std::string& path);

/// Conventional manifest location for an artifact.
std::string manifest_path_for(const std::string& artifact_path);

}  // namespace bnsp
