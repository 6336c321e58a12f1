#pragma once

#include <map>
#include <string>

#include "bnsp/networks.hpp"

namespace bnsp {

using ConfigMap = std::map<std::string, std::string>;

inline constexpr int kCheckpointFormatVersion = 1;

/// Serializes all model parameters (named row-major arrays keyed by
/// module/layer path) plus a config snapshot into JSON text.
std::string checkpoint_to_json(const ModelParams& model, const ConfigMap& config);

struct LoadedCheckpoint {
    ModelParams model;
    ConfigMap config;
};

/// Parses a checkpoint. Rejects other format versions and any checkpoint
/// whose parameter set does not exactly match the architecture; nothing is
/// observable on failure.
LoadedCheckpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const ModelParams& model, const ConfigMap& config, const std::string& path);
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Writes `content` to `path` via a temp file in the same directory plus an
/// atomic rename.
void atomic_write(const std::string& path, const std::string& content);

}  // namespace bnsp
