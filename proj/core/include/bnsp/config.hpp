#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bnsp/checkpoint.hpp"

namespace bnsp {

/// Parses line-oriented `key = value` text. `#` starts a comment; blank
/// lines are ignored. Duplicate keys are an error.
ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config(const std::string& path);

/// Typed accessors over a ConfigMap that track which keys were consumed so
/// unknown keys can be rejected (no silent typos).
class ConfigReader {
public:
    explicit ConfigReader(ConfigMap map) : map_(std::move(map)) {}

    double get_double(const std::string& key, double fallback);
    long get_long(const std::string& key, long fallback);
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
    bool get_bool(const std::string& key, bool fallback);
    std::string get_string(const std::string& key, const std::string& fallback);
    std::optional<double> get_optional_double(const std::string& key);

    /// Throws UsageError if any key was never consumed.
    void reject_unknown() const;

    const ConfigMap& raw() const { return map_; }

private:
    std::string* find(const std::string& key);

    ConfigMap map_;
    std::map<std::string, bool> consumed_;
};

}  // namespace bnsp
