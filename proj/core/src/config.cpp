#include "bnsp/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace bnsp {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap map;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) +
                             ": expected `key = value`");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ParseError("config line " + std::to_string(line_no) + ": empty key");
        if (map.count(key))
            throw ParseError("config line " + std::to_string(line_no) + ": duplicate key `" +
                             key + "`");
        map[key] = value;
    }
    return map;
}

ConfigMap load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

std::string* ConfigReader::find(const std::string& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return nullptr;
    consumed_[key] = true;
    return &it->second;
}

double ConfigReader::get_double(const std::string& key, double fallback) {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const double out = std::stod(*v, &used);
        if (used != v->size() || !std::isfinite(out))
            throw UsageError("config key `" + key + "`: not a number: " + *v);
        return out;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception&) {
        throw UsageError("config key `" + key + "`: not a number: " + *v);
    }
}

long ConfigReader::get_long(const std::string& key, long fallback) {
    const double v = get_double(key, static_cast<double>(fallback));
    if (v != std::floor(v)) throw UsageError("config key `" + key + "`: expected an integer");
    return static_cast<long>(v);
}

std::uint64_t ConfigReader::get_u64(const std::string& key, std::uint64_t fallback) {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const unsigned long long out = std::stoull(*v, &used);
        if (used != v->size())
            throw UsageError("config key `" + key + "`: not an unsigned integer: " + *v);
        return out;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception&) {
        throw UsageError("config key `" + key + "`: not an unsigned integer: " + *v);
    }
}

bool ConfigReader::get_bool(const std::string& key, bool fallback) {
    const std::string* v = find(key);
    if (!v) return fallback;
    std::string lower = *v;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "true" || lower == "1" || lower == "yes" || lower == "on") return true;
    if (lower == "false" || lower == "0" || lower == "no" || lower == "off") return false;
    throw UsageError("config key `" + key + "`: expected a boolean, got " + *v);
}

std::string ConfigReader::get_string(const std::string& key, const std::string& fallback) {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

std::optional<double> ConfigReader::get_optional_double(const std::string& key) {
    if (!map_.count(key)) return std::nullopt;
    return get_double(key, 0.0);
}

void ConfigReader::reject_unknown() const {
    for (const auto& [key, value] : map_)
        if (!consumed_.count(key))
            throw UsageError("unknown config key `" + key + "`");
}

}  // namespace bnsp
