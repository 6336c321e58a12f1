#include "bnsp/manifest.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bnsp {

using json = nlohmann::json;

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open file for digest: " + path);
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char buffer[1 << 14];
    while (in) {
        in.read(buffer, sizeof(buffer));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buffer[i]);
            hash *= 0x100000001b3ULL;
        }
    }
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << hash;
    return out.str();
}

std::string RunManifest::to_json() const {
    json j;
    j["format_version"] = 1;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    j["seed"] = seed;
    j["input_digests"] = input_digests;
    j["digest_algorithm"] = "fnv1a64";
    j["artifacts"] = artifacts;
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    try {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.argv = j.at("argv").get<std::vector<std::string>>();
        if (j.contains("config")) m.config = j.at("config").get<ConfigMap>();
        m.seed = j.value("seed", 0ULL);
        if (j.contains("input_digests"))
            m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
        if (j.contains("artifacts"))
            m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
        m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
}

void save_manifest(const RunManifest& manifest, const std::string& path) {
    atomic_write(path, manifest.to_json() + "\n");
}

RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open manifest: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return RunManifest::from_json(buffer.str());
}

std::string manifest_path_for(const std::string& artifact_path) {
    return artifact_path + ".manifest.json";
}

}  // namespace bnsp
