#include "bnsp/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bnsp {

// Keys sorted by the default json object so serialization is deterministic.
using json = nlohmann::json;

std::string checkpoint_to_json(const ModelParams& model, const ConfigMap& config) {
    json j;
    j["format_version"] = kCheckpointFormatVersion;
    j["config"] = config;

    json params = json::object();
    nn::ParamViews views = param_views(const_cast<ModelParams&>(model));
    for (const auto& view : views) {
        json entry;
        entry["rows"] = view.rows;
        entry["cols"] = view.cols;
        json data = json::array();
        // Views are column-major in memory; the file stores row-major.
        for (Eigen::Index r = 0; r < view.rows; ++r)
            for (Eigen::Index c = 0; c < view.cols; ++c)
                data.push_back(view.data[c * view.rows + r]);
        entry["data"] = std::move(data);
        params[view.path] = std::move(entry);
    }
    j["params"] = std::move(params);
    return j.dump();
}

LoadedCheckpoint checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }

    try {
        if (!j.contains("format_version") || !j["format_version"].is_number_integer())
            throw ParseError("checkpoint: missing format_version");
        const int version = j["format_version"].get<int>();
        if (version != kCheckpointFormatVersion)
            throw ValidationError("checkpoint: incompatible format_version " +
                                  std::to_string(version) + " (expected " +
                                  std::to_string(kCheckpointFormatVersion) + ")");

        LoadedCheckpoint out;
        if (j.contains("config"))
            out.config = j["config"].get<ConfigMap>();

        RngStream init_rng(0);
        out.model = make_model(init_rng);
        nn::ParamViews views = param_views(out.model);
        const json& params = j.at("params");
        if (params.size() != views.size())
            throw ValidationError("checkpoint: parameter set does not match architecture");
        for (auto& view : views) {
            if (!params.contains(view.path))
                throw ValidationError("checkpoint: missing parameter " + view.path);
            const json& entry = params.at(view.path);
            if (entry.at("rows").get<Eigen::Index>() != view.rows ||
                entry.at("cols").get<Eigen::Index>() != view.cols)
                throw ValidationError("checkpoint: shape mismatch at " + view.path);
            const json& data = entry.at("data");
            if (static_cast<Eigen::Index>(data.size()) != view.size())
                throw ValidationError("checkpoint: data length mismatch at " + view.path);
            Eigen::Index i = 0;
            for (Eigen::Index r = 0; r < view.rows; ++r)
                for (Eigen::Index c = 0; c < view.cols; ++c, ++i) {
                    const double v = data.at(i).get<double>();
                    if (!std::isfinite(v))
                        throw ValidationError("checkpoint: non-finite value at " + view.path);
                    view.data[c * view.rows + r] = v;
                }
        }
        return out;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

void atomic_write(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw UsageError("cannot write file: " + tmp.string());
        out << content;
        if (!out.good()) throw UsageError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw UsageError("rename failed for " + target.string() + ": " + ec.message());
    }
}

void save_checkpoint(const ModelParams& model, const ConfigMap& config,
                     const std::string& path) {
    atomic_write(path, checkpoint_to_json(model, config) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open checkpoint: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return checkpoint_from_json(buffer.str());
}

}  // namespace bnsp
