#include "bnsp/scene.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bnsp {

using json = nlohmann::ordered_json;

namespace {

constexpr double kDegenerateHomogeneous = 1e-12;

bool parse_double(const std::string& token, double& out) {
    try {
        std::size_t consumed = 0;
        out = std::stod(token, &consumed);
        return consumed == token.size() && std::isfinite(out);
    } catch (const std::exception&) {
        return false;
    }
}

bool parse_long(const std::string& token, long& out) {
    try {
        std::size_t consumed = 0;
        // Dataset exports sometimes write integer ids as "13.0".
        const double v = std::stod(token, &consumed);
        if (consumed != token.size() || !std::isfinite(v)) return false;
        if (v != std::floor(v)) return false;
        out = static_cast<long>(v);
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace

std::optional<std::size_t> Track::index_of_frame(long frame) const {
    auto it = std::lower_bound(frames.begin(), frames.end(), frame);
    if (it == frames.end() || *it != frame) return std::nullopt;
    return static_cast<std::size_t>(it - frames.begin());
}

const Track* Scene::find_agent(long id) const {
    for (const auto& t : agents)
        if (t.id == id) return &t;
    return nullptr;
}

AgentState Scene::state_at(long agent_id, long frame) const {
    const Track* track = find_agent(agent_id);
    if (!track) throw LookupError("unknown agent id " + std::to_string(agent_id));
    auto idx = track->index_of_frame(frame);
    if (!idx)
        throw LookupError("agent " + std::to_string(agent_id) + " absent at frame " +
                          std::to_string(frame));
    return {track->positions[*idx], track->velocities[*idx]};
}

std::vector<Vec2> Scene::dynamic_obstacles_at(long frame) const {
    std::vector<Vec2> out;
    for (const auto& t : dynamic_obstacles) {
        auto idx = t.index_of_frame(frame);
        if (idx) out.push_back(t.positions[*idx]);
    }
    return out;
}

std::vector<Vec2> Scene::obstacle_points_at(long frame) const {
    std::vector<Vec2> out = obstacles;
    for (const auto& t : dynamic_obstacles) {
        auto idx = t.index_of_frame(frame);
        if (idx) out.push_back(t.positions[*idx]);
    }
    return out;
}

// -------------------------------------------------------------------------
// Loading
// -------------------------------------------------------------------------

Mat3 load_homography(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open homography file: " + path);
    Mat3 h;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double v = 0;
            if (!(in >> v) || !std::isfinite(v))
                throw ParseError("homography file " + path + ": expected 9 finite numbers");
            h(r, c) = v;
        }
    if (std::abs(h.determinant()) <= kDegenerateHomogeneous)
        throw ValidationError("homography is singular (|det| <= 1e-12)");
    return h;
}

Scene build_scene(const std::vector<TrajectoryRecord>& records, const Mat3& homography,
                  double dt) {
    if (!(dt > 0)) throw ValidationError("dt must be positive");
    if (std::abs(homography.determinant()) <= kDegenerateHomogeneous)
        throw ValidationError("homography is singular (|det| <= 1e-12)");

    std::map<long, std::vector<std::pair<long, Vec2>>> by_agent;
    for (const auto& rec : records) by_agent[rec.agent].push_back({rec.frame, rec.position});

    Scene scene;
    scene.dt = dt;
    scene.homography = homography;

    // Contiguity unit: the most common consecutive frame difference. Datasets
    // sample every k-th video frame, so ids typically step by k, not 1.
    std::map<long, std::size_t> diff_counts;
    for (auto& [id, obs] : by_agent) {
        std::sort(obs.begin(), obs.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t i = 1; i < obs.size(); ++i) {
            if (obs[i].first == obs[i - 1].first)
                throw ValidationError("agent " + std::to_string(id) +
                                      " has duplicate frame id " +
                                      std::to_string(obs[i].first));
            ++diff_counts[obs[i].first - obs[i - 1].first];
        }
    }
    long step = 1;
    std::size_t best = 0;
    for (const auto& [diff, count] : diff_counts)
        if (count > best) {
            best = count;
            step = diff;
        }
    scene.frame_step = step;

    bool have_bounds = false;
    for (auto& [id, obs] : by_agent) {
        Track track;
        track.id = id;
        track.frames.reserve(obs.size());
        track.positions.reserve(obs.size());
        for (const auto& [frame, pos] : obs) {
            track.frames.push_back(frame);
            track.positions.push_back(pos);
            if (!have_bounds) {
                scene.bounds.min = scene.bounds.max = pos;
                have_bounds = true;
            } else {
                scene.bounds.min = scene.bounds.min.cwiseMin(pos);
                scene.bounds.max = scene.bounds.max.cwiseMax(pos);
            }
        }

        // Forward differences within contiguous runs; the first sample of a
        // run copies the next velocity (undefined at the boundary).
        track.velocities.assign(track.size(), Vec2::Zero());
        for (std::size_t i = 1; i < track.size(); ++i)
            if (track.frames[i] - track.frames[i - 1] == step)
                track.velocities[i] = (track.positions[i] - track.positions[i - 1]) / dt;
        for (std::size_t i = 0; i < track.size(); ++i) {
            const bool run_start = (i == 0) || (track.frames[i] - track.frames[i - 1] != step);
            if (run_start && i + 1 < track.size() &&
                track.frames[i + 1] - track.frames[i] == step)
                track.velocities[i] = track.velocities[i + 1];
        }

        if (track.size() < Scene::kMinAgentFrames)
            scene.dynamic_obstacles.push_back(std::move(track));
        else
            scene.agents.push_back(std::move(track));
    }
    return scene;
}

Scene load_trajectories(const std::string& trajectory_path, const std::string& homography_path,
                        double dt) {
    const Mat3 homography = load_homography(homography_path);

    std::ifstream in(trajectory_path);
    if (!in) throw UsageError("cannot open trajectory file: " + trajectory_path);

    std::vector<TrajectoryRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string f0, f1, f2, f3, extra;
        if (!(fields >> f0 >> f1 >> f2 >> f3) || (fields >> extra))
            throw ParseError(trajectory_path + ":" + std::to_string(line_no) +
                             ": expected `frame agent x y`");
        TrajectoryRecord rec;
        double x = 0, y = 0;
        if (!parse_long(f0, rec.frame) || !parse_long(f1, rec.agent) ||
            !parse_double(f2, x) || !parse_double(f3, y))
            throw ParseError(trajectory_path + ":" + std::to_string(line_no) +
                             ": malformed number");
        rec.position = Vec2(x, y);
        records.push_back(rec);
    }
    return build_scene(records, homography, dt);
}

// -------------------------------------------------------------------------
// Homography transforms
// -------------------------------------------------------------------------

Vec2 world_to_pixel(const Mat3& homography, const Vec2& point) {
    const Eigen::Vector3d h = homography * Eigen::Vector3d(point.x(), point.y(), 1.0);
    if (std::abs(h.z()) < kDegenerateHomogeneous)
        throw NumericError("projective degeneracy: homogeneous component vanishes");
    return Vec2(h.x() / h.z(), h.y() / h.z());
}

Vec2 pixel_to_world(const Mat3& homography, const Vec2& point) {
    if (std::abs(homography.determinant()) <= kDegenerateHomogeneous)
        throw ValidationError("homography is singular (|det| <= 1e-12)");
    const Mat3 inv = homography.inverse();
    return world_to_pixel(inv, point);
}

// -------------------------------------------------------------------------
// Windowing and neighborhood
// -------------------------------------------------------------------------

NeighborSet neighbors(const Scene& scene, long agent_id, long frame, const NeighborRule& rule) {
    const AgentState self = scene.state_at(agent_id, frame);

    double cos_half_fov = -2.0;  // sentinel: no cone restriction
    Vec2 heading = Vec2::Zero();
    const double speed = self.velocity.norm();
    if (rule.fov_deg && speed >= 1e-6) {
        cos_half_fov = std::cos(*rule.fov_deg * 0.5 * std::numbers::pi / 180.0);
        heading = self.velocity / speed;
    }

    NeighborSet out;
    out.agent_id = agent_id;
    out.frame_id = frame;
    for (const auto& track : scene.agents) {
        if (track.id == agent_id) continue;
        auto idx = track.index_of_frame(frame);
        if (!idx) continue;
        const Vec2 offset = track.positions[*idx] - self.position;
        const double dist = offset.norm();
        if (dist >= rule.radius) continue;
        if (cos_half_fov > -1.5 && dist > 0.0) {
            if (heading.dot(offset / dist) < cos_half_fov) continue;
        }
        out.neighbor_ids.push_back(track.id);
    }
    return out;
}

std::vector<Window> window_scene(const Scene& scene, int stride, const NeighborRule& rule,
                                 std::size_t observed_len, std::size_t future_len) {
    if (stride < 1) throw ContractError("window_scene: stride must be >= 1");
    const std::size_t len = observed_len + future_len;

    std::vector<Window> windows;
    for (const auto& track : scene.agents) {
        // Maximal contiguous runs of frame ids stepping by scene.frame_step.
        std::size_t run_begin = 0;
        for (std::size_t i = 1; i <= track.size(); ++i) {
            const bool broken = (i == track.size()) ||
                                (track.frames[i] - track.frames[i - 1] != scene.frame_step);
            if (!broken) continue;
            const std::size_t run_len = i - run_begin;
            if (run_len >= len) {
                for (std::size_t start = run_begin; start + len <= i;
                     start += static_cast<std::size_t>(stride)) {
                    Window w;
                    w.id = static_cast<long>(windows.size());
                    w.agent_id = track.id;
                    w.dt = scene.dt;
                    for (std::size_t k = 0; k < len; ++k)
                        w.frame_ids.push_back(track.frames[start + k]);
                    for (std::size_t k = 0; k < observed_len; ++k)
                        w.observed.push_back(
                            {track.positions[start + k], track.velocities[start + k]});
                    for (std::size_t k = observed_len; k < len; ++k)
                        w.future.push_back(track.positions[start + k]);
                    w.destination = w.future.back();

                    w.neighbors.resize(len);
                    w.obstacle_points.resize(len);
                    for (std::size_t k = 0; k < len; ++k) {
                        const long frame = w.frame_ids[k];
                        NeighborSet set = neighbors(scene, track.id, frame, rule);
                        for (long nid : set.neighbor_ids)
                            w.neighbors[k].push_back({nid, scene.state_at(nid, frame)});
                        w.obstacle_points[k] = scene.obstacle_points_at(frame);
                    }
                    windows.push_back(std::move(w));
                }
            }
            run_begin = i;
        }
    }
    return windows;
}

std::vector<Window> window_scene(const Scene& scene, int stride, const NeighborRule& rule) {
    return window_scene(scene, stride, rule, 8, 12);
}

// -------------------------------------------------------------------------
// Serialization
// -------------------------------------------------------------------------

namespace {

json track_to_json(const Track& t) {
    json positions = json::array();
    for (const auto& p : t.positions) positions.push_back({p.x(), p.y()});
    return json{{"id", t.id}, {"frames", t.frames}, {"positions", positions}};
}

Track track_from_json(const json& j) {
    Track t;
    t.id = j.at("id").get<long>();
    t.frames = j.at("frames").get<std::vector<long>>();
    for (const auto& p : j.at("positions")) t.positions.push_back(Vec2(p.at(0), p.at(1)));
    if (t.frames.size() != t.positions.size())
        throw ParseError("scene json: track " + std::to_string(t.id) +
                         " frames/positions length mismatch");
    return t;
}

void recompute_velocities(Track& t, double dt, long step) {
    t.velocities.assign(t.size(), Vec2::Zero());
    for (std::size_t i = 1; i < t.size(); ++i)
        if (t.frames[i] - t.frames[i - 1] == step)
            t.velocities[i] = (t.positions[i] - t.positions[i - 1]) / dt;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const bool run_start = (i == 0) || (t.frames[i] - t.frames[i - 1] != step);
        if (run_start && i + 1 < t.size() && t.frames[i + 1] - t.frames[i] == step)
            t.velocities[i] = t.velocities[i + 1];
    }
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
    json j;
    j["dt"] = scene.dt;
    json agents = json::array();
    for (const auto& t : scene.agents) agents.push_back(track_to_json(t));
    j["agents"] = agents;
    json obstacles = json::array();
    for (const auto& p : scene.obstacles) obstacles.push_back({p.x(), p.y()});
    j["obstacles"] = obstacles;
    json dyn = json::array();
    for (const auto& t : scene.dynamic_obstacles) dyn.push_back(track_to_json(t));
    j["dynamic_obstacles"] = dyn;
    json h = json::array();
    for (int r = 0; r < 3; ++r)
        h.push_back({scene.homography(r, 0), scene.homography(r, 1), scene.homography(r, 2)});
    j["homography"] = h;
    j["bounds"] = {{"min", {scene.bounds.min.x(), scene.bounds.min.y()}},
                   {"max", {scene.bounds.max.x(), scene.bounds.max.y()}}};
    return j.dump(2);
}

Scene scene_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("scene json: ") + e.what());
    }
    try {
        Scene scene;
        scene.dt = j.at("dt").get<double>();
        if (!(scene.dt > 0)) throw ValidationError("scene json: dt must be positive");
        const auto& h = j.at("homography");
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) scene.homography(r, c) = h.at(r).at(c).get<double>();
        if (std::abs(scene.homography.determinant()) <= kDegenerateHomogeneous)
            throw ValidationError("scene json: homography is singular");
        for (const auto& t : j.at("agents")) scene.agents.push_back(track_from_json(t));
        for (const auto& t : j.at("dynamic_obstacles"))
            scene.dynamic_obstacles.push_back(track_from_json(t));
        for (const auto& p : j.at("obstacles"))
            scene.obstacles.push_back(Vec2(p.at(0), p.at(1)));
        scene.bounds.min =
            Vec2(j.at("bounds").at("min").at(0), j.at("bounds").at("min").at(1));
        scene.bounds.max =
            Vec2(j.at("bounds").at("max").at(0), j.at("bounds").at("max").at(1));

        std::map<long, std::size_t> diff_counts;
        for (const auto& t : scene.agents)
            for (std::size_t i = 1; i < t.size(); ++i) ++diff_counts[t.frames[i] - t.frames[i - 1]];
        scene.frame_step = 1;
        std::size_t best = 0;
        for (const auto& [diff, count] : diff_counts)
            if (count > best) {
                best = count;
                scene.frame_step = diff;
            }
        for (auto& t : scene.agents) recompute_velocities(t, scene.dt, scene.frame_step);
        for (auto& t : scene.dynamic_obstacles)
            recompute_velocities(t, scene.dt, scene.frame_step);
        return scene;
    } catch (const json::exception& e) {
        throw ParseError(std::string("scene json: ") + e.what());
    }
}

void save_scene(const Scene& scene, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write scene file: " + path);
    out << scene_to_json(scene) << "\n";
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open scene file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return scene_from_json(buffer.str());
}

void save_tracks(const std::vector<Track>& tracks, const std::string& path) {
    std::vector<std::tuple<long, long, Vec2>> rows;
    for (const auto& t : tracks)
        for (std::size_t i = 0; i < t.size(); ++i)
            rows.emplace_back(t.frames[i], t.id, t.positions[i]);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
        return std::get<1>(a) < std::get<1>(b);
    });
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write trajectory file: " + path);
    out.precision(17);
    for (const auto& [frame, id, pos] : rows)
        out << frame << "\t" << id << "\t" << pos.x() << "\t" << pos.y() << "\n";
}

}  // namespace bnsp
