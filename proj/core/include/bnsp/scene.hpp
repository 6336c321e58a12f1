#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bnsp/types.hpp"

namespace bnsp {

/// One agent's observed trajectory. `frames` are strictly increasing scene
/// frame ids; velocities come from forward differences (first frame copies
/// the second frame's velocity).
struct Track {
    long id = 0;
    std::vector<long> frames;
    std::vector<Vec2> positions;
    std::vector<Vec2> velocities;

    std::size_t size() const { return frames.size(); }
    std::optional<std::size_t> index_of_frame(long frame) const;
};

struct Bounds {
    Vec2 min = Vec2::Zero();
    Vec2 max = Vec2::Zero();
};

/// Immutable after load. Tracks shorter than `kMinAgentFrames` are folded
/// into `dynamic_obstacles` and take part in environment repulsion only.
struct Scene {
    static constexpr std::size_t kMinAgentFrames = 20;

    double dt = 0.4;
    Mat3 homography = Mat3::Identity();
    std::vector<Track> agents;
    std::vector<Track> dynamic_obstacles;
    std::vector<Vec2> obstacles;
    Bounds bounds;
    long frame_step = 1;  // inferred contiguity unit between consecutive frame ids

    const Track* find_agent(long id) const;
    /// State of `agent_id` at `frame`; throws LookupError when absent.
    AgentState state_at(long agent_id, long frame) const;
    /// Positions of dynamic obstacles observed at `frame`.
    std::vector<Vec2> dynamic_obstacles_at(long frame) const;
    /// Static obstacle points plus dynamic obstacles at `frame`.
    std::vector<Vec2> obstacle_points_at(long frame) const;
};

struct NeighborObs {
    long id = 0;
    AgentState state;
};

/// One 8-observed / 12-future sample with per-frame neighbor and obstacle
/// context, self-contained for rollouts.
struct Window {
    long id = 0;
    long agent_id = 0;
    double dt = 0.4;
    std::vector<long> frame_ids;          // observed + future frames
    std::vector<AgentState> observed;     // t_h + 1 states
    std::vector<Vec2> future;             // t_f positions
    Vec2 destination = Vec2::Zero();      // equals future.back()
    std::vector<std::vector<NeighborObs>> neighbors;       // one list per frame
    std::vector<std::vector<Vec2>> obstacle_points;        // static + dynamic, per frame

    std::size_t horizon() const { return future.size(); }
};

struct NeighborSet {
    long agent_id = 0;
    long frame_id = 0;
    std::vector<long> neighbor_ids;
};

struct NeighborRule {
    double radius = 100.0;                 // px
    std::optional<double> fov_deg;         // full cone angle around the velocity
};

/// Parses the tab-separated trajectory file plus a 3x3 homography file.
/// Throws ParseError (with line number) on malformed rows and
/// ValidationError on a singular homography.
Scene load_trajectories(const std::string& trajectory_path, const std::string& homography_path,
                        double dt);

/// Builds a Scene from already-parsed records (used by the loader and by
/// synthetic generation). Records are (frame, agent, x, y).
struct TrajectoryRecord {
    long frame = 0;
    long agent = 0;
    Vec2 position = Vec2::Zero();
};
Scene build_scene(const std::vector<TrajectoryRecord>& records, const Mat3& homography,
                  double dt);

Mat3 load_homography(const std::string& path);

/// Projective transform of a point: H * [x, y, 1], divided by the third
/// homogeneous component. Throws NumericError if that component vanishes.
Vec2 world_to_pixel(const Mat3& homography, const Vec2& point);
Vec2 pixel_to_world(const Mat3& homography, const Vec2& point);

/// All maximal contiguous 20-frame spans of each agent, stepped by `stride`.
/// Neighbor context is attached per frame using `rule`.
std::vector<Window> window_scene(const Scene& scene, int stride,
                                 const NeighborRule& rule = {});

/// Variable-length variant used by tests and synthetic pipelines:
/// `observed_len` states followed by `future_len` positions.
std::vector<Window> window_scene(const Scene& scene, int stride, const NeighborRule& rule,
                                 std::size_t observed_len, std::size_t future_len);

/// Agents within `rule.radius` of `agent_id` at `frame`, optionally restricted
/// to a field-of-view cone about the agent's velocity.
NeighborSet neighbors(const Scene& scene, long agent_id, long frame, const NeighborRule& rule);

// Scene JSON round-trip (schema documented in the README).
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

/// Writes tracks in the trajectory file format (one `frame<TAB>id<TAB>x<TAB>y`
/// row per observation).
void save_tracks(const std::vector<Track>& tracks, const std::string& path);

}  // namespace bnsp
