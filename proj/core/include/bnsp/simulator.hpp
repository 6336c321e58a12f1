#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bnsp/rollout.hpp"

namespace bnsp {

/// High-density simulation setup. Agents spawn batch by batch on the scene
/// boundary, walk to goals on the opposite boundary and despawn within
/// `collision_radius` (= 2r * 0.5) of them.
struct SimConfig {
    Bounds bounds{Vec2(0.0, 0.0), Vec2(400.0, 400.0)};
    int hnp = 10;                    // highest number of people
    int batch_size = 0;              // agents per spawn batch; 0 -> ceil(hnp / 10)
    double spawn_interval_s = 1.0;
    double duration_s = 30.0;
    double collision_radius = 7.5;   // r, pixels
    std::vector<std::pair<double, double>> intervals;  // seconds
    double preferred_speed = 20.0;   // px/s; sets spawn velocity and goal horizon
    double dt = 0.4;
    double neighbor_radius = 100.0;
    std::vector<Vec2> obstacles;
    RolloutOptions rollout;
};

struct IntervalStats {
    double t_start = 0.0;
    double t_end = 0.0;
    int agents_present = 0;      // N
    long colliding_pairs = 0;    // M
    double rate = 0.0;           // M / (N (N - 1) / 2), 0 when N < 2
};

struct CollisionReport {
    std::vector<IntervalStats> intervals;
    double average_rate = 0.0;
    long total_collisions = 0;
};

/// Runs the model as a crowd simulator. Frames are numbered from 0 and are
/// dt seconds apart. Updates are synchronous: all forces are computed from
/// the frame-t states before any agent moves.
std::vector<Track> simulate(const ModelParams& model, const SimConfig& config,
                            std::uint64_t seed, Diagnostics* diagnostics = nullptr);

/// Pairwise collision statistics: within each interval a pair counts at most
/// once if their distance drops below 2r at any shared frame.
/// `seconds_per_frame` converts frame ids to time (dt for simulate output).
CollisionReport collision_stats(const std::vector<Track>& tracks, double r,
                                const std::vector<std::pair<double, double>>& intervals_s,
                                double seconds_per_frame);

std::string collision_report_to_json(const CollisionReport& report);

// ---------------------------------------------------------------------------
// Synthetic scenes with known ground-truth coefficients
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    Bounds bounds{Vec2(0.0, 0.0), Vec2(400.0, 400.0)};
    int n_agents = 10;
    int n_frames = 25;
    double dt = 0.4;
    CoefficientOverride k_goal{2.0, 0.0};
    std::optional<CoefficientOverride> k_col;
    std::optional<CoefficientOverride> k_env;
    std::vector<Vec2> obstacles;
    double neighbor_radius = 100.0;
    double r_col = 50.0;
    double preferred_speed = 15.0;  // px/s initial speed, random heading
    /// Per-agent constant drift added to every step (an epistemic residual a
    /// history-conditioned model can identify); 0 disables it.
    double epistemic_drift = 0.0;
    bool crossing_pairs = false;    // left/right crossing pairs instead of random layout
};

/// Trajectories produced by the closed-form dynamics under the given
/// ground-truth coefficients; used as recovery oracles for training tests.
Scene generate_synthetic(const SyntheticSpec& spec, RngStream& rng);

}  // namespace bnsp
