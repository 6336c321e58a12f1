#include "bnsp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bnsp {

namespace {

using json = nlohmann::ordered_json;

struct SimAgent {
    long id = 0;
    AgentState state;
    Vec2 goal = Vec2::Zero();
    FactorStreams streams;
    std::vector<long> frames;
    std::vector<Vec2> positions;
};

Vec2 boundary_point(const Bounds& bounds, int edge, double u) {
    const Vec2 size = bounds.max - bounds.min;
    switch (edge & 3) {
        case 0: return Vec2(bounds.min.x() + u * size.x(), bounds.min.y());  // bottom
        case 1: return Vec2(bounds.min.x() + u * size.x(), bounds.max.y());  // top
        case 2: return Vec2(bounds.min.x(), bounds.min.y() + u * size.y());  // left
        default: return Vec2(bounds.max.x(), bounds.min.y() + u * size.y()); // right
    }
}

int opposite_edge(int edge) {
    switch (edge & 3) {
        case 0: return 1;
        case 1: return 0;
        case 2: return 3;
        default: return 2;
    }
}

int goal_horizon(const Vec2& position, const Vec2& goal, double preferred_speed, double dt) {
    const double dist = (goal - position).norm();
    return std::max(1, static_cast<int>(std::ceil(dist / (preferred_speed * dt))));
}

}  // namespace

std::vector<Track> simulate(const ModelParams& model, const SimConfig& config,
                            std::uint64_t seed, Diagnostics* diagnostics) {
    if (config.hnp < 1) throw ValidationError("simulate: hnp must be >= 1");
    if (!(config.collision_radius > 0))
        throw ValidationError("simulate: collision radius must be positive");
    if (!(config.dt > 0)) throw ValidationError("simulate: dt must be positive");
    if (!(config.preferred_speed > 0))
        throw ValidationError("simulate: preferred_speed must be positive");
    for (const auto& [lo, hi] : config.intervals)
        if (lo < 0 || hi < lo || hi > config.duration_s)
            throw ValidationError("simulate: intervals must lie within [0, duration]");

    const int total_frames = std::max(1, static_cast<int>(std::lround(config.duration_s / config.dt)));
    const int spawn_every =
        std::max(1, static_cast<int>(std::lround(config.spawn_interval_s / config.dt)));
    const int batch =
        config.batch_size > 0 ? config.batch_size : (config.hnp + 9) / 10;
    const double min_separation = 2.0 * config.collision_radius;

    std::vector<SimAgent> active;
    std::vector<Track> finished;
    long next_id = 0;
    RngStream spawn_rng(seed, 0x5fa11ed);

    auto finish = [&](SimAgent& agent) {
        Track t;
        t.id = agent.id;
        t.frames = std::move(agent.frames);
        t.positions = std::move(agent.positions);
        finished.push_back(std::move(t));
    };

    for (int frame = 0; frame < total_frames; ++frame) {
        // Spawn phase.
        if (frame % spawn_every == 0) {
            for (int b = 0; b < batch && static_cast<int>(active.size()) < config.hnp; ++b) {
                bool placed = false;
                for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
                    const int edge = static_cast<int>(spawn_rng.uniform() * 4.0) & 3;
                    const Vec2 start = boundary_point(config.bounds, edge, spawn_rng.uniform());
                    bool clear = true;
                    for (const auto& other : active)
                        if ((other.state.position - start).norm() < min_separation) {
                            clear = false;
                            break;
                        }
                    if (!clear) continue;

                    SimAgent agent;
                    agent.id = next_id++;
                    agent.goal =
                        boundary_point(config.bounds, opposite_edge(edge), spawn_rng.uniform());
                    agent.state.position = start;
                    const Vec2 to_goal = agent.goal - start;
                    agent.state.velocity = to_goal.norm() > 1e-12
                                               ? Vec2(config.preferred_speed * to_goal.normalized())
                                               : Vec2::Zero();
                    agent.streams.reset(model, agent.goal,
                                        config.rollout.flags.goal &&
                                            !config.rollout.overrides.goal);
                    agent.streams.recent_positions.push_back(start);
                    active.push_back(std::move(agent));
                    placed = true;
                }
                if (!placed && diagnostics)
                    diagnostics->note("spawn_skipped",
                                      "no collision-free spot after 100 attempts at frame " +
                                          std::to_string(frame));
            }
        }

        // Record, then despawn arrivals (agents spawned at their goals leave
        // immediately after their first recorded frame).
        for (auto& agent : active) {
            agent.frames.push_back(frame);
            agent.positions.push_back(agent.state.position);
        }
        for (std::size_t i = active.size(); i-- > 0;) {
            if ((active[i].state.position - active[i].goal).norm() <= config.collision_radius) {
                finish(active[i]);
                active.erase(active.begin() + static_cast<long>(i));
            }
        }

        // Synchronous update: all forces from the frame-t snapshot.
        std::vector<AgentState> snapshot(active.size());
        for (std::size_t i = 0; i < active.size(); ++i) snapshot[i] = active[i].state;

        std::vector<AgentState> next(active.size());
        for (std::size_t i = 0; i < active.size(); ++i) {
            SimAgent& agent = active[i];
            StepInputs inputs;
            inputs.self = snapshot[i];
            inputs.destination = agent.goal;
            inputs.steps_remaining =
                goal_horizon(snapshot[i].position, agent.goal, config.preferred_speed, config.dt);
            inputs.dt = config.dt;
            for (std::size_t jx = 0; jx < active.size(); ++jx) {
                if (jx == i) continue;
                if ((snapshot[jx].position - snapshot[i].position).norm() <
                    config.neighbor_radius)
                    inputs.neighbors.push_back({active[jx].id, snapshot[jx]});
            }
            inputs.obstacle_points = config.obstacles;

            RngStream rng(seed, 0xa9e4701,
                          static_cast<std::uint64_t>(agent.id),
                          static_cast<std::uint64_t>(frame));
            const AssembledForces forces = assemble_forces(
                inputs, model, agent.streams, config.rollout.stochastic, config.rollout.flags,
                config.rollout.overrides, config.rollout.r_col, rng, diagnostics);

            Vec2 epsilon = Vec2::Zero();
            if (config.rollout.stochastic && config.rollout.flags.epistemic) {
                const Vec2 aleatoric_next =
                    snapshot[i].position +
                    (snapshot[i].velocity + forces.total * config.dt) * config.dt;
                epsilon = cvae_sample(model.cvae, agent.streams.recent_positions, aleatoric_next,
                                      rng, config.rollout.sigma_latent);
            }
            next[i] = [&] {
                const StepOutput out = sde_step(snapshot[i], forces.total, epsilon, config.dt);
                return AgentState{out.position, out.velocity};
            }();
        }
        for (std::size_t i = 0; i < active.size(); ++i) {
            active[i].state = next[i];
            active[i].streams.recent_positions.push_back(next[i].position);
            const std::size_t keep =
                static_cast<std::size_t>(model.cvae.history_len) + 1;
            if (active[i].streams.recent_positions.size() > keep)
                active[i].streams.recent_positions.erase(
                    active[i].streams.recent_positions.begin());
        }
    }

    for (auto& agent : active) finish(agent);
    std::sort(finished.begin(), finished.end(),
              [](const Track& a, const Track& b) { return a.id < b.id; });
    return finished;
}

// -------------------------------------------------------------------------
// Collision statistics
// -------------------------------------------------------------------------

CollisionReport collision_stats(const std::vector<Track>& tracks, double r,
                                const std::vector<std::pair<double, double>>& intervals_s,
                                double seconds_per_frame) {
    if (!(r > 0)) throw ValidationError("collision_stats: r must be positive");
    if (!(seconds_per_frame > 0))
        throw ValidationError("collision_stats: seconds_per_frame must be positive");
    const double threshold = 2.0 * r;

    CollisionReport report;
    for (const auto& [t_start, t_end] : intervals_s) {
        IntervalStats stats;
        stats.t_start = t_start;
        stats.t_end = t_end;

        // Frame-indexed positions of tracks present in the interval.
        std::map<long, std::vector<std::pair<std::size_t, Vec2>>> by_frame;
        std::set<std::size_t> present;
        for (std::size_t i = 0; i < tracks.size(); ++i) {
            for (std::size_t k = 0; k < tracks[i].size(); ++k) {
                const double t = static_cast<double>(tracks[i].frames[k]) * seconds_per_frame;
                if (t < t_start || t > t_end) continue;
                by_frame[tracks[i].frames[k]].push_back({i, tracks[i].positions[k]});
                present.insert(i);
            }
        }
        stats.agents_present = static_cast<int>(present.size());

        // Spatial hash per frame; pairs count once per interval.
        std::set<std::pair<std::size_t, std::size_t>> colliding;
        for (const auto& [frame, entries] : by_frame) {
            std::map<std::pair<long, long>, std::vector<std::size_t>> cells;
            auto cell_of = [&](const Vec2& p) {
                return std::make_pair(static_cast<long>(std::floor(p.x() / threshold)),
                                      static_cast<long>(std::floor(p.y() / threshold)));
            };
            for (std::size_t e = 0; e < entries.size(); ++e)
                cells[cell_of(entries[e].second)].push_back(e);
            for (std::size_t e = 0; e < entries.size(); ++e) {
                const auto cell = cell_of(entries[e].second);
                for (long dx = -1; dx <= 1; ++dx)
                    for (long dy = -1; dy <= 1; ++dy) {
                        auto it = cells.find({cell.first + dx, cell.second + dy});
                        if (it == cells.end()) continue;
                        for (const std::size_t o : it->second) {
                            if (entries[o].first <= entries[e].first) continue;
                            if ((entries[o].second - entries[e].second).norm() < threshold)
                                colliding.insert({entries[e].first, entries[o].first});
                        }
                    }
            }
        }
        stats.colliding_pairs = static_cast<long>(colliding.size());
        const long n = stats.agents_present;
        stats.rate = n < 2 ? 0.0
                           : static_cast<double>(stats.colliding_pairs) /
                                 (static_cast<double>(n) * (n - 1) / 2.0);
        report.total_collisions += stats.colliding_pairs;
        report.intervals.push_back(stats);
    }
    if (!report.intervals.empty()) {
        double sum = 0.0;
        for (const auto& s : report.intervals) sum += s.rate;
        report.average_rate = sum / static_cast<double>(report.intervals.size());
    }
    return report;
}

std::string collision_report_to_json(const CollisionReport& report) {
    json j;
    json intervals = json::array();
    for (const auto& s : report.intervals)
        intervals.push_back(json{{"t_start", s.t_start},
                                 {"t_end", s.t_end},
                                 {"agents", s.agents_present},
                                 {"colliding_pairs", s.colliding_pairs},
                                 {"rate", s.rate}});
    j["intervals"] = std::move(intervals);
    j["average_rate"] = report.average_rate;
    j["total_collisions"] = report.total_collisions;
    return j.dump(2);
}

// -------------------------------------------------------------------------
// Synthetic generation
// -------------------------------------------------------------------------

Scene generate_synthetic(const SyntheticSpec& spec, RngStream& rng) {
    if (spec.n_agents < 1) throw ValidationError("generate_synthetic: need agents");
    if (spec.n_frames < 2) throw ValidationError("generate_synthetic: need >= 2 frames");

    struct Body {
        AgentState state;
        Vec2 goal;
        Vec2 drift;
    };
    std::vector<Body> bodies;
    const Vec2 size = spec.bounds.max - spec.bounds.min;

    for (int i = 0; i < spec.n_agents; ++i) {
        Body body;
        if (spec.crossing_pairs) {
            const double margin = 0.1 * size.x();
            const double y =
                spec.bounds.min.y() + rng.uniform(0.25, 0.75) * size.y();
            const double offset = rng.uniform(-0.03, 0.03) * size.y();
            if (i % 2 == 0) {
                body.state.position = Vec2(spec.bounds.min.x() + margin, y);
                body.goal = Vec2(spec.bounds.max.x() - margin, y + offset);
            } else {
                // Partner crosses the previous agent's path head-on.
                const Body& partner = bodies[static_cast<std::size_t>(i - 1)];
                body.state.position =
                    Vec2(spec.bounds.max.x() - margin, partner.goal.y() + offset);
                body.goal = Vec2(spec.bounds.min.x() + margin, partner.state.position.y());
            }
        } else {
            body.state.position =
                spec.bounds.min + Vec2(rng.uniform() * size.x(), rng.uniform() * size.y());
            do {
                body.goal =
                    spec.bounds.min + Vec2(rng.uniform() * size.x(), rng.uniform() * size.y());
            } while ((body.goal - body.state.position).norm() < 0.3 * size.norm());
        }
        const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
        body.state.velocity =
            spec.preferred_speed * Vec2(std::cos(heading), std::sin(heading));
        if (spec.epistemic_drift > 0.0) {
            const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
            body.drift = spec.epistemic_drift * Vec2(std::cos(angle), std::sin(angle));
        } else {
            body.drift = Vec2::Zero();
        }
        bodies.push_back(std::move(body));
    }

    AblationFlags flags;
    flags.goal = true;
    flags.collision = spec.k_col.has_value();
    flags.environment = spec.k_env.has_value() && !spec.obstacles.empty();
    flags.aleatoric = true;
    flags.epistemic = false;
    CoefficientOverrides overrides;
    overrides.goal = spec.k_goal;
    overrides.collision = spec.k_col;
    overrides.environment = spec.k_env;

    ModelParams dummy;  // never touched: every factor is overridden

    std::vector<TrajectoryRecord> records;
    for (int frame = 0; frame < spec.n_frames; ++frame) {
        for (std::size_t i = 0; i < bodies.size(); ++i)
            records.push_back({frame, static_cast<long>(i), bodies[i].state.position});
        if (frame + 1 == spec.n_frames) break;

        std::vector<AgentState> snapshot(bodies.size());
        for (std::size_t i = 0; i < bodies.size(); ++i) snapshot[i] = bodies[i].state;
        for (std::size_t i = 0; i < bodies.size(); ++i) {
            StepInputs inputs;
            inputs.self = snapshot[i];
            inputs.destination = bodies[i].goal;
            inputs.steps_remaining = spec.n_frames - 1 - frame;
            inputs.dt = spec.dt;
            if (flags.collision)
                for (std::size_t jx = 0; jx < bodies.size(); ++jx) {
                    if (jx == i) continue;
                    if ((snapshot[jx].position - snapshot[i].position).norm() <
                        spec.neighbor_radius)
                        inputs.neighbors.push_back({static_cast<long>(jx), snapshot[jx]});
                }
            if (flags.environment) inputs.obstacle_points = spec.obstacles;

            FactorStreams unused_streams;
            const AssembledForces forces =
                assemble_forces(inputs, dummy, unused_streams, true, flags, overrides,
                                spec.r_col, rng, nullptr);
            const StepOutput out =
                sde_step(snapshot[i], forces.total, bodies[i].drift, spec.dt);
            bodies[i].state = {out.position, out.velocity};
        }
    }

    Scene scene = build_scene(records, Mat3::Identity(), spec.dt);
    scene.obstacles = spec.obstacles;
    scene.bounds = spec.bounds;
    return scene;
}

}  // namespace bnsp
