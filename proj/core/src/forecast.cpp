#include "bnsp/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bnsp {

using json = nlohmann::ordered_json;

namespace {

std::vector<ExplainedStep> explained_from_rollout(const Rollout& rollout) {
    std::vector<ExplainedStep> out;
    out.reserve(rollout.steps.size());
    for (const auto& step : rollout.steps) {
        ExplainedStep e;
        if (step.goal)
            e.factors.push_back({FactorKind::kGoal, step.goal->base, step.goal->coeff.mu,
                                 step.goal->coeff.sigma, step.goal->coeff.k});
        for (const auto& nb : step.collision.neighbors)
            e.factors.push_back({FactorKind::kCollision, nb.base, nb.coeff.mu, nb.coeff.sigma,
                                 nb.coeff.k});
        for (const auto& env : step.environment)
            e.factors.push_back({FactorKind::kEnvironment, env.base, env.coeff.mu,
                                 env.coeff.sigma, env.coeff.k});
        e.total_force = step.total_force;
        e.epsilon = step.epsilon;
        out.push_back(std::move(e));
    }
    return out;
}

Window window_with_goal(const Window& window, const Vec2& goal) {
    Window adjusted = window;
    adjusted.destination = goal;
    return adjusted;
}

}  // namespace

PredictionSet predict_standard(const ModelParams& model, const Window& window,
                               const Vec2& goal, int k, const RolloutOptions& options,
                               std::uint64_t seed) {
    if (k < 1) throw ContractError("predict_standard: sample count must be >= 1");
    const Window adjusted = window_with_goal(window, goal);

    PredictionSet prediction;
    prediction.window_id = window.id;
    prediction.samples.reserve(static_cast<std::size_t>(k));
    for (int s = 0; s < k; ++s) {
        RngStream rng(seed, static_cast<std::uint64_t>(window.id),
                      static_cast<std::uint64_t>(s));
        const Rollout rollout = rollout_window(adjusted, model, options, rng);
        if (s == 0) prediction.explained = explained_from_rollout(rollout);
        prediction.samples.push_back(rollout.positions);
    }
    return prediction;
}

PredictionSet predict_ultra(const ModelParams& model, const Window& window,
                            const std::vector<Vec2>& ground_truth_future,
                            const std::vector<Vec2>& goals, int n_positions,
                            const RolloutOptions& options, std::uint64_t seed) {
    if (goals.empty()) throw ContractError("predict_ultra: need at least one goal");
    if (n_positions < 1) throw ContractError("predict_ultra: n_positions must be >= 1");
    if (ground_truth_future.size() != window.future.size())
        throw ContractError("predict_ultra: ground truth future required");

    const int t_f = static_cast<int>(window.future.size());
    PredictionSet prediction;
    prediction.window_id = window.id;

    for (std::size_t g = 0; g < goals.size(); ++g) {
        Window adjusted = window_with_goal(window, goals[g]);
        // The chosen candidate's trajectory is re-grown step by step: a
        // one-step window rollout would lose the recurrent state, so the
        // candidate machinery mirrors rollout_window's stream handling.
        FactorStreams streams;
        const bool goal_net_used = options.flags.goal && !options.overrides.goal;
        streams.reset(model, adjusted.destination, goal_net_used);
        for (std::size_t s = 0; s + 1 < adjusted.observed.size(); ++s) {
            if (goal_net_used)
                streams.goal_lstm = factor_advance(model.goal_net, adjusted.observed[s],
                                                   streams.goal_lstm, nullptr);
            if (options.flags.collision && !options.overrides.collision)
                streams.collision_lstm = factor_advance(
                    model.collision_net, adjusted.observed[s], streams.collision_lstm, nullptr);
        }
        for (const auto& obs : adjusted.observed) streams.recent_positions.push_back(obs.position);

        AgentState current = adjusted.observed.back();
        std::vector<Vec2> trajectory;
        trajectory.reserve(static_cast<std::size_t>(t_f));

        // Candidates draw sequentially from one per-goal stream, so with
        // n_positions = 1 a goal's trajectory is exactly one standard-sampling
        // rollout under stream (seed, window, g).
        RngStream rng(seed, static_cast<std::uint64_t>(window.id),
                      static_cast<std::uint64_t>(g));

        for (int t = 0; t < t_f; ++t) {
            const std::size_t frame_idx =
                adjusted.observed.size() + static_cast<std::size_t>(t);
            StepInputs inputs;
            inputs.self = current;
            inputs.destination = adjusted.destination;
            inputs.steps_remaining = t_f - t;
            inputs.dt = adjusted.dt;
            if (frame_idx < adjusted.neighbors.size())
                inputs.neighbors = adjusted.neighbors[frame_idx];
            if (frame_idx < adjusted.obstacle_points.size())
                inputs.obstacle_points = adjusted.obstacle_points[frame_idx];

            double best_dist = std::numeric_limits<double>::infinity();
            AgentState best_state;
            FactorStreams best_streams;
            for (int c = 0; c < n_positions; ++c) {
                FactorStreams candidate_streams = streams;
                const AssembledForces forces =
                    assemble_forces(inputs, model, candidate_streams, options.stochastic,
                                    options.flags, options.overrides, options.r_col, rng);
                Vec2 epsilon = Vec2::Zero();
                if (options.stochastic && options.flags.epistemic) {
                    const Vec2 aleatoric_next =
                        current.position + (current.velocity + forces.total * inputs.dt) * inputs.dt;
                    epsilon = cvae_sample(model.cvae, candidate_streams.recent_positions,
                                          aleatoric_next, rng, options.sigma_latent);
                }
                const StepOutput out = sde_step(current, forces.total, epsilon, inputs.dt);
                const double dist =
                    (out.position - ground_truth_future[static_cast<std::size_t>(t)]).norm();
                if (dist < best_dist) {
                    best_dist = dist;
                    best_state = {out.position, out.velocity};
                    best_streams = std::move(candidate_streams);
                }
            }
            current = best_state;
            streams = std::move(best_streams);
            streams.recent_positions.push_back(current.position);
            trajectory.push_back(current.position);
        }
        prediction.samples.push_back(std::move(trajectory));
    }
    return prediction;
}

double ade(const std::vector<Vec2>& predicted, const std::vector<Vec2>& truth) {
    if (predicted.size() != truth.size() || predicted.empty())
        throw ShapeError("ade: trajectory length mismatch");
    double sum = 0.0;
    for (std::size_t t = 0; t < predicted.size(); ++t) sum += (predicted[t] - truth[t]).norm();
    return sum / static_cast<double>(predicted.size());
}

double fde(const std::vector<Vec2>& predicted, const std::vector<Vec2>& truth) {
    if (predicted.size() != truth.size() || predicted.empty())
        throw ShapeError("fde: trajectory length mismatch");
    return (predicted.back() - truth.back()).norm();
}

BestOf best_of(const std::vector<std::vector<Vec2>>& samples, const std::vector<Vec2>& truth) {
    if (samples.empty()) throw ContractError("best_of: empty sample set");
    BestOf best{std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity()};
    for (const auto& sample : samples) {
        best.ade = std::min(best.ade, ade(sample, truth));
        best.fde = std::min(best.fde, fde(sample, truth));
    }
    return best;
}

// -------------------------------------------------------------------------
// Explainability
// -------------------------------------------------------------------------

std::vector<StepExplanation> explain(const ModelParams& model, const Window& window,
                                     const Vec2& goal, int grid_size,
                                     std::optional<Vec2> extent,
                                     const RolloutOptions& options) {
    if (grid_size < 1) throw ContractError("explain: grid size must be >= 1");
    RolloutOptions mean_options = options;
    mean_options.stochastic = false;  // explain the mean rollout
    mean_options.record_tape = false;

    const Window adjusted = window_with_goal(window, goal);
    RngStream rng(0, static_cast<std::uint64_t>(window.id));
    const Rollout rollout = rollout_window(adjusted, model, mean_options, rng);

    std::vector<StepExplanation> out;
    out.reserve(rollout.steps.size());
    for (std::size_t t = 0; t < rollout.steps.size(); ++t) {
        const StepTape& step = rollout.steps[t];
        StepExplanation se;
        se.step = static_cast<int>(t);

        struct Accumulated {
            Vec2 mean = Vec2::Zero();
            Vec2 var = Vec2::Zero();
            bool present = false;
        };
        std::map<FactorKind, Accumulated> by_kind;
        auto add = [&](FactorKind kind, const Vec2& base, double mu, double sigma) {
            Accumulated& acc = by_kind[kind];
            acc.present = true;
            acc.mean += base * mu;
            acc.var += (base.cwiseProduct(base)) * (sigma * sigma);
        };
        if (step.goal) add(FactorKind::kGoal, step.goal->base, step.goal->coeff.mu,
                           step.goal->coeff.sigma);
        for (const auto& nb : step.collision.neighbors)
            add(FactorKind::kCollision, nb.base, nb.coeff.mu, nb.coeff.sigma);
        for (const auto& env : step.environment)
            add(FactorKind::kEnvironment, env.base, env.coeff.mu, env.coeff.sigma);

        for (const auto& [kind, acc] : by_kind) {
            FactorExplanation fe;
            fe.kind = kind;
            fe.mean_force = acc.mean;
            fe.std_force = acc.var.cwiseSqrt();
            fe.grid_size = grid_size;
            fe.extent = extent.value_or(5.0 * fe.std_force);

            fe.grid.assign(static_cast<std::size_t>(grid_size) *
                               static_cast<std::size_t>(grid_size),
                           0.0);
            const bool degenerate_x = fe.std_force.x() < 1e-12 || fe.extent.x() <= 0.0;
            const bool degenerate_y = fe.std_force.y() < 1e-12 || fe.extent.y() <= 0.0;
            if (degenerate_x || degenerate_y) {
                // One-hot at the cell containing the mean (the grid center).
                const int mid = grid_size / 2;
                fe.grid[static_cast<std::size_t>(mid) * grid_size + mid] = 1.0;
            } else {
                const double cell_x = 2.0 * fe.extent.x() / grid_size;
                const double cell_y = 2.0 * fe.extent.y() / grid_size;
                for (int gy = 0; gy < grid_size; ++gy) {
                    const double y =
                        fe.mean_force.y() - fe.extent.y() + (gy + 0.5) * cell_y;
                    const double zy = (y - fe.mean_force.y()) / fe.std_force.y();
                    for (int gx = 0; gx < grid_size; ++gx) {
                        const double x =
                            fe.mean_force.x() - fe.extent.x() + (gx + 0.5) * cell_x;
                        const double zx = (x - fe.mean_force.x()) / fe.std_force.x();
                        fe.grid[static_cast<std::size_t>(gy) * grid_size + gx] =
                            std::exp(-0.5 * (zx * zx + zy * zy)) /
                            (2.0 * std::numbers::pi * fe.std_force.x() * fe.std_force.y());
                    }
                }
            }
            se.factors.push_back(std::move(fe));
        }
        out.push_back(std::move(se));
    }
    return out;
}

// -------------------------------------------------------------------------
// Goal modes
// -------------------------------------------------------------------------

GoalMode goal_mode_from_string(const std::string& name) {
    if (name == "ground_truth") return GoalMode::kGroundTruth;
    if (name == "file") return GoalMode::kFile;
    if (name == "endpoint_gaussian") return GoalMode::kEndpointGaussian;
    throw UsageError("unknown goal mode: " + name);
}

std::string to_string(GoalMode mode) {
    switch (mode) {
        case GoalMode::kGroundTruth: return "ground_truth";
        case GoalMode::kFile: return "file";
        case GoalMode::kEndpointGaussian: return "endpoint_gaussian";
    }
    return "unknown";
}

EndpointModel fit_endpoint_model(const std::vector<Window>& windows) {
    if (windows.empty()) throw ContractError("fit_endpoint_model: no windows");
    Vec2 sum = Vec2::Zero();
    for (const auto& w : windows) sum += w.destination - w.observed.back().position;
    EndpointModel model;
    model.mean = sum / static_cast<double>(windows.size());
    Vec2 var = Vec2::Zero();
    for (const auto& w : windows) {
        const Vec2 d = (w.destination - w.observed.back().position) - model.mean;
        var += d.cwiseProduct(d);
    }
    model.std = (var / static_cast<double>(windows.size())).cwiseSqrt();
    return model;
}

GoalsFile load_goals_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open goals file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("goals file: ") + e.what());
    }
    GoalsFile goals;
    for (const auto& [key, value] : j.items())
        goals[std::stol(key)] = Vec2(value.at(0).get<double>(), value.at(1).get<double>());
    return goals;
}

void save_goals_file(const GoalsFile& goals, const std::string& path) {
    json j = json::object();
    for (const auto& [id, goal] : goals)
        j[std::to_string(id)] = {goal.x(), goal.y()};
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write goals file: " + path);
    out << j.dump(2) << "\n";
}

Vec2 goal_for_window(GoalMode mode, const Window& window, const GoalsFile* goals,
                     const EndpointModel* endpoint, RngStream& rng) {
    switch (mode) {
        case GoalMode::kGroundTruth:
            return window.destination;
        case GoalMode::kFile: {
            if (!goals) throw ContractError("goal mode `file` needs a goals file");
            auto it = goals->find(window.id);
            if (it == goals->end())
                throw LookupError("goals file has no entry for window " +
                                  std::to_string(window.id));
            return it->second;
        }
        case GoalMode::kEndpointGaussian: {
            if (!endpoint)
                throw ContractError("goal mode `endpoint_gaussian` needs a fitted model");
            const Vec2 displacement(rng.normal(endpoint->mean.x(), endpoint->std.x()),
                                    rng.normal(endpoint->mean.y(), endpoint->std.y()));
            return window.observed.back().position + displacement;
        }
    }
    throw ContractError("goal_for_window: unhandled mode");
}

// -------------------------------------------------------------------------
// Serialization
// -------------------------------------------------------------------------

std::string prediction_to_jsonl(const PredictionSet& prediction) {
    json j;
    j["window_id"] = prediction.window_id;
    j["goal_mode"] = prediction.goal_mode;
    json samples = json::array();
    for (const auto& sample : prediction.samples) {
        json trajectory = json::array();
        for (const auto& p : sample) trajectory.push_back({p.x(), p.y()});
        samples.push_back(std::move(trajectory));
    }
    j["samples"] = std::move(samples);
    return j.dump();
}

PredictionSet prediction_from_jsonl(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("predictions file: ") + e.what());
    }
    PredictionSet prediction;
    prediction.window_id = j.at("window_id").get<long>();
    prediction.goal_mode = j.value("goal_mode", "");
    for (const auto& sample : j.at("samples")) {
        std::vector<Vec2> trajectory;
        for (const auto& p : sample)
            trajectory.push_back(Vec2(p.at(0).get<double>(), p.at(1).get<double>()));
        prediction.samples.push_back(std::move(trajectory));
    }
    return prediction;
}

void save_predictions(const std::vector<PredictionSet>& predictions, const std::string& path) {
    std::ostringstream out;
    for (const auto& p : predictions) out << prediction_to_jsonl(p) << "\n";
    std::ofstream file(path);
    if (!file) throw UsageError("cannot write predictions file: " + path);
    file << out.str();
}

std::vector<PredictionSet> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open predictions file: " + path);
    std::vector<PredictionSet> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(prediction_from_jsonl(line));
    }
    return out;
}

std::string explanation_to_json(const std::vector<StepExplanation>& steps) {
    json j = json::array();
    for (const auto& step : steps) {
        json factors = json::array();
        for (const auto& f : step.factors) {
            json entry;
            entry["kind"] = to_string(f.kind);
            entry["mean"] = {f.mean_force.x(), f.mean_force.y()};
            entry["std"] = {f.std_force.x(), f.std_force.y()};
            entry["extent"] = {f.extent.x(), f.extent.y()};
            entry["grid_size"] = f.grid_size;
            entry["grid"] = f.grid;
            factors.push_back(std::move(entry));
        }
        j.push_back(json{{"step", step.step}, {"factors", std::move(factors)}});
    }
    return j.dump();
}

}  // namespace bnsp
