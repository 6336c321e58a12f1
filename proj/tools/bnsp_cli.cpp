// bnsp command-line interface: ingest, train, predict, evaluate, simulate,
// explain, replay. Every command writes its outputs atomically and drops a
// run manifest (<out>.manifest.json) that the replay command re-executes.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bnsp/checkpoint.hpp"
#include "bnsp/config.hpp"
#include "bnsp/forecast.hpp"
#include "bnsp/manifest.hpp"
#include "bnsp/scene.hpp"
#include "bnsp/simulator.hpp"
#include "bnsp/training.hpp"

namespace {

using namespace bnsp;
using json = nlohmann::ordered_json;

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumeric = 4;

void emit_error(const std::string& kind, const std::string& message) {
    json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    std::cerr << j.dump() << "\n";
}

void require_file(const std::string& path, const std::string& flag) {
    if (!std::filesystem::exists(path))
        throw UsageError(flag + ": file does not exist: " + path);
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::optional<CoefficientOverride> parse_override(const std::string& text) {
    if (text.empty()) return std::nullopt;
    const auto parts = split(text, ',');
    if (parts.empty() || parts.size() > 2)
        throw UsageError("coefficient override must be `mean` or `mean,std`: " + text);
    CoefficientOverride o;
    o.mean = std::stod(parts[0]);
    o.std = parts.size() == 2 ? std::stod(parts[1]) : 0.0;
    if (o.std < 0) throw UsageError("override std must be >= 0");
    return o;
}

std::vector<std::pair<double, double>> parse_intervals(const std::string& text) {
    std::vector<std::pair<double, double>> out;
    for (const auto& part : split(text, ',')) {
        const auto bounds = split(part, ':');
        if (bounds.size() != 2)
            throw UsageError("interval must be `start:end` seconds, got " + part);
        out.push_back({std::stod(bounds[0]), std::stod(bounds[1])});
    }
    return out;
}

struct ManifestClock {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

void write_manifest(const std::string& command, const std::vector<std::string>& argv,
                    const ConfigMap& config, std::uint64_t seed,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& artifacts, const ManifestClock& clock) {
    RunManifest manifest;
    manifest.command = command;
    manifest.argv = argv;
    manifest.config = config;
    manifest.seed = seed;
    for (const auto& path : inputs) manifest.input_digests[path] = file_digest(path);
    manifest.artifacts = artifacts;
    manifest.wall_clock_seconds = clock.elapsed();
    save_manifest(manifest, manifest_path_for(artifacts.front()));
}

/// Windows from one or more scene files, ids renumbered globally.
std::vector<Window> windows_from_scenes(const std::vector<std::string>& scene_paths, int stride,
                                        const NeighborRule& rule) {
    std::vector<Window> all;
    for (const auto& path : scene_paths) {
        require_file(path, "--scenes");
        const Scene scene = load_scene(path);
        auto windows = window_scene(scene, stride, rule);
        for (auto& w : windows) {
            w.id = static_cast<long>(all.size());
            all.push_back(std::move(w));
        }
    }
    return all;
}

// -------------------------------------------------------------------------
// Command options
// -------------------------------------------------------------------------

struct IngestArgs {
    std::string input, homography, out;
    double dt = 0.4;
};

struct TrainArgs {
    std::string scenes, config_path, out, resume;
    std::string phase = "all";
    std::uint64_t seed = 0;
    int stride = 1;
};

struct PredictArgs {
    std::string model, scene, out, goals_file;
    std::string mode = "standard";
    std::string goal_mode = "ground_truth";
    int samples = 20;
    int ultra_goals = 20;
    int ultra_positions = 15;
    std::uint64_t seed = 0;
    int stride = 1;
    std::string override_goal, override_collision, override_env;
};

struct EvaluateArgs {
    std::string pred, scene, out;
    std::string metrics = "ade,fde";
    double radius = 7.5;
    bool world = false;
    int stride = 1;
};

struct SimulateArgs {
    std::string model, scene, out, report;
    int hnp = 10;
    double duration = 30.0;
    std::string intervals = "0:8,4:12,8:16";
    double radius = 7.5;
    std::uint64_t seed = 0;
    double speed = 20.0;
    double spawn_interval = 1.0;
    int spawn_batch = 0;
    std::string override_goal, override_collision, override_env;
};

struct ExplainArgs {
    std::string model, scene, out;
    long window = 0;
    int grid = 64;
    std::string extent;
    std::string goal_mode = "ground_truth";
    int stride = 1;
};

// -------------------------------------------------------------------------
// Command implementations
// -------------------------------------------------------------------------

int run_ingest(const IngestArgs& args, const std::vector<std::string>& argv) {
    ManifestClock clock;
    require_file(args.input, "--input");
    require_file(args.homography, "--homography");
    const Scene scene = load_trajectories(args.input, args.homography, args.dt);
    atomic_write(args.out, scene_to_json(scene) + "\n");
    write_manifest("ingest", argv, {}, 0, {args.input, args.homography}, {args.out}, clock);
    std::cout << "scene: " << scene.agents.size() << " agents, "
              << scene.dynamic_obstacles.size() << " dynamic obstacles -> " << args.out << "\n";
    return 0;
}

TrainConfig load_train_config(const std::string& config_path, std::uint64_t seed) {
    ConfigMap map;
    if (!config_path.empty()) {
        require_file(config_path, "--config");
        map = load_config(config_path);
    }
    TrainConfig config = TrainConfig::from_config(map);
    config.seed = seed;
    return config;
}

int run_train(const TrainArgs& args, const std::vector<std::string>& argv) {
    ManifestClock clock;
    const TrainConfig config = load_train_config(args.config_path, args.seed);

    NeighborRule rule{config.neighbor_radius, config.neighbor_fov_deg};
    const auto scene_paths = split(args.scenes, ',');
    if (scene_paths.empty()) throw UsageError("--scenes: need at least one scene file");
    std::vector<Window> windows = windows_from_scenes(scene_paths, args.stride, rule);
    if (windows.empty())
        throw ValidationError("no training windows (tracks shorter than 20 contiguous frames?)");

    ModelParams model = [&] {
        if (!args.resume.empty()) {
            require_file(args.resume, "--resume");
            return load_checkpoint(args.resume).model;
        }
        RngStream init_rng(config.seed, 0x1417);
        return make_model(init_rng);
    }();

    if (args.phase != "1" && args.phase != "2" && args.phase != "all")
        throw UsageError("--phase must be 1, 2 or all");
    if (args.phase == "2" && args.resume.empty())
        throw ValidationError(
            "--phase 2 requires --resume with a phase-1 checkpoint (the aleatoric model "
            "must be trained and frozen first)");

    Diagnostics diagnostics;
    const std::string emergency = args.out + ".aborted";
    if (args.phase == "1" || args.phase == "all") {
        const TrainResult r1 =
            train_phase1(windows, model, config, &diagnostics, emergency);
        std::cout << "phase 1: " << r1.epochs_run << " epochs"
                  << (r1.converged ? " (converged)" : "") << ", final loss "
                  << (r1.loss_history.empty() ? 0.0 : r1.loss_history.back()) << "\n";
    }
    if (args.phase == "2" || args.phase == "all") {
        const TrainResult r2 =
            train_phase2(windows, model, config, &diagnostics, emergency);
        std::cout << "phase 2: " << r2.epochs_run << " epochs"
                  << (r2.converged ? " (converged)" : "") << ", final loss "
                  << (r2.loss_history.empty() ? 0.0 : r2.loss_history.back()) << "\n";
    }
    for (const auto& rec : diagnostics.records)
        std::cerr << json{{"diagnostic", {{"kind", rec.kind}, {"detail", rec.detail}}}}.dump()
                  << "\n";

    ConfigMap snapshot = config.to_config();
    snapshot["seed"] = std::to_string(config.seed);
    save_checkpoint(model, snapshot, args.out);

    std::vector<std::string> inputs = scene_paths;
    if (!args.config_path.empty()) inputs.push_back(args.config_path);
    if (!args.resume.empty()) inputs.push_back(args.resume);
    write_manifest("train", argv, snapshot, config.seed, inputs, {args.out}, clock);
    return 0;
}

RolloutOptions options_from_checkpoint(const LoadedCheckpoint& checkpoint) {
    ConfigMap map = checkpoint.config;
    map.erase("seed");
    const TrainConfig config = TrainConfig::from_config(map);
    RolloutOptions options = config.rollout_options();
    return options;
}

int run_predict(const PredictArgs& args, const std::vector<std::string>& argv) {
    ManifestClock clock;
    require_file(args.model, "--model");
    require_file(args.scene, "--scene");

    const LoadedCheckpoint checkpoint = load_checkpoint(args.model);
    RolloutOptions options = options_from_checkpoint(checkpoint);
    if (auto o = parse_override(args.override_goal)) options.overrides.goal = o;
    if (auto o = parse_override(args.override_collision)) options.overrides.collision = o;
    if (auto o = parse_override(args.override_env)) options.overrides.environment = o;

    ConfigMap snapshot = checkpoint.config;
    const double radius = [&] {
        ConfigReader reader(snapshot);
        return reader.get_double("neighbor_radius", 100.0);
    }();
    const Scene scene = load_scene(args.scene);
    const std::vector<Window> windows = window_scene(scene, args.stride, {radius, std::nullopt});
    if (windows.empty()) throw ValidationError("scene yields no windows");

    const GoalMode mode = goal_mode_from_string(args.goal_mode);
    GoalsFile goals_file;
    if (mode == GoalMode::kFile) {
        if (args.goals_file.empty()) throw UsageError("--goal-mode file needs --goals-file");
        require_file(args.goals_file, "--goals-file");
        goals_file = load_goals_file(args.goals_file);
    }
    EndpointModel endpoint;
    if (mode == GoalMode::kEndpointGaussian) endpoint = fit_endpoint_model(windows);

    if (args.mode == "deterministic")
        options.stochastic = false;
    else if (args.mode != "standard" && args.mode != "ultra")
        throw UsageError("--mode must be standard, ultra or deterministic");
    if (args.samples < 1) throw UsageError("--samples must be >= 1");

    std::vector<PredictionSet> predictions;
    predictions.reserve(windows.size());
    for (const auto& window : windows) {
        PredictionSet prediction;
        if (args.mode == "ultra") {
            std::vector<Vec2> goals;
            for (int g = 0; g < args.ultra_goals; ++g) {
                RngStream goal_rng(args.seed, 0x90a1, static_cast<std::uint64_t>(window.id),
                                   static_cast<std::uint64_t>(g));
                goals.push_back(
                    goal_for_window(mode, window, &goals_file, &endpoint, goal_rng));
            }
            prediction = predict_ultra(checkpoint.model, window, window.future, goals,
                                       args.ultra_positions, options, args.seed);
        } else {
            RngStream goal_rng(args.seed, 0x90a1, static_cast<std::uint64_t>(window.id));
            const Vec2 goal = goal_for_window(mode, window, &goals_file, &endpoint, goal_rng);
            const int k = args.mode == "deterministic" ? 1 : args.samples;
            prediction = predict_standard(checkpoint.model, window, goal, k, options, args.seed);
        }
        prediction.goal_mode = to_string(mode);
        predictions.push_back(std::move(prediction));
    }

    std::ostringstream body;
    for (const auto& p : predictions) body << prediction_to_jsonl(p) << "\n";
    atomic_write(args.out, body.str());

    std::vector<std::string> inputs{args.model, args.scene};
    if (!args.goals_file.empty()) inputs.push_back(args.goals_file);
    write_manifest("predict", argv, snapshot, args.seed, inputs, {args.out}, clock);
    std::cout << "predictions: " << predictions.size() << " windows -> " << args.out << "\n";
    return 0;
}

int run_evaluate(const EvaluateArgs& args, const std::vector<std::string>& argv) {
    ManifestClock clock;
    require_file(args.pred, "--pred");
    require_file(args.scene, "--scene");

    const Scene scene = load_scene(args.scene);
    const std::vector<Window> windows = window_scene(scene, args.stride, {});
    const std::vector<PredictionSet> predictions = load_predictions(args.pred);

    std::map<long, const Window*> by_id;
    for (const auto& w : windows) by_id[w.id] = &w;

    const auto wanted = split(args.metrics, ',');
    const bool want_ade = std::find(wanted.begin(), wanted.end(), "ade") != wanted.end();
    const bool want_fde = std::find(wanted.begin(), wanted.end(), "fde") != wanted.end();
    const bool want_collision =
        std::find(wanted.begin(), wanted.end(), "collision") != wanted.end();
    for (const auto& m : wanted)
        if (m != "ade" && m != "fde" && m != "collision")
            throw UsageError("unknown metric: " + m);

    auto to_world = [&](const std::vector<Vec2>& pts) {
        std::vector<Vec2> out;
        out.reserve(pts.size());
        for (const auto& p : pts) out.push_back(pixel_to_world(scene.homography, p));
        return out;
    };

    double ade_sum = 0.0, fde_sum = 0.0;
    std::size_t matched = 0;
    std::vector<Track> best_tracks;
    for (const auto& prediction : predictions) {
        auto it = by_id.find(prediction.window_id);
        if (it == by_id.end())
            throw LookupError("prediction references unknown window id " +
                              std::to_string(prediction.window_id));
        const Window& window = *it->second;
        std::vector<Vec2> truth = window.future;
        std::vector<std::vector<Vec2>> samples = prediction.samples;
        if (args.world) {
            truth = to_world(truth);
            for (auto& s : samples) s = to_world(s);
        }
        const BestOf best = best_of(samples, truth);
        ade_sum += best.ade;
        fde_sum += best.fde;
        ++matched;

        if (want_collision) {
            // Representative trajectory for collision checks: best-ADE sample.
            std::size_t best_idx = 0;
            double best_val = std::numeric_limits<double>::infinity();
            for (std::size_t s = 0; s < samples.size(); ++s) {
                const double a = ade(samples[s], truth);
                if (a < best_val) {
                    best_val = a;
                    best_idx = s;
                }
            }
            Track t;
            t.id = prediction.window_id;
            for (std::size_t k = 0; k < prediction.samples[best_idx].size(); ++k) {
                t.frames.push_back(window.frame_ids[window.observed.size() + k]);
                t.positions.push_back(prediction.samples[best_idx][k]);
            }
            best_tracks.push_back(std::move(t));
        }
    }
    if (matched == 0) throw ValidationError("no predictions matched scene windows");

    json metrics;
    metrics["windows"] = matched;
    metrics["space"] = args.world ? "world" : "pixel";
    if (want_ade) metrics["ade"] = ade_sum / static_cast<double>(matched);
    if (want_fde) metrics["fde"] = fde_sum / static_cast<double>(matched);
    if (want_collision) {
        long min_frame = std::numeric_limits<long>::max();
        long max_frame = std::numeric_limits<long>::min();
        for (const auto& t : best_tracks)
            for (const long f : t.frames) {
                min_frame = std::min(min_frame, f);
                max_frame = std::max(max_frame, f);
            }
        const double spf = scene.dt / static_cast<double>(scene.frame_step);
        const CollisionReport report = collision_stats(
            best_tracks, args.radius,
            {{static_cast<double>(min_frame) * spf, static_cast<double>(max_frame) * spf}}, spf);
        metrics["collision_rate"] = report.average_rate;
        metrics["collisions"] = report.total_collisions;
    }

    const std::string text = metrics.dump(2);
    std::cout << text << "\n";
    if (!args.out.empty()) {
        atomic_write(args.out, text + "\n");
        write_manifest("evaluate", argv, {}, 0, {args.pred, args.scene}, {args.out}, clock);
    }
    return 0;
}

int run_simulate(const SimulateArgs& args, const std::vector<std::string>& argv) {
    ManifestClock clock;
    require_file(args.model, "--model");
    require_file(args.scene, "--scene");
    const LoadedCheckpoint checkpoint = load_checkpoint(args.model);
    const Scene scene = load_scene(args.scene);

    SimConfig config;
    config.bounds = scene.bounds;
    config.obstacles = scene.obstacles;
    config.dt = scene.dt;
    config.hnp = args.hnp;
    config.duration_s = args.duration;
    config.intervals = parse_intervals(args.intervals);
    config.collision_radius = args.radius;
    config.preferred_speed = args.speed;
    config.spawn_interval_s = args.spawn_interval;
    config.batch_size = args.spawn_batch;
    config.rollout = options_from_checkpoint(checkpoint);
    if (auto o = parse_override(args.override_goal)) config.rollout.overrides.goal = o;
    if (auto o = parse_override(args.override_collision))
        config.rollout.overrides.collision = o;
    if (auto o = parse_override(args.override_env)) config.rollout.overrides.environment = o;
    {
        ConfigReader reader(checkpoint.config);
        config.neighbor_radius = reader.get_double("neighbor_radius", 100.0);
    }

    Diagnostics diagnostics;
    const std::vector<Track> tracks = simulate(checkpoint.model, config, args.seed, &diagnostics);
    for (const auto& rec : diagnostics.records)
        std::cerr << json{{"diagnostic", {{"kind", rec.kind}, {"detail", rec.detail}}}}.dump()
                  << "\n";

    {
        std::ostringstream body;
        std::vector<std::tuple<long, long, Vec2>> rows;
        for (const auto& t : tracks)
            for (std::size_t i = 0; i < t.size(); ++i)
                rows.emplace_back(t.frames[i], t.id, t.positions[i]);
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
            if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
            return std::get<1>(a) < std::get<1>(b);
        });
        body.precision(17);
        for (const auto& [frame, id, pos] : rows)
            body << frame << "\t" << id << "\t" << pos.x() << "\t" << pos.y() << "\n";
        atomic_write(args.out, body.str());
    }

    const CollisionReport report =
        collision_stats(tracks, config.collision_radius, config.intervals, config.dt);
    const std::string report_path = args.report.empty() ? args.out + ".collisions.json"
                                                        : args.report;
    atomic_write(report_path, collision_report_to_json(report) + "\n");

    write_manifest("simulate", argv, checkpoint.config, args.seed, {args.model, args.scene},
                   {args.out, report_path}, clock);
    std::cout << "simulated " << tracks.size() << " agents; average collision rate "
              << report.average_rate << " -> " << args.out << "\n";
    return 0;
}

int run_explain(const ExplainArgs& args, const std::vector<std::string>& argv) {
    ManifestClock clock;
    require_file(args.model, "--model");
    require_file(args.scene, "--scene");
    const LoadedCheckpoint checkpoint = load_checkpoint(args.model);
    const Scene scene = load_scene(args.scene);
    const std::vector<Window> windows = window_scene(scene, args.stride, {});

    const Window* window = nullptr;
    for (const auto& w : windows)
        if (w.id == args.window) window = &w;
    if (!window) throw LookupError("no window with id " + std::to_string(args.window));

    std::optional<Vec2> extent;
    if (!args.extent.empty()) {
        const auto parts = split(args.extent, ',');
        if (parts.size() == 1)
            extent = Vec2(std::stod(parts[0]), std::stod(parts[0]));
        else if (parts.size() == 2)
            extent = Vec2(std::stod(parts[0]), std::stod(parts[1]));
        else
            throw UsageError("--extent must be `h` or `hx,hy`");
    }

    const RolloutOptions options = options_from_checkpoint(checkpoint);
    const GoalMode mode = goal_mode_from_string(args.goal_mode);
    RngStream goal_rng(0, static_cast<std::uint64_t>(window->id));
    EndpointModel endpoint;
    if (mode == GoalMode::kEndpointGaussian) endpoint = fit_endpoint_model(windows);
    const Vec2 goal = goal_for_window(mode, *window, nullptr, &endpoint, goal_rng);

    const auto steps = explain(checkpoint.model, *window, goal, args.grid, extent, options);
    atomic_write(args.out, explanation_to_json(steps) + "\n");
    write_manifest("explain", argv, checkpoint.config, 0, {args.model, args.scene}, {args.out},
                   clock);
    std::cout << "explanation: " << steps.size() << " steps -> " << args.out << "\n";
    return 0;
}

int dispatch_argv(const std::vector<std::string>& argv);

int run_replay(const std::string& manifest_path) {
    require_file(manifest_path, "--manifest");
    const RunManifest manifest = load_manifest(manifest_path);
    if (manifest.argv.empty()) throw ValidationError("manifest has no argv to replay");
    std::cout << "replaying: ";
    for (const auto& a : manifest.argv) std::cout << a << " ";
    std::cout << "\n";
    return dispatch_argv(manifest.argv);
}

// -------------------------------------------------------------------------
// Argument wiring
// -------------------------------------------------------------------------

int dispatch_argv(const std::vector<std::string>& argv) {
    CLI::App app{"Bayesian neural social physics: trajectory forecasting and crowd simulation"};
    app.require_subcommand(1);

    IngestArgs ingest;
    CLI::App* cmd_ingest = app.add_subcommand(
        "ingest", "Parse a trajectory file + homography into a scene JSON");
    cmd_ingest->add_option("--input", ingest.input, "trajectory file (frame\\tid\\tx\\ty)")
        ->required();
    cmd_ingest->add_option("--homography", ingest.homography, "3x3 homography text file")
        ->required();
    cmd_ingest->add_option("--dt", ingest.dt, "seconds per frame step (default 0.4)");
    cmd_ingest->add_option("--out", ingest.out, "output scene JSON")->required();

    TrainArgs train;
    CLI::App* cmd_train = app.add_subcommand("train", "Run the two-phase training schedule");
    cmd_train->add_option("--scenes", train.scenes, "comma-separated scene JSON files")
        ->required();
    cmd_train->add_option("--config", train.config_path, "key = value training config");
    cmd_train->add_option("--phase", train.phase, "1, 2 or all (default all)");
    cmd_train->add_option("--out", train.out, "output checkpoint path")->required();
    cmd_train->add_option("--resume", train.resume, "checkpoint to continue from");
    cmd_train->add_option("--seed", train.seed, "rng seed (required for reproducibility)")
        ->required();
    cmd_train->add_option("--stride", train.stride, "windowing stride in frames (default 1)");

    PredictArgs predict;
    CLI::App* cmd_predict = app.add_subcommand("predict", "Sample future trajectories");
    cmd_predict->add_option("--model", predict.model, "checkpoint")->required();
    cmd_predict->add_option("--scene", predict.scene, "scene JSON")->required();
    cmd_predict->add_option("--mode", predict.mode, "standard | ultra | deterministic");
    cmd_predict->add_option("--samples", predict.samples, "trajectories per window (default 20)");
    cmd_predict->add_option("--goal-mode", predict.goal_mode,
                            "ground_truth | file | endpoint_gaussian");
    cmd_predict->add_option("--goals-file", predict.goals_file, "goals JSON for goal-mode file");
    cmd_predict->add_option("--ultra-goals", predict.ultra_goals,
                            "destinations per window in ultra mode (default 20)");
    cmd_predict->add_option("--ultra-positions", predict.ultra_positions,
                            "candidate positions per step in ultra mode (default 15)");
    cmd_predict->add_option("--seed", predict.seed, "rng seed")->required();
    cmd_predict->add_option("--stride", predict.stride, "windowing stride (default 1)");
    cmd_predict->add_option("--override-goal", predict.override_goal,
                            "fix the goal coefficient: mean[,std]");
    cmd_predict->add_option("--override-collision", predict.override_collision,
                            "fix the collision coefficient: mean[,std]");
    cmd_predict->add_option("--override-env", predict.override_env,
                            "fix the environment coefficient: mean[,std]");
    cmd_predict->add_option("--out", predict.out, "output predictions JSONL")->required();

    EvaluateArgs evaluate;
    CLI::App* cmd_evaluate =
        app.add_subcommand("evaluate", "Score predictions against a scene");
    cmd_evaluate->add_option("--pred", evaluate.pred, "predictions JSONL")->required();
    cmd_evaluate->add_option("--scene", evaluate.scene, "scene JSON")->required();
    cmd_evaluate->add_option("--metrics", evaluate.metrics,
                             "comma list of ade,fde,collision (default ade,fde)");
    cmd_evaluate->add_option("--radius", evaluate.radius,
                             "agent disc radius for the collision metric (default 7.5)");
    cmd_evaluate->add_flag("--world", evaluate.world,
                           "report errors in world coordinates via the scene homography");
    cmd_evaluate->add_option("--stride", evaluate.stride, "windowing stride (default 1)");
    cmd_evaluate->add_option("--out", evaluate.out, "also write metrics JSON here");

    SimulateArgs simulate_args;
    CLI::App* cmd_simulate =
        app.add_subcommand("simulate", "Run the model as a crowd simulator");
    cmd_simulate->add_option("--model", simulate_args.model, "checkpoint")->required();
    cmd_simulate->add_option("--scene", simulate_args.scene,
                             "scene JSON providing bounds/obstacles/dt")
        ->required();
    cmd_simulate->add_option("--hnp", simulate_args.hnp, "highest number of people");
    cmd_simulate->add_option("--duration", simulate_args.duration,
                             "simulation length in seconds (default 30)");
    cmd_simulate->add_option("--intervals", simulate_args.intervals,
                             "collision intervals, e.g. 0:8,4:12,8:16");
    cmd_simulate->add_option("--radius", simulate_args.radius, "agent radius r (default 7.5)");
    cmd_simulate->add_option("--seed", simulate_args.seed, "rng seed")->required();
    cmd_simulate->add_option("--speed", simulate_args.speed,
                             "preferred walking speed px/s (default 20)");
    cmd_simulate->add_option("--spawn-interval", simulate_args.spawn_interval,
                             "seconds between spawn batches (default 1)");
    cmd_simulate->add_option("--spawn-batch", simulate_args.spawn_batch,
                             "agents per batch (default ceil(hnp/10))");
    cmd_simulate->add_option("--override-goal", simulate_args.override_goal,
                             "fix the goal coefficient: mean[,std]");
    cmd_simulate->add_option("--override-collision", simulate_args.override_collision,
                             "fix the collision coefficient: mean[,std]");
    cmd_simulate->add_option("--override-env", simulate_args.override_env,
                             "fix the environment coefficient: mean[,std]");
    cmd_simulate->add_option("--out", simulate_args.out, "output trajectory file")->required();
    cmd_simulate->add_option("--report", simulate_args.report,
                             "collision report JSON (default <out>.collisions.json)");

    ExplainArgs explain_args;
    CLI::App* cmd_explain = app.add_subcommand(
        "explain", "Export per-step factor distributions and confidence grids");
    cmd_explain->add_option("--model", explain_args.model, "checkpoint")->required();
    cmd_explain->add_option("--scene", explain_args.scene, "scene JSON")->required();
    cmd_explain->add_option("--window", explain_args.window, "window id to explain")->required();
    cmd_explain->add_option("--grid", explain_args.grid, "grid resolution G (default 64)");
    cmd_explain->add_option("--extent", explain_args.extent,
                            "force-space half-width `h` or `hx,hy` (default 5 std)");
    cmd_explain->add_option("--goal-mode", explain_args.goal_mode,
                            "ground_truth | endpoint_gaussian (default ground_truth)");
    cmd_explain->add_option("--stride", explain_args.stride, "windowing stride (default 1)");
    cmd_explain->add_option("--out", explain_args.out, "output explanation JSON")->required();

    std::string manifest_path;
    CLI::App* cmd_replay =
        app.add_subcommand("replay", "Re-execute a recorded run manifest");
    cmd_replay->add_option("--manifest", manifest_path, "run manifest JSON")->required();

    // CLI11 parses argv in reverse order.
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    reversed.pop_back();  // drop program name
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    if (cmd_ingest->parsed()) return run_ingest(ingest, argv);
    if (cmd_train->parsed()) return run_train(train, argv);
    if (cmd_predict->parsed()) return run_predict(predict, argv);
    if (cmd_evaluate->parsed()) return run_evaluate(evaluate, argv);
    if (cmd_simulate->parsed()) return run_simulate(simulate_args, argv);
    if (cmd_explain->parsed()) return run_explain(explain_args, argv);
    if (cmd_replay->parsed()) return run_replay(manifest_path);
    throw UsageError("no subcommand given");
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    try {
        return dispatch_argv(args);
    } catch (const UsageError& e) {
        emit_error("usage", e.what());
        return kExitUsage;
    } catch (const ParseError& e) {
        emit_error("parse", e.what());
        return kExitUsage;
    } catch (const ValidationError& e) {
        emit_error("validation", e.what());
        return kExitValidation;
    } catch (const LookupError& e) {
        emit_error("lookup", e.what());
        return kExitValidation;
    } catch (const ShapeError& e) {
        emit_error("shape", e.what());
        return kExitValidation;
    } catch (const ContractError& e) {
        emit_error("contract", e.what());
        return kExitValidation;
    } catch (const NumericError& e) {
        emit_error("numeric", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        emit_error("internal", e.what());
        return 1;
    }
}
