#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bnsp/rollout.hpp"

namespace bnsp {

/// Per-step record of a factor's sampled force for the explained sample.
struct FactorRecord {
    FactorKind kind = FactorKind::kGoal;
    Vec2 base = Vec2::Zero();
    double k_mean = 0.0;
    double k_std = 0.0;
    double k_sampled = 0.0;
};

struct ExplainedStep {
    std::vector<FactorRecord> factors;
    Vec2 total_force = Vec2::Zero();
    Vec2 epsilon = Vec2::Zero();
};

struct PredictionSet {
    long window_id = 0;
    std::string goal_mode;
    std::vector<std::vector<Vec2>> samples;   // K trajectories, each t_f positions
    std::vector<ExplainedStep> explained;     // per-step factor records, sample 0
};

/// Best-of-K sampling: K independent full rollouts, each step sampling every
/// enabled coefficient (and epsilon when epistemic is on). Sample s draws
/// from stream (seed, window id, s), so sets are reproducible and per-sample
/// independent.
PredictionSet predict_standard(const ModelParams& model, const Window& window,
                               const Vec2& goal, int k, const RolloutOptions& options,
                               std::uint64_t seed);

/// Per-step candidate protocol: at every step draw `n_positions` candidate
/// next states, keep the one closest to the ground-truth position at that
/// step, and continue from it; one trajectory per goal. Evaluation-only — it
/// reads the ground-truth future.
PredictionSet predict_ultra(const ModelParams& model, const Window& window,
                            const std::vector<Vec2>& ground_truth_future,
                            const std::vector<Vec2>& goals, int n_positions,
                            const RolloutOptions& options, std::uint64_t seed);

double ade(const std::vector<Vec2>& predicted, const std::vector<Vec2>& truth);
double fde(const std::vector<Vec2>& predicted, const std::vector<Vec2>& truth);

struct BestOf {
    double ade = 0.0;
    double fde = 0.0;
};

/// Minimum ADE and minimum FDE over the set, taken independently.
BestOf best_of(const std::vector<std::vector<Vec2>>& samples, const std::vector<Vec2>& truth);

// ---------------------------------------------------------------------------
// Explanation export
// ---------------------------------------------------------------------------

struct FactorExplanation {
    FactorKind kind = FactorKind::kGoal;
    Vec2 mean_force = Vec2::Zero();
    Vec2 std_force = Vec2::Zero();       // per-axis, neighbors/obstacles in quadrature
    Vec2 extent = Vec2::Zero();          // per-axis half-widths around the mean
    int grid_size = 0;
    std::vector<double> grid;            // row-major G x G density values
};

struct StepExplanation {
    int step = 0;
    std::vector<FactorExplanation> factors;
};

/// Mean-coefficient rollout with per-step factor distributions and Gaussian
/// confidence grids. When `extent` is not given, each axis spans +-5 std.
std::vector<StepExplanation> explain(const ModelParams& model, const Window& window,
                                     const Vec2& goal, int grid_size, std::optional<Vec2> extent,
                                     const RolloutOptions& options);

// ---------------------------------------------------------------------------
// Goal modes (destinations are inputs to prediction)
// ---------------------------------------------------------------------------

enum class GoalMode { kGroundTruth, kFile, kEndpointGaussian };

GoalMode goal_mode_from_string(const std::string& name);
std::string to_string(GoalMode mode);

/// Diagonal Gaussian over observed-end -> destination displacements.
struct EndpointModel {
    Vec2 mean = Vec2::Zero();
    Vec2 std = Vec2::Zero();
};

EndpointModel fit_endpoint_model(const std::vector<Window>& windows);

using GoalsFile = std::map<long, Vec2>;  // window id -> destination

GoalsFile load_goals_file(const std::string& path);
void save_goals_file(const GoalsFile& goals, const std::string& path);

Vec2 goal_for_window(GoalMode mode, const Window& window, const GoalsFile* goals,
                     const EndpointModel* endpoint, RngStream& rng);

// ---------------------------------------------------------------------------
// Prediction file I/O (JSON lines, one record per window)
// ---------------------------------------------------------------------------

std::string prediction_to_jsonl(const PredictionSet& prediction);
PredictionSet prediction_from_jsonl(const std::string& line);
void save_predictions(const std::vector<PredictionSet>& predictions, const std::string& path);
std::vector<PredictionSet> load_predictions(const std::string& path);

std::string explanation_to_json(const std::vector<StepExplanation>& steps);

}  // namespace bnsp
