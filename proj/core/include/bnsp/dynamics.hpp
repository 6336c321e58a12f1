#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bnsp/networks.hpp"
#include "bnsp/rng.hpp"
#include "bnsp/scene.hpp"
#include "bnsp/types.hpp"

namespace bnsp {

enum class FactorKind { kGoal, kCollision, kEnvironment };

std::string to_string(FactorKind kind);

/// One stochastic force factor: the sampled force is base * k with
/// k ~ N(k_mean, k_std^2), so the per-axis force std is |base_i| * k_std.
struct ForceDistribution {
    FactorKind kind = FactorKind::kGoal;
    Vec2 base = Vec2::Zero();  // px/s^2 per unit coefficient
    double k_mean = 0.0;
    double k_std = 0.0;
};

struct StepOutput {
    Vec2 position = Vec2::Zero();
    Vec2 velocity = Vec2::Zero();
    std::map<FactorKind, double> sampled_coefficients;  // filled by rollout callers
    Vec2 residual = Vec2::Zero();
};

/// Velocity correction toward the destination over the remaining horizon:
/// (p_T - p) / (steps_remaining * dt) - v.
Vec2 goal_force_base(const Vec2& position, const Vec2& velocity, const Vec2& destination,
                     int steps_remaining, double dt);

/// Negative gradient of the repulsive potential r_col * exp(-|r|/r_col):
/// exp(-|r|/r_col) * r/|r|, pointing away from the neighbor. Separations
/// below 1e-9 px are clamped onto a random unit direction and flagged.
Vec2 collision_force_base(const Vec2& r_ij, double r_col, RngStream& rng,
                          Diagnostics* diagnostics = nullptr);

/// Obstacle repulsion carrier (p - p_obj) / |p - p_obj|^2, with the same
/// coincident-point clamp as the collision base.
Vec2 env_force_base(const Vec2& position, const Vec2& obstacle, RngStream& rng,
                    Diagnostics* diagnostics = nullptr);

/// Euler step of the second-order model: v' = v + F dt, p' = p + v' dt + eps.
StepOutput sde_step(const AgentState& state, const Vec2& total_force, const Vec2& epsilon,
                    double dt);

struct AblationFlags {
    bool goal = true;
    bool collision = true;
    bool environment = true;
    bool aleatoric = true;
    bool epistemic = true;
};

/// Fixed coefficient distribution that replaces a network prediction, for
/// synthetic models and reachability checks.
struct CoefficientOverride {
    double mean = 0.0;
    double std = 0.0;
};

struct CoefficientOverrides {
    std::optional<CoefficientOverride> goal;
    std::optional<CoefficientOverride> collision;
    std::optional<CoefficientOverride> environment;
};

/// Everything one force assembly needs about the current frame.
struct StepInputs {
    AgentState self;
    Vec2 destination = Vec2::Zero();
    int steps_remaining = 1;
    double dt = 0.4;
    std::vector<NeighborObs> neighbors;
    std::vector<Vec2> obstacle_points;
};

/// Per-agent recurrent state carried across a rollout or simulation.
struct FactorStreams {
    nn::LstmState goal_lstm;
    nn::LstmState collision_lstm;
    Eigen::VectorXd goal_context;       // cached destination encoding
    std::vector<Vec2> recent_positions; // CVAE history, most recent last

    /// Zeroes the recurrent state and re-encodes the destination. The goal
    /// context is only touched when the goal network is in play (it does not
    /// exist for fully overridden synthetic models).
    void reset(const ModelParams& model, const Vec2& destination, bool use_goal_net);
};

struct AssembledForces {
    std::vector<ForceDistribution> factors;  // goal, then one per neighbor, then per obstacle
    std::vector<double> sampled;             // coefficient realizations, aligned with factors
    Vec2 total = Vec2::Zero();
};

/// Builds every enabled factor at one frame and samples the total force.
/// In mean mode each coefficient is its mean, which is the deterministic
/// ablation of the stochastic model.
AssembledForces assemble_forces(const StepInputs& inputs, const ModelParams& model,
                                FactorStreams& streams, bool stochastic,
                                const AblationFlags& flags, const CoefficientOverrides& overrides,
                                double r_col, RngStream& rng,
                                Diagnostics* diagnostics = nullptr);

}  // namespace bnsp
