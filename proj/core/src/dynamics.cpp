#include "bnsp/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace bnsp {

namespace {

constexpr double kCoincidentClamp = 1e-9;

/// Replaces a (near) zero separation with a clamped-radius vector in a random
/// direction; gradients are undefined at the singularity.
Vec2 clamp_separation(const Vec2& r, RngStream& rng, Diagnostics* diagnostics,
                      const char* where) {
    if (r.norm() >= kCoincidentClamp) return r;
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    if (diagnostics) diagnostics->note("coincident_clamp", where);
    return kCoincidentClamp * Vec2(std::cos(angle), std::sin(angle));
}

}  // namespace

std::string to_string(FactorKind kind) {
    switch (kind) {
        case FactorKind::kGoal: return "goal";
        case FactorKind::kCollision: return "collision";
        case FactorKind::kEnvironment: return "environment";
    }
    return "unknown";
}

Vec2 goal_force_base(const Vec2& position, const Vec2& velocity, const Vec2& destination,
                     int steps_remaining, double dt) {
    if (steps_remaining < 1)
        throw ContractError("goal_force_base: steps_remaining must be >= 1");
    if (!(dt > 0)) throw ContractError("goal_force_base: dt must be positive");
    return (destination - position) / (steps_remaining * dt) - velocity;
}

Vec2 collision_force_base(const Vec2& r_ij, double r_col, RngStream& rng,
                          Diagnostics* diagnostics) {
    if (!(r_col > 0)) throw ContractError("collision_force_base: r_col must be positive");
    const Vec2 r = clamp_separation(r_ij, rng, diagnostics, "collision_force_base");
    const double dist = r.norm();
    return std::exp(-dist / r_col) * r / dist;
}

Vec2 env_force_base(const Vec2& position, const Vec2& obstacle, RngStream& rng,
                    Diagnostics* diagnostics) {
    const Vec2 r = clamp_separation(position - obstacle, rng, diagnostics, "env_force_base");
    return r / r.squaredNorm();
}

StepOutput sde_step(const AgentState& state, const Vec2& total_force, const Vec2& epsilon,
                    double dt) {
    if (!(dt > 0)) throw ContractError("sde_step: dt must be positive");
    if (!is_finite(state) || !is_finite(total_force) || !is_finite(epsilon))
        throw NumericError("sde_step: non-finite input");
    StepOutput out;
    out.velocity = state.velocity + total_force * dt;
    out.position = state.position + out.velocity * dt + epsilon;
    out.residual = epsilon;
    return out;
}

void FactorStreams::reset(const ModelParams& model, const Vec2& destination,
                          bool use_goal_net) {
    goal_lstm = nn::zero_state(model.goal_net.lstm);
    collision_lstm = nn::zero_state(model.collision_net.lstm);
    if (use_goal_net)
        goal_context = encode_context(model.goal_net, Eigen::Vector2d(destination), nullptr);
    recent_positions.clear();
}

AssembledForces assemble_forces(const StepInputs& inputs, const ModelParams& model,
                                FactorStreams& streams, bool stochastic,
                                const AblationFlags& flags, const CoefficientOverrides& overrides,
                                double r_col, RngStream& rng, Diagnostics* diagnostics) {
    AssembledForces out;
    const bool sample = stochastic && flags.aleatoric;

    auto realize = [&](const ForceDistribution& f) {
        const double k = sample ? rng.normal(f.k_mean, f.k_std) : f.k_mean;
        out.factors.push_back(f);
        out.sampled.push_back(k);
        out.total += f.base * k;
    };

    if (flags.goal) {
        ForceDistribution f;
        f.kind = FactorKind::kGoal;
        f.base = goal_force_base(inputs.self.position, inputs.self.velocity, inputs.destination,
                                 inputs.steps_remaining, inputs.dt);
        if (overrides.goal) {
            f.k_mean = overrides.goal->mean;
            f.k_std = overrides.goal->std;
        } else {
            streams.goal_lstm = factor_advance(model.goal_net, inputs.self, streams.goal_lstm,
                                               nullptr);
            const FactorOutput q =
                factor_emit(model.goal_net, streams.goal_lstm, streams.goal_context, nullptr);
            f.k_mean = q.mu;
            f.k_std = q.sigma();
        }
        realize(f);
    }

    if (flags.collision) {
        const bool use_net = !overrides.collision;
        if (use_net)
            streams.collision_lstm =
                factor_advance(model.collision_net, inputs.self, streams.collision_lstm, nullptr);
        for (const auto& neighbor : inputs.neighbors) {
            ForceDistribution f;
            f.kind = FactorKind::kCollision;
            f.base = collision_force_base(inputs.self.position - neighbor.state.position, r_col,
                                          rng, diagnostics);
            if (use_net) {
                const Eigen::VectorXd context =
                    encode_context(model.collision_net, state_vector(neighbor.state), nullptr);
                const FactorOutput q =
                    factor_emit(model.collision_net, streams.collision_lstm, context, nullptr);
                f.k_mean = q.mu;
                f.k_std = q.sigma();
            } else {
                f.k_mean = overrides.collision->mean;
                f.k_std = overrides.collision->std;
            }
            realize(f);
        }
    }

    if (flags.environment) {
        for (const auto& obstacle : inputs.obstacle_points) {
            ForceDistribution f;
            f.kind = FactorKind::kEnvironment;
            f.base = env_force_base(inputs.self.position, obstacle, rng, diagnostics);
            if (overrides.environment) {
                f.k_mean = overrides.environment->mean;
                f.k_std = overrides.environment->std;
            } else {
                f.k_mean = model.env.mu;
                f.k_std = model.env.sigma();
            }
            realize(f);
        }
    }

    if (!is_finite(out.total)) throw NumericError("assemble_forces: non-finite total force");
    return out;
}

}  // namespace bnsp
