#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "bnsp/dynamics.hpp"
#include "bnsp/scene.hpp"

namespace bnsp {

struct RolloutOptions {
    bool stochastic = true;  // sample coefficients; mean mode when false
    AblationFlags flags;
    CoefficientOverrides overrides;
    double r_col = 50.0;
    bool record_tape = false;  // keep network caches for rollout_backward
    std::optional<double> sigma_latent;  // CVAE latent std override
};

enum class CoeffSource { kNetwork, kEnvParams, kOverride };

/// One realized coefficient k = mu + sigma * xi together with its
/// q-distribution, recorded for the variational objective.
struct CoefficientSample {
    FactorKind kind = FactorKind::kGoal;
    CoeffSource source = CoeffSource::kNetwork;
    double k = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
    double log_sigma_raw = 0.0;
    double xi = 0.0;
};

struct FactorNetStepCaches {
    FactorAdvanceCache advance;
    FactorEmitCache emit;
};

struct NeighborStepCaches {
    nn::MlpCache context;
    FactorEmitCache emit;
};

struct GoalTape {
    Vec2 base = Vec2::Zero();
    CoefficientSample coeff;
    std::unique_ptr<FactorNetStepCaches> caches;
};

struct NeighborTape {
    Vec2 base = Vec2::Zero();
    Vec2 separation = Vec2::Zero();
    bool clamped = false;
    CoefficientSample coeff;
    std::unique_ptr<NeighborStepCaches> caches;
};

struct CollisionTape {
    bool advanced = false;  // collision LSTM moved this step
    std::unique_ptr<FactorAdvanceCache> advance;
    std::vector<NeighborTape> neighbors;
};

struct EnvObstacleTape {
    Vec2 base = Vec2::Zero();
    Vec2 separation = Vec2::Zero();
    bool clamped = false;
    CoefficientSample coeff;
};

struct StepTape {
    AgentState state;  // (p_t, v_t) the step started from
    int steps_remaining = 1;
    std::optional<GoalTape> goal;
    CollisionTape collision;
    std::vector<EnvObstacleTape> environment;
    Vec2 total_force = Vec2::Zero();
    Vec2 epsilon = Vec2::Zero();
};

/// Forward pass of the discretized model over a window's horizon, with
/// enough structure retained to run exact reverse-mode differentiation.
struct Rollout {
    std::vector<Vec2> positions;   // p_1 .. p_tf
    std::vector<Vec2> velocities;  // v_1 .. v_tf
    std::vector<StepTape> steps;

    bool goal_uses_network = false;
    bool collision_uses_network = false;
    std::vector<FactorAdvanceCache> goal_warmup;
    std::vector<FactorAdvanceCache> collision_warmup;
    nn::MlpCache goal_context_cache;

    /// Applies fn to every recorded coefficient sample in draw order.
    void for_each_coefficient(const std::function<void(const CoefficientSample&)>& fn) const;
};

/// Rolls the model out over `window.future.size()` steps starting from the
/// last observed state. The recurrent state starts from zeros at the window
/// start and is warmed up over the observed frames. Neighbor and obstacle
/// context comes from the window's per-frame lists.
Rollout rollout_window(const Window& window, const ModelParams& model,
                       const RolloutOptions& options, RngStream& rng,
                       Diagnostics* diagnostics = nullptr);

/// Loss gradients w.r.t. one coefficient sample and its q-distribution.
struct CoeffAdjoint {
    double d_k = 0.0;
    double d_mu = 0.0;
    double d_sigma = 0.0;
};

using CoeffAdjointFn = std::function<CoeffAdjoint(const CoefficientSample&)>;

/// Exact reverse-mode sweep through a taped rollout. `d_positions[t]` is the
/// loss gradient w.r.t. predicted position t, `coeff_adjoint` supplies the
/// direct loss gradients for each sampled coefficient. Parameter gradients
/// accumulate into `grads`.
void rollout_backward(const Rollout& rollout, const Window& window, const ModelParams& model,
                      const RolloutOptions& options, const std::vector<Vec2>& d_positions,
                      const CoeffAdjointFn& coeff_adjoint, ModelGrads& grads);

}  // namespace bnsp
