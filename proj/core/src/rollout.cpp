#include "bnsp/rollout.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace bnsp {

namespace {

using Eigen::Matrix2d;
using Eigen::VectorXd;

constexpr double kCoincidentClamp = 1e-9;

struct BaseResult {
    Vec2 base = Vec2::Zero();
    Vec2 separation = Vec2::Zero();
    bool clamped = false;
};

BaseResult collision_base(const Vec2& r_ij, double r_col, RngStream& rng, Diagnostics* diag) {
    BaseResult out;
    out.separation = r_ij;
    if (r_ij.norm() < kCoincidentClamp) {
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        out.separation = kCoincidentClamp * Vec2(std::cos(angle), std::sin(angle));
        out.clamped = true;
        if (diag) diag->note("coincident_clamp", "collision_force_base");
    }
    const double dist = out.separation.norm();
    out.base = std::exp(-dist / r_col) * out.separation / dist;
    return out;
}

BaseResult env_base(const Vec2& p, const Vec2& obstacle, RngStream& rng, Diagnostics* diag) {
    BaseResult out;
    out.separation = p - obstacle;
    if (out.separation.norm() < kCoincidentClamp) {
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        out.separation = kCoincidentClamp * Vec2(std::cos(angle), std::sin(angle));
        out.clamped = true;
        if (diag) diag->note("coincident_clamp", "env_force_base");
    }
    out.base = out.separation / out.separation.squaredNorm();
    return out;
}

Matrix2d collision_base_jacobian(const Vec2& r, double r_col) {
    const double d = r.norm();
    const double s = std::exp(-d / r_col);
    return s * (Matrix2d::Identity() / d - (r * r.transpose()) * (1.0 / (d * d * d)) -
                (r * r.transpose()) * (1.0 / (r_col * d * d)));
}

Matrix2d env_base_jacobian(const Vec2& r) {
    const double d2 = r.squaredNorm();
    return Matrix2d::Identity() / d2 - 2.0 * (r * r.transpose()) / (d2 * d2);
}

bool clamp_passes(double raw) { return raw > kLogSigmaClampLo && raw < kLogSigmaClampHi; }

CoefficientSample draw_coefficient(FactorKind kind, CoeffSource source, double mu, double sigma,
                                   double log_sigma_raw, bool sample, RngStream& rng) {
    CoefficientSample c;
    c.kind = kind;
    c.source = source;
    c.mu = mu;
    c.sigma = sigma;
    c.log_sigma_raw = log_sigma_raw;
    c.xi = sample ? rng.normal() : 0.0;
    c.k = mu + sigma * c.xi;
    return c;
}

}  // namespace

void Rollout::for_each_coefficient(
    const std::function<void(const CoefficientSample&)>& fn) const {
    for (const auto& step : steps) {
        if (step.goal) fn(step.goal->coeff);
        for (const auto& nb : step.collision.neighbors) fn(nb.coeff);
        for (const auto& env : step.environment) fn(env.coeff);
    }
}

Rollout rollout_window(const Window& window, const ModelParams& model,
                       const RolloutOptions& options, RngStream& rng,
                       Diagnostics* diagnostics) {
    if (window.observed.empty()) throw ContractError("rollout_window: no observed states");
    if (window.future.empty()) throw ContractError("rollout_window: empty horizon");
    const int t_f = static_cast<int>(window.future.size());
    const double dt = window.dt;
    const bool sample = options.stochastic && options.flags.aleatoric;
    const bool use_epsilon = options.stochastic && options.flags.epistemic;

    bool any_neighbors = false;
    for (const auto& frame : window.neighbors)
        if (!frame.empty()) any_neighbors = true;

    Rollout rollout;
    rollout.goal_uses_network = options.flags.goal && !options.overrides.goal;
    rollout.collision_uses_network =
        options.flags.collision && !options.overrides.collision && any_neighbors;

    nn::LstmState goal_lstm = nn::zero_state(model.goal_net.lstm);
    nn::LstmState col_lstm = nn::zero_state(model.collision_net.lstm);
    VectorXd goal_context;
    if (rollout.goal_uses_network)
        goal_context = encode_context(model.goal_net, Eigen::Vector2d(window.destination),
                                      options.record_tape ? &rollout.goal_context_cache : nullptr);

    // Warm the recurrent streams up over the observed frames except the last,
    // which is the first prediction step's input.
    const std::size_t warmup = window.observed.size() - 1;
    if (options.record_tape) {
        if (rollout.goal_uses_network) rollout.goal_warmup.resize(warmup);
        if (rollout.collision_uses_network) rollout.collision_warmup.resize(warmup);
    }
    for (std::size_t s = 0; s < warmup; ++s) {
        if (rollout.goal_uses_network)
            goal_lstm = factor_advance(model.goal_net, window.observed[s], goal_lstm,
                                       options.record_tape ? &rollout.goal_warmup[s] : nullptr);
        if (rollout.collision_uses_network)
            col_lstm =
                factor_advance(model.collision_net, window.observed[s], col_lstm,
                               options.record_tape ? &rollout.collision_warmup[s] : nullptr);
    }

    std::vector<Vec2> history;
    for (const auto& s : window.observed) history.push_back(s.position);

    AgentState current = window.observed.back();
    rollout.positions.reserve(t_f);
    rollout.velocities.reserve(t_f);
    rollout.steps.reserve(t_f);

    for (int t = 0; t < t_f; ++t) {
        StepTape step;
        step.state = current;
        step.steps_remaining = t_f - t;
        Vec2 total = Vec2::Zero();

        if (options.flags.goal) {
            GoalTape goal;
            goal.base = goal_force_base(current.position, current.velocity, window.destination,
                                        step.steps_remaining, dt);
            if (options.overrides.goal) {
                goal.coeff = draw_coefficient(FactorKind::kGoal, CoeffSource::kOverride,
                                              options.overrides.goal->mean,
                                              options.overrides.goal->std, 0.0, sample, rng);
            } else {
                if (options.record_tape) goal.caches = std::make_unique<FactorNetStepCaches>();
                goal_lstm = factor_advance(model.goal_net, current, goal_lstm,
                                           goal.caches ? &goal.caches->advance : nullptr);
                const FactorOutput q = factor_emit(model.goal_net, goal_lstm, goal_context,
                                                   goal.caches ? &goal.caches->emit : nullptr);
                goal.coeff = draw_coefficient(FactorKind::kGoal, CoeffSource::kNetwork, q.mu,
                                              q.sigma(), q.log_sigma_raw, sample, rng);
            }
            total += goal.base * goal.coeff.k;
            step.goal = std::move(goal);
        }

        const std::size_t frame_idx = window.observed.size() + static_cast<std::size_t>(t);
        if (options.flags.collision) {
            if (rollout.collision_uses_network) {
                step.collision.advanced = true;
                if (options.record_tape)
                    step.collision.advance = std::make_unique<FactorAdvanceCache>();
                col_lstm = factor_advance(model.collision_net, current, col_lstm,
                                          step.collision.advance.get());
            }
            if (frame_idx < window.neighbors.size()) {
                for (const auto& neighbor : window.neighbors[frame_idx]) {
                    NeighborTape nb;
                    const BaseResult base = collision_base(
                        current.position - neighbor.state.position, options.r_col, rng,
                        diagnostics);
                    nb.base = base.base;
                    nb.separation = base.separation;
                    nb.clamped = base.clamped;
                    if (options.overrides.collision) {
                        nb.coeff = draw_coefficient(
                            FactorKind::kCollision, CoeffSource::kOverride,
                            options.overrides.collision->mean, options.overrides.collision->std,
                            0.0, sample, rng);
                    } else {
                        if (options.record_tape)
                            nb.caches = std::make_unique<NeighborStepCaches>();
                        const VectorXd context =
                            encode_context(model.collision_net, state_vector(neighbor.state),
                                           nb.caches ? &nb.caches->context : nullptr);
                        const FactorOutput q =
                            factor_emit(model.collision_net, col_lstm, context,
                                        nb.caches ? &nb.caches->emit : nullptr);
                        nb.coeff = draw_coefficient(FactorKind::kCollision, CoeffSource::kNetwork,
                                                    q.mu, q.sigma(), q.log_sigma_raw, sample, rng);
                    }
                    total += nb.base * nb.coeff.k;
                    step.collision.neighbors.push_back(std::move(nb));
                }
            }
        }

        if (options.flags.environment && frame_idx < window.obstacle_points.size()) {
            for (const auto& obstacle : window.obstacle_points[frame_idx]) {
                EnvObstacleTape env;
                const BaseResult base = env_base(current.position, obstacle, rng, diagnostics);
                env.base = base.base;
                env.separation = base.separation;
                env.clamped = base.clamped;
                if (options.overrides.environment) {
                    env.coeff = draw_coefficient(FactorKind::kEnvironment, CoeffSource::kOverride,
                                                 options.overrides.environment->mean,
                                                 options.overrides.environment->std, 0.0, sample,
                                                 rng);
                } else {
                    env.coeff = draw_coefficient(FactorKind::kEnvironment, CoeffSource::kEnvParams,
                                                 model.env.mu, model.env.sigma(),
                                                 model.env.log_sigma, sample, rng);
                }
                total += env.base * env.coeff.k;
                step.environment.push_back(std::move(env));
            }
        }

        if (!is_finite(total)) throw NumericError("rollout_window: non-finite total force");
        step.total_force = total;

        Vec2 epsilon = Vec2::Zero();
        if (use_epsilon) {
            const Vec2 aleatoric_next =
                current.position + (current.velocity + total * dt) * dt;
            epsilon = cvae_sample(model.cvae, history, aleatoric_next, rng, options.sigma_latent);
        }
        step.epsilon = epsilon;

        const StepOutput out = sde_step(current, total, epsilon, dt);
        current.position = out.position;
        current.velocity = out.velocity;
        rollout.positions.push_back(out.position);
        rollout.velocities.push_back(out.velocity);
        history.push_back(out.position);
        rollout.steps.push_back(std::move(step));
    }
    return rollout;
}

void rollout_backward(const Rollout& rollout, const Window& window, const ModelParams& model,
                      const RolloutOptions& options, const std::vector<Vec2>& d_positions,
                      const CoeffAdjointFn& coeff_adjoint, ModelGrads& grads) {
    const int t_f = static_cast<int>(rollout.steps.size());
    if (static_cast<int>(d_positions.size()) != t_f)
        throw ShapeError("rollout_backward: d_positions/horizon mismatch");
    const double dt = window.dt;

    const int h_goal = model.goal_net.lstm.hidden_size;
    const int h_col = model.collision_net.lstm.hidden_size;
    VectorXd gh_goal = VectorXd::Zero(h_goal);
    VectorXd gc_goal = VectorXd::Zero(h_goal);
    VectorXd gh_col = VectorXd::Zero(h_col);
    VectorXd gc_col = VectorXd::Zero(h_col);
    VectorXd g_goal_context;
    if (rollout.goal_uses_network)
        g_goal_context = VectorXd::Zero(model.goal_net.context_encoder.out_size());

    Vec2 gp_next = Vec2::Zero();
    Vec2 gv_next = Vec2::Zero();

    for (int t = t_f - 1; t >= 0; --t) {
        const StepTape& step = rollout.steps[t];
        gp_next += d_positions[t];

        // p' = p + v' dt + eps;  v' = v + F dt
        const Vec2 gv_new = gv_next + gp_next * dt;
        const Vec2 g_force = gv_new * dt;
        Vec2 gp_cur = gp_next;
        Vec2 gv_cur = gv_new;

        if (step.goal) {
            const GoalTape& goal = *step.goal;
            const CoeffAdjoint adj = coeff_adjoint(goal.coeff);
            const double g_k = adj.d_k + g_force.dot(goal.base);
            const Vec2 g_base = g_force * goal.coeff.k;

            // base = (p_T - p) / (S dt) - v
            gp_cur += -g_base / (step.steps_remaining * dt);
            gv_cur += -g_base;

            if (goal.coeff.source == CoeffSource::kNetwork) {
                const double g_mu = adj.d_mu + g_k;
                const double g_sigma = adj.d_sigma + g_k * goal.coeff.xi;
                const double g_log_sigma =
                    clamp_passes(goal.coeff.log_sigma_raw) ? g_sigma * goal.coeff.sigma : 0.0;
                VectorXd d_out(2);
                d_out << g_mu, g_log_sigma;
                const VectorXd d_combined =
                    mlp_backward(model.goal_net.head, goal.caches->emit.head, d_out,
                                 grads.goal_net.head);
                const Eigen::Index feat = model.goal_net.post.out_size();
                g_goal_context += d_combined.tail(d_combined.size() - feat);
                gh_goal += dense_backward(model.goal_net.post, goal.caches->emit.post,
                                          d_combined.head(feat), grads.goal_net.post);

                const auto res = lstm_backward_step(model.goal_net.lstm,
                                                    goal.caches->advance.lstm, gh_goal, gc_goal,
                                                    grads.goal_net.lstm);
                gh_goal = res.d_prev.hidden;
                gc_goal = res.d_prev.cell;
                const VectorXd d_state = dense_backward(
                    model.goal_net.pre, goal.caches->advance.pre, res.d_input, grads.goal_net.pre);
                gp_cur += Vec2(d_state[0], d_state[1]);
                gv_cur += Vec2(d_state[2], d_state[3]);
            }
        }

        if (!step.collision.neighbors.empty() || step.collision.advanced) {
            for (const auto& nb : step.collision.neighbors) {
                const CoeffAdjoint adj = coeff_adjoint(nb.coeff);
                const double g_k = adj.d_k + g_force.dot(nb.base);
                const Vec2 g_base = g_force * nb.coeff.k;
                if (!nb.clamped)
                    gp_cur += collision_base_jacobian(nb.separation, options.r_col) * g_base;

                if (nb.coeff.source == CoeffSource::kNetwork) {
                    const double g_mu = adj.d_mu + g_k;
                    const double g_sigma = adj.d_sigma + g_k * nb.coeff.xi;
                    const double g_log_sigma =
                        clamp_passes(nb.coeff.log_sigma_raw) ? g_sigma * nb.coeff.sigma : 0.0;
                    VectorXd d_out(2);
                    d_out << g_mu, g_log_sigma;
                    const VectorXd d_combined =
                        mlp_backward(model.collision_net.head, nb.caches->emit.head, d_out,
                                     grads.collision_net.head);
                    const Eigen::Index feat = model.collision_net.post.out_size();
                    // Neighbor states are data; their context-input gradient is discarded.
                    mlp_backward(model.collision_net.context_encoder, nb.caches->context,
                                 d_combined.tail(d_combined.size() - feat),
                                 grads.collision_net.context_encoder);
                    gh_col += dense_backward(model.collision_net.post, nb.caches->emit.post,
                                             d_combined.head(feat), grads.collision_net.post);
                }
            }
            if (step.collision.advanced) {
                const auto res =
                    lstm_backward_step(model.collision_net.lstm, step.collision.advance->lstm,
                                       gh_col, gc_col, grads.collision_net.lstm);
                gh_col = res.d_prev.hidden;
                gc_col = res.d_prev.cell;
                const VectorXd d_state =
                    dense_backward(model.collision_net.pre, step.collision.advance->pre,
                                   res.d_input, grads.collision_net.pre);
                gp_cur += Vec2(d_state[0], d_state[1]);
                gv_cur += Vec2(d_state[2], d_state[3]);
            }
        }

        for (const auto& env : step.environment) {
            const CoeffAdjoint adj = coeff_adjoint(env.coeff);
            const double g_k = adj.d_k + g_force.dot(env.base);
            const Vec2 g_base = g_force * env.coeff.k;
            if (!env.clamped) gp_cur += env_base_jacobian(env.separation) * g_base;

            if (env.coeff.source == CoeffSource::kEnvParams) {
                grads.env.mu += adj.d_mu + g_k;
                const double g_sigma = adj.d_sigma + g_k * env.coeff.xi;
                grads.env.log_sigma +=
                    clamp_passes(env.coeff.log_sigma_raw) ? g_sigma * env.coeff.sigma : 0.0;
            }
        }

        gp_next = gp_cur;
        gv_next = gv_cur;
    }

    // Warm-up frames: inputs are observations, so only parameter gradients and
    // the recurrent adjoints matter.
    for (std::size_t s = rollout.goal_warmup.size(); s-- > 0;) {
        const auto res = lstm_backward_step(model.goal_net.lstm, rollout.goal_warmup[s].lstm,
                                            gh_goal, gc_goal, grads.goal_net.lstm);
        gh_goal = res.d_prev.hidden;
        gc_goal = res.d_prev.cell;
        dense_backward(model.goal_net.pre, rollout.goal_warmup[s].pre, res.d_input,
                       grads.goal_net.pre);
    }
    for (std::size_t s = rollout.collision_warmup.size(); s-- > 0;) {
        const auto res =
            lstm_backward_step(model.collision_net.lstm, rollout.collision_warmup[s].lstm, gh_col,
                               gc_col, grads.collision_net.lstm);
        gh_col = res.d_prev.hidden;
        gc_col = res.d_prev.cell;
        dense_backward(model.collision_net.pre, rollout.collision_warmup[s].pre, res.d_input,
                       grads.collision_net.pre);
    }

    if (rollout.goal_uses_network)
        mlp_backward(model.goal_net.context_encoder, rollout.goal_context_cache, g_goal_context,
                     grads.goal_net.context_encoder);
}

}  // namespace bnsp
