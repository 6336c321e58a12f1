#include "bnsp/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bnsp/checkpoint.hpp"

namespace bnsp {

namespace {

constexpr double kPhase1LrLo = 3e-6;
constexpr double kPhase1LrHi = 3e-5;
constexpr double kPhase2LrLo = 1e-7;
constexpr double kPhase2LrHi = 1e-6;

// Stream tags keeping the trainer's rng uses disjoint.
constexpr std::uint64_t kShuffleTag = 0x51bf5a11ULL;
constexpr std::uint64_t kResidualTag = 0x4e51d0a1ULL;
constexpr std::uint64_t kCvaeTag = 0xc4aeULL;
constexpr std::uint64_t kPhase2ShuffleBase = 0x9000ULL;

void check_lr(double lr, double lo, double hi, const char* name, bool overridden) {
    if (overridden) {
        if (lr < 0) throw ValidationError(std::string(name) + " must be >= 0");
        return;
    }
    if (lr < lo || lr > hi) {
        std::ostringstream msg;
        msg << name << " = " << lr << " outside [" << lo << ", " << hi
            << "]; set lr_override = true to use it";
        throw ValidationError(msg.str());
    }
}

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

/// Deterministic Fisher-Yates shuffle of window indices.
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed,
                                     std::uint64_t epoch) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    RngStream rng(seed, kShuffleTag, epoch);
    for (std::size_t i = count; i > 1; --i) {
        const std::size_t j =
            static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
        std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    return order;
}

bool converged(const std::vector<double>& history, double tol, int span) {
    if (static_cast<int>(history.size()) <= span) return false;
    const double now = history.back();
    const double then = history[history.size() - 1 - static_cast<std::size_t>(span)];
    return std::abs(now - then) / std::max(std::abs(then), 1e-12) < tol;
}

void scale_views(const nn::ParamViews& views, double factor) {
    for (const auto& v : views)
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data[i] *= factor;
}

void zero_views(const nn::ParamViews& views) {
    for (const auto& v : views)
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data[i] = 0.0;
}

}  // namespace

void TrainConfig::validate() const {
    check_lr(lr_goal, kPhase1LrLo, kPhase1LrHi, "lr_goal", lr_override);
    check_lr(lr_interaction, kPhase1LrLo, kPhase1LrHi, "lr_interaction", lr_override);
    check_lr(lr_cvae, kPhase2LrLo, kPhase2LrHi, "lr_cvae", lr_override);
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (mc_samples < 1) throw ValidationError("mc_samples must be >= 1");
    if (epochs_phase1 < 0 || epochs_phase2 < 0)
        throw ValidationError("epoch counts must be >= 0");
    if (!(priors.goal.std > 0) || !(priors.collision.std > 0) || !(priors.environment.std > 0))
        throw ValidationError("prior stds must be positive");
    if (!(r_col > 0)) throw ValidationError("r_col must be positive");
    if (!(neighbor_radius >= 0)) throw ValidationError("neighbor_radius must be >= 0");
    if (convergence_epochs < 1) throw ValidationError("convergence_epochs must be >= 1");
}

TrainConfig TrainConfig::from_config(const ConfigMap& map) {
    ConfigReader reader(map);
    TrainConfig c;
    c.lr_goal = reader.get_double("lr_goal", c.lr_goal);
    c.lr_interaction = reader.get_double("lr_interaction", c.lr_interaction);
    c.lr_cvae = reader.get_double("lr_cvae", c.lr_cvae);
    c.lr_override = reader.get_bool("lr_override", c.lr_override);
    c.epochs_phase1 = static_cast<int>(reader.get_long("epochs_phase1", c.epochs_phase1));
    c.epochs_phase2 = static_cast<int>(reader.get_long("epochs_phase2", c.epochs_phase2));
    c.batch_size = static_cast<int>(reader.get_long("batch_size", c.batch_size));
    c.priors.goal.mean = reader.get_double("prior_goal_mean", c.priors.goal.mean);
    c.priors.goal.std = reader.get_double("prior_goal_std", c.priors.goal.std);
    c.priors.collision.mean = reader.get_double("prior_collision_mean", c.priors.collision.mean);
    c.priors.collision.std = reader.get_double("prior_collision_std", c.priors.collision.std);
    c.priors.environment.mean = reader.get_double("prior_env_mean", c.priors.environment.mean);
    c.priors.environment.std = reader.get_double("prior_env_std", c.priors.environment.std);
    c.lambda = reader.get_double("lambda", c.lambda);
    c.r_col = reader.get_double("r_col", c.r_col);
    c.neighbor_radius = reader.get_double("neighbor_radius", c.neighbor_radius);
    c.neighbor_fov_deg = reader.get_optional_double("neighbor_fov_deg");
    c.flags.goal = reader.get_bool("enable_goal", c.flags.goal);
    c.flags.collision = reader.get_bool("enable_collision", c.flags.collision);
    c.flags.environment = reader.get_bool("enable_environment", c.flags.environment);
    c.flags.aleatoric = reader.get_bool("enable_aleatoric", c.flags.aleatoric);
    c.flags.epistemic = reader.get_bool("enable_epistemic", c.flags.epistemic);
    c.mc_samples = static_cast<int>(reader.get_long("mc_samples", c.mc_samples));
    c.convergence_tol = reader.get_double("convergence_tol", c.convergence_tol);
    c.convergence_epochs =
        static_cast<int>(reader.get_long("convergence_epochs", c.convergence_epochs));

    auto read_override = [&](const char* mean_key, const char* std_key)
        -> std::optional<CoefficientOverride> {
        const auto mean = reader.get_optional_double(mean_key);
        const auto std_v = reader.get_optional_double(std_key);
        if (!mean && !std_v) return std::nullopt;
        CoefficientOverride o;
        o.mean = mean.value_or(0.0);
        o.std = std_v.value_or(0.0);
        if (o.std < 0) throw UsageError(std::string(std_key) + " must be >= 0");
        return o;
    };
    c.overrides.goal = read_override("override_k_goal_mean", "override_k_goal_std");
    c.overrides.collision = read_override("override_k_col_mean", "override_k_col_std");
    c.overrides.environment = read_override("override_k_env_mean", "override_k_env_std");

    reader.reject_unknown();
    c.validate();
    return c;
}

ConfigMap TrainConfig::to_config() const {
    ConfigMap map;
    map["lr_goal"] = format_double(lr_goal);
    map["lr_interaction"] = format_double(lr_interaction);
    map["lr_cvae"] = format_double(lr_cvae);
    map["lr_override"] = lr_override ? "true" : "false";
    map["epochs_phase1"] = std::to_string(epochs_phase1);
    map["epochs_phase2"] = std::to_string(epochs_phase2);
    map["batch_size"] = std::to_string(batch_size);
    map["prior_goal_mean"] = format_double(priors.goal.mean);
    map["prior_goal_std"] = format_double(priors.goal.std);
    map["prior_collision_mean"] = format_double(priors.collision.mean);
    map["prior_collision_std"] = format_double(priors.collision.std);
    map["prior_env_mean"] = format_double(priors.environment.mean);
    map["prior_env_std"] = format_double(priors.environment.std);
    map["lambda"] = format_double(lambda);
    map["r_col"] = format_double(r_col);
    map["neighbor_radius"] = format_double(neighbor_radius);
    if (neighbor_fov_deg) map["neighbor_fov_deg"] = format_double(*neighbor_fov_deg);
    map["enable_goal"] = flags.goal ? "true" : "false";
    map["enable_collision"] = flags.collision ? "true" : "false";
    map["enable_environment"] = flags.environment ? "true" : "false";
    map["enable_aleatoric"] = flags.aleatoric ? "true" : "false";
    map["enable_epistemic"] = flags.epistemic ? "true" : "false";
    map["mc_samples"] = std::to_string(mc_samples);
    map["convergence_tol"] = format_double(convergence_tol);
    map["convergence_epochs"] = std::to_string(convergence_epochs);
    if (overrides.goal) {
        map["override_k_goal_mean"] = format_double(overrides.goal->mean);
        map["override_k_goal_std"] = format_double(overrides.goal->std);
    }
    if (overrides.collision) {
        map["override_k_col_mean"] = format_double(overrides.collision->mean);
        map["override_k_col_std"] = format_double(overrides.collision->std);
    }
    if (overrides.environment) {
        map["override_k_env_mean"] = format_double(overrides.environment->mean);
        map["override_k_env_std"] = format_double(overrides.environment->std);
    }
    return map;
}

RolloutOptions TrainConfig::rollout_options() const {
    RolloutOptions options;
    options.stochastic = true;
    options.flags = flags;
    options.overrides = overrides;
    options.r_col = r_col;
    return options;
}

BayesLossOptions TrainConfig::bayes_options() const {
    BayesLossOptions options;
    options.priors = priors;
    options.mc_samples = mc_samples;
    options.rollout = rollout_options();
    options.variational_terms = flags.aleatoric;
    return options;
}

namespace {

enum class Phase1Pass : std::uint64_t { kGoal = 1, kInteraction = 2 };

/// Windows where the interaction pass has any gradient signal.
bool interaction_relevant(const Window& window, const TrainConfig& config) {
    if (config.flags.collision && !config.overrides.collision)
        for (const auto& frame : window.neighbors)
            if (!frame.empty()) return true;
    if (config.flags.environment && !config.overrides.environment)
        for (const auto& frame : window.obstacle_points)
            if (!frame.empty()) return true;
    return false;
}

double run_phase1_pass(const std::vector<Window>& windows, ModelParams& model,
                       const TrainConfig& config, std::uint64_t epoch,
                       const std::vector<std::size_t>& order, Phase1Pass pass,
                       const std::vector<bool>& relevant, nn::AdamState& adam,
                       const nn::ParamViews& params, nn::ParamViews& grad_buffer,
                       ModelGrads& grads) {
    const BayesLossOptions options = config.bayes_options();
    double loss_sum = 0.0;
    std::size_t counted = 0;

    std::size_t cursor = 0;
    while (cursor < order.size()) {
        const std::size_t batch_end =
            std::min(order.size(), cursor + static_cast<std::size_t>(config.batch_size));
        zero_views(grad_buffer);
        std::size_t used = 0;
        for (std::size_t i = cursor; i < batch_end; ++i) {
            const std::size_t w = order[i];
            if (pass == Phase1Pass::kInteraction && !relevant[w]) continue;
            RngStream rng(config.seed, static_cast<std::uint64_t>(pass) + 2 * epoch,
                          static_cast<std::uint64_t>(w));
            const LossBreakdown loss =
                l_bayes_with_grad(windows[w], model, options, rng, grads);
            loss_sum += loss.total;
            ++counted;
            ++used;
        }
        if (used > 0) {
            scale_views(grad_buffer, 1.0 / static_cast<double>(used));
            adam_update(adam, params, grad_buffer);
        }
        cursor = batch_end;
    }
    return counted ? loss_sum / static_cast<double>(counted) : 0.0;
}

}  // namespace

TrainResult train_phase1(const std::vector<Window>& windows, ModelParams& model,
                         const TrainConfig& config, Diagnostics* diagnostics,
                         const std::string& emergency_path) {
    config.validate();
    if (windows.empty()) throw ContractError("train_phase1: no windows");

    const bool train_goal = config.flags.goal && !config.overrides.goal;
    const bool train_interaction =
        (config.flags.collision && !config.overrides.collision) ||
        (config.flags.environment && !config.overrides.environment);
    if (!train_goal && !train_interaction)
        throw ValidationError("train_phase1: no trainable parameter group under these flags");

    std::vector<bool> relevant(windows.size(), false);
    for (std::size_t w = 0; w < windows.size(); ++w)
        relevant[w] = interaction_relevant(windows[w], config);

    ModelGrads grads = zero_grads(model);
    nn::ParamViews goal_params = goal_group(model);
    nn::ParamViews goal_grads = goal_group(grads);
    nn::ParamViews inter_params = interaction_group(model);
    nn::ParamViews inter_grads = interaction_group(grads);

    nn::AdamState adam_goal;
    adam_goal.learning_rate = config.lr_goal;
    adam_goal.init(goal_params);
    nn::AdamState adam_inter;
    adam_inter.learning_rate = config.lr_interaction;
    adam_inter.init(inter_params);

    TrainResult result;
    ModelParams last_good = model;
    try {
        for (int epoch = 0; epoch < config.epochs_phase1; ++epoch) {
            const auto order =
                epoch_order(windows.size(), config.seed, static_cast<std::uint64_t>(epoch));

            double epoch_loss = 0.0;
            bool have_loss = false;
            if (train_goal) {
                epoch_loss = run_phase1_pass(windows, model, config,
                                             static_cast<std::uint64_t>(epoch), order,
                                             Phase1Pass::kGoal, relevant, adam_goal,
                                             goal_params, goal_grads, grads);
                have_loss = true;
            }
            if (train_interaction) {
                const double inter_loss = run_phase1_pass(
                    windows, model, config, static_cast<std::uint64_t>(epoch), order,
                    Phase1Pass::kInteraction, relevant, adam_inter, inter_params, inter_grads,
                    grads);
                if (!have_loss) {
                    epoch_loss = inter_loss;
                    have_loss = true;
                }
            }

            if (!std::isfinite(epoch_loss)) throw NumericError("train_phase1: non-finite loss");
            result.loss_history.push_back(epoch_loss);
            result.epochs_run = epoch + 1;
            last_good = model;

            if (converged(result.loss_history, config.convergence_tol,
                          config.convergence_epochs)) {
                result.converged = true;
                break;
            }
        }
    } catch (const NumericError& e) {
        if (diagnostics) diagnostics->note("train_abort", e.what());
        if (!emergency_path.empty())
            save_checkpoint(last_good, config.to_config(), emergency_path);
        model = last_good;
        throw;
    }
    return result;
}

TrainResult train_phase2(const std::vector<Window>& windows, ModelParams& model,
                         const TrainConfig& config, Diagnostics* diagnostics,
                         const std::string& emergency_path) {
    config.validate();
    if (windows.empty()) throw ContractError("train_phase2: no windows");

    // Residuals are fixed once phase 1 is frozen; build them once.
    std::vector<std::vector<CvaeSample>> per_window(windows.size());
    const RolloutOptions mean_options = config.rollout_options();
    for (std::size_t w = 0; w < windows.size(); ++w) {
        RngStream rng(config.seed, kResidualTag, static_cast<std::uint64_t>(w));
        per_window[w] = build_cvae_samples(windows[w], model, mean_options, rng);
    }

    ModelGrads grads = zero_grads(model);
    nn::ParamViews params = cvae_group(model);
    nn::ParamViews grad_buffer = cvae_group(grads);
    nn::AdamState adam;
    adam.learning_rate = config.lr_cvae;
    adam.init(params);

    TrainResult result;
    ModelParams last_good = model;
    try {
        for (int epoch = 0; epoch < config.epochs_phase2; ++epoch) {
            const auto order =
                epoch_order(windows.size(), config.seed, kPhase2ShuffleBase + static_cast<std::uint64_t>(epoch));

            double loss_sum = 0.0;
            std::size_t sample_count = 0;
            std::size_t cursor = 0;
            while (cursor < order.size()) {
                const std::size_t batch_end = std::min(
                    order.size(), cursor + static_cast<std::size_t>(config.batch_size));
                std::vector<CvaeSample> batch;
                for (std::size_t i = cursor; i < batch_end; ++i) {
                    const auto& ws = per_window[order[i]];
                    batch.insert(batch.end(), ws.begin(), ws.end());
                }
                if (!batch.empty()) {
                    zero_views(grad_buffer);
                    RngStream rng(config.seed, kCvaeTag, static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(cursor));
                    const double batch_loss =
                        l_cvae(batch, model.cvae, config.lambda, rng, &grads.cvae);
                    adam_update(adam, params, grad_buffer);
                    loss_sum += batch_loss * static_cast<double>(batch.size());
                    sample_count += batch.size();
                }
                cursor = batch_end;
            }

            const double epoch_loss =
                sample_count ? loss_sum / static_cast<double>(sample_count) : 0.0;
            if (!std::isfinite(epoch_loss)) throw NumericError("train_phase2: non-finite loss");
            result.loss_history.push_back(epoch_loss);
            result.epochs_run = epoch + 1;
            last_good = model;

            if (converged(result.loss_history, config.convergence_tol,
                          config.convergence_epochs)) {
                result.converged = true;
                break;
            }
        }
    } catch (const NumericError& e) {
        if (diagnostics) diagnostics->note("train_abort", e.what());
        if (!emergency_path.empty())
            save_checkpoint(last_good, config.to_config(), emergency_path);
        model = last_good;
        throw;
    }
    return result;
}

}  // namespace bnsp
