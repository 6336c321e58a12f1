#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bnsp/config.hpp"
#include "bnsp/losses.hpp"
#include "bnsp/scene.hpp"

namespace bnsp {

/// Phase-1 learning rates live in [3e-6, 3e-5] and the phase-2 rate in
/// [1e-7, 1e-6]; values outside those ranges require lr_override = true.
struct TrainConfig {
    double lr_goal = 3e-5;
    double lr_interaction = 3e-5;  // collision net + environment Gaussian
    double lr_cvae = 1e-6;
    bool lr_override = false;

    int epochs_phase1 = 100;
    int epochs_phase2 = 100;
    int batch_size = 32;
    std::uint64_t seed = 0;

    Priors priors;
    double lambda = 1.0;
    double r_col = 50.0;
    double neighbor_radius = 100.0;
    std::optional<double> neighbor_fov_deg;
    AblationFlags flags;
    CoefficientOverrides overrides;
    int mc_samples = 1;

    double convergence_tol = 1e-4;  // relative loss change over convergence_epochs
    int convergence_epochs = 5;

    void validate() const;
    static TrainConfig from_config(const ConfigMap& map);
    ConfigMap to_config() const;  // full snapshot, including defaults

    RolloutOptions rollout_options() const;
    BayesLossOptions bayes_options() const;
};

struct TrainResult {
    std::vector<double> loss_history;  // one entry per epoch
    int epochs_run = 0;
    bool converged = false;
};

/// Alternates within each epoch between updating the goal network and the
/// collision/environment group under the variational objective, each with the
/// other frozen. On a non-finite loss the last finished epoch's parameters
/// are written to `emergency_path` (when set) before the error propagates.
TrainResult train_phase1(const std::vector<Window>& windows, ModelParams& model,
                         const TrainConfig& config, Diagnostics* diagnostics = nullptr,
                         const std::string& emergency_path = "");

/// Trains the CVAE on residuals against mean-coefficient rollouts, with the
/// phase-1 parameters frozen.
TrainResult train_phase2(const std::vector<Window>& windows, ModelParams& model,
                         const TrainConfig& config, Diagnostics* diagnostics = nullptr,
                         const std::string& emergency_path = "");

}  // namespace bnsp
