#pragma once

#include <optional>
#include <vector>

#include "bnsp/nn.hpp"
#include "bnsp/types.hpp"

namespace bnsp {

/// Log-std and log-variance outputs pass through this clamp before exp.
constexpr double kLogSigmaClampLo = -20.0;
constexpr double kLogSigmaClampHi = 20.0;

inline double clamp_log_sigma(double raw) {
    return std::min(kLogSigmaClampHi, std::max(kLogSigmaClampLo, raw));
}

/// Shared wiring of the goal and collision networks: the agent state runs
/// through a dense encoder and an LSTM, a context vector (destination, or the
/// neighbor state) runs through its own MLP, and the concatenated features
/// feed a head that emits [mu, log_sigma] for the factor coefficient.
struct FactorNet {
    nn::DenseLayer pre;       // state -> LSTM input
    nn::LstmCell lstm;
    nn::DenseLayer post;      // LSTM hidden -> step feature
    nn::Mlp context_encoder;  // destination (goal) or neighbor state (collision)
    nn::Mlp head;             // [step feature | context feature] -> [mu, log_sigma]
};

struct FactorNetGrad {
    nn::DenseGrad pre;
    nn::LstmGrad lstm;
    nn::DenseGrad post;
    nn::MlpGrad context_encoder;
    nn::MlpGrad head;
};

FactorNet make_goal_net(RngStream& rng);       // context input = destination (2)
FactorNet make_collision_net(RngStream& rng);  // context input = neighbor state (4)
FactorNetGrad zero_grad(const FactorNet& net);

/// Coefficient distribution for one factor evaluation; sigma() applies the
/// log-sigma clamp.
struct FactorOutput {
    double mu = 0.0;
    double log_sigma_raw = 0.0;

    double sigma() const { return std::exp(clamp_log_sigma(log_sigma_raw)); }
};

// Caches for one advance (pre + LSTM) and one emission (post + head).
struct FactorAdvanceCache {
    nn::DenseCache pre;
    nn::LstmCache lstm;
};

struct FactorEmitCache {
    nn::DenseCache post;
    nn::MlpCache head;
    Eigen::VectorXd hidden;  // LSTM hidden the emission read
};

Eigen::VectorXd state_vector(const AgentState& s);

/// Advances the recurrent part one step on an agent state.
nn::LstmState factor_advance(const FactorNet& net, const AgentState& state,
                             const nn::LstmState& lstm, FactorAdvanceCache* cache);

/// Emits (mu, log_sigma) from the current hidden state and a pre-encoded
/// context feature.
FactorOutput factor_emit(const FactorNet& net, const nn::LstmState& lstm,
                         const Eigen::VectorXd& context_feature, FactorEmitCache* cache);

Eigen::VectorXd encode_context(const FactorNet& net, const Eigen::VectorXd& context,
                               nn::MlpCache* cache);

/// One goal-network step: encodes the destination, advances the LSTM on the
/// agent state and returns the coefficient distribution plus the new state.
FactorOutput gn_forward(const FactorNet& net, const AgentState& state, const Vec2& destination,
                        nn::LstmState& lstm);

/// One collision-network step for a single neighbor. Advancing twice from the
/// same incoming state yields the same outgoing state, so per-frame callers
/// evaluate each neighbor against the same `lstm` and keep one advanced copy.
FactorOutput cn_forward(const FactorNet& net, const AgentState& self,
                        const AgentState& neighbor, nn::LstmState& lstm);

/// Environment coefficient: a single shared Gaussian, learned directly.
struct EnvGaussian {
    double mu = 0.0;
    double log_sigma = 0.0;

    double sigma() const { return std::exp(clamp_log_sigma(log_sigma)); }
};

struct EnvGrad {
    double mu = 0.0;
    double log_sigma = 0.0;
};

// ---------------------------------------------------------------------------
// CVAE over prediction residuals
// ---------------------------------------------------------------------------

struct Cvae {
    nn::Mlp residual_encoder;   // [2, 8, 16, 16]
    nn::Mlp condition_encoder;  // [18, 512, 256, 16]
    nn::Mlp latent_encoder;     // [32, 8, 50, 32] -> 16 means + 16 log-variances
    nn::Mlp decoder;            // [32, 1024, 512, 1024, 2]
    int history_len = 7;        // M
    double sigma_latent = 1.3;

    int latent_dim() const { return 16; }
    int condition_dim() const { return 2 * (history_len + 1) + 2; }
};

struct CvaeGrad {
    nn::MlpGrad residual_encoder;
    nn::MlpGrad condition_encoder;
    nn::MlpGrad latent_encoder;
    nn::MlpGrad decoder;
};

Cvae make_cvae(RngStream& rng);
CvaeGrad zero_grad(const Cvae& cvae);

/// Builds the 18-dim condition vector from the recent position history
/// (most recent last) and the aleatoric-only next-position prediction.
/// Histories shorter than M+1 are left-padded with their earliest entry.
Eigen::VectorXd cvae_condition(const Cvae& cvae, const std::vector<Vec2>& history,
                               const Vec2& predicted_next);

struct CvaeForwardResult {
    Vec2 reconstructed = Vec2::Zero();
    Eigen::VectorXd latent_mean;
    Eigen::VectorXd latent_log_var;  // clamped
    Eigen::VectorXd latent_noise;    // the xi draws used
};

struct CvaeForwardCache {
    nn::MlpCache residual_encoder;
    nn::MlpCache condition_encoder;
    nn::MlpCache latent_encoder;
    nn::MlpCache decoder;
    Eigen::VectorXd latent_log_var_raw;
    Eigen::VectorXd latent_sample;
};

/// Training-phase pass: encodes the true residual, samples the latent by
/// reparameterization and reconstructs the residual.
CvaeForwardResult cvae_train_forward(const Cvae& cvae, const Vec2& residual,
                                     const Eigen::VectorXd& condition, RngStream& rng,
                                     CvaeForwardCache* cache);

/// Prediction-phase pass: samples the latent from N(0, sigma_latent^2 I) and
/// decodes a residual conditioned on recent history.
Vec2 cvae_sample(const Cvae& cvae, const std::vector<Vec2>& history, const Vec2& predicted_next,
                 RngStream& rng, std::optional<double> sigma_latent_override = std::nullopt);

// ---------------------------------------------------------------------------
// Full parameter set
// ---------------------------------------------------------------------------

struct ModelParams {
    FactorNet goal_net;
    FactorNet collision_net;
    EnvGaussian env;
    Cvae cvae;
};

struct ModelGrads {
    FactorNetGrad goal_net;
    FactorNetGrad collision_net;
    EnvGrad env;
    CvaeGrad cvae;
};

ModelParams make_model(RngStream& rng);
ModelGrads zero_grads(const ModelParams& model);

void collect_params(FactorNet& net, const std::string& prefix, nn::ParamViews& out);
void collect_params(FactorNetGrad& grad, const std::string& prefix, nn::ParamViews& out);
void collect_params(Cvae& cvae, const std::string& prefix, nn::ParamViews& out);
void collect_params(CvaeGrad& grad, const std::string& prefix, nn::ParamViews& out);

/// All parameters under the checkpoint paths gn/*, cn/*, env/*, cvae/*.
nn::ParamViews param_views(ModelParams& model);
nn::ParamViews grad_views(ModelGrads& grads, const ModelParams& model);

// Per-group views matching the two training phases.
nn::ParamViews goal_group(ModelParams& model);
nn::ParamViews goal_group(ModelGrads& grads);
nn::ParamViews interaction_group(ModelParams& model);  // collision net + env
nn::ParamViews interaction_group(ModelGrads& grads);
nn::ParamViews cvae_group(ModelParams& model);
nn::ParamViews cvae_group(ModelGrads& grads);

}  // namespace bnsp
