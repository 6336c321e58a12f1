#pragma once

#include <vector>

#include "bnsp/rollout.hpp"

namespace bnsp {

struct PriorSpec {
    double mean = 0.0;
    double std = 1.0;
};

/// One prior per coefficient family.
struct Priors {
    PriorSpec goal;
    PriorSpec collision;
    PriorSpec environment;

    const PriorSpec& for_kind(FactorKind kind) const;
};

struct LossBreakdown {
    double log_q = 0.0;
    double log_prior = 0.0;
    double log_likelihood = 0.0;
    double total = 0.0;  // log_q - log_likelihood - log_prior
};

double gaussian_log_density(double x, double mean, double std);

/// Sum of diagonal-Gaussian log densities of the sampled coefficients under
/// the variational posterior. Throws ContractError when any sigma <= 0.
double log_q(const std::vector<double>& samples, const std::vector<double>& mus,
             const std::vector<double>& sigmas);

double log_prior(const std::vector<double>& samples, const PriorSpec& prior);

/// Per-window trajectory log likelihood:
/// -1/2 sum_t |pred_t - truth_t|^2 - (t_f / 2) log(2 pi).
double log_likelihood(const std::vector<Vec2>& predicted, const std::vector<Vec2>& truth);

/// KL( N(mu, diag(exp(log_var))) || N(0, I) ).
double kl_diag_gaussian(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var);

struct BayesLossOptions {
    Priors priors;
    int mc_samples = 1;
    RolloutOptions rollout;
    /// When false the loss is the negative log likelihood only, which is how
    /// the deterministic (no-aleatoric) ablation trains.
    bool variational_terms = true;
};

/// Monte-Carlo estimate of the variational objective through full-horizon
/// rollouts (aleatoric only; epsilon disabled regardless of flags).
LossBreakdown l_bayes(const Window& window, const ModelParams& model,
                      const BayesLossOptions& options, RngStream& rng);

/// Same estimate plus exact parameter gradients accumulated into `grads`.
LossBreakdown l_bayes_with_grad(const Window& window, const ModelParams& model,
                                const BayesLossOptions& options, RngStream& rng,
                                ModelGrads& grads);

// ---------------------------------------------------------------------------
// CVAE objective
// ---------------------------------------------------------------------------

struct CvaeSample {
    Vec2 residual = Vec2::Zero();
    Eigen::VectorXd condition;
};

/// Residual/condition pairs for one window: residuals are taken against the
/// mean-coefficient rollout (the aleatoric-only representative prediction).
std::vector<CvaeSample> build_cvae_samples(const Window& window, const ModelParams& model,
                                           const RolloutOptions& options, RngStream& rng);

/// Mean over samples of |r - r_hat|^2 + lambda * KL(q(z) || N(0, I)).
/// When `grads` is given, accumulates exact CVAE parameter gradients.
double l_cvae(const std::vector<CvaeSample>& samples, const Cvae& cvae, double lambda,
              RngStream& rng, CvaeGrad* grads = nullptr);

/// Convenience form over a batch of windows (N windows x t_f steps each).
double l_cvae(const std::vector<Window>& windows, const ModelParams& model, double lambda,
              const RolloutOptions& options, RngStream& rng, CvaeGrad* grads = nullptr);

}  // namespace bnsp
