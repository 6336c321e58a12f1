#include "bnsp/losses.hpp"

#include <cmath>
#include <numbers>

namespace bnsp {

using Eigen::VectorXd;

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2 pi))

}  // namespace

const PriorSpec& Priors::for_kind(FactorKind kind) const {
    switch (kind) {
        case FactorKind::kGoal: return goal;
        case FactorKind::kCollision: return collision;
        case FactorKind::kEnvironment: return environment;
    }
    return goal;
}

double gaussian_log_density(double x, double mean, double std) {
    if (!(std > 0)) throw ContractError("gaussian_log_density: std must be positive");
    const double z = (x - mean) / std;
    return -0.5 * z * z - std::log(std) - kLogSqrt2Pi;
}

double log_q(const std::vector<double>& samples, const std::vector<double>& mus,
             const std::vector<double>& sigmas) {
    if (samples.size() != mus.size() || samples.size() != sigmas.size())
        throw ShapeError("log_q: sample/parameter length mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        total += gaussian_log_density(samples[i], mus[i], sigmas[i]);
    return total;
}

double log_prior(const std::vector<double>& samples, const PriorSpec& prior) {
    double total = 0.0;
    for (const double k : samples) total += gaussian_log_density(k, prior.mean, prior.std);
    return total;
}

double log_likelihood(const std::vector<Vec2>& predicted, const std::vector<Vec2>& truth) {
    if (predicted.size() != truth.size())
        throw ShapeError("log_likelihood: trajectory length mismatch");
    double sq = 0.0;
    for (std::size_t t = 0; t < predicted.size(); ++t)
        sq += (predicted[t] - truth[t]).squaredNorm();
    return -0.5 * sq -
           0.5 * static_cast<double>(predicted.size()) * std::log(2.0 * std::numbers::pi);
}

double kl_diag_gaussian(const VectorXd& mu, const VectorXd& log_var) {
    if (mu.size() != log_var.size()) throw ShapeError("kl_diag_gaussian: size mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i)
        total += mu[i] * mu[i] + std::exp(log_var[i]) - 1.0 - log_var[i];
    return 0.5 * total;
}

// -------------------------------------------------------------------------
// Variational objective
// -------------------------------------------------------------------------

namespace {

struct SampleTerms {
    double log_q = 0.0;
    double log_prior = 0.0;
};

SampleTerms coefficient_terms(const Rollout& rollout, const Priors& priors) {
    SampleTerms terms;
    rollout.for_each_coefficient([&](const CoefficientSample& c) {
        terms.log_q += gaussian_log_density(c.k, c.mu, c.sigma);
        const PriorSpec& prior = priors.for_kind(c.kind);
        terms.log_prior += gaussian_log_density(c.k, prior.mean, prior.std);
    });
    return terms;
}

LossBreakdown bayes_impl(const Window& window, const ModelParams& model,
                         const BayesLossOptions& options, RngStream& rng, ModelGrads* grads) {
    if (options.mc_samples < 1) throw ContractError("l_bayes: mc_samples must be >= 1");

    RolloutOptions rollout_options = options.rollout;
    rollout_options.flags.epistemic = false;  // aleatoric only
    rollout_options.stochastic = options.variational_terms;
    rollout_options.record_tape = (grads != nullptr);

    const double scale = 1.0 / static_cast<double>(options.mc_samples);
    LossBreakdown out;
    for (int s = 0; s < options.mc_samples; ++s) {
        const Rollout rollout = rollout_window(window, model, rollout_options, rng);
        const double log_lik = log_likelihood(rollout.positions, window.future);

        double sample_total = -log_lik;
        if (options.variational_terms) {
            const SampleTerms terms = coefficient_terms(rollout, options.priors);
            out.log_q += scale * terms.log_q;
            out.log_prior += scale * terms.log_prior;
            sample_total += terms.log_q - terms.log_prior;
        }
        out.log_likelihood += scale * log_lik;
        out.total += scale * sample_total;

        if (grads) {
            std::vector<Vec2> d_positions(rollout.positions.size());
            for (std::size_t t = 0; t < rollout.positions.size(); ++t)
                d_positions[t] = scale * (rollout.positions[t] - window.future[t]);

            const bool variational = options.variational_terms;
            const Priors priors = options.priors;
            auto adjoint = [scale, variational, priors](const CoefficientSample& c) {
                CoeffAdjoint adj;
                if (!variational) return adj;
                const PriorSpec& prior = priors.for_kind(c.kind);
                const double centered = c.k - c.mu;
                const double var = c.sigma * c.sigma;
                adj.d_k = scale * (-centered / var +
                                   (c.k - prior.mean) / (prior.std * prior.std));
                adj.d_mu = scale * (centered / var);
                adj.d_sigma = scale * (centered * centered / (var * c.sigma) - 1.0 / c.sigma);
                return adj;
            };
            rollout_backward(rollout, window, model, rollout_options, d_positions, adjoint,
                             *grads);
        }
    }
    if (!std::isfinite(out.total)) throw NumericError("l_bayes: non-finite loss");
    return out;
}

}  // namespace

LossBreakdown l_bayes(const Window& window, const ModelParams& model,
                      const BayesLossOptions& options, RngStream& rng) {
    return bayes_impl(window, model, options, rng, nullptr);
}

LossBreakdown l_bayes_with_grad(const Window& window, const ModelParams& model,
                                const BayesLossOptions& options, RngStream& rng,
                                ModelGrads& grads) {
    return bayes_impl(window, model, options, rng, &grads);
}

// -------------------------------------------------------------------------
// CVAE objective
// -------------------------------------------------------------------------

std::vector<CvaeSample> build_cvae_samples(const Window& window, const ModelParams& model,
                                           const RolloutOptions& options, RngStream& rng) {
    RolloutOptions mean_options = options;
    mean_options.stochastic = false;  // residuals against the mean rollout
    mean_options.record_tape = false;
    const Rollout rollout = rollout_window(window, model, mean_options, rng);

    std::vector<Vec2> history;
    for (const auto& s : window.observed) history.push_back(s.position);

    std::vector<CvaeSample> samples;
    samples.reserve(window.future.size());
    for (std::size_t t = 0; t < window.future.size(); ++t) {
        CvaeSample s;
        s.residual = window.future[t] - rollout.positions[t];
        s.condition = cvae_condition(model.cvae, history, rollout.positions[t]);
        samples.push_back(std::move(s));
        history.push_back(window.future[t]);  // ground-truth history during training
    }
    return samples;
}

double l_cvae(const std::vector<CvaeSample>& samples, const Cvae& cvae, double lambda,
              RngStream& rng, CvaeGrad* grads) {
    if (samples.empty()) throw ContractError("l_cvae: empty batch");
    const double scale = 1.0 / static_cast<double>(samples.size());
    const int d = cvae.latent_dim();

    double total = 0.0;
    for (const auto& sample : samples) {
        CvaeForwardCache cache;
        const CvaeForwardResult fwd =
            cvae_train_forward(cvae, sample.residual, sample.condition, rng, &cache);
        const Vec2 err = fwd.reconstructed - sample.residual;
        const double kl = kl_diag_gaussian(fwd.latent_mean, fwd.latent_log_var);
        total += scale * (err.squaredNorm() + lambda * kl);

        if (!grads) continue;

        // Decoder path.
        VectorXd d_out(2);
        d_out << 2.0 * scale * err.x(), 2.0 * scale * err.y();
        const VectorXd d_dec_in = mlp_backward(cvae.decoder, cache.decoder, d_out, grads->decoder);
        const VectorXd d_z = d_dec_in.head(d);
        VectorXd d_cond_feature = d_dec_in.tail(d_dec_in.size() - d);

        // Latent stats: reconstruction path through z plus the KL term.
        VectorXd d_latent_out(2 * d);
        for (int i = 0; i < d; ++i) {
            const double lv = fwd.latent_log_var[i];
            double d_mu = d_z[i] + scale * lambda * fwd.latent_mean[i];
            double d_lv = d_z[i] * 0.5 * std::exp(0.5 * lv) * fwd.latent_noise[i] +
                          scale * lambda * 0.5 * (std::exp(lv) - 1.0);
            const double raw = cache.latent_log_var_raw[i];
            if (!(raw > kLogSigmaClampLo && raw < kLogSigmaClampHi)) d_lv = 0.0;
            d_latent_out[i] = d_mu;
            d_latent_out[d + i] = d_lv;
        }
        const VectorXd d_enc_in =
            mlp_backward(cvae.latent_encoder, cache.latent_encoder, d_latent_out,
                         grads->latent_encoder);

        // Residual inputs are data; their gradient is discarded.
        mlp_backward(cvae.residual_encoder, cache.residual_encoder,
                     d_enc_in.head(cvae.residual_encoder.out_size()), grads->residual_encoder);
        d_cond_feature += d_enc_in.tail(cvae.condition_encoder.out_size());
        mlp_backward(cvae.condition_encoder, cache.condition_encoder, d_cond_feature,
                     grads->condition_encoder);
    }
    if (!std::isfinite(total)) throw NumericError("l_cvae: non-finite loss");
    return total;
}

double l_cvae(const std::vector<Window>& windows, const ModelParams& model, double lambda,
              const RolloutOptions& options, RngStream& rng, CvaeGrad* grads) {
    std::vector<CvaeSample> samples;
    for (const auto& window : windows) {
        auto ws = build_cvae_samples(window, model, options, rng);
        samples.insert(samples.end(), std::make_move_iterator(ws.begin()),
                       std::make_move_iterator(ws.end()));
    }
    return l_cvae(samples, model.cvae, lambda, rng, grads);
}

}  // namespace bnsp
