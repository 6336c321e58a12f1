#include "bnsp/networks.hpp"

#include <cmath>

namespace bnsp {

using Eigen::VectorXd;

namespace {

FactorNet make_factor_net(int context_input, RngStream& rng) {
    FactorNet net;
    net.pre = nn::make_dense(4, 64, nn::Activation::kRelu, rng);
    net.lstm = nn::make_lstm(64, 256, rng);
    net.post = nn::make_dense(256, 16, nn::Activation::kNone, rng);
    net.context_encoder = nn::make_mlp({context_input, 64, 256, 16}, rng);
    net.head = nn::make_mlp({32, 512, 256, 512, 2}, rng);
    return net;
}

}  // namespace

FactorNet make_goal_net(RngStream& rng) { return make_factor_net(2, rng); }

FactorNet make_collision_net(RngStream& rng) { return make_factor_net(4, rng); }

FactorNetGrad zero_grad(const FactorNet& net) {
    return {nn::zero_grad(net.pre), nn::zero_grad(net.lstm), nn::zero_grad(net.post),
            nn::zero_grad(net.context_encoder), nn::zero_grad(net.head)};
}

VectorXd state_vector(const AgentState& s) {
    VectorXd x(4);
    x << s.position.x(), s.position.y(), s.velocity.x(), s.velocity.y();
    return x;
}

nn::LstmState factor_advance(const FactorNet& net, const AgentState& state,
                             const nn::LstmState& lstm, FactorAdvanceCache* cache) {
    if (!is_finite(state)) throw NumericError("factor_advance: non-finite agent state");
    const VectorXd encoded =
        dense_forward(net.pre, state_vector(state), cache ? &cache->pre : nullptr);
    return lstm_step(net.lstm, encoded, lstm, cache ? &cache->lstm : nullptr);
}

FactorOutput factor_emit(const FactorNet& net, const nn::LstmState& lstm,
                         const VectorXd& context_feature, FactorEmitCache* cache) {
    const VectorXd feature =
        dense_forward(net.post, lstm.hidden, cache ? &cache->post : nullptr);
    VectorXd combined(feature.size() + context_feature.size());
    combined << feature, context_feature;
    const VectorXd out = mlp_forward(net.head, combined, cache ? &cache->head : nullptr);
    if (cache) cache->hidden = lstm.hidden;
    if (!std::isfinite(out[0]) || !std::isfinite(out[1]))
        throw NumericError("factor_emit: non-finite coefficient distribution");
    return {out[0], out[1]};
}

VectorXd encode_context(const FactorNet& net, const VectorXd& context, nn::MlpCache* cache) {
    return mlp_forward(net.context_encoder, context, cache);
}

FactorOutput gn_forward(const FactorNet& net, const AgentState& state, const Vec2& destination,
                        nn::LstmState& lstm) {
    if (!is_finite(destination)) throw NumericError("gn_forward: non-finite destination");
    const VectorXd context = encode_context(net, destination, nullptr);
    lstm = factor_advance(net, state, lstm, nullptr);
    return factor_emit(net, lstm, context, nullptr);
}

FactorOutput cn_forward(const FactorNet& net, const AgentState& self, const AgentState& neighbor,
                        nn::LstmState& lstm) {
    if (!is_finite(neighbor)) throw NumericError("cn_forward: non-finite neighbor state");
    const VectorXd context = encode_context(net, state_vector(neighbor), nullptr);
    lstm = factor_advance(net, self, lstm, nullptr);
    return factor_emit(net, lstm, context, nullptr);
}

// -------------------------------------------------------------------------
// CVAE
// -------------------------------------------------------------------------

Cvae make_cvae(RngStream& rng) {
    Cvae cvae;
    cvae.residual_encoder = nn::make_mlp({2, 8, 16, 16}, rng);
    cvae.condition_encoder = nn::make_mlp({18, 512, 256, 16}, rng);
    cvae.latent_encoder = nn::make_mlp({32, 8, 50, 32}, rng);
    cvae.decoder = nn::make_mlp({32, 1024, 512, 1024, 2}, rng);
    return cvae;
}

CvaeGrad zero_grad(const Cvae& cvae) {
    return {nn::zero_grad(cvae.residual_encoder), nn::zero_grad(cvae.condition_encoder),
            nn::zero_grad(cvae.latent_encoder), nn::zero_grad(cvae.decoder)};
}

VectorXd cvae_condition(const Cvae& cvae, const std::vector<Vec2>& history,
                        const Vec2& predicted_next) {
    if (history.empty()) throw ContractError("cvae_condition: empty history");
    const int span = cvae.history_len + 1;
    VectorXd condition(cvae.condition_dim());
    for (int i = 0; i < span; ++i) {
        // Left-pad with the earliest entry when the history is short.
        const long src = std::max<long>(0, static_cast<long>(history.size()) - span + i);
        condition[2 * i] = history[static_cast<std::size_t>(src)].x();
        condition[2 * i + 1] = history[static_cast<std::size_t>(src)].y();
    }
    condition[2 * span] = predicted_next.x();
    condition[2 * span + 1] = predicted_next.y();
    return condition;
}

CvaeForwardResult cvae_train_forward(const Cvae& cvae, const Vec2& residual,
                                     const VectorXd& condition, RngStream& rng,
                                     CvaeForwardCache* cache) {
    if (condition.size() != cvae.condition_dim())
        throw ShapeError("cvae_train_forward: condition size mismatch");

    VectorXd residual_vec(2);
    residual_vec << residual.x(), residual.y();
    const VectorXd res_feature =
        mlp_forward(cvae.residual_encoder, residual_vec, cache ? &cache->residual_encoder : nullptr);
    const VectorXd cond_feature =
        mlp_forward(cvae.condition_encoder, condition, cache ? &cache->condition_encoder : nullptr);

    VectorXd enc_in(res_feature.size() + cond_feature.size());
    enc_in << res_feature, cond_feature;
    const VectorXd latent_raw =
        mlp_forward(cvae.latent_encoder, enc_in, cache ? &cache->latent_encoder : nullptr);

    const int d = cvae.latent_dim();
    CvaeForwardResult result;
    result.latent_mean = latent_raw.head(d);
    result.latent_log_var.resize(d);
    result.latent_noise.resize(d);
    VectorXd z(d);
    for (int i = 0; i < d; ++i) {
        result.latent_log_var[i] = clamp_log_sigma(latent_raw[d + i]);
        result.latent_noise[i] = rng.normal();
        z[i] = result.latent_mean[i] +
               std::exp(0.5 * result.latent_log_var[i]) * result.latent_noise[i];
    }

    VectorXd dec_in(z.size() + cond_feature.size());
    dec_in << z, cond_feature;
    const VectorXd out = mlp_forward(cvae.decoder, dec_in, cache ? &cache->decoder : nullptr);
    result.reconstructed = Vec2(out[0], out[1]);

    if (cache) {
        cache->latent_log_var_raw = latent_raw.tail(d);
        cache->latent_sample = z;
    }
    return result;
}

Vec2 cvae_sample(const Cvae& cvae, const std::vector<Vec2>& history, const Vec2& predicted_next,
                 RngStream& rng, std::optional<double> sigma_latent_override) {
    const VectorXd condition = cvae_condition(cvae, history, predicted_next);
    const VectorXd cond_feature = mlp_forward(cvae.condition_encoder, condition, nullptr);
    const double sigma = sigma_latent_override.value_or(cvae.sigma_latent);

    VectorXd dec_in(cvae.latent_dim() + cond_feature.size());
    for (int i = 0; i < cvae.latent_dim(); ++i) dec_in[i] = sigma * rng.normal();
    dec_in.tail(cond_feature.size()) = cond_feature;
    const VectorXd out = mlp_forward(cvae.decoder, dec_in, nullptr);
    return Vec2(out[0], out[1]);
}

// -------------------------------------------------------------------------
// Parameter collection
// -------------------------------------------------------------------------

ModelParams make_model(RngStream& rng) {
    ModelParams model;
    model.goal_net = make_goal_net(rng);
    model.collision_net = make_collision_net(rng);
    model.env = EnvGaussian{};
    model.cvae = make_cvae(rng);
    return model;
}

ModelGrads zero_grads(const ModelParams& model) {
    return {zero_grad(model.goal_net), zero_grad(model.collision_net), EnvGrad{},
            zero_grad(model.cvae)};
}

void collect_params(FactorNet& net, const std::string& prefix, nn::ParamViews& out) {
    nn::collect(net.pre, prefix + "/pre", out);
    nn::collect(net.lstm, prefix + "/lstm", out);
    nn::collect(net.post, prefix + "/post", out);
    nn::collect(net.context_encoder, prefix + "/context", out);
    nn::collect(net.head, prefix + "/head", out);
}

void collect_params(FactorNetGrad& grad, const std::string& prefix, nn::ParamViews& out) {
    nn::collect(grad.pre, prefix + "/pre", out);
    nn::collect(grad.lstm, prefix + "/lstm", out);
    nn::collect(grad.post, prefix + "/post", out);
    nn::collect(grad.context_encoder, prefix + "/context", out);
    nn::collect(grad.head, prefix + "/head", out);
}

void collect_params(Cvae& cvae, const std::string& prefix, nn::ParamViews& out) {
    nn::collect(cvae.residual_encoder, prefix + "/residual_enc", out);
    nn::collect(cvae.condition_encoder, prefix + "/condition_enc", out);
    nn::collect(cvae.latent_encoder, prefix + "/latent_enc", out);
    nn::collect(cvae.decoder, prefix + "/decoder", out);
}

void collect_params(CvaeGrad& grad, const std::string& prefix, nn::ParamViews& out) {
    nn::collect(grad.residual_encoder, prefix + "/residual_enc", out);
    nn::collect(grad.condition_encoder, prefix + "/condition_enc", out);
    nn::collect(grad.latent_encoder, prefix + "/latent_enc", out);
    nn::collect(grad.decoder, prefix + "/decoder", out);
}

nn::ParamViews goal_group(ModelParams& model) {
    nn::ParamViews out;
    collect_params(model.goal_net, "gn", out);
    return out;
}

nn::ParamViews goal_group(ModelGrads& grads) {
    nn::ParamViews out;
    collect_params(grads.goal_net, "gn", out);
    return out;
}

nn::ParamViews interaction_group(ModelParams& model) {
    nn::ParamViews out;
    collect_params(model.collision_net, "cn", out);
    out.push_back({"env/mu", &model.env.mu, 1, 1});
    out.push_back({"env/log_sigma", &model.env.log_sigma, 1, 1});
    return out;
}

nn::ParamViews interaction_group(ModelGrads& grads) {
    nn::ParamViews out;
    collect_params(grads.collision_net, "cn", out);
    out.push_back({"env/mu", &grads.env.mu, 1, 1});
    out.push_back({"env/log_sigma", &grads.env.log_sigma, 1, 1});
    return out;
}

nn::ParamViews cvae_group(ModelParams& model) {
    nn::ParamViews out;
    collect_params(model.cvae, "cvae", out);
    return out;
}

nn::ParamViews cvae_group(ModelGrads& grads) {
    nn::ParamViews out;
    collect_params(grads.cvae, "cvae", out);
    return out;
}

nn::ParamViews param_views(ModelParams& model) {
    nn::ParamViews out = goal_group(model);
    nn::ParamViews interaction = interaction_group(model);
    nn::ParamViews cvae = cvae_group(model);
    out.insert(out.end(), interaction.begin(), interaction.end());
    out.insert(out.end(), cvae.begin(), cvae.end());
    return out;
}

nn::ParamViews grad_views(ModelGrads& grads, const ModelParams&) {
    nn::ParamViews out = goal_group(grads);
    nn::ParamViews interaction = interaction_group(grads);
    nn::ParamViews cvae = cvae_group(grads);
    out.insert(out.end(), interaction.begin(), interaction.end());
    out.insert(out.end(), cvae.begin(), cvae.end());
    return out;
}

}  // namespace bnsp
