#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bnsp/losses.hpp"

using namespace bnsp;
using Eigen::VectorXd;

namespace {

Window toy_window(int t_h_plus1, int t_f, bool with_neighbor, bool with_obstacle) {
    Window w;
    w.dt = 0.4;
    Vec2 p(0.0, 0.0);
    const Vec2 v(10.0, 5.0);
    for (int i = 0; i < t_h_plus1; ++i) {
        w.observed.push_back({p, v});
        w.frame_ids.push_back(i);
        p += v * w.dt;
    }
    for (int i = 0; i < t_f; ++i) {
        w.future.push_back(p + Vec2(0.3 * i, -0.2 * i));  // mildly curved truth
        w.frame_ids.push_back(t_h_plus1 + i);
        p += v * w.dt;
    }
    w.destination = w.future.back();
    w.neighbors.resize(w.frame_ids.size());
    w.obstacle_points.resize(w.frame_ids.size());
    if (with_neighbor)
        for (std::size_t k = 0; k < w.frame_ids.size(); ++k)
            w.neighbors[k].push_back(
                {7, {Vec2(5.0 + 2.0 * k, 8.0), Vec2(2.0, -1.0)}});
    if (with_obstacle)
        for (std::size_t k = 0; k < w.frame_ids.size(); ++k)
            w.obstacle_points[k].push_back(Vec2(12.0, -6.0));
    return w;
}

}  // namespace

TEST_CASE("log_q: hand values") {
    CHECK(log_q({0.0}, {0.0}, {1.0}) == doctest::Approx(-0.918939).epsilon(1e-6));
    CHECK(log_q({3.0}, {3.0}, {2.0}) == doctest::Approx(-1.612086).epsilon(1e-6));
}

TEST_CASE("log_q: maximized over the sample at the mean") {
    const double at_mean = log_q({1.5}, {1.5}, {0.8});
    for (double offset : {-1.0, -0.1, 0.1, 2.0})
        CHECK(log_q({1.5 + offset}, {1.5}, {0.8}) < at_mean);
}

TEST_CASE("log_q: non-positive sigma violates the contract") {
    CHECK_THROWS_AS(log_q({0.0}, {0.0}, {0.0}), ContractError);
    CHECK_THROWS_AS(log_q({0.0}, {0.0}, {-1.0}), ContractError);
}

TEST_CASE("log_prior: hand values and cancellation") {
    CHECK(log_prior({0.0}, {0.0, 1.0}) == doctest::Approx(-0.918939).epsilon(1e-6));
    // identical prior and posterior parameters cancel at any sample
    for (double k : {-2.0, 0.0, 1.7})
        CHECK(log_q({k}, {0.4}, {1.3}) - log_prior({k}, {0.4, 1.3}) ==
              doctest::Approx(0.0).epsilon(1e-14));
    // one std from the mode costs exactly 0.5
    CHECK(log_prior({2.0 + 0.7}, {2.0, 0.7}) ==
          doctest::Approx(log_prior({2.0}, {2.0, 0.7}) - 0.5).epsilon(1e-12));
}

TEST_CASE("log density agrees with an independent oracle within 1e-10") {
    RngStream rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double x = rng.normal(0.0, 5.0);
        const double mu = rng.normal(0.0, 5.0);
        const double sigma = 0.1 + 3.0 * rng.uniform();
        // oracle: log of the explicit density formula
        const double oracle = std::log(
            std::exp(-(x - mu) * (x - mu) / (2.0 * sigma * sigma)) /
            (sigma * std::sqrt(2.0 * std::numbers::pi)));
        CHECK(std::abs(gaussian_log_density(x, mu, sigma) - oracle) < 1e-10);
    }
}

TEST_CASE("log_likelihood: hand values") {
    std::vector<Vec2> truth(12);
    for (int i = 0; i < 12; ++i) truth[i] = Vec2(1.0 * i, -2.0 * i);
    CHECK(log_likelihood(truth, truth) == doctest::Approx(-11.02726).epsilon(1e-6));

    std::vector<Vec2> offset = truth;
    for (auto& p : offset) p += Vec2(1.0, 0.0);
    CHECK(log_likelihood(offset, truth) == doctest::Approx(-17.02726).epsilon(1e-6));
}

TEST_CASE("log_likelihood: strictly decreases as any point moves away") {
    std::vector<Vec2> truth(12, Vec2(0.0, 0.0));
    std::vector<Vec2> pred = truth;
    double prev = log_likelihood(pred, truth);
    for (double d : {0.1, 0.5, 1.0, 3.0}) {
        pred[4] = Vec2(d, 0.0);
        const double now = log_likelihood(pred, truth);
        CHECK(now < prev);
        prev = now;
    }
}

TEST_CASE("kl_diag_gaussian: hand values and positivity") {
    CHECK(kl_diag_gaussian(VectorXd::Zero(16), VectorXd::Zero(16)) == 0.0);
    VectorXd mu(1), lv(1);
    mu << 1.0;
    lv << 0.0;
    CHECK(kl_diag_gaussian(mu, lv) == doctest::Approx(0.5).epsilon(1e-12));

    RngStream rng(2);
    for (int i = 0; i < 10000; ++i) {
        VectorXd m(3), v(3);
        for (int d = 0; d < 3; ++d) {
            m[d] = rng.normal(0.0, 2.0);
            v[d] = rng.normal(0.0, 1.5);
        }
        CHECK(kl_diag_gaussian(m, v) >= 0.0);
    }
}

TEST_CASE("kl_diag_gaussian matches a quadrature oracle within 1e-6") {
    // KL(N(mu, s^2) || N(0,1)) via trapezoidal integration of q log(q/p).
    RngStream rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const double mu = rng.normal(0.0, 1.5);
        const double log_var = rng.normal(0.0, 0.8);
        const double sigma = std::exp(0.5 * log_var);

        const double lo = mu - 12.0 * sigma, hi = mu + 12.0 * sigma;
        const int n = 20000;
        const double step = (hi - lo) / n;
        double integral = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double x = lo + i * step;
            const double zq = (x - mu) / sigma;
            const double log_qx =
                -0.5 * zq * zq - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
            const double log_px = -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
            const double term = std::exp(log_qx) * (log_qx - log_px);
            integral += (i == 0 || i == n) ? 0.5 * term : term;
        }
        integral *= step;

        VectorXd m(1), v(1);
        m << mu;
        v << log_var;
        CHECK(kl_diag_gaussian(m, v) == doctest::Approx(integral).epsilon(1e-6));
    }
}

TEST_CASE("l_bayes: fixed seed with one sample is deterministic") {
    const Window w = toy_window(8, 12, true, true);
    RngStream init(4);
    const ModelParams model = make_model(init);
    BayesLossOptions options;
    RngStream r1(9, 1), r2(9, 1);
    const LossBreakdown a = l_bayes(w, model, options, r1);
    const LossBreakdown b = l_bayes(w, model, options, r2);
    CHECK(a.total == b.total);
    CHECK(a.total == doctest::Approx(a.log_q - a.log_likelihood - a.log_prior).epsilon(1e-12));
}

TEST_CASE("l_bayes: worsening the prediction target increases the total") {
    const Window w = toy_window(8, 12, false, false);
    RngStream init(5);
    const ModelParams model = make_model(init);
    BayesLossOptions options;

    Window shifted = w;
    for (auto& p : shifted.future) p += Vec2(40.0, 0.0);
    shifted.destination = w.destination;  // same rollout, worse targets

    RngStream r1(10, 2), r2(10, 2);
    const double base = l_bayes(w, model, options, r1).total;
    const double worse = l_bayes(shifted, model, options, r2).total;
    CHECK(worse > base);
}

TEST_CASE("score-function mean: grad of (log_q - log_prior) vanishes at posterior = prior") {
    // One-step window, environment factor only, env params equal to the prior.
    Window w = toy_window(2, 1, false, true);
    ModelParams model;
    model.env.mu = 0.7;
    model.env.log_sigma = std::log(0.9);
    BayesLossOptions options;
    options.priors.environment = {0.7, 0.9};
    options.rollout.flags.goal = false;
    options.rollout.flags.collision = false;
    options.rollout.record_tape = true;

    RolloutOptions rollout_options = options.rollout;
    rollout_options.stochastic = true;

    const int n = 100000;
    double sum_mu = 0.0, sum_sq_mu = 0.0;
    for (int i = 0; i < n; ++i) {
        RngStream rng(1000, static_cast<std::uint64_t>(i));
        const Rollout rollout = rollout_window(w, model, rollout_options, rng);
        ModelGrads grads = zero_grads(model);
        std::vector<Vec2> d_positions(rollout.positions.size(), Vec2::Zero());
        const Priors priors = options.priors;
        rollout_backward(rollout, w, model, rollout_options, d_positions,
                         [&](const CoefficientSample& c) {
                             CoeffAdjoint adj;
                             const PriorSpec& prior = priors.for_kind(c.kind);
                             const double centered = c.k - c.mu;
                             const double var = c.sigma * c.sigma;
                             adj.d_k = -centered / var +
                                       (c.k - prior.mean) / (prior.std * prior.std);
                             adj.d_mu = centered / var;
                             adj.d_sigma = centered * centered / (var * c.sigma) - 1.0 / c.sigma;
                             return adj;
                         },
                         grads);
        sum_mu += grads.env.mu;
        sum_sq_mu += grads.env.mu * grads.env.mu;
    }
    const double mean = sum_mu / n;
    const double se = std::sqrt((sum_sq_mu / n - mean * mean) / n);
    CHECK(std::abs(mean) < 3.0 * se + 1e-12);
}

TEST_CASE("l_bayes gradients pass finite differences on a 2-step toy window") {
    Window w = toy_window(2, 2, true, true);
    RngStream init(6);
    ModelParams model = make_model(init);
    model.env.mu = 1.2;
    model.env.log_sigma = -0.5;

    BayesLossOptions options;
    options.priors.goal = {0.0, 2.0};
    options.priors.collision = {0.0, 2.0};
    options.priors.environment = {0.0, 2.0};

    // Common random numbers: the same stream id reproduces the noise draws.
    auto loss = [&]() {
        RngStream rng(77, 3);
        return l_bayes(w, model, options, rng).total;
    };

    ModelGrads grads = zero_grads(model);
    RngStream rng(77, 3);
    l_bayes_with_grad(w, model, options, rng, grads);

    nn::ParamViews params = param_views(model);
    nn::ParamViews grad_views_all = grad_views(grads, model);
    // The CVAE plays no role in the variational objective.
    nn::ParamViews p_checked(params.begin(), params.end());
    nn::ParamViews g_checked(grad_views_all.begin(), grad_views_all.end());
    p_checked.resize(params.size() - cvae_group(model).size());
    g_checked.resize(p_checked.size());

    RngStream probe_rng(8);
    const auto report =
        nn::finite_difference_check(p_checked, g_checked, loss, probe_rng, 120, 1e-5, 1e-7);
    CHECK_MESSAGE(report.max_rel_error < 1e-3, report.worst_path, "[", report.worst_index,
                  "] analytic=", report.worst_analytic, " numeric=", report.worst_numeric);
}

TEST_CASE("l_bayes gradients pass finite differences on an 8+12 window") {
    Window w = toy_window(8, 12, true, false);
    RngStream init(16);
    ModelParams model = make_model(init);

    BayesLossOptions options;
    options.priors.goal = {0.0, 2.0};
    options.priors.collision = {0.0, 2.0};

    auto loss = [&]() {
        RngStream rng(78, 4);
        return l_bayes(w, model, options, rng).total;
    };
    ModelGrads grads = zero_grads(model);
    RngStream rng(78, 4);
    l_bayes_with_grad(w, model, options, rng, grads);

    ModelParams& m = model;
    nn::ParamViews p_checked = goal_group(m);
    nn::ParamViews g_checked = goal_group(grads);
    {
        nn::ParamViews pi = interaction_group(m);
        nn::ParamViews gi = interaction_group(grads);
        p_checked.insert(p_checked.end(), pi.begin(), pi.end());
        g_checked.insert(g_checked.end(), gi.begin(), gi.end());
    }
    RngStream probe_rng(18);
    const auto report =
        nn::finite_difference_check(p_checked, g_checked, loss, probe_rng, 80, 1e-5, 1e-7);
    CHECK_MESSAGE(report.max_rel_error < 1e-3, report.worst_path, "[", report.worst_index,
                  "] analytic=", report.worst_analytic, " numeric=", report.worst_numeric);
}

TEST_CASE("deterministic ablation trains on the likelihood alone") {
    const Window w = toy_window(8, 12, false, false);
    RngStream init(7);
    const ModelParams model = make_model(init);
    BayesLossOptions options;
    options.variational_terms = false;
    RngStream rng(11, 5);
    const LossBreakdown loss = l_bayes(w, model, options, rng);
    CHECK(loss.log_q == 0.0);
    CHECK(loss.log_prior == 0.0);
    CHECK(loss.total == doctest::Approx(-loss.log_likelihood).epsilon(1e-12));
}

TEST_CASE("l_cvae: zero-weight model with zero residuals scores exactly zero") {
    Cvae cvae;
    RngStream rng(8);
    cvae.residual_encoder = nn::make_mlp({2, 8, 16, 16}, rng);
    cvae.condition_encoder = nn::make_mlp({18, 8, 16}, rng);
    cvae.latent_encoder = nn::make_mlp({32, 8, 32}, rng);
    cvae.decoder = nn::make_mlp({32, 8, 2}, rng);
    // Zero the latent head and decoder: mu_z = 0, log_var = 0, output = 0.
    for (auto* mlp : {&cvae.latent_encoder, &cvae.decoder})
        for (auto& layer : mlp->layers) {
            layer.weights.setZero();
            layer.bias.setZero();
        }

    std::vector<CvaeSample> samples(5);
    for (auto& s : samples) {
        s.residual = Vec2::Zero();
        s.condition = VectorXd::Zero(18);
    }
    RngStream lrng(9);
    CHECK(l_cvae(samples, cvae, 3.0, lrng) == 0.0);
}

TEST_CASE("l_cvae: linear in lambda with slope = mean KL") {
    RngStream rng(10);
    Cvae cvae = make_cvae(rng);
    std::vector<CvaeSample> samples;
    RngStream data(11);
    for (int i = 0; i < 6; ++i) {
        CvaeSample s;
        s.residual = Vec2(data.normal(), data.normal());
        std::vector<Vec2> history(8, Vec2(data.normal(0, 5), data.normal(0, 5)));
        s.condition = cvae_condition(cvae, history, Vec2(data.normal(), data.normal()));
        samples.push_back(std::move(s));
    }
    RngStream r0(12), r1(12), r2(12);
    const double at0 = l_cvae(samples, cvae, 0.0, r0);
    const double at1 = l_cvae(samples, cvae, 1.0, r1);
    const double at2 = l_cvae(samples, cvae, 2.0, r2);
    const double mean_kl = at1 - at0;
    CHECK(at2 - at1 == doctest::Approx(mean_kl).epsilon(1e-9));
    CHECK(mean_kl >= 0.0);
}

TEST_CASE("l_cvae gradients pass finite differences") {
    RngStream rng(13);
    Cvae cvae;
    cvae.residual_encoder = nn::make_mlp({2, 8, 16, 16}, rng);
    cvae.condition_encoder = nn::make_mlp({18, 32, 16}, rng);
    cvae.latent_encoder = nn::make_mlp({32, 8, 50, 32}, rng);
    cvae.decoder = nn::make_mlp({32, 24, 2}, rng);

    std::vector<CvaeSample> samples;
    RngStream data(14);
    for (int i = 0; i < 3; ++i) {
        CvaeSample s;
        s.residual = Vec2(data.normal(), data.normal());
        std::vector<Vec2> history(8, Vec2(data.normal(0, 3), data.normal(0, 3)));
        s.condition = cvae_condition(cvae, history, Vec2(data.normal(), data.normal()));
        samples.push_back(std::move(s));
    }

    auto loss = [&]() {
        RngStream lrng(99, 1);
        return l_cvae(samples, cvae, 0.8, lrng);
    };
    CvaeGrad grads = zero_grad(cvae);
    RngStream lrng(99, 1);
    l_cvae(samples, cvae, 0.8, lrng, &grads);

    nn::ParamViews params, grad_views_;
    collect_params(cvae, "cvae", params);
    collect_params(grads, "cvae", grad_views_);
    RngStream probe_rng(15);
    const auto report =
        nn::finite_difference_check(params, grad_views_, loss, probe_rng, 120, 1e-5, 1e-8);
    CHECK_MESSAGE(report.max_rel_error < 1e-4, report.worst_path, "[", report.worst_index,
                  "] analytic=", report.worst_analytic, " numeric=", report.worst_numeric);
}

TEST_CASE("build_cvae_samples: residuals are taken against the mean rollout") {
    Window w = toy_window(8, 12, false, false);
    RngStream init(17);
    ModelParams model = make_model(init);
    RolloutOptions options;
    options.flags.collision = false;
    options.flags.environment = false;

    RngStream rng(18);
    const auto samples = build_cvae_samples(w, model, options, rng);
    REQUIRE(samples.size() == 12);

    RolloutOptions mean_options = options;
    mean_options.stochastic = false;
    RngStream rng2(19);
    const Rollout mean_rollout = rollout_window(w, model, mean_options, rng2);
    for (std::size_t t = 0; t < samples.size(); ++t) {
        CHECK((samples[t].residual - (w.future[t] - mean_rollout.positions[t])).norm() ==
              doctest::Approx(0.0).epsilon(1e-12));
    }
}
