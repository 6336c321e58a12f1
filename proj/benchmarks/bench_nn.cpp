#include <benchmark/benchmark.h>

#include "bnsp/networks.hpp"
#include "bnsp/rollout.hpp"

namespace {

using namespace bnsp;

void BM_GoalNetStep(benchmark::State& state) {
    RngStream rng(3);
    FactorNet net = make_goal_net(rng);
    nn::LstmState lstm = nn::zero_state(net.lstm);
    const AgentState agent{Vec2(12.0, 30.0), Vec2(1.0, -1.0)};
    const Vec2 goal(100.0, 80.0);
    for (auto _ : state) {
        nn::LstmState s = lstm;
        FactorOutput out = gn_forward(net, agent, goal, s);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_GoalNetStep);

void BM_CvaeSample(benchmark::State& state) {
    RngStream rng(5);
    Cvae cvae = make_cvae(rng);
    std::vector<Vec2> history;
    for (int i = 0; i < 8; ++i) history.push_back(Vec2(10.0 + i, 5.0));
    RngStream sample_rng(9);
    for (auto _ : state) {
        Vec2 eps = cvae_sample(cvae, history, Vec2(18.0, 5.0), sample_rng);
        benchmark::DoNotOptimize(eps);
    }
}
BENCHMARK(BM_CvaeSample);

Window bench_window() {
    Window w;
    w.dt = 0.4;
    for (int i = 0; i < 8; ++i) {
        w.observed.push_back({Vec2(10.0 * i, 5.0 * i), Vec2(25.0, 12.5)});
        w.frame_ids.push_back(i);
    }
    for (int i = 0; i < 12; ++i) {
        w.future.push_back(Vec2(80.0 + 10.0 * i, 40.0 + 5.0 * i));
        w.frame_ids.push_back(8 + i);
    }
    w.destination = w.future.back();
    w.neighbors.resize(20);
    w.obstacle_points.resize(20);
    return w;
}

void BM_RolloutForward(benchmark::State& state) {
    RngStream rng(11);
    ModelParams model = make_model(rng);
    const Window w = bench_window();
    RolloutOptions options;
    options.flags.epistemic = false;
    for (auto _ : state) {
        RngStream roll_rng(1, 2, 3);
        Rollout r = rollout_window(w, model, options, roll_rng);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(BM_RolloutForward);

void BM_RolloutWithTape(benchmark::State& state) {
    RngStream rng(11);
    ModelParams model = make_model(rng);
    const Window w = bench_window();
    RolloutOptions options;
    options.flags.epistemic = false;
    options.record_tape = true;
    ModelGrads grads = zero_grads(model);
    for (auto _ : state) {
        RngStream roll_rng(1, 2, 3);
        Rollout r = rollout_window(w, model, options, roll_rng);
        std::vector<Vec2> d_positions(r.positions.size(), Vec2(1.0, -1.0));
        rollout_backward(r, w, model, options, d_positions,
                         [](const CoefficientSample&) { return CoeffAdjoint{}; }, grads);
        benchmark::DoNotOptimize(grads);
    }
}
BENCHMARK(BM_RolloutWithTape);

}  // namespace
