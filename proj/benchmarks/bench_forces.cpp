#include <benchmark/benchmark.h>

#include "bnsp/dynamics.hpp"

namespace {

using namespace bnsp;

void BM_GoalForceBase(benchmark::State& state) {
    const Vec2 p(10.0, 20.0), v(1.5, -0.5), goal(200.0, 180.0);
    for (auto _ : state) {
        Vec2 f = goal_force_base(p, v, goal, 12, 0.4);
        benchmark::DoNotOptimize(f);
    }
}
BENCHMARK(BM_GoalForceBase);

void BM_CollisionForceBase(benchmark::State& state) {
    RngStream rng(1);
    const Vec2 r(12.0, -7.0);
    for (auto _ : state) {
        Vec2 f = collision_force_base(r, 50.0, rng);
        benchmark::DoNotOptimize(f);
    }
}
BENCHMARK(BM_CollisionForceBase);

void BM_AssembleForcesOverrides(benchmark::State& state) {
    const int neighbors = static_cast<int>(state.range(0));
    StepInputs inputs;
    inputs.self = {Vec2(100.0, 100.0), Vec2(5.0, 0.0)};
    inputs.destination = Vec2(300.0, 120.0);
    inputs.steps_remaining = 12;
    inputs.dt = 0.4;
    for (int j = 0; j < neighbors; ++j)
        inputs.neighbors.push_back({j, {Vec2(110.0 + 3.0 * j, 95.0), Vec2(-4.0, 0.2)}});
    inputs.obstacle_points = {Vec2(150.0, 90.0), Vec2(80.0, 140.0)};

    ModelParams model;  // untouched: every factor overridden
    FactorStreams streams;
    AblationFlags flags;
    CoefficientOverrides overrides;
    overrides.goal = CoefficientOverride{2.0, 0.3};
    overrides.collision = CoefficientOverride{20.0, 2.0};
    overrides.environment = CoefficientOverride{5.0, 1.0};
    RngStream rng(7);

    for (auto _ : state) {
        AssembledForces f =
            assemble_forces(inputs, model, streams, true, flags, overrides, 50.0, rng);
        benchmark::DoNotOptimize(f);
    }
}
BENCHMARK(BM_AssembleForcesOverrides)->Arg(0)->Arg(4)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
